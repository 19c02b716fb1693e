#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wassdiff/errors.hpp"
#include "wassdiff/grid.hpp"

namespace wassdiff {

// A set of m points in R^d treated as an empirical distribution, row-major.
struct EmpiricalBatch {
    int count = 0;
    int dim = 0;
    std::vector<double> points;

    EmpiricalBatch() = default;
    EmpiricalBatch(int m, int d) : count(m), dim(d), points(static_cast<size_t>(m) * d, 0.0) {}

    std::span<const double> row(int i) const {
        return {points.data() + static_cast<size_t>(i) * dim, static_cast<size_t>(dim)};
    }
    double* row_ptr(int i) { return points.data() + static_cast<size_t>(i) * dim; }

    static EmpiricalBatch from_fields(const std::vector<GridField>& fields);
    void validate() const;
};

// Unit-norm projection directions, one per row.
struct ProjectionSet {
    int num_projections = 0;
    int dim = 0;
    std::vector<double> vectors;  // N x d row-major
    uint64_t seed = 0;

    std::span<const double> row(int i) const {
        return {vectors.data() + static_cast<size_t>(i) * dim, static_cast<size_t>(dim)};
    }
};

inline constexpr int kDefaultProjections = 100;

// 1-D Wasserstein-1 distance between two empirical samples (lengths may
// differ): the area between the two empirical CDFs. For equal lengths this
// equals the mean absolute difference of the sorted sequences.
double wasserstein_1d(std::span<const double> a, std::span<const double> b);

// Same distance for weighted atoms (weights need not be normalized).
double wasserstein_1d_weighted(std::span<const double> a_pos, std::span<const double> a_weight,
                               std::span<const double> b_pos, std::span<const double> b_weight);

// N directions drawn iid uniform on the unit sphere in R^d.
ProjectionSet sample_projections(int d, int n, uint64_t seed);

// Monte-Carlo sliced distance: average W1 over the projected 1-D samples.
double sliced_wasserstein(const EmpiricalBatch& a, const EmpiricalBatch& b,
                          const ProjectionSet& proj);

// Normalized histogram on explicit bin edges (edges.size() == mass.size()+1).
struct Histogram {
    std::vector<double> edges;
    std::vector<double> mass;

    double center(size_t i) const { return 0.5 * (edges[i] + edges[i + 1]); }
    void validate() const;
};

inline constexpr int kDemoHistogramBins = 128;

double kl_divergence(const Histogram& p, const Histogram& q);
double js_divergence(const Histogram& p, const Histogram& q);

// W1 between two histograms on a shared bin grid (atoms at bin centers).
double wasserstein_histogram(const Histogram& p, const Histogram& q);

// Fixture comparison showing that W1 ranks a tail-faithful prediction above
// a mode-faithful one while KL/JS rank them the other way around.
struct TailSensitivityReport {
    double w_p1 = 0, w_p2 = 0;
    double kl_p1 = 0, kl_p2 = 0;
    double js_p1 = 0, js_p2 = 0;

    bool wasserstein_prefers_p1() const { return w_p1 < w_p2; }
    bool divergences_prefer_p2() const { return kl_p1 > kl_p2 && js_p1 > js_p2; }
    std::string to_csv() const;
};

// The shipped fixture distributions (T = target, P1/P2 = predictions),
// discretized mixtures of Gaussians on a shared 128-bin grid.
struct TailDemoFixture {
    Histogram target, p1, p2;
};
TailDemoFixture tail_demo_fixture();

TailSensitivityReport tail_sensitivity_report(const Histogram& target, const Histogram& p1,
                                              const Histogram& p2);
TailSensitivityReport tail_sensitivity_demo();

}  // namespace wassdiff
