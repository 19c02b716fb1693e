#include "wassdiff/transport.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "wassdiff/rng.hpp"

namespace wassdiff {

EmpiricalBatch EmpiricalBatch::from_fields(const std::vector<GridField>& fields) {
    if (fields.empty()) throw DomainError("empty field list");
    EmpiricalBatch batch(static_cast<int>(fields.size()),
                         static_cast<int>(fields.front().size()));
    for (size_t i = 0; i < fields.size(); ++i) {
        if (fields[i].size() != static_cast<size_t>(batch.dim))
            throw DimensionError("fields disagree in size");
        std::copy(fields[i].values.begin(), fields[i].values.end(), batch.row_ptr(static_cast<int>(i)));
    }
    batch.validate();
    return batch;
}

void EmpiricalBatch::validate() const {
    if (count < 1 || dim < 1) throw DomainError("empirical batch must have m >= 1, d >= 1");
    if (points.size() != static_cast<size_t>(count) * dim)
        throw DimensionError("point storage does not match m*d");
    for (double v : points)
        if (!std::isfinite(v)) throw DomainError("empirical batch contains non-finite values");
}

namespace {

struct SortedAtoms {
    std::vector<double> pos;
    std::vector<double> weight;
    double total = 0.0;
};

SortedAtoms sort_atoms(std::span<const double> pos, std::span<const double> weight) {
    if (pos.empty()) throw DomainError("wasserstein_1d requires nonempty input");
    if (pos.size() != weight.size()) throw DimensionError("atom position/weight length mismatch");
    std::vector<size_t> order(pos.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t i, size_t j) { return pos[i] < pos[j]; });
    SortedAtoms out;
    out.pos.reserve(pos.size());
    out.weight.reserve(pos.size());
    for (size_t i : order) {
        if (!std::isfinite(pos[i])) throw DomainError("non-finite sample value");
        if (!std::isfinite(weight[i]) || weight[i] < 0.0)
            throw DomainError("atom weights must be finite and >= 0");
        out.pos.push_back(pos[i]);
        out.weight.push_back(weight[i]);
        out.total += weight[i];
    }
    if (out.total <= 0.0) throw DomainError("total atom weight must be positive");
    return out;
}

}  // namespace

double wasserstein_1d_weighted(std::span<const double> a_pos, std::span<const double> a_weight,
                               std::span<const double> b_pos, std::span<const double> b_weight) {
    SortedAtoms a = sort_atoms(a_pos, a_weight);
    SortedAtoms b = sort_atoms(b_pos, b_weight);

    // Sweep the merged support, integrating |F_a - F_b| between atom positions.
    size_t ia = 0, ib = 0;
    double ca = 0.0, cb = 0.0;
    double prev = 0.0;
    bool have_prev = false;
    double area = 0.0;
    while (ia < a.pos.size() || ib < b.pos.size()) {
        double x;
        if (ia >= a.pos.size()) x = b.pos[ib];
        else if (ib >= b.pos.size()) x = a.pos[ia];
        else x = std::min(a.pos[ia], b.pos[ib]);

        if (have_prev) area += std::abs(ca / a.total - cb / b.total) * (x - prev);
        while (ia < a.pos.size() && a.pos[ia] == x) ca += a.weight[ia++];
        while (ib < b.pos.size() && b.pos[ib] == x) cb += b.weight[ib++];
        prev = x;
        have_prev = true;
    }
    return area;
}

double wasserstein_1d(std::span<const double> a, std::span<const double> b) {
    std::vector<double> wa(a.size(), 1.0), wb(b.size(), 1.0);
    return wasserstein_1d_weighted(a, wa, b, wb);
}

ProjectionSet sample_projections(int d, int n, uint64_t seed) {
    if (d < 1) throw DomainError("projection dimension must be >= 1");
    if (n < 1) throw DomainError("projection count must be >= 1");
    ProjectionSet proj;
    proj.num_projections = n;
    proj.dim = d;
    proj.seed = seed;
    proj.vectors.resize(static_cast<size_t>(n) * d);
    Rng rng(seed, {0x70726f6aULL});
    for (int i = 0; i < n; ++i) {
        double* row = proj.vectors.data() + static_cast<size_t>(i) * d;
        for (;;) {
            double norm2 = 0.0;
            for (int k = 0; k < d; ++k) {
                row[k] = rng.normal();
                norm2 += row[k] * row[k];
            }
            if (norm2 > 0.0) {
                if (d == 1) {
                    // the unit sphere in R^1 is exactly {-1, +1}
                    row[0] = row[0] > 0.0 ? 1.0 : -1.0;
                } else {
                    double inv = 1.0 / std::sqrt(norm2);
                    for (int k = 0; k < d; ++k) row[k] *= inv;
                }
                break;
            }
            // All-zero draw has probability zero; redraw rather than emit.
        }
    }
    return proj;
}

double sliced_wasserstein(const EmpiricalBatch& a, const EmpiricalBatch& b,
                          const ProjectionSet& proj) {
    a.validate();
    b.validate();
    if (a.dim != b.dim || a.dim != proj.dim)
        throw DimensionError("sliced_wasserstein dimension mismatch");

    std::vector<double> pa(a.count), pb(b.count);
    double sum = 0.0, comp = 0.0;  // Kahan accumulation over projections
    for (int i = 0; i < proj.num_projections; ++i) {
        std::span<const double> v = proj.row(i);
        for (int r = 0; r < a.count; ++r) {
            std::span<const double> row = a.row(r);
            double dot = 0.0;
            for (int k = 0; k < a.dim; ++k) dot += row[k] * v[k];
            pa[r] = dot;
        }
        for (int r = 0; r < b.count; ++r) {
            std::span<const double> row = b.row(r);
            double dot = 0.0;
            for (int k = 0; k < b.dim; ++k) dot += row[k] * v[k];
            pb[r] = dot;
        }
        double w = wasserstein_1d(pa, pb);
        double y = w - comp;
        double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return sum / proj.num_projections;
}

void Histogram::validate() const {
    if (mass.empty() || edges.size() != mass.size() + 1)
        throw DimensionError("histogram edges must be mass.size()+1");
    for (size_t i = 0; i + 1 < edges.size(); ++i)
        if (!(edges[i] < edges[i + 1])) throw DomainError("histogram edges must increase");
    double total = 0.0;
    for (double m : mass) {
        if (!std::isfinite(m) || m < 0.0) throw DomainError("histogram mass must be >= 0");
        total += m;
    }
    if (std::abs(total - 1.0) > 1e-9) throw DomainError("histogram mass must sum to 1");
}

namespace {

void check_shared_grid(const Histogram& p, const Histogram& q) {
    p.validate();
    q.validate();
    if (p.edges.size() != q.edges.size() || !std::equal(p.edges.begin(), p.edges.end(), q.edges.begin()))
        throw DimensionError("histograms are not on a shared bin grid");
}

constexpr double kKlFloor = 1e-12;

double kl_raw(const std::vector<double>& p, const std::vector<double>& q) {
    double sum = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) sum += p[i] * std::log(p[i] / std::max(q[i], kKlFloor));
    }
    return std::max(0.0, sum);
}

}  // namespace

double kl_divergence(const Histogram& p, const Histogram& q) {
    check_shared_grid(p, q);
    return kl_raw(p.mass, q.mass);
}

double js_divergence(const Histogram& p, const Histogram& q) {
    check_shared_grid(p, q);
    std::vector<double> mid(p.mass.size());
    for (size_t i = 0; i < mid.size(); ++i) mid[i] = 0.5 * (p.mass[i] + q.mass[i]);
    return 0.5 * kl_raw(p.mass, mid) + 0.5 * kl_raw(q.mass, mid);
}

double wasserstein_histogram(const Histogram& p, const Histogram& q) {
    check_shared_grid(p, q);
    std::vector<double> centers(p.mass.size());
    for (size_t i = 0; i < centers.size(); ++i) centers[i] = p.center(i);
    return wasserstein_1d_weighted(centers, p.mass, centers, q.mass);
}

namespace {

// Gaussian mixture discretized onto [lo, hi) with `bins` equal-width bins.
Histogram mixture_histogram(const std::vector<double>& weights, const std::vector<double>& means,
                            const std::vector<double>& sigmas, double lo, double hi, int bins) {
    Histogram h;
    h.edges.resize(bins + 1);
    h.mass.resize(bins);
    double width = (hi - lo) / bins;
    for (int i = 0; i <= bins; ++i) h.edges[i] = lo + width * i;
    double total = 0.0;
    for (int i = 0; i < bins; ++i) {
        double x = h.center(i);
        double pdf = 0.0;
        for (size_t k = 0; k < weights.size(); ++k) {
            double z = (x - means[k]) / sigmas[k];
            pdf += weights[k] * std::exp(-0.5 * z * z) / (sigmas[k] * std::sqrt(2.0 * M_PI));
        }
        h.mass[i] = pdf * width;
        total += h.mass[i];
    }
    for (double& m : h.mass) m /= total;
    return h;
}

}  // namespace

TailDemoFixture tail_demo_fixture() {
    // Target: narrow main mode at 0 plus a broad tail component at 8.
    // P1 shifts the whole target by 0.6 (keeps the tail, misplaces the mode a
    // little); P2 reproduces the mode exactly but drops the tail entirely.
    const double lo = -2.0, hi = 13.0;
    const int bins = kDemoHistogramBins;
    TailDemoFixture fx;
    fx.target = mixture_histogram({0.5, 0.5}, {0.0, 8.0}, {0.2, 1.0}, lo, hi, bins);
    fx.p1 = mixture_histogram({0.5, 0.5}, {0.6, 8.6}, {0.2, 1.0}, lo, hi, bins);
    fx.p2 = mixture_histogram({1.0}, {0.0}, {0.2}, lo, hi, bins);
    return fx;
}

TailSensitivityReport tail_sensitivity_report(const Histogram& target, const Histogram& p1,
                                              const Histogram& p2) {
    TailSensitivityReport r;
    r.w_p1 = wasserstein_histogram(p1, target);
    r.w_p2 = wasserstein_histogram(p2, target);
    r.kl_p1 = kl_divergence(p1, target);
    r.kl_p2 = kl_divergence(p2, target);
    r.js_p1 = js_divergence(p1, target);
    r.js_p2 = js_divergence(p2, target);
    return r;
}

TailSensitivityReport tail_sensitivity_demo() {
    TailDemoFixture fx = tail_demo_fixture();
    return tail_sensitivity_report(fx.target, fx.p1, fx.p2);
}

std::string TailSensitivityReport::to_csv() const {
    std::ostringstream out;
    out.precision(12);
    out << "metric,P1_vs_T,P2_vs_T\n";
    out << "wasserstein," << w_p1 << "," << w_p2 << "\n";
    out << "kl," << kl_p1 << "," << kl_p2 << "\n";
    out << "js," << js_p1 << "," << js_p2 << "\n";
    return out.str();
}

}  // namespace wassdiff
