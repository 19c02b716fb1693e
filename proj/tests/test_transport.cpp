#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "wassdiff/rng.hpp"
#include "wassdiff/transport.hpp"

using namespace wassdiff;

namespace {

// Minimum mean transport cost over all pairings; feasible for n <= 7.
double brute_force_w1(std::vector<double> a, std::vector<double> b) {
    REQUIRE(a.size() == b.size());
    std::vector<size_t> perm(a.size());
    std::iota(perm.begin(), perm.end(), size_t{0});
    double best = std::numeric_limits<double>::infinity();
    std::sort(perm.begin(), perm.end());
    do {
        double cost = 0.0;
        for (size_t i = 0; i < a.size(); ++i) cost += std::abs(a[i] - b[perm[i]]);
        best = std::min(best, cost / a.size());
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// Dense rectangle-rule integration of |F_a - F_b| over a padded range.
double dense_cdf_area(const std::vector<double>& a, const std::vector<double>& b, int grid_n) {
    std::vector<double> sa = a, sb = b;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    double lo = std::min(sa.front(), sb.front()) - 1.0;
    double hi = std::max(sa.back(), sb.back()) + 1.0;
    double dx = (hi - lo) / grid_n;
    double area = 0.0;
    for (int i = 0; i < grid_n; ++i) {
        double x = lo + (i + 0.5) * dx;
        double fa = static_cast<double>(std::upper_bound(sa.begin(), sa.end(), x) - sa.begin()) /
                    sa.size();
        double fb = static_cast<double>(std::upper_bound(sb.begin(), sb.end(), x) - sb.begin()) /
                    sb.size();
        area += std::abs(fa - fb) * dx;
    }
    return area;
}

std::vector<double> random_vector(Rng& rng, size_t n, double scale = 4.0) {
    std::vector<double> v(n);
    for (double& x : v) x = scale * (rng.uniform01() - 0.5);
    return v;
}

EmpiricalBatch gaussian_batch(int m, int d, double mean, uint64_t seed) {
    EmpiricalBatch batch(m, d);
    Rng rng(seed);
    for (double& v : batch.points) v = mean + rng.normal();
    return batch;
}

}  // namespace

TEST_SUITE("transport") {

TEST_CASE("wasserstein_1d point masses") {
    std::vector<double> c1{2.5}, c2{2.5};
    CHECK(wasserstein_1d(c1, c2) == 0.0);
    std::vector<double> z{0.0}, three{3.0};
    CHECK(wasserstein_1d(z, three) == doctest::Approx(3.0).epsilon(1e-15));
    std::vector<double> a{0.0, 1.0}, b{1.0, 2.0};
    CHECK(wasserstein_1d(a, b) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("wasserstein_1d rejects degenerate input") {
    std::vector<double> empty, ok{1.0};
    CHECK_THROWS_AS(wasserstein_1d(empty, ok), DomainError);
    std::vector<double> bad{std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(wasserstein_1d(bad, ok), DomainError);
}

TEST_CASE("wasserstein_1d equals the optimal assignment cost") {
    Rng rng(314);
    for (int rep = 0; rep < 60; ++rep) {
        size_t n = 2 + rng.uniform_index(4);  // up to 5 here; acceptance covers 7
        std::vector<double> a = random_vector(rng, n);
        std::vector<double> b = random_vector(rng, n);
        CHECK(wasserstein_1d(a, b) == doctest::Approx(brute_force_w1(a, b)).epsilon(1e-9));
    }
}

TEST_CASE("wasserstein_1d unequal lengths match dense CDF integration") {
    Rng rng(2718);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> a = random_vector(rng, 3 + rng.uniform_index(10));
        std::vector<double> b = random_vector(rng, 3 + rng.uniform_index(17));
        double w = wasserstein_1d(a, b);
        CHECK(w == doctest::Approx(dense_cdf_area(a, b, 200000)).epsilon(2e-4));
    }
}

TEST_CASE("wasserstein_1d symmetry, shift and scale") {
    Rng rng(11);
    std::vector<double> a = random_vector(rng, 9), b = random_vector(rng, 6);
    double w = wasserstein_1d(a, b);
    CHECK(wasserstein_1d(b, a) == doctest::Approx(w).epsilon(1e-12));

    std::vector<double> a_shift = a, b_shift = b;
    for (double& x : a_shift) x += 1.25;
    for (double& x : b_shift) x += 1.25;
    CHECK(wasserstein_1d(a_shift, b_shift) == doctest::Approx(w).epsilon(1e-12));

    std::vector<double> a_scaled = a, b_scaled = b;
    for (double& x : a_scaled) x *= -3.0;
    for (double& x : b_scaled) x *= -3.0;
    CHECK(wasserstein_1d(a_scaled, b_scaled) == doctest::Approx(3.0 * w).epsilon(1e-12));
}

TEST_CASE("wasserstein_1d triangle inequality") {
    Rng rng(12);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> a = random_vector(rng, 8), b = random_vector(rng, 8),
                            c = random_vector(rng, 8);
        double ab = wasserstein_1d(a, b), bc = wasserstein_1d(b, c), ac = wasserstein_1d(a, c);
        CHECK(ac <= ab + bc + 1e-9);
    }
}

TEST_CASE("sample_projections on the unit sphere") {
    ProjectionSet p1 = sample_projections(1, 32, 5);
    for (int i = 0; i < p1.num_projections; ++i) {
        double v = p1.vectors[i];
        CHECK((v == 1.0 || v == -1.0));
    }
    ProjectionSet p8 = sample_projections(8, 64, 6);
    for (int i = 0; i < p8.num_projections; ++i) {
        double norm2 = 0.0;
        for (double v : p8.row(i)) norm2 += v * v;
        CHECK(std::sqrt(norm2) == doctest::Approx(1.0).epsilon(1e-12));
    }
    ProjectionSet again = sample_projections(8, 64, 6);
    CHECK(again.vectors == p8.vectors);
}

TEST_CASE("projection symmetry Monte Carlo") {
    // Mean of <mu, v> over many v on the sphere is 0 within sampling error.
    const int d = 6, n = 10000;
    ProjectionSet proj = sample_projections(d, n, 17);
    std::vector<double> mu(d, 1.0);
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double dot = 0.0;
        for (int k = 0; k < d; ++k) dot += mu[k] * proj.row(i)[k];
        sum += dot;
        sum2 += dot * dot;
    }
    double mean = sum / n;
    double stderr_mean = std::sqrt((sum2 / n - mean * mean) / n);
    CHECK(std::abs(mean) < 3.0 * stderr_mean);
}

TEST_CASE("sliced_wasserstein basics") {
    EmpiricalBatch a = gaussian_batch(16, 5, 0.0, 23);
    EmpiricalBatch shuffled = a;
    // reverse the rows
    for (int i = 0; i < a.count; ++i)
        std::copy(a.row(i).begin(), a.row(i).end(), shuffled.row_ptr(a.count - 1 - i));
    ProjectionSet proj = sample_projections(5, 25, 3);
    CHECK(sliced_wasserstein(a, shuffled, proj) == 0.0);
    CHECK(sliced_wasserstein(a, a, proj) == 0.0);

    EmpiricalBatch b = gaussian_batch(16, 5, 1.0, 24);
    double w_ab = sliced_wasserstein(a, b, proj);
    CHECK(w_ab > 0.0);
    CHECK(sliced_wasserstein(b, a, proj) == doctest::Approx(w_ab).epsilon(1e-12));

    EmpiricalBatch wrong(4, 3);
    CHECK_THROWS_AS(sliced_wasserstein(a, wrong, proj), DimensionError);
}

TEST_CASE("sliced_wasserstein reduces to wasserstein_1d in d = 1") {
    EmpiricalBatch a = gaussian_batch(20, 1, 0.0, 31);
    EmpiricalBatch b = gaussian_batch(14, 1, 0.5, 32);
    std::vector<double> av(a.points), bv(b.points);
    double w1 = wasserstein_1d(av, bv);
    for (uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        ProjectionSet proj = sample_projections(1, 40, seed);
        CHECK(sliced_wasserstein(a, b, proj) == doctest::Approx(w1).epsilon(1e-12));
    }
}

TEST_CASE("sliced_wasserstein is consistent as projections grow") {
    EmpiricalBatch a = gaussian_batch(64, 8, 0.0, 41);
    EmpiricalBatch b = gaussian_batch(64, 8, 2.0, 42);
    double reference = sliced_wasserstein(a, b, sample_projections(8, 5000, 7));
    double estimate = sliced_wasserstein(a, b, sample_projections(8, 100, 8));
    CHECK(estimate == doctest::Approx(reference).epsilon(0.10));

    // Doubling N shrinks the deviation from a high-N reference on average.
    double err_small = 0.0, err_large = 0.0;
    for (uint64_t s = 0; s < 6; ++s) {
        err_small +=
            std::abs(sliced_wasserstein(a, b, sample_projections(8, 25, 100 + s)) - reference);
        err_large +=
            std::abs(sliced_wasserstein(a, b, sample_projections(8, 400, 200 + s)) - reference);
    }
    CHECK(err_large < err_small);
}

TEST_CASE("kl and js divergences") {
    Histogram p, q;
    p.edges = {0.0, 1.0, 2.0};
    p.mass = {1.0, 0.0};
    q.edges = p.edges;
    q.mass = {0.5, 0.5};
    CHECK(kl_divergence(p, p) == 0.0);
    CHECK(kl_divergence(p, q) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Rng rng(55);
    Histogram r;
    r.edges = {0, 1, 2, 3, 4};
    r.mass = {0.1, 0.2, 0.3, 0.4};
    Histogram s;
    s.edges = r.edges;
    s.mass = {0.4, 0.3, 0.2, 0.1};
    CHECK(js_divergence(r, s) == doctest::Approx(js_divergence(s, r)).epsilon(1e-14));
    CHECK(js_divergence(r, s) <= std::log(2.0));
    CHECK(js_divergence(r, r) == 0.0);

    Histogram mismatched;
    mismatched.edges = {0, 1, 2};
    mismatched.mass = {0.5, 0.5};
    CHECK_THROWS_AS(kl_divergence(r, mismatched), DimensionError);
}

TEST_CASE("tail sensitivity fixture reproduces the ordering") {
    TailSensitivityReport r = tail_sensitivity_demo();
    CHECK(r.w_p1 < r.w_p2);
    CHECK(r.kl_p1 > r.kl_p2);
    CHECK(r.js_p1 > r.js_p2);
    CHECK(r.wasserstein_prefers_p1());
    CHECK(r.divergences_prefer_p2());

    std::string csv = r.to_csv();
    CHECK(csv.find("metric,P1_vs_T,P2_vs_T") == 0);
    CHECK(csv.find("wasserstein,") != std::string::npos);
}

TEST_CASE("replacing the mode-only prediction with the target flips every metric") {
    TailDemoFixture fx = tail_demo_fixture();
    TailSensitivityReport r = tail_sensitivity_report(fx.target, fx.p1, fx.target);
    CHECK(r.w_p2 == 0.0);
    CHECK(r.kl_p2 == 0.0);
    CHECK(r.js_p2 == 0.0);
    CHECK(r.w_p1 > r.w_p2);
    CHECK(r.kl_p1 > r.kl_p2);
    CHECK(r.js_p1 > r.js_p2);
}

TEST_CASE("fixture family search confirms the shipped parameters") {
    // Search shifted-copy vs mode-only predictions over a small grid of
    // mode shifts; the shipped fixture uses shift 0.6 and must satisfy the
    // ordering.
    int satisfying = 0;
    bool shipped_ok = false;
    for (double shift : {0.3, 0.45, 0.6, 0.75, 0.9}) {
        // rebuild the family by shifting the target's components
        const double lo = -2.0, hi = 13.0;
        const int bins = kDemoHistogramBins;
        auto make = [&](std::vector<double> w, std::vector<double> mu, std::vector<double> s) {
            Histogram h;
            h.edges.resize(bins + 1);
            h.mass.resize(bins);
            double width = (hi - lo) / bins;
            for (int i = 0; i <= bins; ++i) h.edges[i] = lo + width * i;
            double total = 0.0;
            for (int i = 0; i < bins; ++i) {
                double x = 0.5 * (h.edges[i] + h.edges[i + 1]);
                double pdf = 0.0;
                for (size_t k = 0; k < w.size(); ++k) {
                    double z = (x - mu[k]) / s[k];
                    pdf += w[k] * std::exp(-0.5 * z * z) / (s[k] * std::sqrt(2.0 * M_PI));
                }
                h.mass[i] = pdf * width;
                total += h.mass[i];
            }
            for (double& m : h.mass) m /= total;
            return h;
        };
        Histogram target = make({0.5, 0.5}, {0.0, 8.0}, {0.2, 1.0});
        Histogram p1 = make({0.5, 0.5}, {shift, 8.0 + shift}, {0.2, 1.0});
        Histogram p2 = make({1.0}, {0.0}, {0.2});
        TailSensitivityReport r = tail_sensitivity_report(target, p1, p2);
        bool ok = r.w_p1 < r.w_p2 && r.kl_p1 > r.kl_p2 && r.js_p1 > r.js_p2;
        satisfying += ok;
        if (shift == 0.6) shipped_ok = ok;
    }
    CHECK(satisfying >= 1);
    CHECK(shipped_ok);
}

}  // TEST_SUITE
