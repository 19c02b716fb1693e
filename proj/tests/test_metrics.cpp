#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "wassdiff/metrics.hpp"
#include "wassdiff/rng.hpp"

using namespace wassdiff;

namespace {

GridField field_from(std::initializer_list<double> vals, int h, int w, double cell_km = 1.0) {
    GridField f(h, w, Space::physical, cell_km);
    std::copy(vals.begin(), vals.end(), f.values.begin());
    return f;
}

GridField random_field(int h, int w, uint64_t seed, double scale = 30.0) {
    GridField f(h, w, Space::physical);
    Rng rng(seed);
    for (double& v : f.values) v = scale * rng.uniform01();
    return f;
}

// Exact piecewise integration of (F(z) - 1{z >= y})^2 over the real line.
double crps_integral(std::vector<double> ens, double y) {
    std::vector<double> pts = ens;
    pts.push_back(y);
    std::sort(pts.begin(), pts.end());
    std::sort(ens.begin(), ens.end());
    double total = 0.0;
    for (size_t k = 0; k + 1 < pts.size(); ++k) {
        double lo = pts[k], hi = pts[k + 1];
        if (hi <= lo) continue;
        double mid = 0.5 * (lo + hi);
        double f =
            static_cast<double>(std::upper_bound(ens.begin(), ens.end(), mid) - ens.begin()) /
            ens.size();
        double ind = mid >= y ? 1.0 : 0.0;
        total += (f - ind) * (f - ind) * (hi - lo);
    }
    return total;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("mae and bias hand cases") {
    GridField obs = field_from({2.0, 2.0}, 1, 2);
    GridField pred = field_from({0.0, 4.0}, 1, 2);
    CHECK(mae(pred, obs) == 2.0);
    CHECK(bias(pred, obs) == 0.0);

    CHECK(mae(obs, obs) == 0.0);
    CHECK(bias(obs, obs) == 0.0);

    GridField shifted = obs;
    for (double& v : shifted.values) v += 2.0;
    CHECK(mae(shifted, obs) == 2.0);
    CHECK(bias(shifted, obs) == 2.0);

    GridField wrong(2, 2, Space::physical);
    CHECK_THROWS_AS(mae(wrong, obs), DimensionError);
    GridField norm(1, 2, Space::normalized);
    CHECK_THROWS_AS(mae(norm, obs), StateError);
}

TEST_CASE("csi confusion cells") {
    GridField pred = field_from({20, 0, 0, 20}, 2, 2);
    GridField obs = field_from({20, 0, 20, 0}, 2, 2);
    CHECK(csi(pred, obs, 10.0, 1.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(csi(obs, obs, 10.0, 1.0) == 1.0);

    GridField quiet = field_from({0, 0, 0, 0}, 2, 2);
    CHECK(csi(quiet, quiet, 10.0, 1.0) == 1.0);  // no events anywhere
}

TEST_CASE("csi is a monotone transform of f1") {
    Rng rng(17);
    for (int rep = 0; rep < 20; ++rep) {
        GridField pred = random_field(8, 8, 100 + rep);
        GridField obs = random_field(8, 8, 200 + rep);
        double c = csi(pred, obs, 15.0, 1.0);
        long tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < pred.size(); ++i) {
            bool p = pred.values[i] >= 15.0, o = obs.values[i] >= 15.0;
            tp += p && o;
            fp += p && !o;
            fn += !p && o;
        }
        if (tp + fp + fn == 0) continue;
        double f1 = 2.0 * tp / (2.0 * tp + fp + fn);
        CHECK(c == doctest::Approx(f1 / (2.0 - f1)).epsilon(1e-12));
    }
}

TEST_CASE("pooled csi forgives small displacements") {
    GridField pred(32, 32, Space::physical);
    GridField obs(32, 32, Space::physical);
    pred.at(2, 3) = 50.0;   // same 16x16 block,
    obs.at(10, 12) = 50.0;  // different pixels
    CHECK(csi(pred, obs, 10.0, 1.0) == 0.0);
    CHECK(csi(pred, obs, 10.0, 16.0) == 1.0);
    CHECK_THROWS_AS(csi(pred, obs, 10.0, 3.5), DomainError);
}

TEST_CASE("hrre counts exceedances") {
    GridField obs(3, 3, Space::physical);
    for (int i = 0; i < 5; ++i) obs.values[i] = 60.0;
    GridField pred(3, 3, Space::physical);
    for (int i = 0; i < 3; ++i) pred.values[i] = 120.0;
    CHECK(hrre(pred, obs) == 2.0);
    CHECK(hrre(obs, obs) == 0.0);

    // spatial permutation of pred does not change the count
    GridField shuffled = pred;
    std::rotate(shuffled.values.begin(), shuffled.values.begin() + 4, shuffled.values.end());
    CHECK(hrre(shuffled, obs) == hrre(pred, obs));
}

TEST_CASE("mppe quantile error") {
    GridField obs = random_field(40, 50, 31);
    CHECK(mppe(obs, obs) == 0.0);

    GridField doubled = obs;
    for (double& v : doubled.values) v *= 2.0;
    double q = empirical_quantile(obs.values, 0.999);
    CHECK(mppe(doubled, obs) == doctest::Approx(q).epsilon(1e-9));

    // 2000-pixel fields rescaled to hit target quantiles 100 and 80
    GridField a = random_field(40, 50, 32);
    GridField b = random_field(40, 50, 33);
    double qa = empirical_quantile(a.values, 0.999);
    double qb = empirical_quantile(b.values, 0.999);
    for (double& v : a.values) v *= 100.0 / qa;
    for (double& v : b.values) v *= 80.0 / qb;
    CHECK(mppe(b, a) == doctest::Approx(20.0).epsilon(1e-9));
}

TEST_CASE("empirical quantile endpoints and interpolation") {
    std::vector<double> v{3.0, 1.0, 2.0};
    CHECK(empirical_quantile(v, 0.0) == 1.0);
    CHECK(empirical_quantile(v, 1.0) == 3.0);
    CHECK(empirical_quantile(v, 0.5) == 2.0);
    CHECK(empirical_quantile(v, 0.25) == doctest::Approx(1.5).epsilon(1e-15));
    std::vector<double> empty;
    CHECK_THROWS_AS(empirical_quantile(empty, 0.5), DomainError);
}

TEST_CASE("crps degenerate and hand cases") {
    GridField obs = field_from({1.0}, 1, 1);
    Ensemble single;
    single.members = {field_from({3.0}, 1, 1)};
    CHECK(crps(single, obs) == doctest::Approx(mae(single.members[0], obs)).epsilon(1e-15));

    Ensemble two;
    two.members = {field_from({0.0}, 1, 1), field_from({2.0}, 1, 1)};
    CHECK(crps(two, obs) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("crps identity matches direct integration") {
    Rng rng(77);
    for (int rep = 0; rep < 15; ++rep) {
        size_t m = 1 + rng.uniform_index(8);
        Ensemble ens;
        for (size_t i = 0; i < m; ++i) ens.members.push_back(random_field(3, 3, 500 + 10 * rep + i));
        GridField obs = random_field(3, 3, 900 + rep);
        double closed_form = crps(ens, obs);

        double integral = 0.0;
        for (size_t px = 0; px < obs.size(); ++px) {
            std::vector<double> vals;
            for (const auto& mem : ens.members) vals.push_back(mem.values[px]);
            integral += crps_integral(vals, obs.values[px]);
        }
        integral /= static_cast<double>(obs.size());
        CHECK(closed_form == doctest::Approx(integral).epsilon(1e-6));
    }
}

TEST_CASE("crps is bounded by the ensemble mean absolute error") {
    Rng rng(88);
    Ensemble ens;
    for (int i = 0; i < 6; ++i) ens.members.push_back(random_field(6, 6, 700 + i));
    GridField obs = random_field(6, 6, 800);
    double spreadless = 0.0;
    for (const auto& m : ens.members) spreadless += mae(m, obs);
    spreadless /= ens.size();
    CHECK(crps(ens, obs) <= spreadless + 1e-12);
}

TEST_CASE("crps prefers the unshifted ensemble") {
    Rng rng(99);
    int wins = 0;
    for (int rep = 0; rep < 10; ++rep) {
        Ensemble good, shifted;
        for (int i = 0; i < 24; ++i) {
            GridField m(8, 8, Space::physical);
            Rng member_rng(1000 + 100 * rep + i);
            for (double& v : m.values) v = 10.0 + member_rng.normal();
            good.members.push_back(m);
            for (double& v : m.values) v += 2.0;
            shifted.members.push_back(m);
        }
        GridField obs(8, 8, Space::physical);
        Rng obs_rng(5000 + rep);
        for (double& v : obs.values) v = 10.0 + obs_rng.normal();
        wins += crps(good, obs) < crps(shifted, obs);
    }
    CHECK(wins >= 9);
}

TEST_CASE("threshold metrics ignore sub-threshold noise") {
    GridField pred = random_field(8, 8, 41, 5.0);  // everything below 10
    GridField obs = random_field(8, 8, 42, 5.0);
    GridField noisy = pred;
    Rng rng(43);
    for (double& v : noisy.values) v = std::max(0.0, v + 0.5 * rng.uniform01());
    CHECK(csi(pred, obs, 10.0, 1.0) == csi(noisy, obs, 10.0, 1.0));
    CHECK(hrre(pred, obs) == hrre(noisy, obs));
}

TEST_CASE("qq curve of an identical ensemble lies on the diagonal") {
    GridField obs = random_field(10, 10, 51);
    Ensemble ens;
    ens.members = {obs};
    QqCurve curve = qq_curve(ens, obs);
    CHECK(curve.percentiles.size() == 101);
    for (int p = 0; p <= 100; ++p) {
        CHECK(curve.member_quantiles[0][p] == curve.obs_quantiles[p]);
        CHECK(curve.std_quantiles[p] == 0.0);
    }
    CHECK(curve.obs_quantiles[0] == *std::min_element(obs.values.begin(), obs.values.end()));
    CHECK(curve.obs_quantiles[100] == *std::max_element(obs.values.begin(), obs.values.end()));
}

TEST_CASE("qq quantiles are monotone per member") {
    Ensemble ens;
    for (int i = 0; i < 4; ++i) ens.members.push_back(random_field(12, 12, 600 + i));
    GridField obs = random_field(12, 12, 611);
    QqCurve curve = qq_curve(ens, obs);
    for (const auto& member : curve.member_quantiles)
        for (int p = 1; p <= 100; ++p) CHECK(member[p] >= member[p - 1]);
}

TEST_CASE("evaluate_sample on the identity forecast") {
    GridField obs = random_field(16, 16, 71);
    Ensemble ens;
    ens.members = {obs};
    MetricThresholds thresholds;
    SampleMetrics row = evaluate_sample("x", ens, obs, thresholds);
    CHECK(row.mae == 0.0);
    CHECK(row.bias == 0.0);
    CHECK(row.csi == 1.0);
    CHECK(row.hrre == 0.0);
    CHECK(row.mppe == 0.0);
    CHECK(row.crps == 0.0);
}

}  // TEST_SUITE
