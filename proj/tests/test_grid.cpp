#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "wassdiff/grid.hpp"
#include "wassdiff/rng.hpp"

using namespace wassdiff;

namespace {

GridField random_physical(int h, int w, uint64_t seed, double max_val = 300.0) {
    GridField f(h, w, Space::physical);
    Rng rng(seed);
    for (double& v : f.values) v = max_val * rng.uniform01();
    return f;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("grid") {

TEST_CASE("normalize is the zero-preserving log transform") {
    GridField f(1, 3, Space::physical);
    f.values = {0.0, std::exp(5.0) - 1.0, 10.0};
    GridField n = normalize(f, 5.0);
    CHECK(n.space == Space::normalized);
    CHECK(n.values[0] == 0.0);
    CHECK(n.values[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(n.values[2] == doctest::Approx(std::log1p(10.0) / 5.0).epsilon(1e-14));
    CHECK(kDefaultCp == 5.0);
}

TEST_CASE("normalize rejects bad inputs") {
    GridField f(1, 1, Space::physical);
    f.values = {-1.0};
    CHECK_THROWS_AS(normalize(f), DomainError);
    GridField n(1, 1, Space::normalized);
    CHECK_THROWS_AS(normalize(n), StateError);
    GridField ok(1, 1, Space::physical);
    CHECK_THROWS_AS(normalize(ok, 0.0), DomainError);
}

TEST_CASE("denormalize inverts normalize") {
    GridField f(1, 2, Space::normalized);
    f.values = {0.0, 1.0};
    GridField p = denormalize(f, 5.0);
    CHECK(p.space == Space::physical);
    CHECK(p.values[0] == 0.0);
    CHECK(p.values[1] == doctest::Approx(std::exp(5.0) - 1.0).epsilon(1e-12));

    GridField physical(1, 1, Space::physical);
    CHECK_THROWS_AS(denormalize(physical), StateError);

    GridField field = random_physical(16, 16, 42);
    GridField round = denormalize(normalize(field));
    for (size_t i = 0; i < field.size(); ++i)
        CHECK(round.values[i] ==
              doctest::Approx(field.values[i]).epsilon(1e-9));
}

TEST_CASE("normalize preserves intensity order") {
    GridField f = random_physical(8, 8, 7);
    GridField n = normalize(f);
    for (size_t i = 0; i + 1 < f.size(); ++i)
        for (size_t j = i + 1; j < f.size(); ++j)
            if (f.values[i] < f.values[j]) CHECK(n.values[i] < n.values[j]);
}

TEST_CASE("coarsen block means") {
    GridField c(4, 4, Space::physical, 1.0, 3.5);
    GridField cc = coarsen(c, 2);
    CHECK(cc.height == 2);
    for (double v : cc.values) CHECK(v == 3.5);

    GridField f(2, 2, Space::physical);
    f.values = {0.0, 2.0, 4.0, 6.0};
    GridField g = coarsen(f, 2);
    CHECK(g.height == 1);
    CHECK(g.width == 1);
    CHECK(g.values[0] == 3.0);

    GridField big = random_physical(12, 12, 3);
    GridField small = coarsen(big, 3);
    double mean_big = 0, mean_small = 0;
    for (double v : big.values) mean_big += v;
    for (double v : small.values) mean_small += v;
    mean_big /= big.size();
    mean_small /= small.size();
    CHECK(mean_small == doctest::Approx(mean_big).epsilon(1e-12));

    GridField odd(3, 3, Space::physical);
    CHECK_THROWS_AS(coarsen(odd, 2), DimensionError);
}

TEST_CASE("bilinear upsample is corner-aligned") {
    GridField c(2, 2, Space::physical, 1.0, 7.0);
    GridField u = upsample_bilinear(c, 5, 9);
    CHECK(u.height == 5);
    CHECK(u.width == 9);
    for (double v : u.values) CHECK(v == doctest::Approx(7.0).epsilon(1e-14));

    GridField line(1, 2, Space::physical);
    line.values = {0.0, 1.0};
    GridField up = upsample_bilinear(line, 1, 3);
    CHECK(up.values[0] == 0.0);
    CHECK(up.values[1] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(up.values[2] == 1.0);

    GridField f = random_physical(6, 6, 11);
    GridField same = upsample_bilinear(f, 6, 6);
    for (size_t i = 0; i < f.size(); ++i) CHECK(same.values[i] == f.values[i]);

    CHECK_THROWS_AS(upsample_bilinear(f, 4, 8), DimensionError);
}

TEST_CASE("generate_pair determinism and structure") {
    SyntheticPairConfig cfg;
    cfg.fine_size = 32;
    cfg.coarsen_factor = 4;
    cfg.seed = 99;
    cfg.num_ancillary = 2;
    SyntheticPair a = generate_pair(cfg);
    SyntheticPair b = generate_pair(cfg);
    CHECK(a.target.values == b.target.values);
    for (size_t c = 0; c < a.condition.channels.size(); ++c)
        CHECK(a.condition.channels[c].values == b.condition.channels[c].values);

    CHECK(a.condition.channel_count() == 4);
    CHECK(a.condition.channel_roles[0] == ChannelRole::coarse_precip);
    CHECK(a.condition.channel_roles[1] == ChannelRole::station_density);
    for (double v : a.condition.channels[1].values) CHECK(v == 1.0);

    // the coarse channel is coarsen-then-upsample of the target
    GridField expected =
        upsample_bilinear(coarsen(a.target, cfg.coarsen_factor), cfg.fine_size, cfg.fine_size);
    CHECK(a.condition.channels[0].values == expected.values);
}

TEST_CASE("generate_pair degenerate marginal is a constant field") {
    SyntheticPairConfig cfg;
    cfg.fine_size = 16;
    cfg.coarsen_factor = 4;
    cfg.tail_heaviness = 0.0;
    cfg.seed = 5;
    SyntheticPair pair = generate_pair(cfg);
    for (double v : pair.target.values)
        CHECK(v == doctest::Approx(cfg.median_intensity_mm).epsilon(1e-12));
}

TEST_CASE("generate_pair tail quantile grows with tail_heaviness") {
    auto q999 = [](const GridField& f) {
        std::vector<double> sorted = f.values;
        std::sort(sorted.begin(), sorted.end());
        return sorted[static_cast<size_t>(0.999 * (sorted.size() - 1))];
    };
    SyntheticPairConfig cfg;
    cfg.fine_size = 64;
    cfg.coarsen_factor = 4;
    cfg.seed = 123;
    double prev = -1.0;
    for (double tail : {0.5, 1.0, 1.5}) {
        cfg.tail_heaviness = tail;
        double q = q999(generate_pair(cfg).target);
        CHECK(q > prev);
        prev = q;
    }
}

TEST_CASE("generate_pair honors the dry fraction") {
    SyntheticPairConfig cfg;
    cfg.fine_size = 64;
    cfg.coarsen_factor = 4;
    cfg.seed = 77;
    cfg.dry_fraction = 0.4;
    SyntheticPair pair = generate_pair(cfg);
    size_t zeros = 0;
    for (double v : pair.target.values) zeros += v == 0.0;
    double frac = static_cast<double>(zeros) / pair.target.size();
    CHECK(frac == doctest::Approx(0.4).epsilon(0.05));
    CHECK_THROWS_AS(([&] {
                        SyntheticPairConfig bad = cfg;
                        bad.fine_size = 30;  // not divisible by 4
                        generate_pair(bad);
                    }()),
                    ConfigError);
}

TEST_CASE("grid file round trip") {
    GridField f = random_physical(64, 64, 2024);
    // quantize to what the 32-bit format can hold
    for (double& v : f.values) v = static_cast<float>(v);
    std::string path = temp_path("wassdiff_roundtrip.grid");
    write_grid(f, path);
    GridField g = read_grid(path);
    CHECK(g.height == 64);
    CHECK(g.width == 64);
    CHECK(g.space == Space::physical);
    CHECK(g.values == f.values);
}

TEST_CASE("grid file error paths") {
    std::string path = temp_path("wassdiff_bad.grid");
    GridField f = random_physical(4, 4, 1);
    write_grid(f, path);

    // truncate the payload so it no longer matches the header
    std::ofstream trunc(path, std::ios::binary | std::ios::trunc);
    trunc.write("\0\0\0\0", 4);
    trunc.close();
    CHECK_THROWS_AS(read_grid(path), FormatError);

    std::ofstream empty(path, std::ios::binary | std::ios::trunc);
    empty.close();
    CHECK_THROWS_AS(read_grid(path), ParseError);

    CHECK_THROWS_AS(read_grid(temp_path("wassdiff_does_not_exist.grid")), ParseError);
}

TEST_CASE("condition tensor io round trip") {
    SyntheticPairConfig cfg;
    cfg.fine_size = 16;
    cfg.coarsen_factor = 4;
    cfg.seed = 8;
    cfg.num_ancillary = 1;
    SyntheticPair pair = generate_pair(cfg);
    std::string dir = temp_path("wassdiff_cond");
    std::filesystem::create_directories(dir);
    write_condition(pair.condition, dir + "/cond.json", dir + "/cond");
    ConditionTensor back = read_condition(dir + "/cond.json");
    CHECK(back.channel_count() == pair.condition.channel_count());
    CHECK(back.channel_roles == pair.condition.channel_roles);
    for (size_t c = 0; c < back.channels.size(); ++c)
        for (size_t i = 0; i < back.channels[c].size(); ++i)
            CHECK(back.channels[c].values[i] ==
                  doctest::Approx(pair.condition.channels[c].values[i]).epsilon(1e-6));
}

}  // TEST_SUITE
