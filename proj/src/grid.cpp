#include "wassdiff/grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "wassdiff/rng.hpp"
#include <json.hpp>

namespace wassdiff {

using nlohmann::json;

void GridField::validate() const {
    if (height <= 0 || width <= 0)
        throw DimensionError("grid dimensions must be positive");
    if (values.size() != static_cast<size_t>(height) * width)
        throw DimensionError("grid value count does not match height*width");
    if (cell_km <= 0.0)
        throw DomainError("cell_km must be positive");
    for (double v : values) {
        if (!std::isfinite(v))
            throw DomainError("grid contains non-finite values");
        if (space == Space::physical && v < 0.0)
            throw DomainError("physical-space grid contains negative values");
    }
}

std::string to_string(ChannelRole role) {
    switch (role) {
        case ChannelRole::coarse_precip: return "coarse_precip";
        case ChannelRole::station_density: return "station_density";
        case ChannelRole::ancillary: return "ancillary";
    }
    throw DomainError("unknown channel role");
}

ChannelRole channel_role_from_string(const std::string& name) {
    if (name == "coarse_precip") return ChannelRole::coarse_precip;
    if (name == "station_density") return ChannelRole::station_density;
    if (name == "ancillary") return ChannelRole::ancillary;
    throw ParseError("unknown channel role: " + name);
}

void ConditionTensor::validate() const {
    if (channels.size() != channel_roles.size())
        throw DimensionError("condition channel/role count mismatch");
    int coarse = 0;
    for (size_t i = 0; i < channels.size(); ++i) {
        if (channels[i].height != height() || channels[i].width != width())
            throw DimensionError("condition channels disagree in shape");
        if (channel_roles[i] == ChannelRole::coarse_precip) ++coarse;
    }
    if (coarse > 1)
        throw DimensionError("more than one coarse_precip channel");
}

void SyntheticPairConfig::validate() const {
    if (fine_size <= 0) throw ConfigError("fine_size must be positive");
    if (coarsen_factor < 2) throw ConfigError("coarsen_factor must be >= 2");
    if (fine_size % coarsen_factor != 0)
        throw ConfigError("fine_size must be divisible by coarsen_factor");
    if (tail_heaviness < 0.0) throw ConfigError("tail_heaviness must be >= 0");
    if (smoothness <= 0.0) throw ConfigError("smoothness must be positive");
    if (num_ancillary < 0) throw ConfigError("num_ancillary must be >= 0");
    if (dry_fraction < 0.0 || dry_fraction >= 1.0)
        throw ConfigError("dry_fraction must lie in [0, 1)");
    if (median_intensity_mm <= 0.0)
        throw ConfigError("median_intensity_mm must be positive");
    if (cell_km <= 0.0) throw ConfigError("cell_km must be positive");
}

GridField normalize(const GridField& field, double c_p) {
    if (field.space != Space::physical)
        throw StateError("normalize expects a physical-space field");
    if (c_p <= 0.0)
        throw DomainError("c_p must be positive");
    GridField out = field;
    out.space = Space::normalized;
    for (double& v : out.values) {
        if (!std::isfinite(v) || v < 0.0)
            throw DomainError("normalize requires finite values >= 0");
        v = std::log1p(v) / c_p;
    }
    return out;
}

GridField denormalize(const GridField& field, double c_p) {
    if (field.space != Space::normalized)
        throw StateError("denormalize expects a normalized-space field");
    if (c_p <= 0.0)
        throw DomainError("c_p must be positive");
    GridField out = field;
    out.space = Space::physical;
    // The exponent is capped so noise-dominated states stay finite and fit
    // the float32 grid format; data-range values sit far below the cap.
    for (double& v : out.values)
        v = std::max(0.0, std::expm1(std::min(c_p * v, 85.0)));
    return out;
}

ConditionTensor normalize_condition(const ConditionTensor& cond, double c_p) {
    cond.validate();
    ConditionTensor out = cond;
    for (auto& ch : out.channels)
        if (ch.space == Space::physical) ch = normalize(ch, c_p);
    return out;
}

GridField coarsen(const GridField& field, int factor) {
    if (factor <= 0)
        throw DomainError("coarsen factor must be positive");
    if (field.height % factor != 0 || field.width % factor != 0)
        throw DimensionError("grid dimensions not divisible by coarsen factor");
    GridField out(field.height / factor, field.width / factor, field.space,
                  field.cell_km * factor);
    const double inv = 1.0 / (static_cast<double>(factor) * factor);
    for (int r = 0; r < out.height; ++r) {
        for (int c = 0; c < out.width; ++c) {
            double sum = 0.0;
            for (int dr = 0; dr < factor; ++dr)
                for (int dc = 0; dc < factor; ++dc)
                    sum += field.at(r * factor + dr, c * factor + dc);
            out.at(r, c) = sum * inv;
        }
    }
    return out;
}

GridField upsample_bilinear(const GridField& field, int target_h, int target_w) {
    if (target_h < field.height || target_w < field.width)
        throw DimensionError("bilinear upsample target smaller than source");
    GridField out(target_h, target_w, field.space,
                  field.cell_km * field.height / target_h);
    // Corner-aligned sampling: output corners map exactly onto input corners.
    const double sr = target_h > 1 ? static_cast<double>(field.height - 1) / (target_h - 1) : 0.0;
    const double sc = target_w > 1 ? static_cast<double>(field.width - 1) / (target_w - 1) : 0.0;
    for (int r = 0; r < target_h; ++r) {
        double fr = r * sr;
        int r0 = std::min(static_cast<int>(fr), field.height - 1);
        int r1 = std::min(r0 + 1, field.height - 1);
        double wr = fr - r0;
        for (int c = 0; c < target_w; ++c) {
            double fc = c * sc;
            int c0 = std::min(static_cast<int>(fc), field.width - 1);
            int c1 = std::min(c0 + 1, field.width - 1);
            double wc = fc - c0;
            double top = field.at(r0, c0) * (1.0 - wc) + field.at(r0, c1) * wc;
            double bot = field.at(r1, c0) * (1.0 - wc) + field.at(r1, c1) * wc;
            out.at(r, c) = top * (1.0 - wr) + bot * wr;
        }
    }
    return out;
}

namespace {

// Unit-variance Gaussian random field: white noise smoothed with a separable
// Gaussian kernel, rescaled by the kernel's L2 norm.
GridField gaussian_random_field(int size, double corr_len, Rng& rng, double cell_km) {
    GridField white(size, size, Space::normalized, cell_km);
    for (double& v : white.values) v = rng.normal();

    int radius = std::max(1, static_cast<int>(std::ceil(3.0 * corr_len)));
    std::vector<double> kernel(2 * radius + 1);
    double norm2 = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        double w = std::exp(-0.5 * (i * i) / (corr_len * corr_len));
        kernel[i + radius] = w;
        norm2 += w * w;
    }
    const double inv_l2 = 1.0 / std::sqrt(norm2);

    // Horizontal then vertical pass with zero boundary; the white noise is
    // stationary so the interior has unit variance after rescaling.
    GridField tmp(size, size, Space::normalized, cell_km);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            double sum = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                int cc = c + k;
                if (cc >= 0 && cc < size) sum += kernel[k + radius] * white.at(r, cc);
            }
            tmp.at(r, c) = sum * inv_l2;
        }
    GridField out(size, size, Space::normalized, cell_km);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            double sum = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                int rr = r + k;
                if (rr >= 0 && rr < size) sum += kernel[k + radius] * tmp.at(rr, c);
            }
            out.at(r, c) = sum * inv_l2;
        }
    return out;
}

double quantile_of(std::vector<double> sorted_copy, double q) {
    std::sort(sorted_copy.begin(), sorted_copy.end());
    double h = q * (sorted_copy.size() - 1);
    size_t i = static_cast<size_t>(h);
    if (i + 1 >= sorted_copy.size()) return sorted_copy.back();
    double frac = h - static_cast<double>(i);
    return sorted_copy[i] + frac * (sorted_copy[i + 1] - sorted_copy[i]);
}

}  // namespace

SyntheticPair generate_pair(const SyntheticPairConfig& cfg) {
    cfg.validate();

    Rng target_rng(cfg.seed, {0x7461726765ULL});  // target stream
    GridField g = gaussian_random_field(cfg.fine_size, cfg.smoothness, target_rng, cfg.cell_km);

    GridField target(cfg.fine_size, cfg.fine_size, Space::physical, cfg.cell_km);
    for (size_t i = 0; i < g.values.size(); ++i)
        target.values[i] = cfg.median_intensity_mm * std::exp(cfg.tail_heaviness * g.values[i]);

    // Zero out the driest pixels to mimic precipitation's mass at zero.
    // Strictly-below comparison keeps constant fields untouched.
    if (cfg.dry_fraction > 0.0) {
        double thresh = quantile_of(target.values, cfg.dry_fraction);
        for (double& v : target.values)
            if (v < thresh) v = 0.0;
    }

    ConditionTensor cond;
    GridField coarse = coarsen(target, cfg.coarsen_factor);
    cond.channels.push_back(upsample_bilinear(coarse, cfg.fine_size, cfg.fine_size));
    cond.channel_roles.push_back(ChannelRole::coarse_precip);

    GridField density(cfg.fine_size, cfg.fine_size, Space::normalized, cfg.cell_km, 1.0);
    cond.channels.push_back(density);
    cond.channel_roles.push_back(ChannelRole::station_density);

    for (int a = 0; a < cfg.num_ancillary; ++a) {
        Rng anc_rng(cfg.seed, {0x616e63ULL, static_cast<uint64_t>(a)});
        GridField anc = gaussian_random_field(cfg.fine_size, cfg.smoothness, anc_rng, cfg.cell_km);
        auto [lo_it, hi_it] = std::minmax_element(anc.values.begin(), anc.values.end());
        double lo = *lo_it, hi = *hi_it;
        double span = hi > lo ? hi - lo : 1.0;
        for (double& v : anc.values) v = (v - lo) / span;
        cond.channels.push_back(std::move(anc));
        cond.channel_roles.push_back(ChannelRole::ancillary);
    }

    cond.validate();
    target.validate();
    return {std::move(target), std::move(cond)};
}

namespace {

std::string sidecar_path(const std::string& grid_path) {
    std::filesystem::path p(grid_path);
    p.replace_extension(".json");
    return p.string();
}

uint32_t float_to_le_bits(float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    if constexpr (std::endian::native == std::endian::big)
        bits = __builtin_bswap32(bits);
    return bits;
}

float le_bits_to_float(uint32_t bits) {
    if constexpr (std::endian::native == std::endian::big)
        bits = __builtin_bswap32(bits);
    float f;
    std::memcpy(&f, &bits, sizeof f);
    return f;
}

}  // namespace

void write_grid(const GridField& field, const std::string& path) {
    field.validate();

    json meta = {
        {"height", field.height},
        {"width", field.width},
        {"space", field.space == Space::physical ? "physical" : "normalized"},
        {"cell_km", field.cell_km},
        {"units", field.space == Space::physical ? "mm/day" : "dimensionless"},
    };
    std::ofstream js(sidecar_path(path));
    if (!js) throw IoError("cannot write sidecar for " + path);
    js << meta.dump(2) << "\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    std::vector<unsigned char> buf(field.values.size() * 4);
    for (size_t i = 0; i < field.values.size(); ++i) {
        uint32_t bits = float_to_le_bits(static_cast<float>(field.values[i]));
        buf[4 * i + 0] = static_cast<unsigned char>(bits);
        buf[4 * i + 1] = static_cast<unsigned char>(bits >> 8);
        buf[4 * i + 2] = static_cast<unsigned char>(bits >> 16);
        buf[4 * i + 3] = static_cast<unsigned char>(bits >> 24);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write to " + path);
}

GridField read_grid(const std::string& path) {
    std::ifstream js(sidecar_path(path));
    if (!js) throw ParseError("missing sidecar for " + path);
    json meta;
    try {
        js >> meta;
    } catch (const json::exception& e) {
        throw ParseError("malformed sidecar for " + path + ": " + e.what());
    }

    GridField field;
    try {
        field.height = meta.at("height").get<int>();
        field.width = meta.at("width").get<int>();
        std::string space = meta.at("space").get<std::string>();
        if (space == "physical")
            field.space = Space::physical;
        else if (space == "normalized")
            field.space = Space::normalized;
        else
            throw ParseError("unknown space tag: " + space);
        field.cell_km = meta.at("cell_km").get<double>();
    } catch (const json::exception& e) {
        throw ParseError("sidecar for " + path + " missing fields: " + e.what());
    }
    if (field.height <= 0 || field.width <= 0)
        throw FormatError("non-positive dimensions in sidecar for " + path);

    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw ParseError("cannot open " + path);
    auto bytes = static_cast<size_t>(in.tellg());
    size_t expected = static_cast<size_t>(field.height) * field.width * 4;
    if (bytes == 0) throw ParseError("empty grid file " + path);
    if (bytes != expected)
        throw FormatError("payload of " + path + " does not match header dimensions");
    in.seekg(0);
    std::vector<unsigned char> buf(bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw IoError("short read from " + path);

    field.values.resize(static_cast<size_t>(field.height) * field.width);
    for (size_t i = 0; i < field.values.size(); ++i) {
        uint32_t bits = static_cast<uint32_t>(buf[4 * i]) |
                        (static_cast<uint32_t>(buf[4 * i + 1]) << 8) |
                        (static_cast<uint32_t>(buf[4 * i + 2]) << 16) |
                        (static_cast<uint32_t>(buf[4 * i + 3]) << 24);
        field.values[i] = le_bits_to_float(bits);
    }
    field.validate();
    return field;
}

void write_condition(const ConditionTensor& cond, const std::string& json_path,
                     const std::string& channel_prefix) {
    cond.validate();
    json meta;
    meta["channels"] = json::array();
    for (size_t i = 0; i < cond.channels.size(); ++i) {
        std::string grid_path = channel_prefix + "_c" + std::to_string(i) + ".grid";
        write_grid(cond.channels[i], grid_path);
        meta["channels"].push_back({
            {"path", std::filesystem::path(grid_path).filename().string()},
            {"role", to_string(cond.channel_roles[i])},
        });
    }
    std::ofstream out(json_path);
    if (!out) throw IoError("cannot write " + json_path);
    out << meta.dump(2) << "\n";
}

ConditionTensor read_condition(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw ParseError("cannot open " + json_path);
    json meta;
    try {
        in >> meta;
    } catch (const json::exception& e) {
        throw ParseError("malformed condition manifest " + json_path + ": " + e.what());
    }
    ConditionTensor cond;
    auto dir = std::filesystem::path(json_path).parent_path();
    try {
        for (const auto& ch : meta.at("channels")) {
            std::string rel = ch.at("path").get<std::string>();
            cond.channels.push_back(read_grid((dir / rel).string()));
            cond.channel_roles.push_back(channel_role_from_string(ch.at("role").get<std::string>()));
        }
    } catch (const json::exception& e) {
        throw ParseError("condition manifest " + json_path + " missing fields: " + e.what());
    }
    cond.validate();
    return cond;
}

}  // namespace wassdiff
