#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wassdiff/errors.hpp"

namespace wassdiff {

enum class Space { physical, normalized };

// 2-D gridded intensity field. Values are mm/day in physical space and
// dimensionless in normalized space; row-major storage.
struct GridField {
    int height = 0;
    int width = 0;
    std::vector<double> values;
    Space space = Space::physical;
    double cell_km = 1.0;

    GridField() = default;
    GridField(int h, int w, Space s, double cell = 1.0, double fill = 0.0)
        : height(h), width(w), values(static_cast<size_t>(h) * w, fill), space(s), cell_km(cell) {}

    size_t size() const { return values.size(); }
    double& at(int r, int c) { return values[static_cast<size_t>(r) * width + c]; }
    double at(int r, int c) const { return values[static_cast<size_t>(r) * width + c]; }

    // Throws unless dimensions and value ranges satisfy the field invariants.
    void validate() const;
};

enum class ChannelRole { coarse_precip, station_density, ancillary };

std::string to_string(ChannelRole role);
ChannelRole channel_role_from_string(const std::string& name);

// Multi-channel conditioning stack, all channels upsampled to target size.
struct ConditionTensor {
    std::vector<GridField> channels;
    std::vector<ChannelRole> channel_roles;

    int height() const { return channels.empty() ? 0 : channels.front().height; }
    int width() const { return channels.empty() ? 0 : channels.front().width; }
    size_t channel_count() const { return channels.size(); }

    // Channels must agree in shape and at most one may carry coarse_precip.
    void validate() const;
};

// Controls the synthetic coarse/fine pair generator.
struct SyntheticPairConfig {
    int fine_size = 64;
    int coarsen_factor = 4;
    double tail_heaviness = 1.0;  // log-normal sigma of the intensity marginal
    double smoothness = 4.0;      // correlation length in pixels
    uint64_t seed = 0;
    int num_ancillary = 0;
    double dry_fraction = 0.4;    // fraction of pixels forced to exactly zero
    double median_intensity_mm = 10.0;
    double cell_km = 1.0;

    void validate() const;
};

// The zero-preserving log normalization and its inverse. c_p defaults to 5.
inline constexpr double kDefaultCp = 5.0;

GridField normalize(const GridField& field, double c_p = kDefaultCp);
GridField denormalize(const GridField& field, double c_p = kDefaultCp);

// Normalizes any physical-space channels of a condition stack; channels that
// are already dimensionless pass through unchanged.
ConditionTensor normalize_condition(const ConditionTensor& cond, double c_p = kDefaultCp);

// Block-mean downsampling; dimensions must divide evenly.
GridField coarsen(const GridField& field, int factor);

// Corner-aligned bilinear interpolation up to (target_h, target_w).
GridField upsample_bilinear(const GridField& field, int target_h, int target_w);

// Synthetic heavy-tailed target plus its conditioning stack: the coarse
// precipitation proxy (coarsen + upsample of the target), a constant-one
// station-density channel, and optional smooth ancillary channels.
struct SyntheticPair {
    GridField target;
    ConditionTensor condition;
};
SyntheticPair generate_pair(const SyntheticPairConfig& cfg);

// Grid file I/O: <name>.grid holds row-major little-endian float32 values and
// <name>.json is a sidecar {height, width, space, cell_km, units}. `path` is
// the .grid file; the sidecar path is derived from it.
void write_grid(const GridField& field, const std::string& path);
GridField read_grid(const std::string& path);

// Condition tensors are stored as a JSON manifest listing one grid file plus
// role per channel.
void write_condition(const ConditionTensor& cond, const std::string& json_path,
                     const std::string& channel_prefix);
ConditionTensor read_condition(const std::string& json_path);

}  // namespace wassdiff
