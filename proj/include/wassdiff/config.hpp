#pragma once

#include <string>

#include "wassdiff/grid.hpp"
#include "wassdiff/metrics.hpp"
#include "wassdiff/scorenet.hpp"
#include "wassdiff/sde.hpp"
#include "wassdiff/training.hpp"

namespace wassdiff {

struct DataConfig {
    SyntheticPairConfig pair;
    int num_pairs = 16;
    double c_p = kDefaultCp;
};

struct ModelConfig {
    int hidden_channels = 16;
    int depth = 3;
    int time_embed_dim = 32;
};

struct TiledConfig {
    int patch = 256;
    int stride = 192;
    double kernel_std_fraction = 0.25;
};

struct ExperimentConfig {
    double alpha_baseline = 0.0;
    double alpha_wdr = 0.2;
    int eval_pairs = 2;
};

struct PathsConfig {
    std::string data_dir;
    std::string out_dir;
    std::string checkpoint;
};

// Whole-run configuration. Parsing is strict: unknown keys anywhere are a
// ConfigError, and the persisted effective config has every default filled in.
struct RunConfig {
    DataConfig data;
    NoiseSchedule schedule;
    TrainConfig train;
    SamplerConfig sampler;
    MetricThresholds metrics;
    ModelConfig model;
    TiledConfig tiled;
    ExperimentConfig experiment;
    PathsConfig paths;

    // Condition channels the generator produces: coarse precip + station
    // density + ancillary channels.
    int condition_channels() const { return 2 + data.pair.num_ancillary; }
    Architecture architecture() const;
    void validate() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& cfg);
void write_effective_config(const RunConfig& cfg, const std::string& out_dir);

}  // namespace wassdiff
