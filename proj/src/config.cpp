#include "wassdiff/config.hpp"

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>

#include <json.hpp>

namespace wassdiff {

using nlohmann::json;

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& context) {
    if (!obj.is_object()) throw ConfigError("config section '" + context + "' must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& item : obj.items())
        if (!ok.count(item.key()))
            throw ConfigError("unknown config key: " + context + "." + item.key());
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) {
        try {
            out = obj.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(std::string("config key has wrong type: ") + key);
        }
    }
}

void parse_data(const json& j, DataConfig& out) {
    check_keys(j,
               {"fine_size", "coarsen_factor", "tail_heaviness", "smoothness", "seed",
                "num_ancillary", "dry_fraction", "median_intensity_mm", "cell_km", "num_pairs",
                "c_p"},
               "data");
    read(j, "fine_size", out.pair.fine_size);
    read(j, "coarsen_factor", out.pair.coarsen_factor);
    read(j, "tail_heaviness", out.pair.tail_heaviness);
    read(j, "smoothness", out.pair.smoothness);
    read(j, "seed", out.pair.seed);
    read(j, "num_ancillary", out.pair.num_ancillary);
    read(j, "dry_fraction", out.pair.dry_fraction);
    read(j, "median_intensity_mm", out.pair.median_intensity_mm);
    read(j, "cell_km", out.pair.cell_km);
    read(j, "num_pairs", out.num_pairs);
    read(j, "c_p", out.c_p);
}

void parse_schedule(const json& j, NoiseSchedule& out) {
    check_keys(j, {"sigma_min", "sigma_max"}, "schedule");
    read(j, "sigma_min", out.sigma_min);
    read(j, "sigma_max", out.sigma_max);
}

void parse_train(const json& j, TrainConfig& out) {
    check_keys(j,
               {"alpha", "batch_size", "num_iters", "ema_rate", "learning_rate", "grad_clip",
                "swd_projections", "seed", "checkpoint_interval", "lambda_weighting"},
               "train");
    read(j, "alpha", out.alpha);
    read(j, "batch_size", out.batch_size);
    read(j, "num_iters", out.num_iters);
    read(j, "ema_rate", out.ema_rate);
    read(j, "learning_rate", out.learning_rate);
    read(j, "grad_clip", out.grad_clip);
    read(j, "swd_projections", out.swd_projections);
    read(j, "seed", out.seed);
    read(j, "checkpoint_interval", out.checkpoint_interval);
    read(j, "lambda_weighting", out.lambda_weighting);
}

void parse_sampler(const json& j, SamplerConfig& out) {
    check_keys(j, {"num_steps", "langevin_steps_per_predictor", "snr", "seed", "ensemble_size"},
               "sampler");
    read(j, "num_steps", out.num_steps);
    read(j, "langevin_steps_per_predictor", out.langevin_steps_per_predictor);
    read(j, "snr", out.snr);
    read(j, "seed", out.seed);
    read(j, "ensemble_size", out.ensemble_size);
}

void parse_metrics(const json& j, MetricThresholds& out) {
    check_keys(j, {"csi_threshold_mm", "pool_km", "hrre_threshold_mm", "mppe_quantile"},
               "metrics");
    read(j, "csi_threshold_mm", out.csi_threshold_mm);
    read(j, "pool_km", out.pool_km);
    read(j, "hrre_threshold_mm", out.hrre_threshold_mm);
    read(j, "mppe_quantile", out.mppe_quantile);
}

void parse_model(const json& j, ModelConfig& out) {
    check_keys(j, {"hidden_channels", "depth", "time_embed_dim"}, "model");
    read(j, "hidden_channels", out.hidden_channels);
    read(j, "depth", out.depth);
    read(j, "time_embed_dim", out.time_embed_dim);
}

void parse_tiled(const json& j, TiledConfig& out) {
    check_keys(j, {"patch", "stride", "kernel_std_fraction"}, "tiled");
    read(j, "patch", out.patch);
    read(j, "stride", out.stride);
    read(j, "kernel_std_fraction", out.kernel_std_fraction);
}

void parse_experiment(const json& j, ExperimentConfig& out) {
    check_keys(j, {"alpha_baseline", "alpha_wdr", "eval_pairs"}, "experiment");
    read(j, "alpha_baseline", out.alpha_baseline);
    read(j, "alpha_wdr", out.alpha_wdr);
    read(j, "eval_pairs", out.eval_pairs);
}

void parse_paths(const json& j, PathsConfig& out) {
    check_keys(j, {"data_dir", "out_dir", "checkpoint"}, "paths");
    read(j, "data_dir", out.data_dir);
    read(j, "out_dir", out.out_dir);
    read(j, "checkpoint", out.checkpoint);
}

}  // namespace

Architecture RunConfig::architecture() const {
    Architecture arch;
    arch.hidden_channels = model.hidden_channels;
    arch.depth = model.depth;
    arch.time_embed_dim = model.time_embed_dim;
    arch.condition_channels = condition_channels();
    arch.input_height = data.pair.fine_size;
    arch.input_width = data.pair.fine_size;
    return arch;
}

void RunConfig::validate() const {
    data.pair.validate();
    if (data.num_pairs < 1) throw ConfigError("data.num_pairs must be >= 1");
    if (!(data.c_p > 0.0)) throw ConfigError("data.c_p must be positive");
    schedule.validate();
    train.validate();
    sampler.validate();
    architecture().validate();
    if (metrics.pool_km <= 0.0) throw ConfigError("metrics.pool_km must be positive");
    if (metrics.mppe_quantile <= 0.0 || metrics.mppe_quantile >= 1.0)
        throw ConfigError("metrics.mppe_quantile must lie in (0, 1)");
    if (tiled.patch < 1) throw ConfigError("tiled.patch must be >= 1");
    if (tiled.stride < 1 || tiled.stride > tiled.patch)
        throw ConfigError("tiled.stride must lie in [1, patch]");
    if (!(tiled.kernel_std_fraction > 0.0))
        throw ConfigError("tiled.kernel_std_fraction must be positive");
    if (experiment.alpha_baseline < 0.0 || experiment.alpha_baseline > 1.0 ||
        experiment.alpha_wdr < 0.0 || experiment.alpha_wdr > 1.0)
        throw ConfigError("experiment alphas must lie in [0, 1]");
    if (experiment.eval_pairs < 1) throw ConfigError("experiment.eval_pairs must be >= 1");
    if (experiment.eval_pairs >= data.num_pairs)
        throw ConfigError("experiment.eval_pairs must be smaller than data.num_pairs");
}

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j,
               {"data", "schedule", "train", "sampler", "metrics", "model", "tiled", "experiment",
                "paths"},
               "<root>");
    RunConfig cfg;
    if (j.contains("data")) parse_data(j["data"], cfg.data);
    if (j.contains("schedule")) parse_schedule(j["schedule"], cfg.schedule);
    if (j.contains("train")) parse_train(j["train"], cfg.train);
    if (j.contains("sampler")) parse_sampler(j["sampler"], cfg.sampler);
    if (j.contains("metrics")) parse_metrics(j["metrics"], cfg.metrics);
    if (j.contains("model")) parse_model(j["model"], cfg.model);
    if (j.contains("tiled")) parse_tiled(j["tiled"], cfg.tiled);
    if (j.contains("experiment")) parse_experiment(j["experiment"], cfg.experiment);
    if (j.contains("paths")) parse_paths(j["paths"], cfg.paths);
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

std::string run_config_to_json(const RunConfig& cfg) {
    json j;
    j["data"] = {{"fine_size", cfg.data.pair.fine_size},
                 {"coarsen_factor", cfg.data.pair.coarsen_factor},
                 {"tail_heaviness", cfg.data.pair.tail_heaviness},
                 {"smoothness", cfg.data.pair.smoothness},
                 {"seed", cfg.data.pair.seed},
                 {"num_ancillary", cfg.data.pair.num_ancillary},
                 {"dry_fraction", cfg.data.pair.dry_fraction},
                 {"median_intensity_mm", cfg.data.pair.median_intensity_mm},
                 {"cell_km", cfg.data.pair.cell_km},
                 {"num_pairs", cfg.data.num_pairs},
                 {"c_p", cfg.data.c_p}};
    j["schedule"] = {{"sigma_min", cfg.schedule.sigma_min}, {"sigma_max", cfg.schedule.sigma_max}};
    j["train"] = {{"alpha", cfg.train.alpha},
                  {"batch_size", cfg.train.batch_size},
                  {"num_iters", cfg.train.num_iters},
                  {"ema_rate", cfg.train.ema_rate},
                  {"learning_rate", cfg.train.learning_rate},
                  {"grad_clip", cfg.train.grad_clip},
                  {"swd_projections", cfg.train.swd_projections},
                  {"seed", cfg.train.seed},
                  {"checkpoint_interval", cfg.train.checkpoint_interval},
                  {"lambda_weighting", cfg.train.lambda_weighting}};
    j["sampler"] = {{"num_steps", cfg.sampler.num_steps},
                    {"langevin_steps_per_predictor", cfg.sampler.langevin_steps_per_predictor},
                    {"snr", cfg.sampler.snr},
                    {"seed", cfg.sampler.seed},
                    {"ensemble_size", cfg.sampler.ensemble_size}};
    j["metrics"] = {{"csi_threshold_mm", cfg.metrics.csi_threshold_mm},
                    {"pool_km", cfg.metrics.pool_km},
                    {"hrre_threshold_mm", cfg.metrics.hrre_threshold_mm},
                    {"mppe_quantile", cfg.metrics.mppe_quantile}};
    j["model"] = {{"hidden_channels", cfg.model.hidden_channels},
                  {"depth", cfg.model.depth},
                  {"time_embed_dim", cfg.model.time_embed_dim}};
    j["tiled"] = {{"patch", cfg.tiled.patch},
                  {"stride", cfg.tiled.stride},
                  {"kernel_std_fraction", cfg.tiled.kernel_std_fraction}};
    j["experiment"] = {{"alpha_baseline", cfg.experiment.alpha_baseline},
                       {"alpha_wdr", cfg.experiment.alpha_wdr},
                       {"eval_pairs", cfg.experiment.eval_pairs}};
    j["paths"] = {{"data_dir", cfg.paths.data_dir},
                  {"out_dir", cfg.paths.out_dir},
                  {"checkpoint", cfg.paths.checkpoint}};
    return j.dump(2) + "\n";
}

void write_effective_config(const RunConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::string path = out_dir + "/effective-config.json";
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << run_config_to_json(cfg);
}

}  // namespace wassdiff
