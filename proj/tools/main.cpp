#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wassdiff/config.hpp"
#include "wassdiff/rng.hpp"
#include "wassdiff/metrics.hpp"
#include "wassdiff/tiled.hpp"
#include "wassdiff/training.hpp"
#include "wassdiff/transport.hpp"

namespace fs = std::filesystem;
using namespace wassdiff;

namespace {

std::string pair_id(int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d", index);
    return buf;
}

RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return RunConfig{};
    return load_run_config(path);
}

void cmd_gen_data(const RunConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    write_effective_config(cfg, out_dir);
    nlohmann::json manifest;
    manifest["num_pairs"] = cfg.data.num_pairs;
    manifest["fine_size"] = cfg.data.pair.fine_size;
    manifest["pairs"] = nlohmann::json::array();
    for (int i = 0; i < cfg.data.num_pairs; ++i) {
        SyntheticPairConfig pair_cfg = cfg.data.pair;
        pair_cfg.seed = derive_seed(cfg.data.pair.seed, 0x67656eULL, static_cast<uint64_t>(i));
        SyntheticPair pair = generate_pair(pair_cfg);
        std::string id = pair_id(i);
        std::string target_path = out_dir + "/target_" + id + ".grid";
        std::string cond_path = out_dir + "/cond_" + id + ".json";
        write_grid(pair.target, target_path);
        write_condition(pair.condition, cond_path, out_dir + "/cond_" + id);
        manifest["pairs"].push_back({{"id", id},
                                     {"target", "target_" + id + ".grid"},
                                     {"condition", "cond_" + id + ".json"}});
    }
    std::ofstream mf(out_dir + "/manifest.json");
    if (!mf) throw IoError("cannot write manifest in " + out_dir);
    mf << manifest.dump(2) << "\n";
    std::cout << "wrote " << cfg.data.num_pairs << " pairs to " << out_dir << "\n";
}

std::vector<SyntheticPair> load_dataset(const std::string& data_dir) {
    std::ifstream mf(data_dir + "/manifest.json");
    if (!mf) throw ParseError("missing manifest.json in " + data_dir);
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed manifest.json: ") + e.what());
    }
    std::vector<SyntheticPair> dataset;
    for (const auto& entry : manifest.at("pairs")) {
        SyntheticPair pair;
        pair.target = read_grid(data_dir + "/" + entry.at("target").get<std::string>());
        pair.condition = read_condition(data_dir + "/" + entry.at("condition").get<std::string>());
        dataset.push_back(std::move(pair));
    }
    if (dataset.empty()) throw ParseError("manifest lists no pairs");
    return dataset;
}

void cmd_train(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir) {
    fs::create_directories(out_dir);
    write_effective_config(cfg, out_dir);
    std::vector<SyntheticPair> dataset = load_dataset(data_dir);

    Architecture arch = cfg.architecture();
    arch.condition_channels = static_cast<int>(dataset.front().condition.channel_count());
    arch.input_height = dataset.front().target.height;
    arch.input_width = dataset.front().target.width;

    std::cout << "training " << cfg.train.num_iters << " iters on " << dataset.size()
              << " pairs (" << arch.input_height << "x" << arch.input_width << ")\n";
    TrainResult result = train(dataset, cfg.train, arch, cfg.schedule, cfg.data.c_p, out_dir);
    if (!result.history.empty()) {
        const auto& last = result.history.back();
        std::cout << "final step " << last.step << ": score_loss=" << last.score_loss
                  << " wdr_loss=" << last.wdr_loss << " total=" << last.total_loss << "\n";
    }
}

std::string condition_id(const std::string& condition_path) {
    std::string stem = fs::path(condition_path).stem().string();
    if (stem.rfind("cond_", 0) == 0) return stem.substr(5);
    return stem;
}

void write_members(const std::vector<GridField>& members, double c_p, const std::string& id,
                   const std::string& out_dir) {
    for (size_t m = 0; m < members.size(); ++m) {
        GridField phys = denormalize(members[m], c_p);
        char suffix[16];
        std::snprintf(suffix, sizeof suffix, "_m%02zu", m);
        write_grid(phys, out_dir + "/sample_" + id + suffix + ".grid");
    }
}

void cmd_sample(const RunConfig& cfg, const std::string& checkpoint_path,
                const std::string& condition_path, int ensemble_override,
                const std::string& out_dir, bool tiled, int patch, int stride) {
    fs::create_directories(out_dir);
    write_effective_config(cfg, out_dir);
    LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
    ConditionTensor cond = read_condition(condition_path);
    ConditionTensor yn = normalize_condition(cond, cfg.data.c_p);

    SamplerConfig sc = cfg.sampler;
    sc.trace_c_p = cfg.data.c_p;
    if (ensemble_override > 0) sc.ensemble_size = ensemble_override;

    std::string id = condition_id(condition_path);
    std::vector<GridField> members;
    if (tiled) {
        PatchPlan plan = plan_patches(yn.height(), yn.width(), patch, stride);
        BlendKernel kernel = make_blend_kernel(patch, cfg.tiled.kernel_std_fraction);
        members.reserve(sc.ensemble_size);
        for (int m = 0; m < sc.ensemble_size; ++m) {
            SamplerConfig member_cfg = sc;
            member_cfg.seed = derive_seed(sc.seed, 0x656e73656dULL, static_cast<uint64_t>(m));
            members.push_back(
                tiled_pc_sample(ckpt.model, yn, cfg.schedule, member_cfg, plan, kernel));
        }
    } else {
        members = sample_ensemble(ckpt.model, yn, cfg.schedule, sc);
    }
    write_members(members, cfg.data.c_p, id, out_dir);
    std::cout << "wrote " << members.size() << " members for sample " << id << " to " << out_dir
              << "\n";
}

Ensemble collect_ensemble(const std::string& pred_dir, const std::string& id) {
    Ensemble ens;
    std::vector<std::string> paths;
    std::string member_prefix = "sample_" + id + "_m";
    for (const auto& entry : fs::directory_iterator(pred_dir)) {
        if (entry.path().extension() != ".grid") continue;
        std::string name = entry.path().filename().string();
        if (name.rfind(member_prefix, 0) == 0) paths.push_back(entry.path().string());
    }
    if (paths.empty()) {
        std::string single = pred_dir + "/sample_" + id + ".grid";
        if (fs::exists(single)) paths.push_back(single);
    }
    if (paths.empty()) {
        std::string identity = pred_dir + "/target_" + id + ".grid";
        if (fs::exists(identity)) paths.push_back(identity);
    }
    if (paths.empty())
        throw IoError("no prediction grids for sample " + id + " in " + pred_dir);
    std::sort(paths.begin(), paths.end());
    for (const std::string& p : paths) ens.members.push_back(read_grid(p));
    return ens;
}

void cmd_evaluate(const RunConfig& cfg, const std::string& pred_dir, const std::string& obs_dir,
                  const std::string& out_csv) {
    std::vector<std::string> target_paths;
    for (const auto& entry : fs::directory_iterator(obs_dir)) {
        std::string name = entry.path().filename().string();
        if (name.rfind("target_", 0) == 0 && entry.path().extension() == ".grid")
            target_paths.push_back(entry.path().string());
    }
    if (target_paths.empty()) throw IoError("no target_*.grid files in " + obs_dir);
    std::sort(target_paths.begin(), target_paths.end());

    std::vector<SampleMetrics> rows;
    for (const std::string& tp : target_paths) {
        std::string stem = fs::path(tp).stem().string();  // target_<id>
        std::string id = stem.substr(7);
        GridField obs = read_grid(tp);
        Ensemble ens = collect_ensemble(pred_dir, id);
        rows.push_back(evaluate_sample(id, ens, obs, cfg.metrics));
    }
    write_metrics_csv(rows, out_csv);
    fs::path parent = fs::path(out_csv).parent_path();
    write_effective_config(cfg, parent.empty() ? "." : parent.string());
    std::cout << "evaluated " << rows.size() << " samples -> " << out_csv << "\n";
}

void cmd_qq(const RunConfig& cfg, const std::string& ensemble_dir, const std::string& obs_path,
            const std::string& out_csv) {
    Ensemble ens;
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(ensemble_dir))
        if (entry.path().extension() == ".grid") paths.push_back(entry.path().string());
    if (paths.empty()) throw IoError("no .grid files in " + ensemble_dir);
    std::sort(paths.begin(), paths.end());
    for (const std::string& p : paths) ens.members.push_back(read_grid(p));

    GridField obs = read_grid(obs_path);
    QqCurve curve = qq_curve(ens, obs);
    write_qq_csv(curve, out_csv);
    fs::path parent = fs::path(out_csv).parent_path();
    write_effective_config(cfg, parent.empty() ? "." : parent.string());
    std::cout << "wrote Q-Q table for " << ens.size() << " members -> " << out_csv << "\n";
}

void cmd_distance_demo(const RunConfig& cfg, const std::string& out_dir) {
    TailSensitivityReport report = tail_sensitivity_demo();
    std::cout << report.to_csv();
    write_effective_config(cfg, out_dir);
}

void write_traces_csv(const BiasArmReport& arm, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out.precision(10);
    out << "pair,member,step,t,mean_intensity\n";
    for (size_t pair = 0; pair < arm.traces.size(); ++pair)
        for (size_t member = 0; member < arm.traces[pair].size(); ++member) {
            const auto& trace = arm.traces[pair][member];
            for (size_t s = 0; s < trace.size(); ++s)
                out << pair << "," << member << "," << s << "," << trace[s].first << ","
                    << trace[s].second << "\n";
        }
}

void cmd_bias_experiment(const RunConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    write_effective_config(cfg, out_dir);

    std::vector<SyntheticPair> dataset;
    for (int i = 0; i < cfg.data.num_pairs; ++i) {
        SyntheticPairConfig pair_cfg = cfg.data.pair;
        pair_cfg.seed = derive_seed(cfg.data.pair.seed, 0x67656eULL, static_cast<uint64_t>(i));
        dataset.push_back(generate_pair(pair_cfg));
    }

    BiasExperimentConfig bc;
    bc.train = cfg.train;
    bc.alpha_baseline = cfg.experiment.alpha_baseline;
    bc.alpha_wdr = cfg.experiment.alpha_wdr;
    bc.arch = cfg.architecture();
    bc.schedule = cfg.schedule;
    bc.sampler = cfg.sampler;
    bc.eval_pairs = cfg.experiment.eval_pairs;
    bc.c_p = cfg.data.c_p;

    std::cout << "running paired experiment: alpha=" << bc.alpha_baseline << " vs alpha="
              << bc.alpha_wdr << ", " << cfg.train.num_iters << " iters each\n";
    BiasExperimentReport report = bias_trace_experiment(dataset, bc);

    write_loss_history_csv(report.baseline.history, out_dir + "/loss_history_baseline.csv");
    write_loss_history_csv(report.wdr.history, out_dir + "/loss_history_wdr.csv");
    write_traces_csv(report.baseline, out_dir + "/traces_baseline.csv");
    write_traces_csv(report.wdr, out_dir + "/traces_wdr.csv");

    nlohmann::json summary = {
        {"baseline",
         {{"alpha", report.baseline.alpha},
          {"intensity_w1", report.baseline.intensity_w1},
          {"q999_error", report.baseline.q999_error}}},
        {"wdr",
         {{"alpha", report.wdr.alpha},
          {"intensity_w1", report.wdr.intensity_w1},
          {"q999_error", report.wdr.q999_error}}},
    };
    std::ofstream rf(out_dir + "/report.json");
    if (!rf) throw IoError("cannot write report.json");
    rf << summary.dump(2) << "\n";
    std::cout << "baseline: W1=" << report.baseline.intensity_w1
              << " q999_err=" << report.baseline.q999_error << "\n";
    std::cout << "wdr:      W1=" << report.wdr.intensity_w1
              << " q999_err=" << report.wdr.q999_error << "\n";
}

int dispatch(int argc, char** argv) {
    CLI::App app{"Wasserstein-regularized diffusion downscaling toolkit"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir = ".", checkpoint, condition, pred_dir, obs_dir,
                out_csv, obs_path, ensemble_dir;
    int ensemble_override = 0;
    int patch = 256, stride = 192;

    auto* gen = app.add_subcommand("gen-data", "Generate synthetic coarse/fine pairs");
    gen->add_option("--config", config_path, "Run config JSON");
    gen->add_option("--out", out_dir, "Output directory")->required();

    auto* tr = app.add_subcommand("train", "Train a model on generated pairs");
    tr->add_option("--config", config_path, "Run config JSON");
    tr->add_option("--data", data_dir, "Directory produced by gen-data")->required();
    tr->add_option("--out", out_dir, "Output directory")->required();

    auto* sm = app.add_subcommand("sample", "Sample an ensemble for one condition");
    sm->add_option("--config", config_path, "Run config JSON");
    sm->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    sm->add_option("--condition", condition, "Condition manifest JSON")->required();
    sm->add_option("--ensemble", ensemble_override, "Override ensemble size");
    sm->add_option("--out", out_dir, "Output directory")->required();

    auto* ts = app.add_subcommand("tiled-sample", "Sample patchwise with Gaussian blending");
    ts->add_option("--config", config_path, "Run config JSON");
    ts->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    ts->add_option("--condition", condition, "Condition manifest JSON")->required();
    ts->add_option("--ensemble", ensemble_override, "Override ensemble size");
    ts->add_option("--patch", patch, "Patch size in pixels");
    ts->add_option("--stride", stride, "Patch stride in pixels");
    ts->add_option("--out", out_dir, "Output directory")->required();

    auto* ev = app.add_subcommand("evaluate", "Metric report for predictions vs observations");
    ev->add_option("--config", config_path, "Run config JSON");
    ev->add_option("pred_dir", pred_dir, "Prediction/ensemble directory")->required();
    ev->add_option("obs_dir", obs_dir, "Observation directory")->required();
    ev->add_option("out_csv", out_csv, "Output CSV path")->required();

    auto* qq = app.add_subcommand("qq", "Q-Q calibration table for one ensemble");
    qq->add_option("--config", config_path, "Run config JSON");
    qq->add_option("ensemble_dir", ensemble_dir, "Directory of member grids")->required();
    qq->add_option("obs_path", obs_path, "Observation grid")->required();
    qq->add_option("out_csv", out_csv, "Output CSV path")->required();

    auto* dd = app.add_subcommand("distance-demo",
                                  "Print the W1/KL/JS tail-sensitivity table as CSV");
    dd->add_option("--config", config_path, "Run config JSON");
    dd->add_option("--out", out_dir, "Directory for effective-config.json");

    auto* be = app.add_subcommand("bias-experiment",
                                  "Paired training at two alphas with matched sampling");
    be->add_option("--config", config_path, "Run config JSON");
    be->add_option("--out", out_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    RunConfig cfg = load_config_or_default(config_path);
    if (gen->parsed()) cmd_gen_data(cfg, out_dir);
    else if (tr->parsed()) cmd_train(cfg, data_dir, out_dir);
    else if (sm->parsed())
        cmd_sample(cfg, checkpoint, condition, ensemble_override, out_dir, false, patch, stride);
    else if (ts->parsed()) {
        if (!ts->count("--patch")) patch = cfg.tiled.patch;
        if (!ts->count("--stride")) stride = cfg.tiled.stride;
        cmd_sample(cfg, checkpoint, condition, ensemble_override, out_dir, true, patch, stride);
    } else if (ev->parsed()) cmd_evaluate(cfg, pred_dir, obs_dir, out_csv);
    else if (qq->parsed()) cmd_qq(cfg, ensemble_dir, obs_path, out_csv);
    else if (dd->parsed()) cmd_distance_demo(cfg, out_dir);
    else if (be->parsed()) cmd_bias_experiment(cfg, out_dir);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DomainError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DimensionError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const StateError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << " (step " << e.step << ")\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
