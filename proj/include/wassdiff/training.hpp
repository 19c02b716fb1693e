#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wassdiff/grid.hpp"
#include "wassdiff/scorenet.hpp"
#include "wassdiff/sde.hpp"
#include "wassdiff/transport.hpp"

namespace wassdiff {

// RNG stream tags used by train(). Fixed and public so an independent
// implementation of the loop can reproduce a run bit for bit.
namespace train_streams {
inline constexpr uint64_t init = 0x696e6974ULL;
inline constexpr uint64_t data = 0x64617461ULL;
inline constexpr uint64_t diffusion = 0x64696666ULL;
inline constexpr uint64_t projections = 0x70726f6aULL;
}  // namespace train_streams

struct TrainConfig {
    double alpha = 0.2;           // regularization strength; 0 = plain score matching
    int batch_size = 12;
    long num_iters = 0;
    double ema_rate = 0.999;
    double learning_rate = 2e-4;
    double grad_clip = 1.0;       // global gradient-norm clip; <= 0 disables
    int swd_projections = kDefaultProjections;
    uint64_t seed = 0;
    long checkpoint_interval = 0;  // 0 = final checkpoint only
    std::string lambda_weighting = "sigma_squared";

    void validate() const;
};

// One training sample with its diffusion-time draw and noise realisation.
struct PerturbedSample {
    const GridField* x0 = nullptr;       // normalized target
    const ConditionTensor* y = nullptr;  // normalized condition
    double t = 0.0;
    GridField noise;  // z
    GridField xt;     // x0 + sigma(t) * z
};

PerturbedSample make_perturbed(const GridField& x0_normalized, const ConditionTensor& y_normalized,
                               const NoiseSchedule& schedule, double t, uint64_t noise_seed);

// sigma^2-weighted denoising score-matching loss. In the eps_hat
// parameterization this is mean_i mean_px (eps_hat - z)^2, which starts at
// ~1 for a zero-initialized model. Gradient w.r.t. theta accumulates into
// *grad when non-null.
double score_matching_loss(const ScoreModel& model, std::span<const PerturbedSample> batch,
                           std::vector<double>* grad = nullptr);

// Distribution-matching regularizer: sliced W1 between the batch of one-step
// denoised estimates x0_hat = xt + sigma(t)^2 * s(xt, y, t) and the batch of
// ground-truth fields. Gradients flow through x0_hat only.
double wdr_loss(const ScoreModel& model, std::span<const PerturbedSample> batch,
                const ProjectionSet& projections, std::vector<double>* grad = nullptr);

struct CombinedLoss {
    double score = 0.0;
    double wdr = 0.0;
    double total = 0.0;
};

// (1 - alpha) * score_matching + alpha * wdr. The endpoints alpha == 0 and
// alpha == 1 take the single-term code path so they match the individual
// losses bit for bit; alpha == 0 never touches the projections.
CombinedLoss combined_loss(const ScoreModel& model, std::span<const PerturbedSample> batch,
                           double alpha, const ProjectionSet* projections,
                           std::vector<double>* grad = nullptr);

// Adam with bias correction.
struct AdamState {
    std::vector<double> m, v;
    long t = 0;
};
void adam_step(std::vector<double>& theta, const std::vector<double>& grad, AdamState& state,
               double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

void ema_update(std::vector<double>& ema, const std::vector<double>& theta, double rate);

struct TrainHistoryRow {
    long step = 0;
    double score_loss = 0, wdr_loss = 0, total_loss = 0, grad_norm = 0;
};

struct TrainResult {
    ScoreModel model;  // trained raw parameters
    std::vector<double> theta_ema;
    std::vector<TrainHistoryRow> history;
    long steps_run = 0;
};

// Full training loop: per step, draw batch indices, per-sample (t, z), take
// one Adam step on the combined objective, update the EMA. Deterministic
// given cfg.seed. When out_dir is non-empty, writes loss_history.csv and
// checkpoints (raw + EMA) there.
TrainResult train(const std::vector<SyntheticPair>& dataset, const TrainConfig& cfg,
                  const Architecture& arch, const NoiseSchedule& schedule,
                  double c_p = kDefaultCp, const std::string& out_dir = "");

void write_loss_history_csv(const std::vector<TrainHistoryRow>& history, const std::string& path);

// Paired-arm experiment: trains matched-seed models at two alpha values,
// samples matched ensembles on held-out pairs, and reports the per-member
// mean-intensity traces plus the final sample-vs-target intensity W1 and
// extreme-quantile error for each arm.
struct BiasExperimentConfig {
    TrainConfig train;  // alpha ignored; arms set their own
    double alpha_baseline = 0.0;
    double alpha_wdr = 0.2;
    Architecture arch;
    NoiseSchedule schedule;
    SamplerConfig sampler;
    int eval_pairs = 2;  // held out from the tail of the dataset
    double c_p = kDefaultCp;
};

struct BiasArmReport {
    double alpha = 0.0;
    std::vector<TrainHistoryRow> history;
    // traces[pair][member] = (t, mean intensity) per sampler step
    std::vector<std::vector<std::vector<std::pair<double, double>>>> traces;
    double intensity_w1 = 0.0;  // pooled sample pixels vs pooled target pixels (physical)
    double q999_error = 0.0;    // |q999(samples) - q999(targets)|
};

struct BiasExperimentReport {
    BiasArmReport baseline, wdr;
};

BiasExperimentReport bias_trace_experiment(const std::vector<SyntheticPair>& dataset,
                                           const BiasExperimentConfig& cfg);

}  // namespace wassdiff
