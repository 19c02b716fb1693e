#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "wassdiff/grid.hpp"

namespace wassdiff {

// Variance-exploding noise schedule: sigma(t) = sigma_min * (sigma_max/sigma_min)^t
// on t in [0, 1], zero drift, g(t) = sigma(t) * sqrt(2 log(sigma_max/sigma_min)).
struct NoiseSchedule {
    double sigma_min = 0.01;
    double sigma_max = 50.0;

    void validate() const {
        if (!(sigma_min > 0.0) || !(sigma_min < sigma_max))
            throw ConfigError("noise schedule requires 0 < sigma_min < sigma_max");
    }
    double log_ratio() const { return std::log(sigma_max / sigma_min); }
};

// Smallest time used by samplers and training draws; keeps the Langevin step
// size finite as sigma approaches sigma_min.
inline constexpr double kTimeEpsilon = 1e-5;

double sigma_at(const NoiseSchedule& schedule, double t);

// Diffusion coefficient g(t) of the forward SDE.
double diffusion_coeff(const NoiseSchedule& schedule, double t);

// Predictor-Corrector sampler configuration.
struct SamplerConfig {
    int num_steps = 1000;
    int langevin_steps_per_predictor = 1;
    double snr = 0.16;
    uint64_t seed = 0;
    int ensemble_size = 1;
    double trace_c_p = kDefaultCp;  // normalization constant used only by the trace hook

    void validate() const {
        if (num_steps < 1) throw ConfigError("num_steps must be >= 1");
        if (langevin_steps_per_predictor < 0)
            throw ConfigError("langevin_steps_per_predictor must be >= 0");
        if (!(snr > 0.0)) throw ConfigError("snr must be positive");
        if (ensemble_size < 1) throw ConfigError("ensemble_size must be >= 1");
    }
};

// Forward perturbation x(t) = x(0) + sigma(t) * z. Returns (x_t, z).
std::pair<GridField, GridField> perturb(const GridField& x0, const NoiseSchedule& schedule,
                                        double t, uint64_t noise_seed);

// Exact transition-kernel score -(x_t - x_0) / sigma(t)^2.
GridField score_target(const GridField& xt, const GridField& x0,
                       const NoiseSchedule& schedule, double t);

// Conditional score evaluator: maps (state, t) to a score field of the same
// shape. Model-backed and closed-form evaluators both fit this signature.
using ScoreFn = std::function<GridField(const GridField&, double)>;

// Per-step observer: (t, mean intensity of the denormalized current state).
using TraceHook = std::function<void(double, double)>;

// Reverse-SDE Predictor-Corrector sampler over an arbitrary score function.
// Starts from x(T) ~ N(0, sigma_max^2 I); each step takes one reverse-diffusion
// Euler-Maruyama predictor step and `langevin_steps_per_predictor` corrector
// steps with step size 2*(snr*|z|/|s|)^2. Deterministic given cfg.seed.
GridField pc_sample_with_score(const ScoreFn& score, int height, int width,
                               const NoiseSchedule& schedule, const SamplerConfig& cfg,
                               const TraceHook& hook = nullptr);

class ScoreModel;  // scorenet.hpp

// Model-backed sampling conditioned on y. The model is evaluated in
// normalized space; the returned field is normalized.
GridField pc_sample(const ScoreModel& model, const ConditionTensor& y,
                    const NoiseSchedule& schedule, const SamplerConfig& cfg,
                    const TraceHook& hook = nullptr);

// cfg.ensemble_size independent samples with per-member derived seeds.
// Members run in parallel; results are ordered by member index.
std::vector<GridField> sample_ensemble(const ScoreModel& model, const ConditionTensor& y,
                                       const NoiseSchedule& schedule, const SamplerConfig& cfg,
                                       std::vector<std::vector<std::pair<double, double>>>* traces = nullptr);

}  // namespace wassdiff
