#include "wassdiff/sde.hpp"

#include <cmath>
#include <mutex>

#include "wassdiff/parallel.hpp"
#include "wassdiff/rng.hpp"
#include "wassdiff/scorenet.hpp"

namespace wassdiff {

double sigma_at(const NoiseSchedule& schedule, double t) {
    schedule.validate();
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("sigma_at requires t in [0, 1]");
    return schedule.sigma_min * std::pow(schedule.sigma_max / schedule.sigma_min, t);
}

double diffusion_coeff(const NoiseSchedule& schedule, double t) {
    return sigma_at(schedule, t) * std::sqrt(2.0 * schedule.log_ratio());
}

std::pair<GridField, GridField> perturb(const GridField& x0, const NoiseSchedule& schedule,
                                        double t, uint64_t noise_seed) {
    double sigma = sigma_at(schedule, t);
    Rng rng(noise_seed, {0x70657274ULL});
    GridField noise(x0.height, x0.width, x0.space, x0.cell_km);
    GridField xt = x0;
    for (size_t i = 0; i < xt.values.size(); ++i) {
        noise.values[i] = rng.normal();
        xt.values[i] += sigma * noise.values[i];
    }
    return {std::move(xt), std::move(noise)};
}

GridField score_target(const GridField& xt, const GridField& x0,
                       const NoiseSchedule& schedule, double t) {
    if (xt.height != x0.height || xt.width != x0.width)
        throw DimensionError("score_target dimension mismatch");
    double inv_var = 1.0 / (sigma_at(schedule, t) * sigma_at(schedule, t));
    GridField out(xt.height, xt.width, xt.space, xt.cell_km);
    for (size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = -(xt.values[i] - x0.values[i]) * inv_var;
    return out;
}

namespace {

double l2_norm(const std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) sum += x * x;
    return std::sqrt(sum);
}

// Mean of the denormalized state, with the same exponent cap as denormalize
// so early, noise-dominated states produce a finite trace value.
double mean_intensity(const GridField& x, double c_p) {
    double sum = 0.0;
    for (double v : x.values)
        sum += std::max(0.0, std::expm1(std::min(c_p * v, 85.0)));
    return sum / static_cast<double>(x.values.size());
}

void check_finite(const GridField& x, long step) {
    for (double v : x.values)
        if (!std::isfinite(v))
            throw NumericError("sampler produced non-finite state", step);
}

}  // namespace

GridField pc_sample_with_score(const ScoreFn& score, int height, int width,
                               const NoiseSchedule& schedule, const SamplerConfig& cfg,
                               const TraceHook& hook) {
    schedule.validate();
    cfg.validate();
    if (height <= 0 || width <= 0) throw DimensionError("sampler dimensions must be positive");

    Rng rng(cfg.seed, {0x73616d70ULL});
    const size_t n = static_cast<size_t>(height) * width;
    GridField x(height, width, Space::normalized);
    GridField x_mean = x;
    GridField z(height, width, Space::normalized);
    for (double& v : x.values) v = schedule.sigma_max * rng.normal();

    const double dt = (1.0 - kTimeEpsilon) / cfg.num_steps;
    for (int step = 0; step < cfg.num_steps; ++step) {
        const double t = 1.0 - step * dt;
        const double g = diffusion_coeff(schedule, t);

        // Annealed Langevin corrections at the current noise level.
        for (int c = 0; c < cfg.langevin_steps_per_predictor; ++c) {
            GridField s = score(x, t);
            for (double& v : z.values) v = rng.normal();
            double s_norm = l2_norm(s.values);
            double z_norm = l2_norm(z.values);
            if (s_norm > 0.0) {
                double ratio = cfg.snr * z_norm / s_norm;
                double eps_step = 2.0 * ratio * ratio;
                double noise_scale = std::sqrt(2.0 * eps_step);
                for (size_t i = 0; i < n; ++i) {
                    x_mean.values[i] = x.values[i] + eps_step * s.values[i];
                    x.values[i] = x_mean.values[i] + noise_scale * z.values[i];
                }
            }
        }

        // Reverse-diffusion Euler-Maruyama predictor step.
        {
            GridField s = score(x, t);
            for (double& v : z.values) v = rng.normal();
            double drift = g * g * dt;
            double noise_scale = g * std::sqrt(dt);
            for (size_t i = 0; i < n; ++i) {
                x_mean.values[i] = x.values[i] + drift * s.values[i];
                x.values[i] = x_mean.values[i] + noise_scale * z.values[i];
            }
        }

        check_finite(x, step);
        if (hook) hook(t, mean_intensity(x_mean, cfg.trace_c_p));
    }
    return x_mean;
}

GridField pc_sample(const ScoreModel& model, const ConditionTensor& y,
                    const NoiseSchedule& schedule, const SamplerConfig& cfg,
                    const TraceHook& hook) {
    y.validate();
    if (static_cast<int>(y.channel_count()) != model.architecture().condition_channels)
        throw DimensionError("condition channel count does not match model");
    ScoreFn score = [&](const GridField& x, double t) { return model.forward(x, y, t); };
    return pc_sample_with_score(score, y.height(), y.width(), schedule, cfg, hook);
}

std::vector<GridField> sample_ensemble(const ScoreModel& model, const ConditionTensor& y,
                                       const NoiseSchedule& schedule, const SamplerConfig& cfg,
                                       std::vector<std::vector<std::pair<double, double>>>* traces) {
    cfg.validate();
    std::vector<GridField> members(cfg.ensemble_size);
    if (traces) traces->assign(cfg.ensemble_size, {});
    parallel_for(static_cast<size_t>(cfg.ensemble_size), [&](size_t m) {
        SamplerConfig member_cfg = cfg;
        member_cfg.seed = derive_seed(cfg.seed, 0x656e73656dULL, m);
        TraceHook hook = nullptr;
        if (traces) {
            auto* trace = &(*traces)[m];
            hook = [trace](double t, double mu) { trace->emplace_back(t, mu); };
        }
        members[m] = pc_sample(model, y, schedule, member_cfg, hook);
    });
    return members;
}

}  // namespace wassdiff
