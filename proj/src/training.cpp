#include "wassdiff/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "wassdiff/metrics.hpp"
#include "wassdiff/parallel.hpp"
#include "wassdiff/rng.hpp"

namespace wassdiff {

namespace {
constexpr uint64_t kTagEval = 0x6576616cULL;
}  // namespace

void TrainConfig::validate() const {
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in [0, 1]");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (num_iters < 0) throw ConfigError("num_iters must be >= 0");
    if (ema_rate < 0.0 || ema_rate >= 1.0) throw ConfigError("ema_rate must lie in [0, 1)");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (swd_projections < 1) throw ConfigError("swd_projections must be >= 1");
    if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be >= 0");
    if (lambda_weighting != "sigma_squared")
        throw ConfigError("unsupported lambda_weighting: " + lambda_weighting);
}

PerturbedSample make_perturbed(const GridField& x0_normalized, const ConditionTensor& y_normalized,
                               const NoiseSchedule& schedule, double t, uint64_t noise_seed) {
    PerturbedSample s;
    s.x0 = &x0_normalized;
    s.y = &y_normalized;
    s.t = t;
    auto [xt, noise] = perturb(x0_normalized, schedule, t, noise_seed);
    s.xt = std::move(xt);
    s.noise = std::move(noise);
    return s;
}

namespace {

int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

struct WdrEval {
    double value = 0.0;
    // dWDR/dx0_hat, one row of length d per batch element
    std::vector<std::vector<double>> g_x0hat;
};

// Sliced W1 between the denoised-estimate batch and the ground-truth batch,
// with the subgradient through the sort-based pairing. Ties take the stable
// sort order; exact ties contribute a zero subgradient.
WdrEval eval_wdr(const std::vector<std::vector<double>>& x0hat,
                 const std::vector<const GridField*>& x0, const ProjectionSet& proj,
                 bool want_grad) {
    const int m = static_cast<int>(x0hat.size());
    const int d = static_cast<int>(x0hat.front().size());
    WdrEval out;
    if (want_grad) out.g_x0hat.assign(m, std::vector<double>(d, 0.0));

    std::vector<double> a(m), b(m);
    std::vector<int> a_order(m), b_order(m);
    const double pair_weight = 1.0 / (static_cast<double>(proj.num_projections) * m);
    double sum = 0.0;
    for (int p = 0; p < proj.num_projections; ++p) {
        std::span<const double> v = proj.row(p);
        for (int i = 0; i < m; ++i) {
            const double* xr = x0hat[i].data();
            const double* gr = x0[i]->values.data();
            double da = 0.0, db = 0.0;
            for (int k = 0; k < d; ++k) {
                da += xr[k] * v[k];
                db += gr[k] * v[k];
            }
            a[i] = da;
            b[i] = db;
        }
        std::iota(a_order.begin(), a_order.end(), 0);
        std::iota(b_order.begin(), b_order.end(), 0);
        std::stable_sort(a_order.begin(), a_order.end(), [&](int i, int j) { return a[i] < a[j]; });
        std::stable_sort(b_order.begin(), b_order.end(), [&](int i, int j) { return b[i] < b[j]; });

        double w1 = 0.0;
        for (int k = 0; k < m; ++k) {
            double diff = a[a_order[k]] - b[b_order[k]];
            w1 += std::abs(diff);
            if (want_grad) {
                int s = sign_of(diff);
                if (s != 0) {
                    double* g = out.g_x0hat[a_order[k]].data();
                    double scale = s * pair_weight;
                    for (int q = 0; q < d; ++q) g[q] += scale * v[q];
                }
            }
        }
        sum += w1 / m;
    }
    out.value = sum / proj.num_projections;
    return out;
}

}  // namespace

CombinedLoss combined_loss(const ScoreModel& model, std::span<const PerturbedSample> batch,
                           double alpha, const ProjectionSet* projections,
                           std::vector<double>* grad) {
    if (batch.empty()) throw DomainError("loss requires a nonempty batch");
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in [0, 1]");
    const bool score_active = alpha != 1.0;
    const bool wdr_active = alpha != 0.0;
    const int m = static_cast<int>(batch.size());
    const size_t d = batch.front().xt.size();

    if (wdr_active) {
        if (m < 2) throw ConfigError("the distribution regularizer needs a batch of >= 2");
        if (!projections) throw ConfigError("regularizer requested without projections");
        if (projections->dim != static_cast<int>(d))
            throw DimensionError("projection dimension does not match field size");
    }

    // Forward every element, keeping traces only when gradients are needed.
    std::vector<ScoreModel::Trace> traces(grad ? m : 0);
    std::vector<Tensor> eps(m);
    std::vector<double> sigma(m);
    parallel_for(static_cast<size_t>(m), [&](size_t i) {
        const PerturbedSample& s = batch[i];
        if (s.xt.size() != d || s.x0->size() != d)
            throw DimensionError("batch elements disagree in field size");
        sigma[i] = sigma_at(model.schedule(), s.t);
        Tensor input = model.pack_input(s.xt, *s.y, s.t);
        model.eval_eps(input, s.t, eps[i], grad ? &traces[i] : nullptr);
    });

    // Score-matching term: mean over elements of mean squared eps error.
    double score_value = 0.0;
    for (int i = 0; i < m; ++i) {
        const double* e = eps[i].data.data();
        const double* z = batch[i].noise.values.data();
        double acc = 0.0;
        for (size_t k = 0; k < d; ++k) {
            double diff = e[k] - z[k];
            acc += diff * diff;
        }
        score_value += acc / static_cast<double>(d);
    }
    score_value /= m;

    // Regularizer on the one-step denoised estimates.
    WdrEval wdr;
    std::vector<std::vector<double>> x0hat;
    if (wdr_active) {
        x0hat.assign(m, std::vector<double>(d));
        for (int i = 0; i < m; ++i) {
            const double* xt = batch[i].xt.values.data();
            const double* e = eps[i].data.data();
            for (size_t k = 0; k < d; ++k) x0hat[i][k] = xt[k] - sigma[i] * e[k];
        }
        std::vector<const GridField*> x0(m);
        for (int i = 0; i < m; ++i) x0[i] = batch[i].x0;
        wdr = eval_wdr(x0hat, x0, *projections, grad != nullptr);
    }

    CombinedLoss out;
    out.score = score_value;
    out.wdr = wdr.value;
    if (!wdr_active) out.total = score_value;
    else if (!score_active) out.total = wdr.value;
    else out.total = (1.0 - alpha) * score_value + alpha * wdr.value;

    if (grad) {
        const double w_score = score_active ? (wdr_active ? 1.0 - alpha : 1.0) : 0.0;
        const double w_wdr = wdr_active ? (score_active ? alpha : 1.0) : 0.0;
        std::vector<std::vector<double>> elem_grad(m);
        parallel_for(static_cast<size_t>(m), [&](size_t i) {
            Tensor g_eps(1, batch[i].xt.height, batch[i].xt.width);
            const double* e = eps[i].data.data();
            const double* z = batch[i].noise.values.data();
            const double score_scale = w_score * 2.0 / (static_cast<double>(d) * m);
            for (size_t k = 0; k < d; ++k) {
                double g = 0.0;
                if (score_active) g += score_scale * (e[k] - z[k]);
                if (wdr_active) g += w_wdr * (-sigma[i]) * wdr.g_x0hat[i][k];
                g_eps.data[k] = g;
            }
            elem_grad[i].assign(model.parameter_count(), 0.0);
            model.backprop_eps(traces[i], g_eps, elem_grad[i].data());
        });
        if (grad->size() != model.parameter_count())
            grad->assign(model.parameter_count(), 0.0);
        for (int i = 0; i < m; ++i) {
            const double* g = elem_grad[i].data();
            double* acc = grad->data();
            for (size_t k = 0; k < grad->size(); ++k) acc[k] += g[k];
        }
    }
    return out;
}

double score_matching_loss(const ScoreModel& model, std::span<const PerturbedSample> batch,
                           std::vector<double>* grad) {
    return combined_loss(model, batch, 0.0, nullptr, grad).score;
}

double wdr_loss(const ScoreModel& model, std::span<const PerturbedSample> batch,
                const ProjectionSet& projections, std::vector<double>* grad) {
    return combined_loss(model, batch, 1.0, &projections, grad).wdr;
}

void adam_step(std::vector<double>& theta, const std::vector<double>& grad, AdamState& state,
               double learning_rate, double beta1, double beta2, double eps) {
    if (state.m.empty()) {
        state.m.assign(theta.size(), 0.0);
        state.v.assign(theta.size(), 0.0);
    }
    if (grad.size() != theta.size() || state.m.size() != theta.size())
        throw DimensionError("adam_step size mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < theta.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        double m_hat = state.m[i] / bc1;
        double v_hat = state.v[i] / bc2;
        theta[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + eps);
    }
}

void ema_update(std::vector<double>& ema, const std::vector<double>& theta, double rate) {
    if (ema.size() != theta.size()) throw DimensionError("ema_update size mismatch");
    for (size_t i = 0; i < ema.size(); ++i) ema[i] = rate * ema[i] + (1.0 - rate) * theta[i];
}

void write_loss_history_csv(const std::vector<TrainHistoryRow>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "step,score_loss,wdr_loss,total,grad_norm\n";
    out.precision(12);
    for (const auto& row : history)
        out << row.step << "," << row.score_loss << "," << row.wdr_loss << "," << row.total_loss
            << "," << row.grad_norm << "\n";
}

TrainResult train(const std::vector<SyntheticPair>& dataset, const TrainConfig& cfg,
                  const Architecture& arch, const NoiseSchedule& schedule, double c_p,
                  const std::string& out_dir) {
    cfg.validate();
    arch.validate();
    schedule.validate();
    if (dataset.empty()) throw ConfigError("training dataset is empty");

    std::vector<GridField> x0n(dataset.size());
    std::vector<ConditionTensor> yn(dataset.size());
    for (size_t i = 0; i < dataset.size(); ++i) {
        x0n[i] = normalize(dataset[i].target, c_p);
        yn[i] = normalize_condition(dataset[i].condition, c_p);
    }
    if (arch.condition_channels != static_cast<int>(yn.front().channel_count()))
        throw ConfigError("architecture condition_channels does not match dataset");
    const size_t d = x0n.front().size();

    TrainResult result{ScoreModel(arch, schedule, derive_seed(cfg.seed, train_streams::init)), {}, {}, 0};
    ScoreModel& model = result.model;
    result.theta_ema = model.parameters();
    AdamState adam;
    Rng rng_data(cfg.seed, {train_streams::data});
    Rng rng_diff(cfg.seed, {train_streams::diffusion});
    Rng rng_proj(cfg.seed, {train_streams::projections});

    std::vector<double> grad(model.parameter_count());
    result.history.reserve(static_cast<size_t>(cfg.num_iters));

    auto checkpoint = [&](long step, const std::string& stem) {
        if (out_dir.empty()) return;
        save_checkpoint(model, out_dir + "/" + stem + ".wdck", step, false);
        save_checkpoint(model, out_dir + "/" + stem + "_ema.wdck", step, true, &result.theta_ema);
    };

    for (long step = 0; step < cfg.num_iters; ++step) {
        std::vector<PerturbedSample> batch(cfg.batch_size);
        for (int j = 0; j < cfg.batch_size; ++j) {
            size_t idx = rng_data.uniform_index(dataset.size());
            PerturbedSample& s = batch[j];
            s.x0 = &x0n[idx];
            s.y = &yn[idx];
            s.t = kTimeEpsilon + (1.0 - kTimeEpsilon) * rng_diff.uniform01();
            double sigma = sigma_at(schedule, s.t);
            s.noise = GridField(s.x0->height, s.x0->width, Space::normalized, s.x0->cell_km);
            s.xt = *s.x0;
            for (size_t k = 0; k < d; ++k) {
                s.noise.values[k] = rng_diff.normal();
                s.xt.values[k] += sigma * s.noise.values[k];
            }
        }

        ProjectionSet proj;
        const bool wdr_active = cfg.alpha != 0.0;
        if (wdr_active)
            proj = sample_projections(static_cast<int>(d), cfg.swd_projections,
                                      rng_proj.next_u64());

        std::fill(grad.begin(), grad.end(), 0.0);
        CombinedLoss loss =
            combined_loss(model, batch, cfg.alpha, wdr_active ? &proj : nullptr, &grad);
        if (!std::isfinite(loss.total))
            throw TrainingError("training loss diverged", step);

        double norm2 = 0.0;
        for (double g : grad) norm2 += g * g;
        double grad_norm = std::sqrt(norm2);
        if (!std::isfinite(grad_norm)) throw TrainingError("gradient diverged", step);
        if (cfg.grad_clip > 0.0 && grad_norm > cfg.grad_clip) {
            double scale = cfg.grad_clip / grad_norm;
            for (double& g : grad) g *= scale;
        }

        adam_step(model.parameters(), grad, adam, cfg.learning_rate);
        ema_update(result.theta_ema, model.parameters(), cfg.ema_rate);
        result.history.push_back({step, loss.score, loss.wdr, loss.total, grad_norm});
        result.steps_run = step + 1;

        if (cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0 &&
            step + 1 < cfg.num_iters)
            checkpoint(step + 1, "checkpoint_" + std::to_string(step + 1));
    }

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        write_loss_history_csv(result.history, out_dir + "/loss_history.csv");
        checkpoint(result.steps_run, "checkpoint_final");
    }
    return result;
}

namespace {

BiasArmReport run_arm(const std::vector<SyntheticPair>& train_set,
                      const std::vector<SyntheticPair>& eval_set, double alpha,
                      const BiasExperimentConfig& cfg) {
    TrainConfig tc = cfg.train;
    tc.alpha = alpha;
    TrainResult trained = train(train_set, tc, cfg.arch, cfg.schedule, cfg.c_p, "");

    ScoreModel sampler_model = trained.model;
    sampler_model.parameters() = trained.theta_ema;

    BiasArmReport arm;
    arm.alpha = alpha;
    arm.history = std::move(trained.history);

    std::vector<double> sample_pixels, target_pixels;
    for (size_t k = 0; k < eval_set.size(); ++k) {
        ConditionTensor yn = normalize_condition(eval_set[k].condition, cfg.c_p);
        SamplerConfig sc = cfg.sampler;
        sc.trace_c_p = cfg.c_p;
        sc.seed = derive_seed(cfg.sampler.seed, kTagEval, k);
        std::vector<std::vector<std::pair<double, double>>> traces;
        std::vector<GridField> members =
            sample_ensemble(sampler_model, yn, cfg.schedule, sc, &traces);
        arm.traces.push_back(std::move(traces));
        for (const GridField& member : members) {
            GridField phys = denormalize(member, cfg.c_p);
            sample_pixels.insert(sample_pixels.end(), phys.values.begin(), phys.values.end());
        }
        target_pixels.insert(target_pixels.end(), eval_set[k].target.values.begin(),
                             eval_set[k].target.values.end());
    }
    arm.intensity_w1 = wasserstein_1d(sample_pixels, target_pixels);
    arm.q999_error = std::abs(empirical_quantile(sample_pixels, 0.999) -
                              empirical_quantile(target_pixels, 0.999));
    return arm;
}

}  // namespace

BiasExperimentReport bias_trace_experiment(const std::vector<SyntheticPair>& dataset,
                                           const BiasExperimentConfig& cfg) {
    if (cfg.eval_pairs < 1) throw ConfigError("eval_pairs must be >= 1");
    if (dataset.size() <= static_cast<size_t>(cfg.eval_pairs))
        throw ConfigError("dataset too small for the requested eval_pairs holdout");
    std::vector<SyntheticPair> train_set(dataset.begin(), dataset.end() - cfg.eval_pairs);
    std::vector<SyntheticPair> eval_set(dataset.end() - cfg.eval_pairs, dataset.end());

    BiasExperimentReport report;
    report.baseline = run_arm(train_set, eval_set, cfg.alpha_baseline, cfg);
    report.wdr = run_arm(train_set, eval_set, cfg.alpha_wdr, cfg);
    return report;
}

}  // namespace wassdiff
