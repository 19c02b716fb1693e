#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "wassdiff/grid.hpp"
#include "wassdiff/sde.hpp"
#include "wassdiff/tensor.hpp"

namespace wassdiff {

// Compact conditional score network: a 3-resolution (configurable depth)
// convolutional encoder-decoder with skip connections. Condition channels are
// concatenated at the input; a sinusoidal time embedding is projected to a
// per-channel bias in every block. The network predicts the noise eps_hat and
// the score is -eps_hat / sigma(t), which keeps raw outputs O(1) across t.
struct Architecture {
    int hidden_channels = 16;
    int depth = 3;  // number of resolution levels
    int time_embed_dim = 32;
    int condition_channels = 2;
    int input_height = 0;  // training field size, informational
    int input_width = 0;

    void validate() const;
};

// Sinusoidal features of t with a geometric frequency ladder; deterministic
// and smooth in t.
std::vector<double> time_embedding(double t, int dim);

class ScoreModel {
public:
    ScoreModel(const Architecture& arch, const NoiseSchedule& schedule, uint64_t init_seed);

    // Copies carry parameters and layout but not the recorded forward state.
    ScoreModel(const ScoreModel& other)
        : arch_(other.arch_), schedule_(other.schedule_), theta_(other.theta_),
          blocks_(other.blocks_), head_(other.head_) {}
    ScoreModel& operator=(const ScoreModel& other) {
        if (this != &other) {
            arch_ = other.arch_;
            schedule_ = other.schedule_;
            theta_ = other.theta_;
            blocks_ = other.blocks_;
            head_ = other.head_;
            last_trace_.reset();
        }
        return *this;
    }
    ScoreModel(ScoreModel&&) = default;
    ScoreModel& operator=(ScoreModel&&) = default;

    const Architecture& architecture() const { return arch_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    size_t parameter_count() const { return theta_.size(); }
    std::vector<double>& parameters() { return theta_; }
    const std::vector<double>& parameters() const { return theta_; }

    // Score estimate s(x, y, t). Thread-safe, records nothing.
    GridField forward(const GridField& x, const ConditionTensor& y, double t) const;

    // As forward(), but keeps the intermediate state so backward() can run.
    GridField forward_recorded(const GridField& x, const ConditionTensor& y, double t);

    // Exact gradient of a scalar loss w.r.t. theta, given dLoss/dscore for
    // the last recorded forward pass. Throws StateError without one.
    std::vector<double> backward(const GridField& upstream_score_grad) const;

    // --- training-path API with caller-owned traces (parallel batches) ---

    struct Trace {
        double t = 0.0, sigma = 1.0;
        std::vector<double> emb;
        Tensor input;
        std::vector<Tensor> enc_pre, enc_post, pooled;
        Tensor bottom_pre, bottom_post;
        std::vector<Tensor> dec_cat, dec_pre, dec_post;
    };

    // Builds the network input: x scaled by 1/sqrt(1 + sigma(t)^2) so the
    // noisy channel stays O(1), followed by the condition channels.
    Tensor pack_input(const GridField& x, const ConditionTensor& y, double t) const;

    // eps_hat evaluation; fills `trace` when non-null.
    void eval_eps(const Tensor& input, double t, Tensor& eps_out, Trace* trace) const;

    // Accumulates dLoss/dtheta into grad_accum given dLoss/deps_hat.
    void backprop_eps(const Trace& trace, const Tensor& g_eps, double* grad_accum) const;

private:
    struct ConvSpec {
        int in_ch = 0, out_ch = 0;
        size_t w_off = 0, b_off = 0;
    };
    struct BlockSpec {
        ConvSpec conv;
        size_t tb_w_off = 0, tb_b_off = 0;  // time-bias projection (E -> out_ch)
        bool has_time_bias = true;
    };

    int level_channels(int level) const { return arch_.hidden_channels << level; }
    void run_block(const BlockSpec& block, const Tensor& in, const std::vector<double>& emb,
                   Tensor& pre, Tensor& post) const;
    void block_backward(const BlockSpec& block, const Tensor& in, const Tensor& pre,
                        const std::vector<double>& emb, const Tensor& g_post, Tensor* g_in,
                        double* grad) const;
    void validate_input(const GridField& x, const ConditionTensor& y, double t) const;

    Architecture arch_;
    NoiseSchedule schedule_;
    std::vector<double> theta_;
    std::vector<BlockSpec> blocks_;  // stem, enc[1..D-1], bottom, dec[D-2..0]
    ConvSpec head_;
    std::unique_ptr<Trace> last_trace_;
};

// Checkpoint: one JSON header line (architecture, schedule, step, EMA flag,
// parameter count) followed by the flat parameter vector as little-endian
// 64-bit floats.
void save_checkpoint(const ScoreModel& model, const std::string& path, long step, bool is_ema,
                     const std::vector<double>* params_override = nullptr);

struct LoadedCheckpoint {
    ScoreModel model;
    long step = 0;
    bool ema = false;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace wassdiff
