#include "wassdiff/scorenet.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "wassdiff/rng.hpp"
#include <json.hpp>

namespace wassdiff {

using nlohmann::json;

void Architecture::validate() const {
    if (hidden_channels < 1) throw ConfigError("hidden_channels must be >= 1");
    if (depth < 1 || depth > 6) throw ConfigError("depth must be in [1, 6]");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
        throw ConfigError("time_embed_dim must be even and >= 2");
    if (condition_channels < 0) throw ConfigError("condition_channels must be >= 0");
}

std::vector<double> time_embedding(double t, int dim) {
    std::vector<double> emb(dim);
    const int half = dim / 2;
    const double w_min = 1.0, w_max = 1000.0;
    for (int k = 0; k < half; ++k) {
        double frac = half > 1 ? static_cast<double>(k) / (half - 1) : 0.0;
        double omega = w_min * std::pow(w_max / w_min, frac);
        emb[2 * k] = std::sin(omega * t);
        emb[2 * k + 1] = std::cos(omega * t);
    }
    return emb;
}

ScoreModel::ScoreModel(const Architecture& arch, const NoiseSchedule& schedule, uint64_t init_seed)
    : arch_(arch), schedule_(schedule) {
    arch_.validate();
    schedule_.validate();

    const int d = arch_.depth;
    const int e = arch_.time_embed_dim;
    size_t offset = 0;
    auto add_block = [&](int in_ch, int out_ch) {
        BlockSpec b;
        b.conv = {in_ch, out_ch, offset, offset + static_cast<size_t>(in_ch) * out_ch * 9};
        offset = b.conv.b_off + out_ch;
        b.tb_w_off = offset;
        offset += static_cast<size_t>(e) * out_ch;
        b.tb_b_off = offset;
        offset += out_ch;
        blocks_.push_back(b);
    };

    add_block(1 + arch_.condition_channels, level_channels(0));       // stem
    for (int l = 1; l < d; ++l) add_block(level_channels(l - 1), level_channels(l));
    add_block(level_channels(d - 1), level_channels(d - 1));          // bottom
    for (int l = d - 2; l >= 0; --l)
        add_block(level_channels(l + 1) + level_channels(l), level_channels(l));
    head_ = {level_channels(0), 1, offset, offset + static_cast<size_t>(level_channels(0)) * 9};
    offset = head_.b_off + 1;

    theta_.assign(offset, 0.0);
    Rng rng(init_seed, {0x696e6974ULL});
    for (const BlockSpec& b : blocks_) {
        double bound = std::sqrt(3.0 / (b.conv.in_ch * 9));
        for (size_t i = 0; i < static_cast<size_t>(b.conv.in_ch) * b.conv.out_ch * 9; ++i)
            theta_[b.conv.w_off + i] = rng.uniform(-bound, bound);
        double tb_bound = std::sqrt(3.0 / e);
        for (size_t i = 0; i < static_cast<size_t>(e) * b.conv.out_ch; ++i)
            theta_[b.tb_w_off + i] = rng.uniform(-tb_bound, tb_bound);
        // conv and time biases start at zero
    }
    // Head stays zero-initialized so the model's initial score is the zero field.
}

void ScoreModel::run_block(const BlockSpec& block, const Tensor& in, const std::vector<double>& emb,
                           Tensor& pre, Tensor& post) const {
    conv3x3_forward(in, theta_.data() + block.conv.w_off, theta_.data() + block.conv.b_off, pre);
    const int e = arch_.time_embed_dim;
    for (int c = 0; c < block.conv.out_ch; ++c) {
        const double* w = theta_.data() + block.tb_w_off + static_cast<size_t>(c) * e;
        double bias = theta_[block.tb_b_off + c];
        for (int k = 0; k < e; ++k) bias += w[k] * emb[k];
        double* plane = pre.chan(c);
        for (size_t i = 0; i < pre.plane(); ++i) plane[i] += bias;
    }
    silu_forward(pre, post);
}

void ScoreModel::block_backward(const BlockSpec& block, const Tensor& in, const Tensor& pre,
                                const std::vector<double>& emb, const Tensor& g_post,
                                Tensor* g_in, double* grad) const {
    Tensor g_pre(pre.channels, pre.height, pre.width);
    silu_backward(pre, g_post, g_pre);

    const int e = arch_.time_embed_dim;
    for (int c = 0; c < block.conv.out_ch; ++c) {
        const double* plane = g_pre.chan(c);
        double sum = 0.0;
        for (size_t i = 0; i < g_pre.plane(); ++i) sum += plane[i];
        grad[block.tb_b_off + c] += sum;
        double* gw = grad + block.tb_w_off + static_cast<size_t>(c) * e;
        for (int k = 0; k < e; ++k) gw[k] += sum * emb[k];
    }

    conv3x3_backward(in, theta_.data() + block.conv.w_off, g_pre, g_in,
                     grad + block.conv.w_off, grad + block.conv.b_off);
}

void ScoreModel::validate_input(const GridField& x, const ConditionTensor& y, double t) const {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("forward requires t in [0, 1]");
    if (arch_.condition_channels != static_cast<int>(y.channel_count()))
        throw DimensionError("condition channel count does not match architecture");
    if (arch_.condition_channels > 0 && (x.height != y.height() || x.width != y.width()))
        throw DimensionError("state and condition dimensions disagree");
    const int div = 1 << (arch_.depth - 1);
    if (x.height % div != 0 || x.width % div != 0)
        throw DimensionError("field dimensions must be divisible by 2^(depth-1)");
    for (double v : x.values)
        if (!std::isfinite(v)) throw NumericError("non-finite value in forward input");
}

Tensor ScoreModel::pack_input(const GridField& x, const ConditionTensor& y, double t) const {
    validate_input(x, y, t);
    double sigma = sigma_at(schedule_, t);
    double c_in = 1.0 / std::sqrt(1.0 + sigma * sigma);
    Tensor input(1 + arch_.condition_channels, x.height, x.width);
    double* x_plane = input.chan(0);
    for (size_t i = 0; i < x.values.size(); ++i) x_plane[i] = c_in * x.values[i];
    for (int c = 0; c < arch_.condition_channels; ++c) {
        const auto& ch = y.channels[c];
        std::copy(ch.values.begin(), ch.values.end(), input.chan(1 + c));
    }
    return input;
}

void ScoreModel::eval_eps(const Tensor& input, double t, Tensor& eps_out, Trace* trace) const {
    const int d = arch_.depth;
    const int h = input.height, w = input.width;
    std::vector<double> emb = time_embedding(t, arch_.time_embed_dim);

    Trace local;
    Trace& tr = trace ? *trace : local;
    tr.t = t;
    tr.sigma = sigma_at(schedule_, t);
    tr.emb = emb;
    tr.input = input;
    tr.enc_pre.assign(d, {});
    tr.enc_post.assign(d, {});
    tr.pooled.assign(d, {});
    tr.dec_cat.assign(std::max(0, d - 1), {});
    tr.dec_pre.assign(std::max(0, d - 1), {});
    tr.dec_post.assign(std::max(0, d - 1), {});

    int hh = h, ww = w;
    tr.enc_pre[0] = Tensor(level_channels(0), hh, ww);
    tr.enc_post[0] = Tensor(level_channels(0), hh, ww);
    run_block(blocks_[0], tr.input, emb, tr.enc_pre[0], tr.enc_post[0]);

    for (int l = 1; l < d; ++l) {
        hh /= 2;
        ww /= 2;
        tr.pooled[l] = Tensor(level_channels(l - 1), hh, ww);
        avgpool2_forward(tr.enc_post[l - 1], tr.pooled[l]);
        tr.enc_pre[l] = Tensor(level_channels(l), hh, ww);
        tr.enc_post[l] = Tensor(level_channels(l), hh, ww);
        run_block(blocks_[l], tr.pooled[l], emb, tr.enc_pre[l], tr.enc_post[l]);
    }

    tr.bottom_pre = Tensor(level_channels(d - 1), hh, ww);
    tr.bottom_post = Tensor(level_channels(d - 1), hh, ww);
    run_block(blocks_[d], tr.enc_post[d - 1], emb, tr.bottom_pre, tr.bottom_post);

    const Tensor* cur = &tr.bottom_post;
    for (int l = d - 2; l >= 0; --l) {
        hh *= 2;
        ww *= 2;
        Tensor up(cur->channels, hh, ww);
        upsample2_forward(*cur, up);
        Tensor& cat = tr.dec_cat[l];
        cat = Tensor(up.channels + level_channels(l), hh, ww);
        std::copy(up.data.begin(), up.data.end(), cat.data.begin());
        std::copy(tr.enc_post[l].data.begin(), tr.enc_post[l].data.end(),
                  cat.data.begin() + up.size());
        tr.dec_pre[l] = Tensor(level_channels(l), hh, ww);
        tr.dec_post[l] = Tensor(level_channels(l), hh, ww);
        // Decoder block index: d+1 for level d-2, increasing as levels go out.
        run_block(blocks_[d + 1 + (d - 2 - l)], cat, emb, tr.dec_pre[l], tr.dec_post[l]);
        cur = &tr.dec_post[l];
    }

    eps_out = Tensor(1, h, w);
    conv3x3_forward(*cur, theta_.data() + head_.w_off, theta_.data() + head_.b_off, eps_out);
}

void ScoreModel::backprop_eps(const Trace& tr, const Tensor& g_eps, double* grad) const {
    const int d = arch_.depth;

    const Tensor& head_in = d >= 2 ? tr.dec_post[0] : tr.bottom_post;
    Tensor g_cur(head_in.channels, head_in.height, head_in.width);
    conv3x3_backward(head_in, theta_.data() + head_.w_off, g_eps, &g_cur,
                     grad + head_.w_off, grad + head_.b_off);

    // Skip-connection gradients for each encoder level, filled by the decoder.
    std::vector<Tensor> g_enc_post(d);
    for (int l = 0; l < d; ++l)
        g_enc_post[l] = Tensor(level_channels(l), tr.enc_post[l].height, tr.enc_post[l].width);

    // Decoder levels from the outside in.
    for (int l = 0; l <= d - 2; ++l) {
        const BlockSpec& block = blocks_[d + 1 + (d - 2 - l)];
        Tensor g_cat(tr.dec_cat[l].channels, tr.dec_cat[l].height, tr.dec_cat[l].width);
        block_backward(block, tr.dec_cat[l], tr.dec_pre[l], tr.emb, g_cur, &g_cat, grad);

        int up_ch = level_channels(l + 1);
        Tensor g_up(up_ch, g_cat.height, g_cat.width);
        std::copy(g_cat.data.begin(), g_cat.data.begin() + g_up.size(), g_up.data.begin());
        double* skip = g_enc_post[l].data.data();
        const double* rest = g_cat.data.data() + g_up.size();
        for (size_t i = 0; i < g_enc_post[l].size(); ++i) skip[i] += rest[i];

        Tensor g_below(up_ch, g_cat.height / 2, g_cat.width / 2);
        upsample2_backward(g_up, g_below);
        g_cur = std::move(g_below);
    }

    // Bottom block; its input is enc_post[d-1].
    block_backward(blocks_[d], tr.enc_post[d - 1], tr.bottom_pre, tr.emb, g_cur,
                   &g_enc_post[d - 1], grad);

    // Encoder levels from the inside out. g_enc_post already holds skip and
    // decoder contributions.
    for (int l = d - 1; l >= 1; --l) {
        Tensor g_pooled(level_channels(l - 1), tr.pooled[l].height, tr.pooled[l].width);
        block_backward(blocks_[l], tr.pooled[l], tr.enc_pre[l], tr.emb, g_enc_post[l], &g_pooled,
                       grad);
        avgpool2_backward(g_pooled, g_enc_post[l - 1]);
    }
    block_backward(blocks_[0], tr.input, tr.enc_pre[0], tr.emb, g_enc_post[0], nullptr, grad);
}

GridField ScoreModel::forward(const GridField& x, const ConditionTensor& y, double t) const {
    Tensor input = pack_input(x, y, t);
    Tensor eps;
    eval_eps(input, t, eps, nullptr);
    double inv_sigma = 1.0 / sigma_at(schedule_, t);
    GridField score(x.height, x.width, Space::normalized, x.cell_km);
    for (size_t i = 0; i < score.values.size(); ++i) score.values[i] = -eps.data[i] * inv_sigma;
    return score;
}

GridField ScoreModel::forward_recorded(const GridField& x, const ConditionTensor& y, double t) {
    Tensor input = pack_input(x, y, t);
    auto trace = std::make_unique<Trace>();
    Tensor eps;
    eval_eps(input, t, eps, trace.get());
    last_trace_ = std::move(trace);
    double inv_sigma = 1.0 / sigma_at(schedule_, t);
    GridField score(x.height, x.width, Space::normalized, x.cell_km);
    for (size_t i = 0; i < score.values.size(); ++i) score.values[i] = -eps.data[i] * inv_sigma;
    return score;
}

std::vector<double> ScoreModel::backward(const GridField& upstream_score_grad) const {
    if (!last_trace_) throw StateError("backward called without a recorded forward pass");
    const Trace& tr = *last_trace_;
    if (upstream_score_grad.height != tr.input.height ||
        upstream_score_grad.width != tr.input.width)
        throw DimensionError("upstream gradient dimensions disagree with recorded forward");
    Tensor g_eps(1, tr.input.height, tr.input.width);
    double factor = -1.0 / tr.sigma;  // score = -eps_hat / sigma
    for (size_t i = 0; i < g_eps.size(); ++i)
        g_eps.data[i] = factor * upstream_score_grad.values[i];
    std::vector<double> grad(theta_.size(), 0.0);
    backprop_eps(tr, g_eps, grad.data());
    return grad;
}

namespace {

void write_le_doubles(std::ofstream& out, const double* values, size_t count) {
    std::vector<unsigned char> buf(count * 8);
    for (size_t i = 0; i < count; ++i) {
        uint64_t bits;
        std::memcpy(&bits, &values[i], 8);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        for (int b = 0; b < 8; ++b) buf[8 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

}  // namespace

void save_checkpoint(const ScoreModel& model, const std::string& path, long step, bool is_ema,
                     const std::vector<double>* params_override) {
    const std::vector<double>& params = params_override ? *params_override : model.parameters();
    if (params.size() != model.parameter_count())
        throw DimensionError("checkpoint parameter vector has wrong length");
    const Architecture& a = model.architecture();
    json header = {
        {"format", "wassdiff-checkpoint"},
        {"version", 1},
        {"arch",
         {{"hidden_channels", a.hidden_channels},
          {"depth", a.depth},
          {"time_embed_dim", a.time_embed_dim},
          {"condition_channels", a.condition_channels},
          {"input_height", a.input_height},
          {"input_width", a.input_width}}},
        {"schedule",
         {{"sigma_min", model.schedule().sigma_min}, {"sigma_max", model.schedule().sigma_max}}},
        {"step", step},
        {"ema", is_ema},
        {"param_count", params.size()},
    };
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out << header.dump() << "\n";
    write_le_doubles(out, params.data(), params.size());
    if (!out) throw IoError("short write to checkpoint " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open checkpoint " + path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw ParseError("empty checkpoint " + path);
    json header;
    try {
        header = json::parse(header_line);
    } catch (const json::exception& e) {
        throw ParseError("malformed checkpoint header in " + path + ": " + e.what());
    }
    Architecture arch;
    NoiseSchedule schedule;
    size_t param_count = 0;
    long step = 0;
    bool ema = false;
    try {
        const auto& a = header.at("arch");
        arch.hidden_channels = a.at("hidden_channels").get<int>();
        arch.depth = a.at("depth").get<int>();
        arch.time_embed_dim = a.at("time_embed_dim").get<int>();
        arch.condition_channels = a.at("condition_channels").get<int>();
        arch.input_height = a.at("input_height").get<int>();
        arch.input_width = a.at("input_width").get<int>();
        schedule.sigma_min = header.at("schedule").at("sigma_min").get<double>();
        schedule.sigma_max = header.at("schedule").at("sigma_max").get<double>();
        param_count = header.at("param_count").get<size_t>();
        step = header.at("step").get<long>();
        ema = header.at("ema").get<bool>();
    } catch (const json::exception& e) {
        throw ParseError("checkpoint header in " + path + " missing fields: " + e.what());
    }

    LoadedCheckpoint loaded{ScoreModel(arch, schedule, 0), step, ema};
    if (loaded.model.parameter_count() != param_count)
        throw FormatError("checkpoint parameter count does not match architecture");

    std::vector<unsigned char> buf(param_count * 8);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
        throw FormatError("checkpoint payload truncated in " + path);
    for (size_t i = 0; i < param_count; ++i) {
        uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<uint64_t>(buf[8 * i + b]) << (8 * b);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        double v;
        std::memcpy(&v, &bits, 8);
        loaded.model.parameters()[i] = v;
    }
    return loaded;
}

}  // namespace wassdiff
