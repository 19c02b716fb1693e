#include "wassdiff/tiled.hpp"

#include <algorithm>
#include <cmath>

#include "wassdiff/parallel.hpp"

namespace wassdiff {

namespace {

std::vector<int> axis_offsets(int dim, int patch, int stride) {
    std::vector<int> offsets;
    for (int o = 0;; o += stride) {
        if (o + patch >= dim) {
            int last = dim - patch;
            if (offsets.empty() || offsets.back() != last) offsets.push_back(last);
            break;
        }
        offsets.push_back(o);
    }
    return offsets;
}

}  // namespace

PatchPlan plan_patches(int height, int width, int patch, int stride) {
    if (patch <= 0) throw DomainError("patch size must be positive");
    if (stride <= 0 || stride > patch) throw DomainError("stride must lie in (0, patch]");
    if (patch > height || patch > width)
        throw DimensionError("patch larger than the image");
    PatchPlan plan;
    plan.patch = patch;
    plan.stride = stride;
    plan.height = height;
    plan.width = width;
    plan.row_offsets = axis_offsets(height, patch, stride);
    plan.col_offsets = axis_offsets(width, patch, stride);
    return plan;
}

BlendKernel make_blend_kernel(int patch, double std_fraction) {
    if (patch <= 0) throw DomainError("patch size must be positive");
    if (!(std_fraction > 0.0)) throw DomainError("std_fraction must be positive");
    BlendKernel kernel;
    kernel.patch = patch;
    kernel.weights.resize(static_cast<size_t>(patch) * patch);
    const double center = 0.5 * (patch - 1);
    const double sigma = std_fraction * patch;
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (int r = 0; r < patch; ++r)
        for (int c = 0; c < patch; ++c) {
            double dr = r - center, dc = c - center;
            kernel.weights[static_cast<size_t>(r) * patch + c] =
                std::exp(-(dr * dr + dc * dc) * inv);
        }
    return kernel;
}

std::vector<double> normalization_map(const PatchPlan& plan, const BlendKernel& kernel) {
    if (kernel.patch != plan.patch) throw DimensionError("kernel size does not match plan");
    std::vector<double> map(static_cast<size_t>(plan.height) * plan.width, 0.0);
    for (int r0 : plan.row_offsets)
        for (int c0 : plan.col_offsets)
            for (int r = 0; r < plan.patch; ++r)
                for (int c = 0; c < plan.patch; ++c)
                    map[static_cast<size_t>(r0 + r) * plan.width + (c0 + c)] +=
                        kernel.weights[static_cast<size_t>(r) * plan.patch + c];
    return map;
}

GridField extract_window(const GridField& f, int row0, int col0, int h, int w) {
    if (row0 < 0 || col0 < 0 || row0 + h > f.height || col0 + w > f.width)
        throw DimensionError("window outside the grid");
    GridField out(h, w, f.space, f.cell_km);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) out.at(r, c) = f.at(row0 + r, col0 + c);
    return out;
}

GridField merge_step(const std::vector<GridField>& patch_outputs, const PatchPlan& plan,
                     const BlendKernel& kernel) {
    if (kernel.patch != plan.patch) throw DimensionError("kernel size does not match plan");
    if (patch_outputs.size() != plan.patch_count())
        throw StateError("missing patch outputs for merge");
    for (const GridField& p : patch_outputs)
        if (p.height != plan.patch || p.width != plan.patch)
            throw DimensionError("patch output has wrong dimensions");

    const size_t n = static_cast<size_t>(plan.height) * plan.width;
    std::vector<double> num(n, 0.0), den(n, 0.0), last(n, 0.0);
    std::vector<int> coverage(n, 0);

    size_t patch_index = 0;
    for (int r0 : plan.row_offsets) {
        for (int c0 : plan.col_offsets) {
            const GridField& out = patch_outputs[patch_index++];
            for (int r = 0; r < plan.patch; ++r) {
                const size_t row_base = static_cast<size_t>(r0 + r) * plan.width + c0;
                const size_t krow = static_cast<size_t>(r) * plan.patch;
                for (int c = 0; c < plan.patch; ++c) {
                    double w = kernel.weights[krow + c];
                    double v = out.at(r, c);
                    num[row_base + c] += w * v;
                    den[row_base + c] += w;
                    last[row_base + c] = v;
                    coverage[row_base + c] += 1;
                }
            }
        }
    }

    GridField merged(plan.height, plan.width, patch_outputs.front().space,
                     patch_outputs.front().cell_km);
    for (size_t i = 0; i < n; ++i) {
        if (coverage[i] == 0) throw StateError("patch plan leaves pixels uncovered");
        merged.values[i] = coverage[i] == 1 ? last[i] : num[i] / den[i];
    }
    return merged;
}

GridField tiled_pc_sample_with_score(const PatchScoreFn& score, int height, int width,
                                     const NoiseSchedule& schedule, const SamplerConfig& cfg,
                                     const PatchPlan& plan, const BlendKernel& kernel,
                                     const TraceHook& hook) {
    if (plan.height != height || plan.width != width)
        throw DimensionError("patch plan does not match sampling dimensions");

    std::vector<std::pair<int, int>> origins;
    origins.reserve(plan.patch_count());
    for (int r0 : plan.row_offsets)
        for (int c0 : plan.col_offsets) origins.emplace_back(r0, c0);

    ScoreFn merged_score = [&](const GridField& x, double t) {
        std::vector<GridField> outputs(origins.size());
        parallel_for(origins.size(), [&](size_t i) {
            auto [r0, c0] = origins[i];
            GridField window = extract_window(x, r0, c0, plan.patch, plan.patch);
            outputs[i] = score(window, t, r0, c0);
        });
        return merge_step(outputs, plan, kernel);
    };
    return pc_sample_with_score(merged_score, height, width, schedule, cfg, hook);
}

GridField tiled_pc_sample(const ScoreModel& model, const ConditionTensor& y,
                          const NoiseSchedule& schedule, const SamplerConfig& cfg,
                          const PatchPlan& plan, const BlendKernel& kernel,
                          const TraceHook& hook) {
    y.validate();
    if (y.height() != plan.height || y.width() != plan.width)
        throw DimensionError("condition dimensions do not match patch plan");

    // Condition windows are fixed across steps; cut them once.
    std::vector<ConditionTensor> windows;
    windows.reserve(plan.patch_count());
    for (int r0 : plan.row_offsets)
        for (int c0 : plan.col_offsets) {
            ConditionTensor w;
            w.channel_roles = y.channel_roles;
            for (const GridField& ch : y.channels)
                w.channels.push_back(extract_window(ch, r0, c0, plan.patch, plan.patch));
            windows.push_back(std::move(w));
        }

    const size_t cols = plan.col_offsets.size();
    PatchScoreFn patch_score = [&](const GridField& x_patch, double t, int r0, int c0) {
        size_t ri = std::find(plan.row_offsets.begin(), plan.row_offsets.end(), r0) -
                    plan.row_offsets.begin();
        size_t ci = std::find(plan.col_offsets.begin(), plan.col_offsets.end(), c0) -
                    plan.col_offsets.begin();
        return model.forward(x_patch, windows[ri * cols + ci], t);
    };
    return tiled_pc_sample_with_score(patch_score, y.height(), y.width(), schedule, cfg, plan,
                                      kernel, hook);
}

}  // namespace wassdiff
