#pragma once

#include <functional>
#include <vector>

#include "wassdiff/grid.hpp"
#include "wassdiff/scorenet.hpp"
#include "wassdiff/sde.hpp"

namespace wassdiff {

// Overlapping patch layout covering an H x W grid. Offsets step by `stride`;
// the final offset is clamped so the last patch ends at the grid edge.
struct PatchPlan {
    int patch = 256;
    int stride = 192;
    int height = 0, width = 0;
    std::vector<int> row_offsets, col_offsets;

    size_t patch_count() const { return row_offsets.size() * col_offsets.size(); }
};

PatchPlan plan_patches(int height, int width, int patch = 256, int stride = 192);

// Gaussian blending weights for one patch, peaked at the center, strictly
// positive. std defaults to patch * std_fraction.
struct BlendKernel {
    int patch = 0;
    std::vector<double> weights;  // patch x patch
};
BlendKernel make_blend_kernel(int patch, double std_fraction = 0.25);

// Per-pixel sum of overlapping raw weights for a plan; used to normalize.
std::vector<double> normalization_map(const PatchPlan& plan, const BlendKernel& kernel);

// Weighted per-pixel average of patch outputs. Pixels covered by a single
// patch copy that patch's value exactly.
GridField merge_step(const std::vector<GridField>& patch_outputs, const PatchPlan& plan,
                     const BlendKernel& kernel);

GridField extract_window(const GridField& f, int row0, int col0, int h, int w);

// Score evaluated on one patch window of the global state.
using PatchScoreFn =
    std::function<GridField(const GridField& x_patch, double t, int row0, int col0)>;

// Predictor-Corrector sampling where every score evaluation is computed
// patchwise and Gaussian-merged into a full-grid score before the update.
// Noise is drawn once per step on the full grid (identical to pc_sample's
// stream), so overlapping patches see the same noise.
GridField tiled_pc_sample_with_score(const PatchScoreFn& score, int height, int width,
                                     const NoiseSchedule& schedule, const SamplerConfig& cfg,
                                     const PatchPlan& plan, const BlendKernel& kernel,
                                     const TraceHook& hook = nullptr);

// Model-backed tiled sampling on a condition tensor larger than the model's
// training size.
GridField tiled_pc_sample(const ScoreModel& model, const ConditionTensor& y,
                          const NoiseSchedule& schedule, const SamplerConfig& cfg,
                          const PatchPlan& plan, const BlendKernel& kernel,
                          const TraceHook& hook = nullptr);

}  // namespace wassdiff
