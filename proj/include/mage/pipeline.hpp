#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mage/dataio.hpp"
#include "mage/diffusion.hpp"
#include "mage/model.hpp"
#include "mage/training.hpp"

namespace mage::pipe {

struct InferenceConfig {
    int window = 120;
    int history = 12;
    int ddim_steps = 4;
    double eta = 0.0;
    std::uint64_t seed = 0;
    // Blend the overlap region linearly instead of discarding it outright.
    bool crossfade = false;

    void validate() const;
    std::string to_json() const;
    static InferenceConfig from_json(const std::string& text);
};

// Window starts plus, per window, how many leading output frames are
// discarded when stitching. Windows advance by window - history; the last
// window is right-aligned to the clip end.
struct StitchPlan {
    std::vector<int> starts;
    std::vector<int> discards;
};

StitchPlan plan_stream(int total_frames, int window, int history);

// Seed used for window w of a streamed generation with base seed `seed`.
std::uint64_t window_seed(std::uint64_t seed, std::size_t window_index);

// One window of local-rotation predictions (root translation left at zero;
// global placement is a separate step). cond_norm must already be
// normalized with the checkpoint stats.
std::vector<Pose> generate_window(const Eigen::MatrixXd& cond_norm, model::MageModel& model,
                                  const diffusion::NoiseSchedule& sched,
                                  const diffusion::DdimPlan& plan, const NormStats& stats,
                                  std::uint64_t seed);

// Same recursion with an arbitrary denoiser (oracle substitution in tests).
std::vector<Pose> generate_window_with(const diffusion::DenoiseFn& denoise_fn,
                                       const Eigen::MatrixXd& cond_norm, int window,
                                       const diffusion::NoiseSchedule& sched,
                                       const diffusion::DdimPlan& plan, const NormStats& stats,
                                       std::uint64_t seed);

// Windowed streaming generation over a full-length condition; output length
// equals the condition length.
MotionClip stream_generate(const SparseCondition& cond_raw, double fps, model::MageModel& model,
                           const diffusion::NoiseSchedule& sched, const NormStats& stats,
                           const InferenceConfig& cfg);

// Head-anchored global placement: choose root translations so FK reproduces
// the observed head positions exactly.
std::vector<Pose> place_global(const std::vector<Pose>& local_pred,
                               const std::vector<Vec3>& observed_head_pos,
                               const SkeletonDef& skel);

// Convenience: condition -> streamed local rotations -> head-anchored clip.
MotionClip reconstruct_clip(const SparseCondition& cond_raw, double fps, model::MageModel& model,
                            const diffusion::NoiseSchedule& sched, const NormStats& stats,
                            const InferenceConfig& cfg, const SkeletonDef& skel);

struct BenchReport {
    double ms_per_window = 0.0;
    double ms_per_frame = 0.0;
    double frames_per_second = 0.0;
    int iterations = 0;
    int plan_steps = 0;
    int latent_dim = 0;
    int window = 0;

    std::string to_json() const;
};

// Wall-clock sampling latency, warm-up excluded.
BenchReport bench(model::MageModel& model, const diffusion::NoiseSchedule& sched,
                  const NormStats& stats, const InferenceConfig& cfg, int iterations);

}  // namespace mage::pipe
