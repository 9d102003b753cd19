#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "mage/dataio.hpp"
#include "mage/diffusion.hpp"
#include "mage/model.hpp"
#include "mage/nncore.hpp"
#include "mage/rng.hpp"

namespace mage::train {

struct TrainConfig {
    double weight_s1 = 1.0;
    double weight_s2 = 1.0;
    double weight_s3 = 1.0;
    int batch_size = 16;
    int steps = 3000;
    double lr = 3e-4;
    std::uint64_t seed = 0;
    double grad_clip = 1.0;
    int log_every = 50;

    void validate() const;
    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
};

// One preprocessed window: normalized condition plus normalized per-scale
// targets (S3 is the normalized window itself; S1/S2 are projections of the
// raw window, normalized with their own stats).
struct WindowSample {
    Eigen::MatrixXd cond;       // N x 54
    Eigen::MatrixXd target_s1;  // N x 36
    Eigen::MatrixXd target_s2;  // N x 66
    Eigen::MatrixXd target_s3;  // N x 132

    const Eigen::MatrixXd& target(ScaleId id) const;
};

struct TrainData {
    std::vector<WindowSample> windows;
    NormStats stats;
};

TrainData prepare_train_data(const std::vector<MotionClip>& clips, const SkeletonConfig& skel,
                             int window = 120, int history = 12);

struct StageLosses {
    nn::Var l1;
    nn::Var l2;
    nn::Var l3;  // scalar graph nodes; absent stages contribute constant 0
};

StageLosses stage_losses(const model::MageModel::Forward& fwd, const WindowSample& sample);

nn::Var objective(const StageLosses& losses, const TrainConfig& cfg);

struct TrainState {
    long long step = 0;
    double l1 = 0.0, l2 = 0.0, l3 = 0.0, l_obj = 0.0;
    Rng rng{0};
};

// One optimization step over a freshly sampled batch. Deterministic given
// the state's RNG. Throws NonFiniteLoss with diagnostics on NaN/Inf.
void train_step(const TrainData& data, TrainState& state, model::MageModel& model,
                const diffusion::NoiseSchedule& sched, const TrainConfig& cfg, nn::Adam& opt);

struct TrainResult {
    std::vector<double> objective_history;  // one entry per step
    TrainState state;
};

// Full loop; optionally writes a JSON-lines metrics log
// {step, L1, L2, L3, L_obj, lr, wall_ms}.
TrainResult run_training(const TrainData& data, model::MageModel& model,
                         const diffusion::NoiseSchedule& sched, const TrainConfig& cfg,
                         std::ostream* log = nullptr);

// Checkpoint: model config + schedule + normalization stats + parameters.
void save_checkpoint(const std::string& path, const model::MageModel& model,
                     const diffusion::NoiseSchedule& sched, const NormStats& stats);

struct LoadedCheckpoint {
    std::unique_ptr<model::MageModel> model;
    diffusion::NoiseSchedule schedule;
    NormStats stats;
};

// Restores a checkpoint. When `expected` is given, its architecture must
// match the stored config (ConfigMismatch otherwise).
LoadedCheckpoint load_checkpoint(const std::string& path, const SkeletonConfig& skel,
                                 const model::ModelConfig* expected = nullptr);

}  // namespace mage::train
