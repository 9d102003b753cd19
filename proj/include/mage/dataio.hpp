#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mage/skeleton.hpp"

namespace mage {

// A motion sequence: local joint rotations plus root translation per frame.
struct MotionClip {
    double fps = 60.0;
    std::vector<Pose> frames;

    int frame_count() const { return static_cast<int>(frames.size()); }
};

// Observed head + wrist features. Row n holds, per observed joint in order
// (head, left wrist, right wrist): rotation 6D, angular velocity 6D,
// position 3, linear velocity 3. Velocities are per frame, not per second.
struct SparseCondition {
    static constexpr int kJoints = 3;
    static constexpr int kPerJoint = 18;
    static constexpr int kDim = kJoints * kPerJoint;

    Eigen::MatrixXd features;  // N x 54

    int frame_count() const { return static_cast<int>(features.rows()); }
};

// Per-channel standardization. stddev is floored at 1e-6.
struct ChannelStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;
};

ChannelStats fit_channel_stats(const Eigen::MatrixXd& rows);
Eigen::MatrixXd apply_norm(const ChannelStats& stats, const Eigen::MatrixXd& rows);
Eigen::MatrixXd invert_norm(const ChannelStats& stats, const Eigen::MatrixXd& rows);

// Standardization statistics for the condition channels and each scale's
// target channels.
struct NormStats {
    ChannelStats cond;
    ChannelStats s1;
    ChannelStats s2;
    ChannelStats s3;

    const ChannelStats& target(ScaleId id) const;
};

NormStats fit_normstats(const std::vector<MotionClip>& clips, const SkeletonConfig& skel);

// One training/inference slice of a clip.
struct Window {
    SparseCondition cond;  // N_w frames
    MotionClip target;     // N_w frames
    int start = 0;         // frame offset in the source clip
    int history_len = 0;   // prefix frames shared with the previous window
};

SparseCondition extract_condition(const MotionClip& clip, const SkeletonDef& skel);

// Frame layout helpers shared by training and sampling: joint-major
// [joint0 r6 | joint1 r6 | ...].
Eigen::VectorXd flatten_rotations(const std::vector<Rot6>& rots);
std::vector<Rot6> unflatten_rotations(const Eigen::VectorXd& v);
Eigen::MatrixXd clip_rotation_matrix(const MotionClip& clip);                 // N x 132
Eigen::MatrixXd project_clip_matrix(const MotionClip& clip, const ScaleSpec& spec,
                                    CompositeMode mode = CompositeMode::ChordalMean);

std::vector<Window> make_windows(const MotionClip& clip, const SparseCondition& cond,
                                 int window_len = 120, int history = 12);

enum class SynthKind { Walk, Reach, Squat, Kick, Mixed };

const char* to_string(SynthKind kind);
SynthKind synth_kind_from_string(const std::string& s);

struct SynthInfo {
    SynthKind kind = SynthKind::Walk;
    double gait_period_frames = 0.0;  // dominant motion period
};

// Procedural motion generator: deterministic per (kind, seed), sinusoidal
// phase-based trajectories, C2-continuous, joint angles bounded well below
// 150 degrees.
std::vector<MotionClip> synth_dataset(SynthKind kind, int count, int frames, double fps,
                                      std::uint64_t seed, std::vector<SynthInfo>* info = nullptr);

// Binary motion container ("MAGE" magic) and dataset manifest.
void save_clip(const MotionClip& clip, const std::string& path);
MotionClip load_clip(const std::string& path);
void save_dataset(const std::vector<MotionClip>& clips, const std::string& dir);
std::vector<MotionClip> load_dataset(const std::string& manifest_or_dir);

// Per-frame global joint positions as CSV (clip,frame,joint,x,y,z).
void write_positions_csv(const std::vector<MotionClip>& clips, const SkeletonDef& skel,
                         const std::string& path);

}  // namespace mage
