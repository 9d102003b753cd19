#pragma once

#include <string>
#include <vector>

#include "mage/rotmath.hpp"

namespace mage {

inline constexpr int kJointCount = 22;

// Joints that make up the sparse observation, in SMPL index order.
inline constexpr int kHeadJoint = 15;
inline constexpr int kLeftWristJoint = 20;
inline constexpr int kRightWristJoint = 21;

// Kinematic tree: single root at index 0, parents topologically ordered
// (parent[j] < j), rest-pose bone offsets in meters.
struct SkeletonDef {
    std::vector<int> parent;
    std::vector<Vec3> offset;
    std::vector<std::string> names;

    int joint_count() const { return static_cast<int>(parent.size()); }
};

enum class ScaleId { S1, S2, S3 };

const char* to_string(ScaleId id);
ScaleId scale_id_from_string(const std::string& s);

// One level of the multi-scale body: an ordered partition of the 22 joints
// into composite nodes plus a parent relation among those nodes.
struct ScaleSpec {
    ScaleId scale_id = ScaleId::S3;
    std::vector<std::vector<int>> groups;
    std::vector<int> coarse_parent;
    // Per group, the member used by the representative projection mode
    // (shallowest joint in the tree, lowest index on ties).
    std::vector<int> representatives;

    int node_count() const { return static_cast<int>(groups.size()); }
};

enum class CompositeMode { ChordalMean, Representative };

struct Pose {
    std::vector<Rot6> local_rot;  // size 22
    Vec3 root_trans = Vec3::Zero();
};

struct GlobalPose {
    std::vector<RotM> global_rot;
    std::vector<Vec3> global_pos;
};

// Skeleton definition plus the three scale partitions, as loaded from a
// config file or built in.
struct SkeletonConfig {
    SkeletonDef def;
    ScaleSpec s1;
    ScaleSpec s2;
    ScaleSpec s3;
    CompositeMode composite_mode = CompositeMode::ChordalMean;

    const ScaleSpec& scale(ScaleId id) const;
};

// Throw InvalidArgument with a description when a definition is malformed.
void validate_skeleton(const SkeletonDef& def);
void validate_scale(const ScaleSpec& spec, int joint_count);
// Nesting: every S2 group is a union of S3 groups, every S1 group a union
// of S2 groups.
void validate_nesting(const ScaleSpec& s1, const ScaleSpec& s2, const ScaleSpec& s3);
void validate_config(const SkeletonConfig& cfg);

SkeletonConfig default_skeleton();
SkeletonConfig load_skeleton(const std::string& path);
void save_skeleton(const SkeletonConfig& cfg, const std::string& path);

GlobalPose forward_kinematics(const Pose& pose, const SkeletonDef& skel);

// Composite-node rotations for one frame. Chordal-mean mode averages the
// decoded member rotations; representative mode copies the group's
// representative joint. Singleton groups copy their member verbatim.
std::vector<Rot6> project_to_scale(const std::vector<Rot6>& frame, const ScaleSpec& spec,
                                   CompositeMode mode = CompositeMode::ChordalMean);

// Feature width of one frame at this scale: node_count * 6.
int scale_dim(const ScaleSpec& spec);

}  // namespace mage
