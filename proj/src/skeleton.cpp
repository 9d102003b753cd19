#include "mage/skeleton.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "mage/errors.hpp"

namespace mage {

using nlohmann::json;

const char* to_string(ScaleId id) {
    switch (id) {
        case ScaleId::S1: return "S1";
        case ScaleId::S2: return "S2";
        case ScaleId::S3: return "S3";
    }
    return "?";
}

ScaleId scale_id_from_string(const std::string& s) {
    if (s == "S1") return ScaleId::S1;
    if (s == "S2") return ScaleId::S2;
    if (s == "S3") return ScaleId::S3;
    throw InvalidArgument("unknown scale id: " + s);
}

const ScaleSpec& SkeletonConfig::scale(ScaleId id) const {
    switch (id) {
        case ScaleId::S1: return s1;
        case ScaleId::S2: return s2;
        case ScaleId::S3: return s3;
    }
    throw InvalidArgument("bad scale id");
}

void validate_skeleton(const SkeletonDef& def) {
    const int n = def.joint_count();
    if (n != kJointCount)
        throw InvalidArgument("skeleton: expected 22 joints, got " + std::to_string(n));
    if (static_cast<int>(def.offset.size()) != n || static_cast<int>(def.names.size()) != n)
        throw InvalidArgument("skeleton: parent/offset/names lengths disagree");
    if (def.parent[0] != -1) throw InvalidArgument("skeleton: joint 0 must be the root");
    for (int j = 1; j < n; ++j) {
        if (def.parent[j] < 0 || def.parent[j] >= j)
            throw InvalidArgument("skeleton: parent[" + std::to_string(j) +
                                  "] must be a lower index (single-rooted topological order)");
    }
    for (const auto& o : def.offset) {
        if (!o.allFinite()) throw InvalidArgument("skeleton: non-finite offset");
    }
}

void validate_scale(const ScaleSpec& spec, int joint_count) {
    const std::string tag = std::string("scale ") + to_string(spec.scale_id);
    if (spec.groups.empty()) throw InvalidArgument(tag + ": no groups");
    std::vector<int> seen(joint_count, 0);
    for (const auto& g : spec.groups) {
        if (g.empty()) throw InvalidArgument(tag + ": empty group");
        for (int j : g) {
            if (j < 0 || j >= joint_count)
                throw InvalidArgument(tag + ": joint index out of range: " + std::to_string(j));
            if (seen[j]++) throw InvalidArgument(tag + ": joint repeated: " + std::to_string(j));
        }
    }
    for (int j = 0; j < joint_count; ++j)
        if (!seen[j]) throw InvalidArgument(tag + ": joint uncovered: " + std::to_string(j));
    const int expected = spec.scale_id == ScaleId::S1 ? 6 : spec.scale_id == ScaleId::S2 ? 11 : 22;
    if (spec.node_count() != expected)
        throw InvalidArgument(tag + ": expected " + std::to_string(expected) + " nodes, got " +
                              std::to_string(spec.node_count()));
    if (spec.scale_id == ScaleId::S3) {
        for (const auto& g : spec.groups)
            if (g.size() != 1) throw InvalidArgument("scale S3: groups must be singletons");
    }
    if (static_cast<int>(spec.coarse_parent.size()) != spec.node_count())
        throw InvalidArgument(tag + ": coarse_parent length mismatch");
    int roots = 0;
    for (int i = 0; i < spec.node_count(); ++i) {
        const int p = spec.coarse_parent[i];
        if (p == -1) {
            ++roots;
        } else if (p < 0 || p >= spec.node_count() || p == i) {
            throw InvalidArgument(tag + ": bad coarse parent for node " + std::to_string(i));
        }
    }
    if (roots != 1) throw InvalidArgument(tag + ": exactly one coarse root required");
    if (static_cast<int>(spec.representatives.size()) != spec.node_count())
        throw InvalidArgument(tag + ": representatives length mismatch");
    for (int i = 0; i < spec.node_count(); ++i) {
        if (std::find(spec.groups[i].begin(), spec.groups[i].end(), spec.representatives[i]) ==
            spec.groups[i].end())
            throw InvalidArgument(tag + ": representative not a group member");
    }
}

namespace {

bool is_union_of(const std::vector<int>& coarse_group, const ScaleSpec& finer) {
    const std::set<int> want(coarse_group.begin(), coarse_group.end());
    std::set<int> got;
    for (const auto& g : finer.groups) {
        const bool inside = want.count(g[0]) > 0;
        for (int j : g) {
            if ((want.count(j) > 0) != inside) return false;  // group straddles the boundary
        }
        if (inside) got.insert(g.begin(), g.end());
    }
    return got == want;
}

}  // namespace

void validate_nesting(const ScaleSpec& s1, const ScaleSpec& s2, const ScaleSpec& s3) {
    for (const auto& g : s2.groups)
        if (!is_union_of(g, s3))
            throw InvalidArgument("nesting: an S2 group is not a union of S3 groups");
    for (const auto& g : s1.groups)
        if (!is_union_of(g, s2))
            throw InvalidArgument("nesting: an S1 group is not a union of S2 groups");
}

void validate_config(const SkeletonConfig& cfg) {
    validate_skeleton(cfg.def);
    validate_scale(cfg.s1, cfg.def.joint_count());
    validate_scale(cfg.s2, cfg.def.joint_count());
    validate_scale(cfg.s3, cfg.def.joint_count());
    validate_nesting(cfg.s1, cfg.s2, cfg.s3);
}

namespace {

std::vector<int> joint_depths(const SkeletonDef& def) {
    std::vector<int> depth(def.joint_count(), 0);
    for (int j = 1; j < def.joint_count(); ++j) depth[j] = depth[def.parent[j]] + 1;
    return depth;
}

ScaleSpec make_scale(ScaleId id, std::vector<std::vector<int>> groups, std::vector<int> parents,
                     const SkeletonDef& def) {
    ScaleSpec spec;
    spec.scale_id = id;
    spec.groups = std::move(groups);
    spec.coarse_parent = std::move(parents);
    const auto depth = joint_depths(def);
    for (const auto& g : spec.groups) {
        int best = g[0];
        for (int j : g)
            if (depth[j] < depth[best] || (depth[j] == depth[best] && j < best)) best = j;
        spec.representatives.push_back(best);
    }
    return spec;
}

}  // namespace

SkeletonConfig default_skeleton() {
    SkeletonConfig cfg;
    cfg.def.names = {"pelvis",     "left_hip",      "right_hip",      "spine1",     "left_knee",
                     "right_knee", "spine2",        "left_ankle",     "right_ankle", "spine3",
                     "left_foot",  "right_foot",    "neck",           "left_collar", "right_collar",
                     "head",       "left_shoulder", "right_shoulder", "left_elbow",  "right_elbow",
                     "left_wrist", "right_wrist"};
    cfg.def.parent = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
    // Approximate adult proportions, meters, y-up.
    cfg.def.offset = {
        {0.0, 0.0, 0.0},       // pelvis
        {0.09, -0.09, 0.0},    // left_hip
        {-0.09, -0.09, 0.0},   // right_hip
        {0.0, 0.11, 0.0},      // spine1
        {0.0, -0.40, 0.0},     // left_knee
        {0.0, -0.40, 0.0},     // right_knee
        {0.0, 0.13, 0.0},      // spine2
        {0.0, -0.42, 0.0},     // left_ankle
        {0.0, -0.42, 0.0},     // right_ankle
        {0.0, 0.05, 0.0},      // spine3
        {0.0, -0.06, 0.13},    // left_foot
        {-0.0, -0.06, 0.13},   // right_foot
        {0.0, 0.21, 0.0},      // neck
        {0.05, 0.11, 0.0},     // left_collar
        {-0.05, 0.11, 0.0},    // right_collar
        {0.0, 0.09, 0.0},      // head
        {0.11, 0.02, 0.0},     // left_shoulder
        {-0.11, 0.02, 0.0},    // right_shoulder
        {0.26, 0.0, 0.0},      // left_elbow
        {-0.26, 0.0, 0.0},     // right_elbow
        {0.25, 0.0, 0.0},      // left_wrist
        {-0.25, 0.0, 0.0}      // right_wrist
    };

    // S1 node order: head, torso, left arm, right arm, left leg, right leg.
    cfg.s1 = make_scale(ScaleId::S1,
                        {{12, 15}, {0, 3, 6, 9, 13, 14}, {16, 18, 20}, {17, 19, 21},
                         {1, 4, 7, 10}, {2, 5, 8, 11}},
                        {1, -1, 1, 1, 1, 1}, cfg.def);
    // S2 node order: head, upper torso, lower torso, L upper arm, L forearm,
    // R upper arm, R forearm, L thigh, L shank, R thigh, R shank.
    cfg.s2 = make_scale(ScaleId::S2,
                        {{12, 15}, {6, 9, 13, 14}, {0, 3}, {16, 18}, {20}, {17, 19}, {21},
                         {1, 4}, {7, 10}, {2, 5}, {8, 11}},
                        {1, 2, -1, 1, 3, 1, 5, 2, 7, 2, 9}, cfg.def);
    std::vector<std::vector<int>> singles;
    for (int j = 0; j < kJointCount; ++j) singles.push_back({j});
    cfg.s3 = make_scale(ScaleId::S3, singles, cfg.def.parent, cfg.def);
    validate_config(cfg);
    return cfg;
}

namespace {

json scale_to_json(const ScaleSpec& spec) {
    return json{{"groups", spec.groups}, {"coarse_parent", spec.coarse_parent}};
}

ScaleSpec scale_from_json(ScaleId id, const json& j, const SkeletonDef& def) {
    return make_scale(id, j.at("groups").get<std::vector<std::vector<int>>>(),
                      j.at("coarse_parent").get<std::vector<int>>(), def);
}

}  // namespace

SkeletonConfig load_skeleton(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("skeleton config not readable: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("skeleton config parse error: " + std::string(e.what()));
    }
    SkeletonConfig cfg;
    try {
        cfg.def.parent = j.at("parents").get<std::vector<int>>();
        cfg.def.names = j.at("names").get<std::vector<std::string>>();
        for (const auto& o : j.at("offsets")) {
            if (o.size() != 3) throw DataError("skeleton config: offset must have 3 entries");
            cfg.def.offset.emplace_back(o[0].get<double>(), o[1].get<double>(), o[2].get<double>());
        }
        cfg.s1 = scale_from_json(ScaleId::S1, j.at("scales").at("S1"), cfg.def);
        cfg.s2 = scale_from_json(ScaleId::S2, j.at("scales").at("S2"), cfg.def);
        cfg.s3 = scale_from_json(ScaleId::S3, j.at("scales").at("S3"), cfg.def);
        if (j.contains("composite_mode")) {
            const auto mode = j["composite_mode"].get<std::string>();
            if (mode == "chordal_mean") cfg.composite_mode = CompositeMode::ChordalMean;
            else if (mode == "representative") cfg.composite_mode = CompositeMode::Representative;
            else throw DataError("skeleton config: unknown composite_mode " + mode);
        }
    } catch (const json::exception& e) {
        throw DataError("skeleton config field error: " + std::string(e.what()));
    }
    validate_config(cfg);
    return cfg;
}

void save_skeleton(const SkeletonConfig& cfg, const std::string& path) {
    json j;
    j["parents"] = cfg.def.parent;
    j["names"] = cfg.def.names;
    json offsets = json::array();
    for (const auto& o : cfg.def.offset) offsets.push_back({o.x(), o.y(), o.z()});
    j["offsets"] = offsets;
    j["scales"] = {{"S1", scale_to_json(cfg.s1)},
                   {"S2", scale_to_json(cfg.s2)},
                   {"S3", scale_to_json(cfg.s3)}};
    j["composite_mode"] =
        cfg.composite_mode == CompositeMode::ChordalMean ? "chordal_mean" : "representative";
    std::ofstream out(path);
    if (!out) throw DataError("cannot write skeleton config: " + path);
    out << j.dump(2) << "\n";
}

GlobalPose forward_kinematics(const Pose& pose, const SkeletonDef& skel) {
    const int n = skel.joint_count();
    GlobalPose g;
    g.global_rot.resize(n);
    g.global_pos.resize(n);
    g.global_rot[0] = sixd_decode(pose.local_rot[0]);
    g.global_pos[0] = pose.root_trans;
    for (int j = 1; j < n; ++j) {
        const int p = skel.parent[j];
        g.global_rot[j] = g.global_rot[p] * sixd_decode(pose.local_rot[j]);
        g.global_pos[j] = g.global_pos[p] + g.global_rot[p] * skel.offset[j];
    }
    return g;
}

std::vector<Rot6> project_to_scale(const std::vector<Rot6>& frame, const ScaleSpec& spec,
                                   CompositeMode mode) {
    std::vector<Rot6> out;
    out.reserve(spec.groups.size());
    for (std::size_t gi = 0; gi < spec.groups.size(); ++gi) {
        const auto& g = spec.groups[gi];
        if (g.size() == 1) {
            out.push_back(frame[g[0]]);
            continue;
        }
        if (mode == CompositeMode::Representative) {
            out.push_back(frame[spec.representatives[gi]]);
            continue;
        }
        std::vector<RotM> members;
        members.reserve(g.size());
        for (int j : g) members.push_back(sixd_decode(frame[j]));
        out.push_back(sixd_encode(chordal_mean(members)));
    }
    return out;
}

int scale_dim(const ScaleSpec& spec) { return spec.node_count() * 6; }

}  // namespace mage
