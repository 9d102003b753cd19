#include "mage/dataio.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mage/binio.hpp"
#include "mage/errors.hpp"

namespace mage {

namespace fs = std::filesystem;
using nlohmann::json;

ChannelStats fit_channel_stats(const Eigen::MatrixXd& rows) {
    if (rows.rows() == 0) throw EmptyDataset("fit_channel_stats: no rows");
    ChannelStats stats;
    stats.mean = rows.colwise().mean();
    Eigen::MatrixXd centered = rows.rowwise() - stats.mean.transpose();
    stats.stddev = (centered.array().square().colwise().mean()).sqrt();
    stats.stddev = stats.stddev.cwiseMax(1e-6);
    return stats;
}

Eigen::MatrixXd apply_norm(const ChannelStats& stats, const Eigen::MatrixXd& rows) {
    if (rows.cols() != stats.mean.size())
        throw ShapeMismatch("apply_norm: channel count mismatch");
    return (rows.rowwise() - stats.mean.transpose()).array().rowwise() /
           stats.stddev.transpose().array();
}

Eigen::MatrixXd invert_norm(const ChannelStats& stats, const Eigen::MatrixXd& rows) {
    if (rows.cols() != stats.mean.size())
        throw ShapeMismatch("invert_norm: channel count mismatch");
    return (rows.array().rowwise() * stats.stddev.transpose().array()).matrix().rowwise() +
           stats.mean.transpose();
}

const ChannelStats& NormStats::target(ScaleId id) const {
    switch (id) {
        case ScaleId::S1: return s1;
        case ScaleId::S2: return s2;
        case ScaleId::S3: return s3;
    }
    throw InvalidArgument("bad scale id");
}

SparseCondition extract_condition(const MotionClip& clip, const SkeletonDef& skel) {
    const int n = clip.frame_count();
    if (n < 2) throw ClipTooShort("extract_condition: need at least 2 frames");
    constexpr int joints[SparseCondition::kJoints] = {kHeadJoint, kLeftWristJoint,
                                                      kRightWristJoint};
    SparseCondition cond;
    cond.features.resize(n, SparseCondition::kDim);

    std::vector<RotM> prev_rot(SparseCondition::kJoints);
    std::vector<Vec3> prev_pos(SparseCondition::kJoints);
    for (int f = 0; f < n; ++f) {
        const GlobalPose g = forward_kinematics(clip.frames[f], skel);
        for (int k = 0; k < SparseCondition::kJoints; ++k) {
            const int j = joints[k];
            const RotM& rot = g.global_rot[j];
            const Vec3& pos = g.global_pos[j];
            const Rot6 r = sixd_encode(rot);
            // Frame 0 has no predecessor: identity angular step, zero velocity.
            const Rot6 w =
                f == 0 ? sixd_encode(RotM::Identity()) : sixd_encode(angular_velocity(prev_rot[k], rot));
            const Vec3 v = f == 0 ? Vec3::Zero() : linear_velocity(prev_pos[k], pos);
            auto row = cond.features.row(f).segment(k * SparseCondition::kPerJoint,
                                                    SparseCondition::kPerJoint);
            row.segment(0, 6) = r;
            row.segment(6, 6) = w;
            row.segment(12, 3) = pos;
            row.segment(15, 3) = v;
            prev_rot[k] = rot;
            prev_pos[k] = pos;
        }
    }
    return cond;
}

Eigen::VectorXd flatten_rotations(const std::vector<Rot6>& rots) {
    Eigen::VectorXd v(6 * rots.size());
    for (std::size_t j = 0; j < rots.size(); ++j) v.segment<6>(6 * j) = rots[j];
    return v;
}

std::vector<Rot6> unflatten_rotations(const Eigen::VectorXd& v) {
    if (v.size() % 6 != 0) throw ShapeMismatch("unflatten_rotations: length not divisible by 6");
    std::vector<Rot6> rots(v.size() / 6);
    for (std::size_t j = 0; j < rots.size(); ++j) rots[j] = v.segment<6>(6 * j);
    return rots;
}

Eigen::MatrixXd clip_rotation_matrix(const MotionClip& clip) {
    Eigen::MatrixXd m(clip.frame_count(), 6 * kJointCount);
    for (int f = 0; f < clip.frame_count(); ++f)
        m.row(f) = flatten_rotations(clip.frames[f].local_rot).transpose();
    return m;
}

Eigen::MatrixXd project_clip_matrix(const MotionClip& clip, const ScaleSpec& spec,
                                    CompositeMode mode) {
    Eigen::MatrixXd m(clip.frame_count(), scale_dim(spec));
    for (int f = 0; f < clip.frame_count(); ++f)
        m.row(f) = flatten_rotations(project_to_scale(clip.frames[f].local_rot, spec, mode))
                       .transpose();
    return m;
}

NormStats fit_normstats(const std::vector<MotionClip>& clips, const SkeletonConfig& skel) {
    if (clips.empty()) throw EmptyDataset("fit_normstats: no clips");
    long total = 0;
    for (const auto& c : clips) total += c.frame_count();
    Eigen::MatrixXd cond_rows(total, SparseCondition::kDim);
    Eigen::MatrixXd s3_rows(total, scale_dim(skel.s3));
    Eigen::MatrixXd s2_rows(total, scale_dim(skel.s2));
    Eigen::MatrixXd s1_rows(total, scale_dim(skel.s1));
    long at = 0;
    for (const auto& clip : clips) {
        const int n = clip.frame_count();
        cond_rows.middleRows(at, n) = extract_condition(clip, skel.def).features;
        s3_rows.middleRows(at, n) = clip_rotation_matrix(clip);
        s2_rows.middleRows(at, n) = project_clip_matrix(clip, skel.s2, skel.composite_mode);
        s1_rows.middleRows(at, n) = project_clip_matrix(clip, skel.s1, skel.composite_mode);
        at += n;
    }
    NormStats stats;
    stats.cond = fit_channel_stats(cond_rows);
    stats.s3 = fit_channel_stats(s3_rows);
    stats.s2 = fit_channel_stats(s2_rows);
    stats.s1 = fit_channel_stats(s1_rows);
    return stats;
}

std::vector<Window> make_windows(const MotionClip& clip, const SparseCondition& cond,
                                 int window_len, int history) {
    const int n = clip.frame_count();
    if (cond.frame_count() != n) throw LengthMismatch("make_windows: condition/clip length");
    if (history < 0 || history >= window_len)
        throw InvalidArgument("make_windows: need 0 <= history < window_len");
    if (n < window_len)
        throw ClipTooShort("make_windows: clip shorter than window (" + std::to_string(n) + " < " +
                           std::to_string(window_len) + ")");
    const int stride = window_len - history;
    std::vector<int> starts;
    for (int s = 0; s + window_len <= n; s += stride) starts.push_back(s);
    if (starts.back() + window_len < n) starts.push_back(n - window_len);

    std::vector<Window> out;
    out.reserve(starts.size());
    for (std::size_t i = 0; i < starts.size(); ++i) {
        const int s = starts[i];
        Window w;
        w.start = s;
        w.history_len = i == 0 ? 0 : starts[i - 1] + window_len - s;
        w.cond.features = cond.features.middleRows(s, window_len);
        w.target.fps = clip.fps;
        w.target.frames.assign(clip.frames.begin() + s, clip.frames.begin() + s + window_len);
        out.push_back(std::move(w));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Motion container ("MAGE") and manifest
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'M', 'A', 'G', 'E'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_clip(const MotionClip& clip, const std::string& path) {
    if (clip.frame_count() < 2) throw DataError("save_clip: clip needs at least 2 frames");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_clip: cannot open " + path);
    binio::write_bytes(out, kMagic, 4);
    binio::write_pod<std::uint32_t>(out, kVersion);
    binio::write_pod<float>(out, static_cast<float>(clip.fps));
    binio::write_pod<std::uint32_t>(out, kJointCount);
    binio::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(clip.frame_count()));
    for (const auto& pose : clip.frames) {
        for (int i = 0; i < 3; ++i) binio::write_pod<float>(out, static_cast<float>(pose.root_trans[i]));
        for (const auto& r : pose.local_rot)
            for (int i = 0; i < 6; ++i) binio::write_pod<float>(out, static_cast<float>(r[i]));
    }
    if (!out) throw DataError("save_clip: write failed for " + path);
}

MotionClip load_clip(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_clip: cannot open " + path);
    char magic[4];
    if (!binio::read_bytes(in, magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("load_clip: bad magic in " + path);
    std::uint32_t version = 0, joints = 0, frames = 0;
    float fps = 0.f;
    if (!binio::read_pod(in, version) || version != kVersion)
        throw DataError("load_clip: unsupported version in " + path);
    if (!binio::read_pod(in, fps) || !(fps > 0.f)) throw DataError("load_clip: bad fps in " + path);
    if (!binio::read_pod(in, joints) || joints != kJointCount)
        throw DataError("load_clip: expected 22 joints in " + path);
    if (!binio::read_pod(in, frames) || frames < 2)
        throw DataError("load_clip: bad frame count in " + path);

    MotionClip clip;
    clip.fps = fps;
    clip.frames.resize(frames);
    for (auto& pose : clip.frames) {
        float buf[3 + 6 * kJointCount];
        if (!binio::read_bytes(in, buf, sizeof(buf)))
            throw DataError("load_clip: truncated file " + path);
        pose.root_trans = Vec3(buf[0], buf[1], buf[2]);
        pose.local_rot.resize(kJointCount);
        for (int j = 0; j < kJointCount; ++j)
            for (int i = 0; i < 6; ++i) pose.local_rot[j][i] = buf[3 + 6 * j + i];
    }
    return clip;
}

void save_dataset(const std::vector<MotionClip>& clips, const std::string& dir) {
    if (clips.empty()) throw EmptyDataset("save_dataset: no clips");
    fs::create_directories(dir);
    json manifest;
    manifest["version"] = 1;
    json names = json::array();
    for (std::size_t i = 0; i < clips.size(); ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "clip_%05zu.mage", i);
        save_clip(clips[i], (fs::path(dir) / buf).string());
        names.push_back(buf);
    }
    manifest["clips"] = names;
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw DataError("save_dataset: cannot write manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

std::vector<MotionClip> load_dataset(const std::string& manifest_or_dir) {
    fs::path path(manifest_or_dir);
    if (fs::is_directory(path)) path /= "manifest.json";
    std::ifstream in(path);
    if (!in) throw DataError("load_dataset: cannot open manifest " + path.string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw DataError("load_dataset: manifest parse error: " + std::string(e.what()));
    }
    if (!manifest.contains("clips") || !manifest["clips"].is_array())
        throw DataError("load_dataset: manifest lacks a clips array");
    std::vector<MotionClip> clips;
    for (const auto& name : manifest["clips"])
        clips.push_back(load_clip((path.parent_path() / name.get<std::string>()).string()));
    if (clips.empty()) throw EmptyDataset("load_dataset: manifest lists no clips");
    return clips;
}

void write_positions_csv(const std::vector<MotionClip>& clips, const SkeletonDef& skel,
                         const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("write_positions_csv: cannot open " + path);
    out << "clip,frame,joint,x,y,z\n";
    for (std::size_t c = 0; c < clips.size(); ++c) {
        for (int f = 0; f < clips[c].frame_count(); ++f) {
            const GlobalPose g = forward_kinematics(clips[c].frames[f], skel);
            for (int j = 0; j < kJointCount; ++j) {
                out << c << ',' << f << ',' << j << ',' << g.global_pos[j].x() << ','
                    << g.global_pos[j].y() << ',' << g.global_pos[j].z() << '\n';
            }
        }
    }
}

}  // namespace mage
