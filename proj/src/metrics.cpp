#include "mage/metrics.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "mage/errors.hpp"

namespace mage::metrics {

using nlohmann::json;

namespace {

void check_pair(const MotionClip& pred, const MotionClip& gt, const char* op) {
    if (pred.frame_count() != gt.frame_count())
        throw LengthMismatch(std::string(op) + ": clip lengths differ");
    if (pred.fps != gt.fps) throw LengthMismatch(std::string(op) + ": clip fps differ");
}

std::vector<std::vector<Vec3>> global_positions(const MotionClip& clip, const SkeletonDef& skel) {
    std::vector<std::vector<Vec3>> pos(clip.frame_count());
    for (int f = 0; f < clip.frame_count(); ++f)
        pos[f] = forward_kinematics(clip.frames[f], skel).global_pos;
    return pos;
}

}  // namespace

double mpjre(const MotionClip& pred, const MotionClip& gt) {
    check_pair(pred, gt, "mpjre");
    double total = 0.0;
    for (int f = 0; f < pred.frame_count(); ++f)
        for (int j = 0; j < kJointCount; ++j)
            total += geodesic_angle_deg(sixd_decode(pred.frames[f].local_rot[j]),
                                        sixd_decode(gt.frames[f].local_rot[j]));
    return total / (pred.frame_count() * kJointCount);
}

double region_pe(const MotionClip& pred, const MotionClip& gt, const SkeletonDef& skel,
                 const std::vector<int>& joints) {
    check_pair(pred, gt, "region_pe");
    if (joints.empty()) throw InvalidArgument("region_pe: empty joint set");
    const auto pp = global_positions(pred, skel);
    const auto gp = global_positions(gt, skel);
    double total = 0.0;
    for (int f = 0; f < pred.frame_count(); ++f)
        for (int j : joints) total += (pp[f][j] - gp[f][j]).norm();
    return 100.0 * total / (pred.frame_count() * joints.size());
}

double mpjpe(const MotionClip& pred, const MotionClip& gt, const SkeletonDef& skel) {
    std::vector<int> all(kJointCount);
    for (int j = 0; j < kJointCount; ++j) all[j] = j;
    return region_pe(pred, gt, skel, all);
}

double mpjve(const MotionClip& pred, const MotionClip& gt, const SkeletonDef& skel) {
    check_pair(pred, gt, "mpjve");
    if (pred.frame_count() < 2) throw ClipTooShort("mpjve: need at least 2 frames");
    const auto pp = global_positions(pred, skel);
    const auto gp = global_positions(gt, skel);
    const double fps = pred.fps;
    double total = 0.0;
    for (int f = 1; f < pred.frame_count(); ++f) {
        for (int j = 0; j < kJointCount; ++j) {
            const Vec3 vp = (pp[f][j] - pp[f - 1][j]) * fps;
            const Vec3 vg = (gp[f][j] - gp[f - 1][j]) * fps;
            total += (vp - vg).norm();
        }
    }
    return 100.0 * total / ((pred.frame_count() - 1) * kJointCount);
}

double jitter(const MotionClip& clip, const SkeletonDef& skel) {
    if (clip.frame_count() < 4) throw ClipTooShort("jitter: need at least 4 frames");
    const auto pos = global_positions(clip, skel);
    const double fps3 = clip.fps * clip.fps * clip.fps;
    double total = 0.0;
    for (int f = 3; f < clip.frame_count(); ++f) {
        for (int j = 0; j < kJointCount; ++j) {
            const Vec3 jerk =
                (pos[f][j] - 3.0 * pos[f - 1][j] + 3.0 * pos[f - 2][j] - pos[f - 3][j]) * fps3;
            total += jerk.norm();
        }
    }
    return total / ((clip.frame_count() - 3) * kJointCount) / 100.0;
}

ClipReport evaluate_clip(const MotionClip& pred, const MotionClip& gt, const SkeletonDef& skel,
                         const RegionSpec& regions) {
    ClipReport r;
    r.frames = pred.frame_count();
    r.mpjre = mpjre(pred, gt);
    r.mpjpe = mpjpe(pred, gt, skel);
    r.mpjve = mpjve(pred, gt, skel);
    r.jitter = jitter(pred, skel);
    r.root_pe = region_pe(pred, gt, skel, regions.root);
    r.hand_pe = region_pe(pred, gt, skel, regions.hand);
    r.upper_pe = region_pe(pred, gt, skel, regions.upper);
    r.lower_pe = region_pe(pred, gt, skel, regions.lower);
    return r;
}

EvalReport evaluate(const std::vector<MotionClip>& preds, const std::vector<MotionClip>& gts,
                    const SkeletonDef& skel, const RegionSpec& regions) {
    if (preds.size() != gts.size()) throw LengthMismatch("evaluate: clip count mismatch");
    if (preds.empty()) throw EmptyDataset("evaluate: no clips");
    EvalReport report;
    double wsum = 0.0, vsum = 0.0, jsum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const ClipReport r = evaluate_clip(preds[i], gts[i], skel, regions);
        // Pooled means: clip means weighted by their effective frame counts.
        const double w = r.frames;
        const double wv = r.frames - 1;
        const double wj = r.frames - 3;
        report.aggregate.mpjre += w * r.mpjre;
        report.aggregate.mpjpe += w * r.mpjpe;
        report.aggregate.root_pe += w * r.root_pe;
        report.aggregate.hand_pe += w * r.hand_pe;
        report.aggregate.upper_pe += w * r.upper_pe;
        report.aggregate.lower_pe += w * r.lower_pe;
        report.aggregate.mpjve += wv * r.mpjve;
        report.aggregate.jitter += wj * r.jitter;
        report.aggregate.frames += r.frames;
        wsum += w;
        vsum += wv;
        jsum += wj;
        report.clips.push_back(r);
    }
    report.aggregate.mpjre /= wsum;
    report.aggregate.mpjpe /= wsum;
    report.aggregate.root_pe /= wsum;
    report.aggregate.hand_pe /= wsum;
    report.aggregate.upper_pe /= wsum;
    report.aggregate.lower_pe /= wsum;
    report.aggregate.mpjve /= vsum;
    report.aggregate.jitter /= jsum;
    return report;
}

std::string report_line(const ClipReport& r) {
    json j;
    j["frames"] = r.frames;
    j["mpjre_deg"] = r.mpjre;
    j["mpjpe_cm"] = r.mpjpe;
    j["mpjve_cm_s"] = r.mpjve;
    j["jitter_1e2_m_s3"] = r.jitter;
    j["root_pe_cm"] = r.root_pe;
    j["hand_pe_cm"] = r.hand_pe;
    j["upper_pe_cm"] = r.upper_pe;
    j["lower_pe_cm"] = r.lower_pe;
    return j.dump();
}

void write_report(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("write_report: cannot open " + path);
    for (std::size_t i = 0; i < report.clips.size(); ++i) {
        json j = json::parse(report_line(report.clips[i]));
        j["clip"] = i;
        out << j.dump() << "\n";
    }
    json agg = json::parse(report_line(report.aggregate));
    agg["aggregate"] = true;
    out << agg.dump() << "\n";
}

}  // namespace mage::metrics
