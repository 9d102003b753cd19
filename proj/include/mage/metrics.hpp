#pragma once

#include <string>
#include <vector>

#include "mage/dataio.hpp"
#include "mage/skeleton.hpp"

namespace mage::metrics {

// Joint memberships for the region position errors.
struct RegionSpec {
    std::vector<int> root{0};
    std::vector<int> hand{20, 21};
    std::vector<int> upper{3, 6, 9, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21};
    std::vector<int> lower{0, 1, 2, 4, 5, 7, 8, 10, 11};
};

// Mean geodesic local-rotation error, degrees.
double mpjre(const MotionClip& pred, const MotionClip& gt);

// Mean global position error over the given joints, centimeters.
double region_pe(const MotionClip& pred, const MotionClip& gt, const SkeletonDef& skel,
                 const std::vector<int>& joints);
double mpjpe(const MotionClip& pred, const MotionClip& gt, const SkeletonDef& skel);

// Mean global velocity error, cm/s (backward differences at clip fps).
double mpjve(const MotionClip& pred, const MotionClip& gt, const SkeletonDef& skel);

// Mean jerk magnitude (third-order backward difference of global
// positions), in units of 10^2 m/s^3.
double jitter(const MotionClip& clip, const SkeletonDef& skel);

struct ClipReport {
    double mpjre = 0.0;
    double mpjpe = 0.0;
    double mpjve = 0.0;
    double jitter = 0.0;
    double root_pe = 0.0;
    double hand_pe = 0.0;
    double upper_pe = 0.0;
    double lower_pe = 0.0;
    int frames = 0;
};

struct EvalReport {
    std::vector<ClipReport> clips;
    ClipReport aggregate;  // frame-count weighted pooling across clips
};

ClipReport evaluate_clip(const MotionClip& pred, const MotionClip& gt, const SkeletonDef& skel,
                         const RegionSpec& regions = {});
EvalReport evaluate(const std::vector<MotionClip>& preds, const std::vector<MotionClip>& gts,
                    const SkeletonDef& skel, const RegionSpec& regions = {});

// JSON-lines dump: one record per clip, then the aggregate.
void write_report(const EvalReport& report, const std::string& path);
std::string report_line(const ClipReport& r);

}  // namespace mage::metrics
