#include "mage/pipeline.hpp"

#include <chrono>

#include <json.hpp>

#include "mage/errors.hpp"
#include "mage/rng.hpp"

namespace mage::pipe {

using diffusion::DdimPlan;
using diffusion::NoiseSchedule;
using model::MageModel;
using nn::Tensor;

std::string InferenceConfig::to_json() const {
    nlohmann::json j;
    j["window"] = window;
    j["history"] = history;
    j["ddim_steps"] = ddim_steps;
    j["eta"] = eta;
    j["seed"] = seed;
    j["crossfade"] = crossfade;
    return j.dump();
}

InferenceConfig InferenceConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("inference config parse error: " + std::string(e.what()));
    }
    InferenceConfig cfg;
    try {
        if (j.contains("window")) cfg.window = j["window"].get<int>();
        if (j.contains("history")) cfg.history = j["history"].get<int>();
        if (j.contains("ddim_steps")) cfg.ddim_steps = j["ddim_steps"].get<int>();
        if (j.contains("eta")) cfg.eta = j["eta"].get<double>();
        if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("crossfade")) cfg.crossfade = j["crossfade"].get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("inference config field error: " + std::string(e.what()));
    }
    cfg.validate();
    return cfg;
}

void InferenceConfig::validate() const {
    if (window < 2) throw InvalidArgument("inference config: window must be >= 2");
    if (history < 0 || history >= window)
        throw InvalidArgument("inference config: need 0 <= history < window");
    if (ddim_steps < 1) throw InvalidArgument("inference config: ddim_steps must be >= 1");
    if (eta < 0.0) throw InvalidArgument("inference config: eta must be >= 0");
}

StitchPlan plan_stream(int total_frames, int window, int history) {
    if (total_frames < window)
        throw ClipTooShort("plan_stream: condition shorter than one window");
    const int stride = window - history;
    StitchPlan plan;
    for (int s = 0; s + window <= total_frames; s += stride) plan.starts.push_back(s);
    if (plan.starts.back() + window < total_frames) plan.starts.push_back(total_frames - window);
    int covered = 0;
    for (int s : plan.starts) {
        plan.discards.push_back(covered - s);
        covered = s + window;
    }
    plan.discards[0] = 0;
    return plan;
}

std::uint64_t window_seed(std::uint64_t seed, std::size_t window_index) {
    std::uint64_t x = seed ^ (0x9E3779B97F4A7C15ull + window_index * 0xBF58476D1CE4E5B9ull);
    x ^= x >> 30;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 27;
    return x;
}

namespace {

std::vector<Pose> decode_window(const Eigen::MatrixXd& denorm) {
    std::vector<Pose> poses(denorm.rows());
    for (Eigen::Index f = 0; f < denorm.rows(); ++f) {
        poses[f].local_rot = unflatten_rotations(denorm.row(f).transpose());
        poses[f].root_trans = Vec3::Zero();
    }
    return poses;
}

}  // namespace

std::vector<Pose> generate_window_with(const diffusion::DenoiseFn& denoise_fn,
                                       const Eigen::MatrixXd& cond_norm, int window,
                                       const NoiseSchedule& sched, const DdimPlan& plan,
                                       const NormStats& stats, std::uint64_t seed) {
    if (cond_norm.rows() != window)
        throw ConfigMismatch("generate_window: condition length differs from the window");
    if (cond_norm.cols() != SparseCondition::kDim)
        throw ConfigMismatch("generate_window: condition width must be 54");
    const auto n = static_cast<std::size_t>(window);
    const auto dim = static_cast<std::size_t>(stats.s3.mean.size());
    Rng rng(seed);
    Tensor init({n, dim});
    for (std::size_t i = 0; i < init.size(); ++i) init[i] = rng.normal();
    diffusion::NoiseSource noise_source = [&rng](const std::vector<std::size_t>& shape) {
        Tensor z(shape);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = rng.normal();
        return z;
    };
    const Tensor cond = Tensor::from_matrix(cond_norm);
    const Tensor sample = diffusion::ddim_sample(denoise_fn, cond, plan, sched, init, noise_source);
    const Eigen::MatrixXd denorm = invert_norm(stats.s3, sample.to_matrix());
    return decode_window(denorm);
}

std::vector<Pose> generate_window(const Eigen::MatrixXd& cond_norm, MageModel& model,
                                  const NoiseSchedule& sched, const DdimPlan& plan,
                                  const NormStats& stats, std::uint64_t seed) {
    if (cond_norm.rows() != model.config().window)
        throw ConfigMismatch("generate_window: condition length differs from the model window");
    diffusion::DenoiseFn fn = [&model](const Tensor& x_t, int t, const Tensor& cond) {
        return model.predict_finest(x_t, t, cond);
    };
    return generate_window_with(fn, cond_norm, model.config().window, sched, plan, stats, seed);
}

MotionClip stream_generate(const SparseCondition& cond_raw, double fps, MageModel& model,
                           const NoiseSchedule& sched, const NormStats& stats,
                           const InferenceConfig& cfg) {
    cfg.validate();
    if (cfg.window != model.config().window)
        throw ConfigMismatch("stream_generate: inference window differs from the model window");
    const Eigen::MatrixXd cond_norm = apply_norm(stats.cond, cond_raw.features);
    const StitchPlan plan = plan_stream(cond_raw.frame_count(), cfg.window, cfg.history);
    const DdimPlan ddim = diffusion::make_ddim_plan(sched, cfg.ddim_steps, cfg.eta);

    MotionClip out;
    out.fps = fps;
    out.frames.reserve(cond_raw.frame_count());
    for (std::size_t w = 0; w < plan.starts.size(); ++w) {
        const int start = plan.starts[w];
        const auto poses = generate_window(cond_norm.middleRows(start, cfg.window), model, sched,
                                           ddim, stats, window_seed(cfg.seed, w));
        if (cfg.crossfade && w > 0) {
            // Ramp the already-emitted overlap frames toward the new window.
            const int overlap = plan.discards[w];
            for (int f = 0; f < overlap; ++f) {
                const double a = (f + 1.0) / (overlap + 1.0);
                auto& dst = out.frames[static_cast<std::size_t>(start + f)];
                for (int j = 0; j < kJointCount; ++j)
                    dst.local_rot[j] = (1.0 - a) * dst.local_rot[j] + a * poses[f].local_rot[j];
            }
        }
        for (int f = plan.discards[w]; f < cfg.window; ++f) out.frames.push_back(poses[f]);
    }
    if (out.frame_count() != cond_raw.frame_count())
        throw Error("stream_generate: stitched length mismatch (internal)");
    return out;
}

std::vector<Pose> place_global(const std::vector<Pose>& local_pred,
                               const std::vector<Vec3>& observed_head_pos,
                               const SkeletonDef& skel) {
    if (local_pred.size() != observed_head_pos.size())
        throw LengthMismatch("place_global: pose/head-path lengths differ");
    std::vector<Pose> out = local_pred;
    for (std::size_t f = 0; f < out.size(); ++f) {
        out[f].root_trans = Vec3::Zero();
        const GlobalPose g = forward_kinematics(out[f], skel);
        out[f].root_trans = observed_head_pos[f] - g.global_pos[kHeadJoint];
    }
    return out;
}

MotionClip reconstruct_clip(const SparseCondition& cond_raw, double fps, MageModel& model,
                            const NoiseSchedule& sched, const NormStats& stats,
                            const InferenceConfig& cfg, const SkeletonDef& skel) {
    MotionClip clip = stream_generate(cond_raw, fps, model, sched, stats, cfg);
    std::vector<Vec3> head_path(cond_raw.frame_count());
    for (int f = 0; f < cond_raw.frame_count(); ++f)
        head_path[f] = cond_raw.features.row(f).segment(12, 3).transpose();  // head p channel
    clip.frames = place_global(clip.frames, head_path, skel);
    return clip;
}

std::string BenchReport::to_json() const {
    nlohmann::json j;
    j["ms_per_window"] = ms_per_window;
    j["ms_per_frame"] = ms_per_frame;
    j["frames_per_second"] = frames_per_second;
    j["iterations"] = iterations;
    j["plan_steps"] = plan_steps;
    j["latent_dim"] = latent_dim;
    j["window"] = window;
    return j.dump();
}

BenchReport bench(MageModel& model, const NoiseSchedule& sched, const NormStats& stats,
                  const InferenceConfig& cfg, int iterations) {
    if (iterations < 1) throw InvalidArgument("bench: iterations must be >= 1");
    cfg.validate();
    const int n = model.config().window;
    Rng rng(cfg.seed);
    Eigen::MatrixXd cond_norm(n, SparseCondition::kDim);
    for (Eigen::Index i = 0; i < cond_norm.size(); ++i) cond_norm.data()[i] = rng.normal();
    const DdimPlan plan = diffusion::make_ddim_plan(sched, cfg.ddim_steps, cfg.eta);

    generate_window(cond_norm, model, sched, plan, stats, cfg.seed);  // warm-up
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < iterations; ++i)
        generate_window(cond_norm, model, sched, plan, stats, cfg.seed + 1 + i);
    const double total_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

    BenchReport report;
    report.iterations = iterations;
    report.ms_per_window = total_ms / iterations;
    report.ms_per_frame = report.ms_per_window / n;
    report.frames_per_second = 1000.0 / report.ms_per_frame;
    report.plan_steps = static_cast<int>(plan.sub_steps.size());
    report.latent_dim = model.config().latent_dim;
    report.window = n;
    return report;
}

}  // namespace mage::pipe
