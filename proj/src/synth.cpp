#include <cmath>

#include "mage/dataio.hpp"
#include "mage/errors.hpp"
#include "mage/rng.hpp"

namespace mage {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double deg(double d) { return d * M_PI / 180.0; }

RotM rx(double a) { return axis_angle(Vec3::UnitX(), a); }
RotM ry(double a) { return axis_angle(Vec3::UnitY(), a); }
RotM rz(double a) { return axis_angle(Vec3::UnitZ(), a); }

// C3-smooth burst envelope: 0 outside [0, 1], single hump inside.
double burst(double s) {
    if (s <= 0.0 || s >= 1.0) return 0.0;
    const double v = std::sin(M_PI * s);
    return v * v * v * v;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t x = seed + 0x9E3779B97F4A7C15ull * (index + 1);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

struct FrameAngles {
    // Per-joint rotation, assembled per generator.
    std::vector<RotM> rot{static_cast<std::size_t>(kJointCount), RotM::Identity()};
    Vec3 root = Vec3::Zero();
};

Pose to_pose(const FrameAngles& fa) {
    Pose pose;
    pose.local_rot.resize(kJointCount);
    for (int j = 0; j < kJointCount; ++j) pose.local_rot[j] = sixd_encode(fa.rot[j]);
    pose.root_trans = fa.root;
    return pose;
}

// Shared standing posture parameters drawn once per clip.
struct BasePosture {
    double heading;     // yaw of the whole clip
    double root_height; // pelvis height, meters
    double arm_down;    // shoulder z-rotation bringing arms to the sides
    double elbow_bend;  // resting elbow flexion
};

BasePosture draw_posture(Rng& rng) {
    BasePosture b;
    b.heading = rng.uniform(0.0, kTwoPi);
    b.root_height = rng.uniform(0.92, 0.98);
    b.arm_down = deg(rng.uniform(62.0, 76.0));
    b.elbow_bend = deg(rng.uniform(8.0, 20.0));
    return b;
}

void apply_arms_down(FrameAngles& fa, const BasePosture& b, double swing_l, double swing_r,
                     double elbow_l, double elbow_r) {
    fa.rot[16] = rz(-b.arm_down) * rx(swing_l);
    fa.rot[17] = rz(b.arm_down) * rx(swing_r);
    fa.rot[18] = rx(b.elbow_bend + elbow_l);
    fa.rot[19] = rx(b.elbow_bend + elbow_r);
}

MotionClip gen_walk(int n, double fps, Rng& rng, SynthInfo* info) {
    const BasePosture base = draw_posture(rng);
    const double period_s = rng.uniform(1.0, 1.4);
    const double phase0 = rng.uniform(0.0, kTwoPi);
    const double a_hip = deg(rng.uniform(18.0, 28.0));
    const double a_knee = deg(rng.uniform(25.0, 40.0));
    const double a_ankle = deg(rng.uniform(4.0, 9.0));
    const double a_arm = deg(rng.uniform(12.0, 22.0));
    const double a_elbow = deg(rng.uniform(6.0, 12.0));
    const double a_spine = deg(rng.uniform(2.0, 4.0));
    const double speed = rng.uniform(0.9, 1.3);
    const double bob = rng.uniform(0.015, 0.03);
    const double sway = rng.uniform(0.012, 0.022);

    const Vec3 forward = ry(base.heading) * Vec3::UnitZ();
    const Vec3 lateral = ry(base.heading) * Vec3::UnitX();

    MotionClip clip;
    clip.fps = fps;
    for (int f = 0; f < n; ++f) {
        const double t = f / fps;
        const double ph = kTwoPi * t / period_s + phase0;
        FrameAngles fa;
        fa.rot[0] = ry(base.heading) * rz(deg(2.0) * std::sin(ph));
        fa.rot[1] = rx(a_hip * std::sin(ph));
        fa.rot[2] = rx(-a_hip * std::sin(ph));
        fa.rot[4] = rx(-a_knee * 0.5 * (1.0 + std::sin(ph + 0.6)));
        fa.rot[5] = rx(-a_knee * 0.5 * (1.0 - std::sin(ph + 0.6)));
        fa.rot[7] = rx(a_ankle * std::sin(ph + 1.1));
        fa.rot[8] = rx(-a_ankle * std::sin(ph + 1.1));
        fa.rot[3] = rz(a_spine * std::sin(ph));
        fa.rot[6] = rz(a_spine * 0.6 * std::sin(ph + 0.4));
        fa.rot[9] = rx(a_spine * 0.5 * std::sin(2.0 * ph));
        fa.rot[12] = rx(deg(2.0) * std::sin(2.0 * ph + 1.0));
        fa.rot[15] = rx(-deg(1.5) * std::sin(2.0 * ph + 1.0));
        // Arms swing against the same-side leg.
        apply_arms_down(fa, base, -a_arm * std::sin(ph), a_arm * std::sin(ph),
                        a_elbow * 0.5 * (1.0 + std::sin(ph + 0.9)),
                        a_elbow * 0.5 * (1.0 - std::sin(ph + 0.9)));
        fa.root = forward * (speed * t) + lateral * (sway * std::sin(ph)) +
                  Vec3(0.0, base.root_height + bob * std::sin(2.0 * ph), 0.0);
        clip.frames.push_back(to_pose(fa));
    }
    if (info) *info = {SynthKind::Walk, period_s * fps};
    return clip;
}

MotionClip gen_reach(int n, double fps, Rng& rng, SynthInfo* info) {
    const BasePosture base = draw_posture(rng);
    const double period_s = rng.uniform(2.0, 3.5);
    const double phase_l = rng.uniform(0.0, kTwoPi);
    const double phase_r = phase_l + rng.uniform(1.5, 4.0);
    const double a_raise_l = deg(rng.uniform(40.0, 70.0));
    const double a_raise_r = deg(rng.uniform(40.0, 70.0));
    const double a_yaw = deg(rng.uniform(8.0, 18.0));
    const double lean_gain = rng.uniform(0.10, 0.22);
    const double sway = rng.uniform(0.006, 0.012);

    MotionClip clip;
    clip.fps = fps;
    for (int f = 0; f < n; ++f) {
        const double t = f / fps;
        const double ph = kTwoPi * t / period_s;
        const double raise_l = a_raise_l * 0.5 * (1.0 - std::cos(ph + phase_l));
        const double raise_r = a_raise_r * 0.5 * (1.0 - std::cos(ph + phase_r));
        FrameAngles fa;
        fa.rot[0] = ry(base.heading) * rz(deg(1.0) * std::sin(0.5 * ph));
        fa.rot[1] = rx(deg(1.5) * std::sin(0.5 * ph));
        fa.rot[2] = rx(-deg(1.5) * std::sin(0.5 * ph));
        fa.rot[4] = rx(-deg(2.0) * (1.0 + std::sin(0.5 * ph)) * 0.5);
        fa.rot[5] = rx(-deg(2.0) * (1.0 - std::sin(0.5 * ph)) * 0.5);
        fa.rot[3] = rx(lean_gain * 0.5 * (raise_l + raise_r));
        fa.rot[6] = rx(lean_gain * 0.3 * (raise_l + raise_r));
        fa.rot[9] = rz(deg(2.0) * std::sin(ph + 0.7));
        fa.rot[12] = rx(-0.1 * (raise_l + raise_r));
        fa.rot[15] = rx(-0.05 * (raise_l + raise_r));
        // Arms raise from the sides; elbows straighten as the reach extends.
        fa.rot[16] = rz(-(base.arm_down - raise_l)) * ry(a_yaw * std::sin(ph + phase_l));
        fa.rot[17] = rz(base.arm_down - raise_r) * ry(-a_yaw * std::sin(ph + phase_r));
        fa.rot[18] = rx(base.elbow_bend * (1.0 - 0.7 * raise_l / a_raise_l));
        fa.rot[19] = rx(base.elbow_bend * (1.0 - 0.7 * raise_r / a_raise_r));
        fa.root = Vec3(sway * std::sin(ph), base.root_height + 0.008 * std::sin(ph + 0.3),
                       sway * std::cos(0.7 * ph));
        clip.frames.push_back(to_pose(fa));
    }
    if (info) *info = {SynthKind::Reach, period_s * fps};
    return clip;
}

MotionClip gen_squat(int n, double fps, Rng& rng, SynthInfo* info) {
    const BasePosture base = draw_posture(rng);
    const double period_s = rng.uniform(2.0, 3.0);
    const double phase0 = rng.uniform(0.0, kTwoPi);
    const double a_knee = deg(rng.uniform(50.0, 75.0));
    const double a_arm = deg(rng.uniform(30.0, 50.0));
    const double drop_max = 0.82 * (1.0 - std::cos(0.55 * a_knee));

    MotionClip clip;
    clip.fps = fps;
    for (int f = 0; f < n; ++f) {
        const double t = f / fps;
        const double ph = kTwoPi * t / period_s + phase0;
        const double d = 0.5 * (1.0 - std::cos(ph));  // squat depth in [0, 1]
        FrameAngles fa;
        fa.rot[0] = ry(base.heading);
        fa.rot[1] = rx(-0.8 * a_knee * d);
        fa.rot[2] = rx(-0.8 * a_knee * d);
        fa.rot[4] = rx(a_knee * d);
        fa.rot[5] = rx(a_knee * d);
        fa.rot[7] = rx(-0.35 * a_knee * d);
        fa.rot[8] = rx(-0.35 * a_knee * d);
        fa.rot[3] = rx(0.25 * a_knee * d);
        fa.rot[6] = rx(0.12 * a_knee * d);
        fa.rot[9] = rx(0.05 * a_knee * d);
        fa.rot[12] = rx(-0.12 * a_knee * d);
        fa.rot[15] = rx(-0.06 * a_knee * d);
        // Arms swing forward-up for balance as the squat deepens.
        apply_arms_down(fa, base, -a_arm * d, -a_arm * d, deg(4.0) * d, deg(4.0) * d);
        fa.root = ry(base.heading) * Vec3(0.01 * std::sin(ph), 0.0, -0.03 * d) +
                  Vec3(0.0, base.root_height - drop_max * d, 0.0);
        clip.frames.push_back(to_pose(fa));
    }
    if (info) *info = {SynthKind::Squat, period_s * fps};
    return clip;
}

MotionClip gen_kick(int n, double fps, Rng& rng, SynthInfo* info) {
    const BasePosture base = draw_posture(rng);
    const double period_s = rng.uniform(1.6, 2.6);
    const double duration_s = rng.uniform(0.55, 0.8);
    const double offset_s = rng.uniform(0.0, period_s - duration_s);
    const double a_kick = deg(rng.uniform(45.0, 70.0));
    const double a_knee = deg(rng.uniform(30.0, 50.0));
    const bool left = rng.uniform() < 0.5;
    const int hip = left ? 1 : 2;
    const int other_hip = left ? 2 : 1;
    const int knee = left ? 4 : 5;
    const double side = left ? 1.0 : -1.0;

    MotionClip clip;
    clip.fps = fps;
    for (int f = 0; f < n; ++f) {
        const double t = f / fps;
        const double ph = kTwoPi * t / period_s;
        const double in_cycle = std::fmod(t, period_s);
        const double s = (in_cycle - offset_s) / duration_s;
        const double env = burst(s);
        const double env_knee = burst((s - 0.12) / 0.88);
        FrameAngles fa;
        fa.rot[0] = ry(base.heading) * rz(deg(1.5) * std::sin(ph));
        fa.rot[hip] = rx(-a_kick * env);
        fa.rot[other_hip] = rx(0.12 * a_kick * env);
        fa.rot[knee] = rx(a_knee * env_knee - 0.5 * a_kick * env);
        fa.rot[left ? 7 : 8] = rx(-deg(8.0) * env);
        fa.rot[3] = rx(-0.22 * a_kick * env) * rz(side * deg(3.0) * env);
        fa.rot[6] = rx(-0.10 * a_kick * env);
        fa.rot[9] = rz(-side * deg(2.5) * env);
        fa.rot[12] = rx(0.08 * a_kick * env);
        fa.rot[15] = rx(0.04 * a_kick * env);
        // Opposite arm swings forward during the kick.
        const double swing = 0.45 * a_kick * env;
        apply_arms_down(fa, base, left ? swing : -swing, left ? -swing : swing,
                        deg(6.0) * env, deg(6.0) * env);
        fa.root = ry(base.heading) * Vec3(-side * 0.045 * env, 0.0, -0.02 * env) +
                  Vec3(0.0, base.root_height - 0.025 * env + 0.004 * std::sin(ph), 0.0);
        clip.frames.push_back(to_pose(fa));
    }
    if (info) *info = {SynthKind::Kick, period_s * fps};
    return clip;
}

// Soft-tissue sway: millimeter-scale 7-13 Hz oscillation of the pelvis
// translation. Local rotations stay smooth; the sway reaches every joint
// rigidly through FK and keeps ground-truth jerk near real capture levels.
void apply_tremor(MotionClip& clip, Rng& rng) {
    Vec3 amp, omega, phase;
    for (int a = 0; a < 3; ++a) {
        amp[a] = rng.uniform(0.0008, 0.0016);
        omega[a] = kTwoPi * rng.uniform(7.0, 13.0);
        phase[a] = rng.uniform(0.0, kTwoPi);
    }
    for (int f = 0; f < clip.frame_count(); ++f) {
        const double t = f / clip.fps;
        for (int a = 0; a < 3; ++a)
            clip.frames[f].root_trans[a] += amp[a] * std::sin(omega[a] * t + phase[a]);
    }
}

MotionClip gen_base(SynthKind kind, int n, double fps, Rng& rng, SynthInfo* info) {
    switch (kind) {
        case SynthKind::Walk: return gen_walk(n, fps, rng, info);
        case SynthKind::Reach: return gen_reach(n, fps, rng, info);
        case SynthKind::Squat: return gen_squat(n, fps, rng, info);
        case SynthKind::Kick: return gen_kick(n, fps, rng, info);
        case SynthKind::Mixed: {
            const auto pick = static_cast<SynthKind>(rng.uniform_int(0, 3));
            return gen_base(pick, n, fps, rng, info);
        }
    }
    throw InvalidArgument("synth: unknown kind");
}

MotionClip gen_one(SynthKind kind, int n, double fps, Rng& rng, SynthInfo* info) {
    MotionClip clip = gen_base(kind, n, fps, rng, info);
    apply_tremor(clip, rng);
    return clip;
}

}  // namespace

const char* to_string(SynthKind kind) {
    switch (kind) {
        case SynthKind::Walk: return "walk";
        case SynthKind::Reach: return "reach";
        case SynthKind::Squat: return "squat";
        case SynthKind::Kick: return "kick";
        case SynthKind::Mixed: return "mixed";
    }
    return "?";
}

SynthKind synth_kind_from_string(const std::string& s) {
    if (s == "walk") return SynthKind::Walk;
    if (s == "reach") return SynthKind::Reach;
    if (s == "squat") return SynthKind::Squat;
    if (s == "kick") return SynthKind::Kick;
    if (s == "mixed") return SynthKind::Mixed;
    throw InvalidArgument("unknown synth kind: " + s);
}

std::vector<MotionClip> synth_dataset(SynthKind kind, int count, int frames, double fps,
                                      std::uint64_t seed, std::vector<SynthInfo>* info) {
    if (count < 1) throw InvalidArgument("synth_dataset: count must be >= 1");
    if (frames < 2) throw InvalidArgument("synth_dataset: frames must be >= 2");
    if (!(fps > 0.0)) throw InvalidArgument("synth_dataset: fps must be positive");
    std::vector<MotionClip> clips;
    clips.reserve(count);
    if (info) info->clear();
    for (int i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        SynthInfo one;
        clips.push_back(gen_one(kind, frames, fps, rng, &one));
        if (info) info->push_back(one);
    }
    return clips;
}

}  // namespace mage
