#include "mage/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "mage/errors.hpp"

namespace mage::diffusion {

namespace {

constexpr double kVarianceEpsilon = 1e-6;  // clamps sqrt(1 - a_bar) near clean steps

void validate_schedule(const NoiseSchedule& s) {
    if (s.steps < 1) throw InvalidArgument("schedule: steps must be >= 1");
    for (double b : s.beta)
        if (!(b > 0.0 && b < 1.0)) throw InvalidArgument("schedule: beta out of (0,1)");
    for (int t = 2; t <= s.steps; ++t)
        if (!(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1)))
            throw InvalidArgument("schedule: alpha_bar not strictly decreasing");
}

void check_t(int t, const NoiseSchedule& s, const char* op) {
    if (t < 1 || t > s.steps)
        throw InvalidArgument(std::string(op) + ": t=" + std::to_string(t) + " outside 1.." +
                              std::to_string(s.steps));
}

void fill_from_beta(NoiseSchedule& s) {
    s.alpha.resize(s.beta.size());
    s.alpha_bar.resize(s.beta.size());
    double prod = 1.0;
    for (std::size_t i = 0; i < s.beta.size(); ++i) {
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
    }
}

}  // namespace

const char* to_string(ScheduleKind kind) {
    return kind == ScheduleKind::Cosine ? "cosine" : "linear";
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "cosine") return ScheduleKind::Cosine;
    if (s == "linear") return ScheduleKind::Linear;
    throw InvalidArgument("unknown schedule kind: " + s);
}

NoiseSchedule make_schedule(int steps, ScheduleKind kind) {
    if (steps < 1) throw InvalidArgument("make_schedule: steps must be >= 1");
    NoiseSchedule s;
    s.steps = steps;
    s.kind = to_string(kind);
    s.beta.resize(steps);
    if (kind == ScheduleKind::Linear) {
        const double lo = 1e-4, hi = 2e-2;
        for (int t = 1; t <= steps; ++t)
            s.beta[t - 1] = steps == 1 ? lo : lo + (hi - lo) * (t - 1) / double(steps - 1);
    } else {
        // Squared-cosine alpha_bar profile, beta clipped at 0.999.
        const double offset = 0.008;
        auto profile = [&](double t) {
            const double v = std::cos((t / steps + offset) / (1.0 + offset) * M_PI / 2.0);
            return v * v;
        };
        const double f0 = profile(0.0);
        double prev_bar = 1.0;
        for (int t = 1; t <= steps; ++t) {
            const double bar = profile(static_cast<double>(t)) / f0;
            s.beta[t - 1] = std::clamp(1.0 - bar / prev_bar, 1e-8, 0.999);
            prev_bar = bar;
        }
    }
    fill_from_beta(s);
    validate_schedule(s);
    return s;
}

NoiseSchedule schedule_from_betas(std::vector<double> beta, const std::string& kind) {
    NoiseSchedule s;
    s.steps = static_cast<int>(beta.size());
    s.kind = kind;
    s.beta = std::move(beta);
    fill_from_beta(s);
    validate_schedule(s);
    return s;
}

DdimPlan make_ddim_plan(const NoiseSchedule& sched, int num_steps, double eta) {
    if (num_steps < 1 || num_steps > sched.steps)
        throw InvalidArgument("make_ddim_plan: need 1 <= num_steps <= T");
    if (eta < 0.0) throw InvalidArgument("make_ddim_plan: eta must be >= 0");
    DdimPlan plan;
    plan.eta = eta;
    for (int i = 0; i < num_steps; ++i) {
        const double frac = static_cast<double>(num_steps - i) / num_steps;
        int t = static_cast<int>(std::lround(frac * sched.steps));
        t = std::clamp(t, 1, sched.steps);
        if (plan.sub_steps.empty() || t < plan.sub_steps.back()) plan.sub_steps.push_back(t);
    }
    return plan;
}

Tensor q_sample(const Tensor& x0, int t, const Tensor& noise, const NoiseSchedule& sched) {
    check_t(t, sched, "q_sample");
    if (!x0.same_shape(noise)) throw ShapeMismatch("q_sample: noise shape differs from x0");
    const double a = std::sqrt(sched.alpha_bar_at(t));
    const double b = std::sqrt(1.0 - sched.alpha_bar_at(t));
    Tensor out(x0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * noise[i];
    return out;
}

Tensor x0_to_eps(const Tensor& x_t, const Tensor& x0_hat, int t, const NoiseSchedule& sched) {
    check_t(t, sched, "x0_to_eps");
    if (!x_t.same_shape(x0_hat)) throw ShapeMismatch("x0_to_eps: shape mismatch");
    const double a = std::sqrt(sched.alpha_bar_at(t));
    const double denom = std::max(std::sqrt(1.0 - sched.alpha_bar_at(t)), kVarianceEpsilon);
    Tensor out(x_t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - a * x0_hat[i]) / denom;
    return out;
}

Tensor ddpm_step(const Tensor& x_t, const Tensor& x0_hat, int t, const NoiseSchedule& sched,
                 const Tensor& noise, DdpmNoiseKind noise_kind) {
    check_t(t, sched, "ddpm_step");
    if (!x_t.same_shape(x0_hat) || !x_t.same_shape(noise))
        throw ShapeMismatch("ddpm_step: shape mismatch");
    const Tensor eps = x0_to_eps(x_t, x0_hat, t, sched);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha_at(t));
    const double eps_coef =
        sched.beta_at(t) / std::max(std::sqrt(1.0 - sched.alpha_bar_at(t)), kVarianceEpsilon);
    Tensor out(x_t.shape());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = inv_sqrt_alpha * (x_t[i] - eps_coef * eps[i]);
    if (t == 1) return out;  // deterministic final step
    double sigma = std::sqrt(sched.beta_at(t));
    if (noise_kind == DdpmNoiseKind::Posterior) {
        sigma = std::sqrt(sched.beta_at(t) * (1.0 - sched.alpha_bar_at(t - 1)) /
                          (1.0 - sched.alpha_bar_at(t)));
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += sigma * noise[i];
    return out;
}

Tensor ddim_sample(const DenoiseFn& denoise_fn, const Tensor& cond, const DdimPlan& plan,
                   const NoiseSchedule& sched, const Tensor& init_noise,
                   const NoiseSource& noise_source) {
    if (plan.sub_steps.empty()) throw InvalidArgument("ddim_sample: empty plan");
    for (std::size_t i = 0; i < plan.sub_steps.size(); ++i) {
        check_t(plan.sub_steps[i], sched, "ddim_sample");
        if (i > 0 && plan.sub_steps[i] >= plan.sub_steps[i - 1])
            throw InvalidArgument("ddim_sample: sub-steps must be strictly decreasing");
    }
    if (plan.eta > 0.0 && !noise_source)
        throw InvalidArgument("ddim_sample: eta > 0 requires a noise source");

    Tensor x = init_noise;
    for (std::size_t i = 0; i < plan.sub_steps.size(); ++i) {
        const int t = plan.sub_steps[i];
        Tensor x0_hat = denoise_fn(x, t, cond);
        if (!x0_hat.same_shape(x)) throw ShapeMismatch("ddim_sample: denoiser changed shape");
        if (i + 1 == plan.sub_steps.size()) return x0_hat;

        const Tensor eps = x0_to_eps(x, x0_hat, t, sched);
        const int t_next = plan.sub_steps[i + 1];
        const double bar_t = sched.alpha_bar_at(t);
        const double bar_next = sched.alpha_bar_at(t_next);
        const double sigma = plan.eta * std::sqrt((1.0 - bar_next) / (1.0 - bar_t)) *
                             std::sqrt(1.0 - bar_t / bar_next);
        const double dir_coef = std::sqrt(std::max(1.0 - bar_next - sigma * sigma, 0.0));
        const double x0_coef = std::sqrt(bar_next);
        Tensor next(x.shape());
        for (std::size_t k = 0; k < next.size(); ++k)
            next[k] = x0_coef * x0_hat[k] + dir_coef * eps[k];
        if (sigma > 0.0) {
            const Tensor z = noise_source(x.shape());
            if (!z.same_shape(x)) throw ShapeMismatch("ddim_sample: noise source shape");
            for (std::size_t k = 0; k < next.size(); ++k) next[k] += sigma * z[k];
        }
        x = std::move(next);
    }
    return x;  // unreachable
}

}  // namespace mage::diffusion
