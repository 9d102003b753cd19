#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mage/nncore.hpp"

namespace mage::diffusion {

using nn::Tensor;

enum class ScheduleKind { Cosine, Linear };

const char* to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& s);

// Variance schedule tables. Time steps are 1-based: beta_at(t) for
// t in {1..steps}; alpha_bar_at(0) == 1 by convention.
struct NoiseSchedule {
    int steps = 0;
    std::string kind = "custom";
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    double beta_at(int t) const { return beta.at(t - 1); }
    double alpha_at(int t) const { return alpha.at(t - 1); }
    double alpha_bar_at(int t) const { return t == 0 ? 1.0 : alpha_bar.at(t - 1); }
};

NoiseSchedule make_schedule(int steps, ScheduleKind kind);
// Explicit beta table (e.g. tests, checkpoint restore).
NoiseSchedule schedule_from_betas(std::vector<double> beta, const std::string& kind = "custom");

// Strictly decreasing sub-sequence of {1..T}; eta 0 is deterministic.
struct DdimPlan {
    std::vector<int> sub_steps;
    double eta = 0.0;
};

// num_steps entries uniformly spaced over {1..T}, starting at T.
DdimPlan make_ddim_plan(const NoiseSchedule& sched, int num_steps, double eta = 0.0);

// Closed-form forward noising sqrt(a_bar)*x0 + sqrt(1-a_bar)*noise.
Tensor q_sample(const Tensor& x0, int t, const Tensor& noise, const NoiseSchedule& sched);

// Noise estimate implied by a clean-signal prediction at step t.
Tensor x0_to_eps(const Tensor& x_t, const Tensor& x0_hat, int t, const NoiseSchedule& sched);

// Noise scale of the reverse step: the schedule's own beta_t, or the
// posterior variance beta_t*(1-a_bar_{t-1})/(1-a_bar_t) (the choice that
// makes an eta=1 DDIM chain coincide with DDPM).
enum class DdpmNoiseKind { FixedBeta, Posterior };

Tensor ddpm_step(const Tensor& x_t, const Tensor& x0_hat, int t, const NoiseSchedule& sched,
                 const Tensor& noise, DdpmNoiseKind noise_kind = DdpmNoiseKind::FixedBeta);

using DenoiseFn = std::function<Tensor(const Tensor& x_t, int t, const Tensor& cond)>;
using NoiseSource = std::function<Tensor(const std::vector<std::size_t>& shape)>;

// DDIM recursion over the plan's sub-steps; returns the final clean-signal
// estimate. noise_source is only consulted when eta > 0.
Tensor ddim_sample(const DenoiseFn& denoise_fn, const Tensor& cond, const DdimPlan& plan,
                   const NoiseSchedule& sched, const Tensor& init_noise,
                   const NoiseSource& noise_source = {});

}  // namespace mage::diffusion
