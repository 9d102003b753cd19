#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "mage/diffusion.hpp"
#include "mage/errors.hpp"
#include "mage/rng.hpp"

using namespace mage;
using diffusion::DdimPlan;
using diffusion::DdpmNoiseKind;
using diffusion::NoiseSchedule;
using diffusion::ScheduleKind;
using nn::Tensor;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

}  // namespace

TEST_CASE("hand schedule beta=(0.1,0.2)") {
    const NoiseSchedule s = diffusion::schedule_from_betas({0.1, 0.2});
    CHECK(s.alpha_at(1) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s.alpha_bar_at(1) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s.alpha_bar_at(2) == doctest::Approx(0.72).epsilon(1e-15));
    CHECK(s.alpha_bar_at(0) == 1.0);
}

TEST_CASE("schedules keep alpha_bar strictly decreasing") {
    for (const ScheduleKind kind : {ScheduleKind::Cosine, ScheduleKind::Linear}) {
        const NoiseSchedule s = diffusion::make_schedule(500, kind);
        for (int t = 2; t <= s.steps; ++t) CHECK(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1));
        CHECK(s.alpha_bar_at(s.steps) < s.alpha_bar_at(1));
    }
}

TEST_CASE("linear schedule endpoints") {
    const NoiseSchedule s = diffusion::make_schedule(1000, ScheduleKind::Linear);
    CHECK(s.beta_at(1) == doctest::Approx(1e-4));
    CHECK(s.beta_at(1000) == doctest::Approx(2e-2));
}

TEST_CASE("cosine schedule endpoints at T=1000") {
    const NoiseSchedule s = diffusion::make_schedule(1000, ScheduleKind::Cosine);
    CHECK(s.alpha_bar_at(1) > 0.999);
    CHECK(s.alpha_bar_at(1000) < 1e-3);
}

TEST_CASE("q_sample") {
    const NoiseSchedule s = diffusion::schedule_from_betas({0.1, 0.2});
    const Tensor x0 = Tensor::full({3}, 1.0);
    const Tensor zero({3});
    SUBCASE("zero noise scales by sqrt(alpha_bar)") {
        const Tensor out = diffusion::q_sample(x0, 2, zero, s);
        for (int i = 0; i < 3; ++i) CHECK(out[i] == doctest::Approx(std::sqrt(0.72)));
        CHECK(out[0] == doctest::Approx(0.84853).epsilon(1e-4));
    }
    SUBCASE("shape and range guards") {
        CHECK_THROWS_AS(diffusion::q_sample(x0, 2, Tensor({4}), s), ShapeMismatch);
        CHECK_THROWS_AS(diffusion::q_sample(x0, 0, zero, s), InvalidArgument);
        CHECK_THROWS_AS(diffusion::q_sample(x0, 3, zero, s), InvalidArgument);
    }
}

TEST_CASE("recursive single-step noising equals the closed form") {
    Rng rng(61);
    for (const ScheduleKind kind : {ScheduleKind::Cosine, ScheduleKind::Linear}) {
        const int T = 40;
        const NoiseSchedule s = diffusion::make_schedule(T, kind);
        const Tensor x0 = random_tensor({6}, rng);
        std::vector<Tensor> noises;
        for (int t = 1; t <= T; ++t) noises.push_back(random_tensor({6}, rng));

        // Recursion: x_t = sqrt(1-beta_t) x_{t-1} + sqrt(beta_t) eps_t.
        Tensor x = x0;
        for (int t = 1; t <= T; ++t) {
            Tensor next({6});
            for (int i = 0; i < 6; ++i)
                next[i] = std::sqrt(1.0 - s.beta_at(t)) * x[i] +
                          std::sqrt(s.beta_at(t)) * noises[t - 1][i];
            x = next;
        }

        // Algebraically combined noise.
        Tensor combined({6});
        for (int t = 1; t <= T; ++t) {
            double coef = std::sqrt(s.beta_at(t));
            for (int u = t + 1; u <= T; ++u) coef *= std::sqrt(s.alpha_at(u));
            for (int i = 0; i < 6; ++i) combined[i] += coef * noises[t - 1][i];
        }
        const double denom = std::sqrt(1.0 - s.alpha_bar_at(T));
        for (int i = 0; i < 6; ++i) combined[i] /= denom;

        const Tensor closed = diffusion::q_sample(x0, T, combined, s);
        for (int i = 0; i < 6; ++i) CHECK(std::abs(closed[i] - x[i]) < 1e-9);
    }
}

TEST_CASE("x0_to_eps inverts q_sample") {
    Rng rng(62);
    const NoiseSchedule s = diffusion::make_schedule(100, ScheduleKind::Cosine);
    for (int c = 0; c < 20; ++c) {
        const Tensor x0 = random_tensor({5}, rng);
        const Tensor eps = random_tensor({5}, rng);
        const int t = static_cast<int>(rng.uniform_int(1, 100));
        const Tensor x_t = diffusion::q_sample(x0, t, eps, s);
        const Tensor back = diffusion::x0_to_eps(x_t, x0, t, s);
        for (int i = 0; i < 5; ++i) CHECK(std::abs(back[i] - eps[i]) < 1e-9);
    }
}

TEST_CASE("x0_to_eps guards the near-clean denominator") {
    const NoiseSchedule s = diffusion::schedule_from_betas({1e-12, 0.1});
    const Tensor x = Tensor::full({3}, 0.7);
    const Tensor out = diffusion::x0_to_eps(x, x, 1, s);  // alpha_bar ~ 1
    for (int i = 0; i < 3; ++i) CHECK(std::isfinite(out[i]));
}

TEST_CASE("x0_to_eps matches direct arithmetic") {
    Rng rng(63);
    const NoiseSchedule s = diffusion::make_schedule(50, ScheduleKind::Linear);
    for (int c = 0; c < 50; ++c) {
        const Tensor x_t = random_tensor({4}, rng);
        const Tensor x0 = random_tensor({4}, rng);
        const int t = static_cast<int>(rng.uniform_int(1, 50));
        const Tensor out = diffusion::x0_to_eps(x_t, x0, t, s);
        for (int i = 0; i < 4; ++i) {
            const double expect = (x_t[i] - std::sqrt(s.alpha_bar_at(t)) * x0[i]) /
                                  std::sqrt(1.0 - s.alpha_bar_at(t));
            CHECK(std::abs(out[i] - expect) < 1e-12);
        }
    }
}

TEST_CASE("ddpm_step single-step scalar arithmetic") {
    const NoiseSchedule s = diffusion::schedule_from_betas({0.1, 0.2});
    const Tensor x_t = Tensor::full({1}, 0.5);
    const Tensor x0 = Tensor::full({1}, 0.3);
    const Tensor zero({1});
    const Tensor out = diffusion::ddpm_step(x_t, x0, 2, s, zero);
    // Independent arithmetic: eps, then the posterior mean formula.
    const double a_bar = 0.72, alpha = 0.8, beta = 0.2;
    const double eps = (0.5 - std::sqrt(a_bar) * 0.3) / std::sqrt(1.0 - a_bar);
    const double mu = (0.5 - beta / std::sqrt(1.0 - a_bar) * eps) / std::sqrt(alpha);
    CHECK(std::abs(out[0] - mu) < 1e-12);
}

TEST_CASE("ddpm final step adds no noise") {
    const NoiseSchedule s = diffusion::schedule_from_betas({0.1, 0.2});
    const Tensor x_t = Tensor::full({2}, 0.4);
    const Tensor x0 = Tensor::full({2}, -0.3);
    const Tensor big = Tensor::full({2}, 1e6);
    const Tensor zero({2});
    const Tensor with_noise = diffusion::ddpm_step(x_t, x0, 1, s, big);
    const Tensor without = diffusion::ddpm_step(x_t, x0, 1, s, zero);
    for (int i = 0; i < 2; ++i) CHECK(with_noise[i] == without[i]);
}

TEST_CASE("oracle denoiser: full DDPM chain recovers x0") {
    Rng rng(64);
    for (const ScheduleKind kind : {ScheduleKind::Cosine, ScheduleKind::Linear}) {
        const NoiseSchedule s = diffusion::make_schedule(200, kind);
        const Tensor x0 = random_tensor({8}, rng);
        Tensor x = random_tensor({8}, rng);  // arbitrary start
        const Tensor zero({8});
        for (int t = s.steps; t >= 1; --t) x = diffusion::ddpm_step(x, x0, t, s, zero);
        for (int i = 0; i < 8; ++i) CHECK(std::abs(x[i] - x0[i]) < 1e-5);
    }
}

TEST_CASE("oracle denoiser: DDIM plans recover x0") {
    Rng rng(65);
    for (const ScheduleKind kind : {ScheduleKind::Cosine, ScheduleKind::Linear}) {
        const NoiseSchedule s = diffusion::make_schedule(1000, kind);
        const Tensor x0 = random_tensor({8}, rng);
        diffusion::DenoiseFn oracle = [&x0](const Tensor&, int, const Tensor&) { return x0; };
        for (int len : {1, 2, 4, 10}) {
            const DdimPlan plan = diffusion::make_ddim_plan(s, len);
            const Tensor out =
                diffusion::ddim_sample(oracle, Tensor({1}), plan, s, random_tensor({8}, rng));
            for (int i = 0; i < 8; ++i) CHECK(std::abs(out[i] - x0[i]) < 1e-5);
        }
    }
}

TEST_CASE("ddim default plan is uniform and includes T") {
    const NoiseSchedule s = diffusion::make_schedule(1000, ScheduleKind::Cosine);
    const DdimPlan plan = diffusion::make_ddim_plan(s, 4);
    CHECK(plan.sub_steps == std::vector<int>{1000, 750, 500, 250});
    const DdimPlan one = diffusion::make_ddim_plan(s, 1);
    CHECK(one.sub_steps == std::vector<int>{1000});
}

TEST_CASE("ddim eta=0 is deterministic") {
    Rng rng(66);
    const NoiseSchedule s = diffusion::make_schedule(300, ScheduleKind::Cosine);
    const Tensor init = random_tensor({6}, rng);
    diffusion::DenoiseFn fn = [](const Tensor& x, int t, const Tensor&) {
        Tensor out(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i)
            out[i] = 0.8 * x[i] + 0.05 * std::sin(0.01 * t + static_cast<double>(i));
        return out;
    };
    const DdimPlan plan = diffusion::make_ddim_plan(s, 4);
    const Tensor a = diffusion::ddim_sample(fn, Tensor({1}), plan, s, init);
    const Tensor b = diffusion::ddim_sample(fn, Tensor({1}), plan, s, init);
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("ddim eta=1 over all steps matches the posterior DDPM chain") {
    Rng rng(67);
    const int T = 64;
    const NoiseSchedule s = diffusion::make_schedule(T, ScheduleKind::Linear);
    diffusion::DenoiseFn fn = [](const Tensor& x, int t, const Tensor&) {
        Tensor out(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i)
            out[i] = 0.9 * x[i] + 0.1 * std::cos(0.05 * t) - 0.02 * static_cast<double>(i);
        return out;
    };
    const Tensor init = random_tensor({8}, rng);
    std::vector<Tensor> noises;
    for (int t = 0; t < T; ++t) noises.push_back(random_tensor({8}, rng));

    // DDPM chain with posterior variance, sharing the per-step noises.
    Tensor x = init;
    for (int t = T; t >= 1; --t)
        x = diffusion::ddpm_step(x, fn(x, t, Tensor({1})), t, s, noises[T - t],
                                 DdpmNoiseKind::Posterior);

    DdimPlan plan;
    plan.eta = 1.0;
    for (int t = T; t >= 1; --t) plan.sub_steps.push_back(t);
    std::size_t draw = 0;
    diffusion::NoiseSource source = [&](const std::vector<std::size_t>& shape) {
        (void)shape;
        return noises[draw++];
    };
    const Tensor y = diffusion::ddim_sample(fn, Tensor({1}), plan, s, init, source);
    for (int i = 0; i < 8; ++i) CHECK(std::abs(x[i] - y[i]) < 1e-6);
}

TEST_CASE("sampler outputs stay finite over many random runs") {
    Rng rng(68);
    const NoiseSchedule s = diffusion::make_schedule(100, ScheduleKind::Cosine);
    diffusion::DenoiseFn fn = [&rng](const Tensor& x, int, const Tensor&) {
        Tensor out(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]) + 0.1 * rng.normal();
        return out;
    };
    diffusion::NoiseSource source = [&rng](const std::vector<std::size_t>& shape) {
        Tensor z(shape);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = rng.normal();
        return z;
    };
    for (int run = 0; run < 10000; ++run) {
        const int len = 1 + run % 6;
        const DdimPlan plan = diffusion::make_ddim_plan(s, len, run % 3 == 0 ? 1.0 : 0.0);
        const Tensor out = diffusion::ddim_sample(fn, Tensor({1}), plan, s,
                                                  random_tensor({4}, rng), source);
        CHECK(out.all_finite());
    }
}

TEST_CASE("plan validation") {
    const NoiseSchedule s = diffusion::make_schedule(100, ScheduleKind::Cosine);
    diffusion::DenoiseFn fn = [](const Tensor& x, int, const Tensor&) { return x; };
    DdimPlan empty;
    CHECK_THROWS_AS(diffusion::ddim_sample(fn, Tensor({1}), empty, s, Tensor({2})),
                    InvalidArgument);
    DdimPlan increasing;
    increasing.sub_steps = {10, 20};
    CHECK_THROWS_AS(diffusion::ddim_sample(fn, Tensor({1}), increasing, s, Tensor({2})),
                    InvalidArgument);
    DdimPlan needy;
    needy.sub_steps = {50, 10};
    needy.eta = 1.0;
    CHECK_THROWS_AS(diffusion::ddim_sample(fn, Tensor({1}), needy, s, Tensor({2})),
                    InvalidArgument);
}
