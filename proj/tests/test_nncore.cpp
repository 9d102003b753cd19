#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <fstream>
#include <functional>

#include "mage/errors.hpp"
#include "mage/nncore.hpp"
#include "mage/rng.hpp"

using namespace mage;
using nn::Tensor;
using nn::Var;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

// Central finite differences against reverse-mode gradients. `build` must
// rebuild the scalar loss graph from the current leaf values.
double worst_grad_error(const std::function<Var()>& build, const std::vector<Var>& leaves,
                        double h = 1e-4) {
    for (const auto& leaf : leaves) leaf->grad = Tensor::zeros(leaf->value.shape());
    nn::backward(build());
    std::vector<Tensor> ad_grads;
    for (const auto& leaf : leaves) ad_grads.push_back(leaf->grad);

    double worst = 0.0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& leaf = leaves[li];
        for (std::size_t i = 0; i < leaf->value.size(); ++i) {
            const double orig = leaf->value[i];
            leaf->value[i] = orig + h;
            const double lp = build()->value.item();
            leaf->value[i] = orig - h;
            const double lm = build()->value.item();
            leaf->value[i] = orig;
            const double fd = (lp - lm) / (2.0 * h);
            const double ad = ad_grads[li][i];
            const double rel =
                std::abs(fd - ad) / std::max({1e-2, std::abs(fd), std::abs(ad)});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

Var leaf(const Tensor& t) {
    auto node = std::make_shared<nn::Node>();
    node->value = t;
    node->grad = Tensor::zeros(t.shape());
    node->requires_grad = true;
    node->is_param = true;
    return node;
}

}  // namespace

TEST_CASE("mse of identical tensors is zero") {
    Rng rng(41);
    const Tensor t = random_tensor({3, 4}, rng);
    CHECK(nn::mse(nn::constant(t), nn::constant(t))->value.item() == 0.0);
}

TEST_CASE("affine with identity weights is the identity map") {
    Rng rng(42);
    const Tensor x = random_tensor({5, 4}, rng);
    Tensor w({4, 4});
    w.mat() = Eigen::MatrixXd::Identity(4, 4);
    const Tensor b({4});
    const Var y = nn::affine(nn::constant(x), nn::constant(w), nn::constant(b));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y->value[i] == x[i]);
}

TEST_CASE("backward on a simple quadratic") {
    const Var w = leaf(Tensor::from_data({2}, {1.0, 2.0}));
    const Var loss = nn::sum(nn::mul(w, w));
    nn::backward(loss);
    CHECK(w->grad[0] == doctest::Approx(2.0));
    CHECK(w->grad[1] == doctest::Approx(4.0));
}

TEST_CASE("parameter not reached by the loss keeps a zero gradient") {
    nn::ParamStore store;
    const Var used = store.create("used", Tensor::from_data({2}, {1.0, -1.0}));
    const Var unused = store.create("unused", Tensor::from_data({2}, {3.0, 4.0}));
    store.zero_grad();
    nn::backward(nn::sum(nn::mul(used, used)));
    CHECK(unused->grad[0] == 0.0);
    CHECK(unused->grad[1] == 0.0);
    CHECK(used->grad[0] != 0.0);
}

TEST_CASE("backward rejects non-scalar losses") {
    const Var w = leaf(Tensor::from_data({2}, {1.0, 2.0}));
    CHECK_THROWS_AS(nn::backward(nn::mul(w, w)), NotScalarLoss);
}

TEST_CASE("finite-difference checks per primitive") {
    Rng rng(43);
    auto shape2 = [&](std::size_t lo = 1, std::size_t hi = 5) {
        return std::vector<std::size_t>{static_cast<std::size_t>(rng.uniform_int(lo, hi)),
                                        static_cast<std::size_t>(rng.uniform_int(lo, hi))};
    };

    SUBCASE("matmul") {
        for (int c = 0; c < 50; ++c) {
            const auto m = static_cast<std::size_t>(rng.uniform_int(1, 5));
            const auto k = static_cast<std::size_t>(rng.uniform_int(1, 5));
            const auto n = static_cast<std::size_t>(rng.uniform_int(1, 5));
            const Var a = leaf(random_tensor({m, k}, rng));
            const Var b = leaf(random_tensor({k, n}, rng));
            const Tensor target = random_tensor({m, n}, rng);
            auto build = [&] { return nn::mse(nn::matmul(a, b), nn::constant(target)); };
            CHECK(worst_grad_error(build, {a, b}) < 1e-4);
        }
    }
    SUBCASE("add and broadcast add") {
        for (int c = 0; c < 50; ++c) {
            const auto shape = shape2();
            const Var a = leaf(random_tensor(shape, rng));
            const Var b = leaf(random_tensor(c % 2 ? std::vector<std::size_t>{shape[1]} : shape,
                                             rng));
            const Tensor target = random_tensor(shape, rng);
            auto build = [&] { return nn::mse(nn::add(a, b), nn::constant(target)); };
            CHECK(worst_grad_error(build, {a, b}) < 1e-4);
        }
    }
    SUBCASE("mul") {
        for (int c = 0; c < 50; ++c) {
            const auto shape = shape2();
            const Var a = leaf(random_tensor(shape, rng));
            const Var b = leaf(random_tensor(shape, rng));
            const Tensor target = random_tensor(shape, rng);
            auto build = [&] { return nn::mse(nn::mul(a, b), nn::constant(target)); };
            CHECK(worst_grad_error(build, {a, b}) < 1e-4);
        }
    }
    SUBCASE("affine") {
        for (int c = 0; c < 50; ++c) {
            const auto m = static_cast<std::size_t>(rng.uniform_int(1, 5));
            const auto k = static_cast<std::size_t>(rng.uniform_int(1, 5));
            const auto n = static_cast<std::size_t>(rng.uniform_int(1, 5));
            const Var x = leaf(random_tensor({m, k}, rng));
            const Var w = leaf(random_tensor({k, n}, rng));
            const Var b = leaf(random_tensor({n}, rng));
            const Tensor target = random_tensor({m, n}, rng);
            auto build = [&] { return nn::mse(nn::affine(x, w, b), nn::constant(target)); };
            CHECK(worst_grad_error(build, {x, w, b}) < 1e-4);
        }
    }
    SUBCASE("layer_norm") {
        for (int c = 0; c < 50; ++c) {
            const auto rows = static_cast<std::size_t>(rng.uniform_int(1, 5));
            const auto cols = static_cast<std::size_t>(rng.uniform_int(3, 8));
            Tensor init = random_tensor({rows, cols}, rng);
            // Keep rows away from the constant-row singularity.
            for (std::size_t r = 0; r < rows; ++r) {
                auto row = init.mat().row(static_cast<Eigen::Index>(r));
                while ((row.array() - row.mean()).square().mean() < 0.5)
                    for (Eigen::Index k = 0; k < row.size(); ++k) row[k] = 2.0 * rng.normal();
            }
            const Var x = leaf(init);
            const Tensor target = random_tensor({rows, cols}, rng);
            auto build = [&] { return nn::mse(nn::layer_norm(x), nn::constant(target)); };
            CHECK(worst_grad_error(build, {x}) < 1e-4);
        }
    }
    SUBCASE("silu") {
        for (int c = 0; c < 50; ++c) {
            const auto shape = shape2();
            const Var x = leaf(random_tensor(shape, rng, 2.0));
            const Tensor target = random_tensor(shape, rng);
            auto build = [&] { return nn::mse(nn::silu(x), nn::constant(target)); };
            CHECK(worst_grad_error(build, {x}) < 1e-4);
        }
    }
    SUBCASE("concat") {
        for (int c = 0; c < 50; ++c) {
            const int axis = c % 2;
            const auto fixed = static_cast<std::size_t>(rng.uniform_int(1, 4));
            std::vector<Var> parts;
            for (int p = 0; p < 3; ++p) {
                const auto ext = static_cast<std::size_t>(rng.uniform_int(1, 4));
                parts.push_back(leaf(random_tensor(
                    axis == 0 ? std::vector<std::size_t>{ext, fixed}
                              : std::vector<std::size_t>{fixed, ext},
                    rng)));
            }
            auto build = [&] { return nn::mean(nn::mul(nn::concat(parts, axis),
                                                        nn::concat(parts, axis))); };
            CHECK(worst_grad_error(build, parts) < 1e-4);
        }
    }
    SUBCASE("slice") {
        for (int c = 0; c < 50; ++c) {
            const int axis = c % 2;
            const auto shape = shape2(2, 6);
            const Var x = leaf(random_tensor(shape, rng));
            const std::size_t extent = axis == 0 ? shape[0] : shape[1];
            const auto len = static_cast<std::size_t>(rng.uniform_int(1, extent));
            const auto begin = static_cast<std::size_t>(rng.uniform_int(0, extent - len));
            auto build = [&] {
                const Var s = nn::slice(x, axis, begin, len);
                return nn::mean(nn::mul(s, s));
            };
            CHECK(worst_grad_error(build, {x}) < 1e-4);
        }
    }
    SUBCASE("reshape and transpose") {
        for (int c = 0; c < 50; ++c) {
            const auto shape = shape2();
            const Var x = leaf(random_tensor(shape, rng));
            auto build = [&] {
                const Var r = nn::reshape(x, {shape[1], shape[0]});
                const Var t = nn::transpose(nn::reshape(r, shape));
                return nn::mean(nn::mul(t, t));
            };
            CHECK(worst_grad_error(build, {x}) < 1e-4);
        }
    }
    SUBCASE("mse and scale") {
        for (int c = 0; c < 50; ++c) {
            const auto shape = shape2();
            const Var a = leaf(random_tensor(shape, rng));
            const Var b = leaf(random_tensor(shape, rng));
            auto build = [&] { return nn::scale(nn::mse(a, b), 1.7); };
            CHECK(worst_grad_error(build, {a, b}) < 1e-4);
        }
    }
}

TEST_CASE("gradient of a random composite graph") {
    Rng rng(44);
    for (int c = 0; c < 10; ++c) {
        const Var x = leaf(random_tensor({4, 6}, rng));
        const Var w1 = leaf(random_tensor({6, 5}, rng, 0.5));
        const Var b1 = leaf(random_tensor({5}, rng, 0.1));
        const Var w2 = leaf(random_tensor({5, 3}, rng, 0.5));
        const Var b2 = leaf(random_tensor({3}, rng, 0.1));
        const Tensor target = random_tensor({4, 3}, rng);
        auto build = [&] {
            Var h = nn::silu(nn::affine(nn::layer_norm(x), w1, b1));
            return nn::mse(nn::affine(h, w2, b2), nn::constant(target));
        };
        CHECK(worst_grad_error(build, {x, w1, b1, w2, b2}) < 1e-4);
    }
}

TEST_CASE("layer_norm output statistics") {
    Rng rng(45);
    const Var x = leaf(random_tensor({8, 32}, rng, 3.0));
    const Var y = nn::layer_norm(x);
    for (std::size_t r = 0; r < 8; ++r) {
        const auto row = y->value.mat().row(static_cast<Eigen::Index>(r));
        CHECK(std::abs(row.mean()) < 1e-6);
        const double var = (row.array() - row.mean()).square().mean();
        CHECK(std::abs(var - 1.0) < 1e-4);
    }
}

TEST_CASE("concat and slice round trip exactly") {
    Rng rng(46);
    const Tensor a = random_tensor({3, 4}, rng);
    const Tensor b = random_tensor({3, 2}, rng);
    const Var cat = nn::concat({nn::constant(a), nn::constant(b)}, 1);
    const Var back_a = nn::slice(cat, 1, 0, 4);
    const Var back_b = nn::slice(cat, 1, 4, 2);
    CHECK(std::memcmp(back_a->value.data(), a.data(), a.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(back_b->value.data(), b.data(), b.size() * sizeof(double)) == 0);
}

TEST_CASE("shape errors") {
    Rng rng(47);
    const Var a = nn::constant(random_tensor({2, 3}, rng));
    const Var b = nn::constant(random_tensor({3, 2}, rng));
    CHECK_THROWS_AS(nn::add(a, b), ShapeMismatch);
    CHECK_THROWS_AS(nn::mul(a, b), ShapeMismatch);
    CHECK_THROWS_AS(nn::mse(a, b), ShapeMismatch);
    CHECK_THROWS_AS(nn::matmul(a, a), ShapeMismatch);
    CHECK_THROWS_AS(nn::reshape(a, {7}), ShapeMismatch);
    CHECK_THROWS_AS(nn::slice(a, 1, 2, 5), ShapeMismatch);
}

TEST_CASE("non-finite values trip the guard") {
    const Var big = nn::constant(Tensor::from_data({2}, {1e308, 1.0}));
    CHECK_THROWS_AS(nn::mul(big, big), NonFiniteValue);
    nn::set_finite_check(false);
    CHECK_NOTHROW(nn::mul(big, big));
    nn::set_finite_check(true);
}

TEST_CASE("adam leaves parameters unchanged on zero gradients") {
    nn::ParamStore store;
    const Var w = store.create("w", Tensor::from_data({3}, {1.0, -2.0, 3.0}));
    store.zero_grad();
    nn::Adam opt;
    opt.step(store);
    CHECK(w->value[0] == 1.0);
    CHECK(w->value[1] == -2.0);
    CHECK(w->value[2] == 3.0);
}

TEST_CASE("adam converges on a 1-D quadratic") {
    nn::ParamStore store;
    const Var w = store.create("w", Tensor::from_data({1}, {2.5}));
    const Tensor target = Tensor::from_data({1}, {3.0});
    nn::Adam opt(nn::AdamConfig{.lr = 1e-2});
    for (int s = 0; s < 200; ++s) {
        store.zero_grad();
        nn::backward(nn::mse(w, nn::constant(target)));
        opt.step(store);
    }
    CHECK(std::abs(w->value[0] - 3.0) < 1e-3);
}

TEST_CASE("optimizer runs are bit-deterministic") {
    auto run = [] {
        nn::ParamStore store;
        Rng rng(48);
        const Var w = store.create("w", Tensor::from_data({4}, {0.4, -0.2, 0.9, 0.1}));
        const Var w2 = store.create("w2", Tensor::from_data({4}, {1.4, 0.2, -0.9, 0.3}));
        nn::Adam opt(nn::AdamConfig{.lr = 3e-3});
        for (int s = 0; s < 10; ++s) {
            store.zero_grad();
            Tensor target({4});
            for (std::size_t i = 0; i < 4; ++i) target[i] = rng.normal();
            nn::backward(nn::mse(nn::mul(w, w2), nn::constant(target)));
            opt.step(store);
        }
        std::vector<double> out;
        for (std::size_t i = 0; i < 4; ++i) out.push_back(w->value[i]);
        for (std::size_t i = 0; i < 4; ++i) out.push_back(w2->value[i]);
        return out;
    };
    const auto a = run();
    const auto b = run();
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("gradient clipping caps the global norm") {
    nn::ParamStore store;
    const Var w = store.create("w", Tensor::from_data({2}, {0.0, 0.0}));
    store.zero_grad();
    w->grad = Tensor::from_data({2}, {3.0, 4.0});
    CHECK(nn::global_grad_norm(store) == doctest::Approx(5.0));
    nn::clip_grad_norm(store, 1.0);
    CHECK(nn::global_grad_norm(store) == doctest::Approx(1.0));
    CHECK(w->grad[0] == doctest::Approx(0.6));
}

TEST_CASE("tensor record file round trip and corruption guards") {
    Rng rng(49);
    nn::TensorFile file;
    file.config_json = "{\"k\":1}";
    file.records.emplace("alpha", random_tensor({3, 2}, rng));
    file.records.emplace("beta", random_tensor({5}, rng));
    const std::string path = "records_test.magk";
    nn::save_tensor_file(path, file);
    const nn::TensorFile loaded = nn::load_tensor_file(path);
    CHECK(loaded.config_json == file.config_json);
    REQUIRE(loaded.records.count("alpha") == 1);
    const Tensor& alpha = loaded.records.at("alpha");
    CHECK(alpha.shape() == file.records.at("alpha").shape());
    CHECK(std::memcmp(alpha.data(), file.records.at("alpha").data(),
                      alpha.size() * sizeof(double)) == 0);

    // Truncation.
    {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        std::ofstream out("records_trunc.magk", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(nn::load_tensor_file("records_trunc.magk"), CorruptCheckpoint);
    // Bad magic.
    {
        std::ofstream out("records_magic.magk", std::ios::binary);
        out << "NOPE1234567890";
    }
    CHECK_THROWS_AS(nn::load_tensor_file("records_magic.magk"), CorruptCheckpoint);
    std::remove(path.c_str());
    std::remove("records_trunc.magk");
    std::remove("records_magic.magk");
}
