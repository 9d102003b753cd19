#include "mage/model.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "mage/errors.hpp"
#include "mage/rng.hpp"

namespace mage::model {

using nn::Tensor;
using nn::Var;
using nlohmann::json;

const char* to_string(FusionMode mode) {
    switch (mode) {
        case FusionMode::CondF: return "C+F";
        case FusionMode::CondFrec: return "C+F_rec";
        case FusionMode::CondFFrec: return "C+F+F_rec";
    }
    return "?";
}

FusionMode fusion_mode_from_string(const std::string& s) {
    if (s == "C+F") return FusionMode::CondF;
    if (s == "C+F_rec") return FusionMode::CondFrec;
    if (s == "C+F+F_rec") return FusionMode::CondFFrec;
    throw InvalidArgument("unknown fusion mode: " + s);
}

ModelConfig ModelConfig::desk_scale() {
    ModelConfig cfg;
    cfg.latent_dim = 64;
    cfg.blocks_s1 = cfg.blocks_s2 = cfg.blocks_s3 = 2;
    return cfg;
}

int ModelConfig::blocks_for(ScaleId id) const {
    switch (id) {
        case ScaleId::S1: return blocks_s1;
        case ScaleId::S2: return blocks_s2;
        case ScaleId::S3: return blocks_s3;
    }
    return 0;
}

void ModelConfig::validate() const {
    if (latent_dim < 8) throw InvalidArgument("model config: latent_dim must be >= 8");
    if (latent_dim % 2 != 0)
        throw InvalidArgument("model config: latent_dim must be even (sinusoidal embedding)");
    if (window < 2) throw InvalidArgument("model config: window must be >= 2");
    if (diffusion_steps < 1) throw InvalidArgument("model config: diffusion_steps must be >= 1");
    if (stages.empty()) throw InvalidArgument("model config: no stages configured");
    for (std::size_t i = 1; i < stages.size(); ++i)
        if (!(static_cast<int>(stages[i]) > static_cast<int>(stages[i - 1])))
            throw InvalidArgument("model config: stages must be unique and coarse-to-fine");
    if (stages.back() != ScaleId::S3) throw InvalidArgument("model config: S3 stage is mandatory");
    for (ScaleId s : stages)
        if (blocks_for(s) < 1) throw InvalidArgument("model config: configured stage needs blocks");
}

std::string ModelConfig::to_json() const {
    json j;
    j["arch_version"] = arch_version;
    j["latent_dim"] = latent_dim;
    j["blocks"] = {blocks_s1, blocks_s2, blocks_s3};
    j["window"] = window;
    json stage_names = json::array();
    for (ScaleId s : stages) stage_names.push_back(mage::to_string(s));
    j["stages"] = stage_names;
    j["fusion"] = model::to_string(fusion);
    j["diffusion_steps"] = diffusion_steps;
    j["schedule"] = diffusion::to_string(schedule_kind);
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw CorruptCheckpoint("model config parse error: " + std::string(e.what()));
    }
    ModelConfig cfg;
    try {
        cfg.arch_version = j.at("arch_version").get<int>();
        cfg.latent_dim = j.at("latent_dim").get<int>();
        const auto blocks = j.at("blocks").get<std::vector<int>>();
        if (blocks.size() != 3) throw CorruptCheckpoint("model config: blocks needs 3 entries");
        cfg.blocks_s1 = blocks[0];
        cfg.blocks_s2 = blocks[1];
        cfg.blocks_s3 = blocks[2];
        cfg.window = j.at("window").get<int>();
        cfg.stages.clear();
        for (const auto& s : j.at("stages"))
            cfg.stages.push_back(scale_id_from_string(s.get<std::string>()));
        cfg.fusion = fusion_mode_from_string(j.at("fusion").get<std::string>());
        cfg.diffusion_steps = j.at("diffusion_steps").get<int>();
        cfg.schedule_kind = diffusion::schedule_kind_from_string(j.at("schedule").get<std::string>());
    } catch (const json::exception& e) {
        throw CorruptCheckpoint("model config field error: " + std::string(e.what()));
    }
    cfg.validate();
    return cfg;
}

namespace {

std::string stage_tag(ScaleId id) {
    switch (id) {
        case ScaleId::S1: return "s1";
        case ScaleId::S2: return "s2";
        case ScaleId::S3: return "s3";
    }
    return "?";
}

Tensor trunc_normal(std::vector<std::size_t> shape, double stddev, Rng& rng) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) {
        double z = rng.normal();
        while (std::abs(z) > 2.0) z = rng.normal();
        t[i] = stddev * z;
    }
    return t;
}

}  // namespace

MageModel::MageModel(ModelConfig cfg, const SkeletonConfig& skel, std::uint64_t init_seed)
    : cfg_(std::move(cfg)) {
    cfg_.validate();
    scale_dims_ = {scale_dim(skel.s1), scale_dim(skel.s2), scale_dim(skel.s3)};
    build_params(init_seed);
}

int MageModel::scale_width(ScaleId id) const { return scale_dims_[static_cast<int>(id)]; }

void MageModel::build_params(std::uint64_t seed) {
    Rng rng(seed);
    const auto L = static_cast<std::size_t>(cfg_.latent_dim);
    const auto N = static_cast<std::size_t>(cfg_.window);
    const std::size_t cond_dim = 54;
    const std::size_t motion_dim = static_cast<std::size_t>(scale_width(ScaleId::S3));
    const double stddev = 0.02;

    auto dense = [&](const std::string& name, std::size_t in, std::size_t out) {
        params_.create(name + ".w", trunc_normal({in, out}, stddev, rng));
        params_.create(name + ".b", Tensor::zeros({out}));
    };
    auto dense_zero = [&](const std::string& name, std::size_t in, std::size_t out) {
        params_.create(name + ".w", Tensor::zeros({in, out}));
        params_.create(name + ".b", Tensor::zeros({out}));
    };

    dense("embed", motion_dim + cond_dim, L);
    dense("cond", cond_dim, L);
    for (std::size_t si = 0; si < cfg_.stages.size(); ++si) {
        const ScaleId stage = cfg_.stages[si];
        const std::string tag = stage_tag(stage);
        for (int k = 0; k < cfg_.blocks_for(stage); ++k) {
            const std::string blk = tag + ".blk" + std::to_string(k);
            dense(blk + ".feat", L, L);
            dense(blk + ".temporal", N, N);
            dense_zero(blk + ".time", L, L);  // zero-init time injection
        }
        const auto width = static_cast<std::size_t>(scale_width(stage));
        dense_zero(tag + ".head", L, width);  // zero-init output head
        if (si + 1 < cfg_.stages.size()) {
            dense(tag + ".rec", width, L);
            const std::size_t fuse_width = cfg_.fusion == FusionMode::CondFFrec ? 3 * L : 2 * L;
            dense(tag + ".fuse", fuse_width, L);
        }
    }
}

Tensor MageModel::time_embedding(int t) const {
    const int L = cfg_.latent_dim;
    const int half = L / 2;
    Tensor emb({static_cast<std::size_t>(L)});
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        emb[i] = std::sin(t * freq);
        emb[half + i] = std::cos(t * freq);
    }
    return emb;
}

Var MageModel::embed_inputs(const Var& x_t, const Var& cond) {
    if (x_t->value.rank() != 2 || x_t->value.cols() != static_cast<std::size_t>(scale_width(ScaleId::S3)))
        throw ShapeMismatch("embed_inputs: x_t must be window x 132");
    if (cond->value.rank() != 2 || cond->value.cols() != 54)
        throw ShapeMismatch("embed_inputs: cond must be window x 54");
    if (x_t->value.rows() != cond->value.rows())
        throw ShapeMismatch("embed_inputs: x_t/cond row counts differ");
    // Concatenation order [x_t | cond] is part of the contract.
    return nn::affine(nn::concat({x_t, cond}, 1), params_.at("embed.w"), params_.at("embed.b"));
}

Var MageModel::cond_latent(const Var& cond) {
    return nn::affine(cond, params_.at("cond.w"), params_.at("cond.b"));
}

Var MageModel::denoiser_block(ScaleId stage, int block_idx, const Var& h, const Tensor& t_emb) {
    const std::string blk = stage_tag(stage) + ".blk" + std::to_string(block_idx);
    Var u = nn::layer_norm(h);
    u = nn::silu(nn::affine(u, params_.at(blk + ".feat.w"), params_.at(blk + ".feat.b")));
    // Mix across the frame axis.
    u = nn::transpose(nn::affine(nn::transpose(u), params_.at(blk + ".temporal.w"),
                                 params_.at(blk + ".temporal.b")));
    // Per-block projection of the sinusoidal embedding, added to every frame.
    Var te = nn::constant(Tensor::from_data({1, t_emb.size()},
                                            {t_emb.data(), t_emb.data() + t_emb.size()}));
    Var inj = nn::affine(te, params_.at(blk + ".time.w"), params_.at(blk + ".time.b"));
    u = nn::add(u, nn::reshape(inj, {static_cast<std::size_t>(cfg_.latent_dim)}));
    return nn::add(u, h);
}

StageOutput MageModel::stage_forward(ScaleId stage, const Var& h_in, const Tensor& t_emb) {
    const std::string tag = stage_tag(stage);
    StageOutput out;
    out.scale = stage;
    Var h = h_in;
    for (int k = 0; k < cfg_.blocks_for(stage); ++k) h = denoiser_block(stage, k, h, t_emb);
    out.latent = h;
    out.s_hat = nn::affine(h, params_.at(tag + ".head.w"), params_.at(tag + ".head.b"));
    if (params_.contains(tag + ".rec.w"))
        out.rec = nn::affine(out.s_hat, params_.at(tag + ".rec.w"), params_.at(tag + ".rec.b"));
    return out;
}

Var MageModel::fuse(const Var& cond_lat, const Var& f, const Var& f_rec, ScaleId stage) {
    const std::string tag = stage_tag(stage);
    std::vector<Var> parts;
    switch (cfg_.fusion) {
        case FusionMode::CondF: parts = {cond_lat, f}; break;
        case FusionMode::CondFrec: parts = {cond_lat, f_rec}; break;
        case FusionMode::CondFFrec: parts = {cond_lat, f, f_rec}; break;
    }
    return nn::affine(nn::concat(parts, 1), params_.at(tag + ".fuse.w"),
                      params_.at(tag + ".fuse.b"));
}

MageModel::Forward MageModel::forward(const Tensor& x_t, int t, const Tensor& cond) {
    Var x_var = nn::constant(x_t);
    Var cond_var = nn::constant(cond);
    const Tensor t_emb = time_embedding(t);
    Var cl = cond_latent(cond_var);
    Var h = embed_inputs(x_var, cond_var);

    Forward result;
    for (std::size_t si = 0; si < cfg_.stages.size(); ++si) {
        StageOutput stage_out = stage_forward(cfg_.stages[si], h, t_emb);
        if (si + 1 < cfg_.stages.size())
            h = fuse(cl, stage_out.latent, stage_out.rec, cfg_.stages[si]);
        result.stages.push_back(std::move(stage_out));
    }
    return result;
}

Tensor MageModel::predict_finest(const Tensor& x_t, int t, const Tensor& cond) {
    return forward(x_t, t, cond).finest().s_hat->value;
}

}  // namespace mage::model
