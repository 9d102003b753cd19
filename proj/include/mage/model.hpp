#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mage/diffusion.hpp"
#include "mage/nncore.hpp"
#include "mage/skeleton.hpp"

namespace mage::model {

enum class FusionMode { CondF, CondFrec, CondFFrec };

const char* to_string(FusionMode mode);
FusionMode fusion_mode_from_string(const std::string& s);

struct ModelConfig {
    int arch_version = 1;
    int latent_dim = 512;
    int blocks_s1 = 12;
    int blocks_s2 = 12;
    int blocks_s3 = 12;
    int window = 120;
    std::vector<ScaleId> stages = {ScaleId::S1, ScaleId::S2, ScaleId::S3};
    FusionMode fusion = FusionMode::CondFFrec;
    int diffusion_steps = 1000;
    diffusion::ScheduleKind schedule_kind = diffusion::ScheduleKind::Cosine;

    static ModelConfig full_scale() { return {}; }
    static ModelConfig desk_scale();

    int blocks_for(ScaleId id) const;
    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    bool operator==(const ModelConfig&) const = default;
};

struct StageOutput {
    ScaleId scale = ScaleId::S3;
    nn::Var latent;  // F, window x latent
    nn::Var s_hat;   // window x scale_dim
    nn::Var rec;     // F_rec, window x latent
};

// The three-stage denoiser. One instance owns its parameters; forward
// passes share them, so concurrent inference is read-only.
class MageModel {
 public:
    MageModel(ModelConfig cfg, const SkeletonConfig& skel, std::uint64_t init_seed);

    struct Forward {
        std::vector<StageOutput> stages;  // coarse-to-fine, as configured
        const StageOutput& finest() const { return stages.back(); }
    };

    // x_t: window x 132, cond: window x 54 (flattened N x 3 x 18).
    Forward forward(const nn::Tensor& x_t, int t, const nn::Tensor& cond);

    // Finest-stage prediction only, as a plain tensor.
    nn::Tensor predict_finest(const nn::Tensor& x_t, int t, const nn::Tensor& cond);

    // Exposed pieces (also used by the unit tests).
    nn::Tensor time_embedding(int t) const;
    nn::Var embed_inputs(const nn::Var& x_t, const nn::Var& cond);
    nn::Var cond_latent(const nn::Var& cond);
    nn::Var denoiser_block(ScaleId stage, int block_idx, const nn::Var& h,
                           const nn::Tensor& t_emb);
    StageOutput stage_forward(ScaleId stage, const nn::Var& h_in, const nn::Tensor& t_emb);
    nn::Var fuse(const nn::Var& cond_lat, const nn::Var& f, const nn::Var& f_rec, ScaleId stage);

    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    const ModelConfig& config() const { return cfg_; }
    int scale_width(ScaleId id) const;

 private:
    void build_params(std::uint64_t seed);

    ModelConfig cfg_;
    std::vector<int> scale_dims_;  // indexed by ScaleId
    nn::ParamStore params_;
};

}  // namespace mage::model
