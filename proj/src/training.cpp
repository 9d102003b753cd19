#include "mage/training.hpp"

#include <chrono>
#include <cmath>

#include <json.hpp>

#include "mage/errors.hpp"

namespace mage::train {

using model::MageModel;
using nlohmann::json;
using nn::Tensor;
using nn::Var;

void TrainConfig::validate() const {
    if (weight_s1 < 0.0 || weight_s2 < 0.0 || weight_s3 < 0.0)
        throw InvalidArgument("train config: loss weights must be >= 0");
    if (weight_s3 <= 0.0) throw InvalidArgument("train config: S3 weight must be > 0");
    if (batch_size < 1) throw InvalidArgument("train config: batch_size must be >= 1");
    if (steps < 1) throw InvalidArgument("train config: steps must be >= 1");
    if (!(lr >= 0.0)) throw InvalidArgument("train config: lr must be >= 0");
}

std::string TrainConfig::to_json() const {
    json j;
    j["weights"] = {weight_s1, weight_s2, weight_s3};
    j["batch_size"] = batch_size;
    j["steps"] = steps;
    j["lr"] = lr;
    j["seed"] = seed;
    j["grad_clip"] = grad_clip;
    j["log_every"] = log_every;
    return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidArgument("train config parse error: " + std::string(e.what()));
    }
    TrainConfig cfg;
    try {
        if (j.contains("weights")) {
            const auto w = j["weights"].get<std::vector<double>>();
            if (w.size() != 3) throw InvalidArgument("train config: weights needs 3 entries");
            cfg.weight_s1 = w[0];
            cfg.weight_s2 = w[1];
            cfg.weight_s3 = w[2];
        }
        if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<int>();
        if (j.contains("steps")) cfg.steps = j["steps"].get<int>();
        if (j.contains("lr")) cfg.lr = j["lr"].get<double>();
        if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("grad_clip")) cfg.grad_clip = j["grad_clip"].get<double>();
        if (j.contains("log_every")) cfg.log_every = j["log_every"].get<int>();
    } catch (const json::exception& e) {
        throw InvalidArgument("train config field error: " + std::string(e.what()));
    }
    cfg.validate();
    return cfg;
}

const Eigen::MatrixXd& WindowSample::target(ScaleId id) const {
    switch (id) {
        case ScaleId::S1: return target_s1;
        case ScaleId::S2: return target_s2;
        case ScaleId::S3: return target_s3;
    }
    throw InvalidArgument("bad scale id");
}

TrainData prepare_train_data(const std::vector<MotionClip>& clips, const SkeletonConfig& skel,
                             int window, int history) {
    if (clips.empty()) throw EmptyDataset("prepare_train_data: no clips");
    TrainData data;
    data.stats = fit_normstats(clips, skel);
    for (const auto& clip : clips) {
        const SparseCondition cond = extract_condition(clip, skel.def);
        for (const auto& w : make_windows(clip, cond, window, history)) {
            WindowSample sample;
            sample.cond = apply_norm(data.stats.cond, w.cond.features);
            sample.target_s3 = apply_norm(data.stats.s3, clip_rotation_matrix(w.target));
            sample.target_s2 = apply_norm(
                data.stats.s2, project_clip_matrix(w.target, skel.s2, skel.composite_mode));
            sample.target_s1 = apply_norm(
                data.stats.s1, project_clip_matrix(w.target, skel.s1, skel.composite_mode));
            data.windows.push_back(std::move(sample));
        }
    }
    return data;
}

StageLosses stage_losses(const model::MageModel::Forward& fwd, const WindowSample& sample) {
    StageLosses out{nn::constant(Tensor::scalar(0.0)), nn::constant(Tensor::scalar(0.0)),
                    nn::constant(Tensor::scalar(0.0))};
    for (const auto& stage : fwd.stages) {
        const Eigen::MatrixXd& target = sample.target(stage.scale);
        if (stage.s_hat->value.rows() != static_cast<std::size_t>(target.rows()) ||
            stage.s_hat->value.cols() != static_cast<std::size_t>(target.cols()))
            throw ShapeMismatch("stage_losses: prediction/target shape mismatch");
        Var loss = nn::mse(stage.s_hat, nn::constant(Tensor::from_matrix(target)));
        switch (stage.scale) {
            case ScaleId::S1: out.l1 = loss; break;
            case ScaleId::S2: out.l2 = loss; break;
            case ScaleId::S3: out.l3 = loss; break;
        }
    }
    return out;
}

Var objective(const StageLosses& losses, const TrainConfig& cfg) {
    Var total = nn::scale(losses.l1, cfg.weight_s1);
    total = nn::add(total, nn::scale(losses.l2, cfg.weight_s2));
    return nn::add(total, nn::scale(losses.l3, cfg.weight_s3));
}

void train_step(const TrainData& data, TrainState& state, MageModel& model,
                const diffusion::NoiseSchedule& sched, const TrainConfig& cfg, nn::Adam& opt) {
    if (data.windows.empty()) throw EmptyDataset("train_step: no windows");
    model.params().zero_grad();
    const double inv_batch = 1.0 / cfg.batch_size;
    double l1 = 0.0, l2 = 0.0, l3 = 0.0, l_obj = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
        const auto& sample = data.windows[static_cast<std::size_t>(
            state.rng.uniform_int(0, static_cast<std::int64_t>(data.windows.size()) - 1))];
        const int t = static_cast<int>(state.rng.uniform_int(1, sched.steps));
        Tensor x0 = Tensor::from_matrix(sample.target_s3);
        Tensor noise(x0.shape());
        for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = state.rng.normal();
        const Tensor x_t = diffusion::q_sample(x0, t, noise, sched);

        auto fwd = model.forward(x_t, t, Tensor::from_matrix(sample.cond));
        const StageLosses losses = stage_losses(fwd, sample);
        Var obj = objective(losses, cfg);
        l1 += losses.l1->value.item() * inv_batch;
        l2 += losses.l2->value.item() * inv_batch;
        l3 += losses.l3->value.item() * inv_batch;
        l_obj += obj->value.item() * inv_batch;
        nn::backward(nn::scale(obj, inv_batch));
    }
    if (!std::isfinite(l_obj))
        throw NonFiniteLoss("train_step: non-finite objective at step " +
                            std::to_string(state.step) + " (L1=" + std::to_string(l1) +
                            ", L2=" + std::to_string(l2) + ", L3=" + std::to_string(l3) + ")");
    if (cfg.grad_clip > 0.0) nn::clip_grad_norm(model.params(), cfg.grad_clip);
    opt.config().lr = cfg.lr;
    opt.step(model.params());
    state.step += 1;
    state.l1 = l1;
    state.l2 = l2;
    state.l3 = l3;
    state.l_obj = l_obj;
}

TrainResult run_training(const TrainData& data, MageModel& model,
                         const diffusion::NoiseSchedule& sched, const TrainConfig& cfg,
                         std::ostream* log) {
    cfg.validate();
    TrainResult result;
    result.state.rng = Rng(cfg.seed);
    nn::Adam opt(nn::AdamConfig{cfg.lr});
    const auto start = std::chrono::steady_clock::now();
    for (int s = 0; s < cfg.steps; ++s) {
        train_step(data, result.state, model, sched, cfg, opt);
        result.objective_history.push_back(result.state.l_obj);
        if (log && (result.state.step % cfg.log_every == 0 || s + 1 == cfg.steps)) {
            const auto wall =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                    .count();
            json line;
            line["step"] = result.state.step;
            line["L1"] = result.state.l1;
            line["L2"] = result.state.l2;
            line["L3"] = result.state.l3;
            line["L_obj"] = result.state.l_obj;
            line["lr"] = cfg.lr;
            line["wall_ms"] = wall;
            (*log) << line.dump() << "\n";
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

namespace {

void put_stats(nn::TensorFile& file, const std::string& prefix, const ChannelStats& stats) {
    const auto n = static_cast<std::size_t>(stats.mean.size());
    file.records.emplace(prefix + ".mean",
                         Tensor::from_data({n}, {stats.mean.data(), stats.mean.data() + n}));
    file.records.emplace(prefix + ".std",
                         Tensor::from_data({n}, {stats.stddev.data(), stats.stddev.data() + n}));
}

ChannelStats get_stats(const nn::TensorFile& file, const std::string& prefix) {
    const auto mean_it = file.records.find(prefix + ".mean");
    const auto std_it = file.records.find(prefix + ".std");
    if (mean_it == file.records.end() || std_it == file.records.end())
        throw CorruptCheckpoint("checkpoint: missing stats " + prefix);
    ChannelStats stats;
    stats.mean = Eigen::Map<const Eigen::VectorXd>(mean_it->second.data(),
                                                   static_cast<Eigen::Index>(mean_it->second.size()));
    stats.stddev = Eigen::Map<const Eigen::VectorXd>(std_it->second.data(),
                                                     static_cast<Eigen::Index>(std_it->second.size()));
    return stats;
}

}  // namespace

void save_checkpoint(const std::string& path, const MageModel& model,
                     const diffusion::NoiseSchedule& sched, const NormStats& stats) {
    if (sched.steps != model.config().diffusion_steps)
        throw ConfigMismatch("save_checkpoint: schedule/config step count disagrees");
    nn::TensorFile file;
    file.config_json = model.config().to_json();
    file.records.emplace("schedule.beta",
                         Tensor::from_data({sched.beta.size()}, sched.beta));
    put_stats(file, "norm.cond", stats.cond);
    put_stats(file, "norm.s1", stats.s1);
    put_stats(file, "norm.s2", stats.s2);
    put_stats(file, "norm.s3", stats.s3);
    for (const auto& [name, param] : model.params().params())
        file.records.emplace("param." + name, param->value);
    nn::save_tensor_file(path, file);
}

LoadedCheckpoint load_checkpoint(const std::string& path, const SkeletonConfig& skel,
                                 const model::ModelConfig* expected) {
    const nn::TensorFile file = nn::load_tensor_file(path);
    const model::ModelConfig cfg = model::ModelConfig::from_json(file.config_json);
    if (expected && !(*expected == cfg))
        throw ConfigMismatch("load_checkpoint: stored config differs from the expected one");

    LoadedCheckpoint out;
    const auto beta_it = file.records.find("schedule.beta");
    if (beta_it == file.records.end())
        throw CorruptCheckpoint("checkpoint: missing schedule.beta");
    out.schedule = diffusion::schedule_from_betas(
        {beta_it->second.data(), beta_it->second.data() + beta_it->second.size()},
        diffusion::to_string(cfg.schedule_kind));
    if (out.schedule.steps != cfg.diffusion_steps)
        throw ConfigMismatch("checkpoint: beta table length differs from config");

    out.stats.cond = get_stats(file, "norm.cond");
    out.stats.s1 = get_stats(file, "norm.s1");
    out.stats.s2 = get_stats(file, "norm.s2");
    out.stats.s3 = get_stats(file, "norm.s3");

    out.model = std::make_unique<MageModel>(cfg, skel, /*init_seed=*/0);
    for (auto& [name, param] : out.model->params().params()) {
        const auto it = file.records.find("param." + name);
        if (it == file.records.end())
            throw ConfigMismatch("checkpoint: missing parameter " + name);
        if (!(it->second.shape() == param->value.shape()))
            throw ConfigMismatch("checkpoint: parameter shape mismatch for " + name);
        param->value = it->second;
    }
    return out;
}

}  // namespace mage::train
