// Command-line front end: synth / train / sample / eval / bench.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mage/dataio.hpp"
#include "mage/errors.hpp"
#include "mage/metrics.hpp"
#include "mage/pipeline.hpp"
#include "mage/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitCheckpoint = 4;

struct CliConfig {
    mage::model::ModelConfig model = mage::model::ModelConfig::desk_scale();
    mage::train::TrainConfig train;
    mage::pipe::InferenceConfig infer;
    int history = 12;
};

CliConfig load_cli_config(const std::string& path) {
    CliConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream in(path);
    if (!in) throw mage::DataError("config not readable: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw mage::DataError("config parse error: " + std::string(e.what()));
    }
    if (j.contains("model")) cfg.model = mage::model::ModelConfig::from_json(j["model"].dump());
    if (j.contains("train")) cfg.train = mage::train::TrainConfig::from_json(j["train"].dump());
    if (j.contains("inference"))
        cfg.infer = mage::pipe::InferenceConfig::from_json(j["inference"].dump());
    if (j.contains("history")) cfg.history = j["history"].get<int>();
    return cfg;
}

mage::SkeletonConfig load_skel(const std::string& path) {
    return path.empty() ? mage::default_skeleton() : mage::load_skeleton(path);
}

// Accepts a manifest path, a dataset directory, or a single .mage clip.
std::vector<mage::MotionClip> load_clips(const std::string& path) {
    if (fs::is_regular_file(path) && fs::path(path).extension() == ".mage")
        return {mage::load_clip(path)};
    return mage::load_dataset(path);
}

int cmd_synth(const std::string& kind, int count, int frames, double fps, std::uint64_t seed,
              const std::string& out) {
    const auto clips =
        mage::synth_dataset(mage::synth_kind_from_string(kind), count, frames, fps, seed);
    mage::save_dataset(clips, out);
    std::cout << "wrote " << clips.size() << " clips to " << out << "\n";
    return kExitOk;
}

int cmd_train(const std::string& data, const std::string& config_path, int steps,
              std::int64_t seed, const std::string& out_ckpt, const std::string& log_path,
              const std::string& skel_path) {
    CliConfig cfg = load_cli_config(config_path);
    if (steps > 0) cfg.train.steps = steps;
    if (seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed);
    const mage::SkeletonConfig skel = load_skel(skel_path);
    const auto clips = load_clips(data);
    const auto train_data =
        mage::train::prepare_train_data(clips, skel, cfg.model.window, cfg.history);
    const auto sched =
        mage::diffusion::make_schedule(cfg.model.diffusion_steps, cfg.model.schedule_kind);
    mage::model::MageModel model(cfg.model, skel, cfg.train.seed);

    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path);
        if (!log) throw mage::DataError("cannot open log " + log_path);
    }
    const auto result = mage::train::run_training(train_data, model, sched, cfg.train,
                                                  log.is_open() ? &log : nullptr);
    mage::train::save_checkpoint(out_ckpt, model, sched, train_data.stats);
    std::cout << "trained " << cfg.train.steps << " steps, final L_obj " << result.state.l_obj
              << ", checkpoint " << out_ckpt << "\n";
    return kExitOk;
}

int cmd_sample(const std::string& ckpt, const std::string& conditions,
               mage::pipe::InferenceConfig cfg, const std::string& out,
               const std::string& skel_path, const std::string& csv) {
    const mage::SkeletonConfig skel = load_skel(skel_path);
    auto loaded = mage::train::load_checkpoint(ckpt, skel);
    cfg.window = loaded.model->config().window;
    cfg.validate();
    const auto gt_clips = load_clips(conditions);
    std::vector<mage::MotionClip> preds;
    for (const auto& clip : gt_clips) {
        const auto cond = mage::extract_condition(clip, skel.def);
        preds.push_back(mage::pipe::reconstruct_clip(cond, clip.fps, *loaded.model,
                                                     loaded.schedule, loaded.stats, cfg,
                                                     skel.def));
    }
    mage::save_dataset(preds, out);
    if (!csv.empty()) mage::write_positions_csv(preds, skel.def, csv);
    std::cout << "sampled " << preds.size() << " clips to " << out << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& report_path,
             const std::string& skel_path, mage::pipe::InferenceConfig cfg,
             const std::string& csv) {
    const mage::SkeletonConfig skel = load_skel(skel_path);
    auto loaded = mage::train::load_checkpoint(ckpt, skel);
    cfg.window = loaded.model->config().window;
    cfg.validate();
    const auto gt_clips = load_clips(data);
    std::vector<mage::MotionClip> preds;
    for (const auto& clip : gt_clips) {
        const auto cond = mage::extract_condition(clip, skel.def);
        preds.push_back(mage::pipe::reconstruct_clip(cond, clip.fps, *loaded.model,
                                                     loaded.schedule, loaded.stats, cfg,
                                                     skel.def));
    }
    const auto report = mage::metrics::evaluate(preds, gt_clips, skel.def);
    if (!report_path.empty()) mage::metrics::write_report(report, report_path);
    if (!csv.empty()) mage::write_positions_csv(preds, skel.def, csv);
    std::cout << mage::metrics::report_line(report.aggregate) << "\n";
    return kExitOk;
}

int cmd_bench(const std::string& ckpt, int iterations, const std::string& skel_path,
              int ddim_steps) {
    const mage::SkeletonConfig skel = load_skel(skel_path);
    auto loaded = mage::train::load_checkpoint(ckpt, skel);
    mage::pipe::InferenceConfig cfg;
    cfg.window = loaded.model->config().window;
    cfg.ddim_steps = ddim_steps;
    const auto report = mage::pipe::bench(*loaded.model, loaded.schedule, loaded.stats, cfg,
                                          iterations);
    std::cout << report.to_json() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coarse-to-fine diffusion engine for full-body motion from sparse tracking"};
    app.require_subcommand(1);

    std::string kind = "mixed", out, data, config_path, ckpt, conditions, report_path, log_path;
    std::string skel_path, csv;
    int count = 8, frames = 120, steps = -1, iterations = 50, history = 12, ddim_steps = 4;
    double fps = 60.0, eta = 0.0;
    bool crossfade = false;
    std::int64_t seed_override = -1;
    std::uint64_t seed = 0;

    auto* synth = app.add_subcommand("synth", "Generate a procedural motion dataset");
    synth->add_option("--kind", kind, "walk|reach|squat|kick|mixed");
    synth->add_option("--count", count)->check(CLI::PositiveNumber);
    synth->add_option("--frames", frames)->check(CLI::Range(2, 1 << 20));
    synth->add_option("--fps", fps)->check(CLI::PositiveNumber);
    synth->add_option("--seed", seed);
    synth->add_option("--out", out)->required();

    auto* train = app.add_subcommand("train", "Train a model on a dataset");
    train->add_option("--data", data)->required();
    train->add_option("--config", config_path);
    train->add_option("--steps", steps);
    train->add_option("--seed", seed_override);
    train->add_option("--out-checkpoint", ckpt)->required();
    train->add_option("--log", log_path);
    train->add_option("--skeleton", skel_path);

    auto* sample = app.add_subcommand("sample", "Reconstruct full-body motion from conditions");
    sample->add_option("--checkpoint", ckpt)->required();
    sample->add_option("--conditions", conditions)->required();
    auto* sample_seed = sample->add_option("--seed", seed);
    sample->add_option("--out", out)->required();
    sample->add_option("--config", config_path);
    sample->add_option("--skeleton", skel_path);
    auto* sample_history = sample->add_option("--history", history);
    auto* sample_steps = sample->add_option("--ddim-steps", ddim_steps);
    auto* sample_eta = sample->add_option("--eta", eta);
    auto* sample_fade = sample->add_flag("--crossfade", crossfade);
    sample->add_option("--csv", csv);

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint against ground truth");
    eval->add_option("--checkpoint", ckpt)->required();
    eval->add_option("--data", data)->required();
    eval->add_option("--report", report_path);
    eval->add_option("--config", config_path);
    eval->add_option("--skeleton", skel_path);
    auto* eval_history = eval->add_option("--history", history);
    auto* eval_steps = eval->add_option("--ddim-steps", ddim_steps);
    auto* eval_eta = eval->add_option("--eta", eta);
    auto* eval_fade = eval->add_flag("--crossfade", crossfade);
    auto* eval_seed = eval->add_option("--seed", seed);
    eval->add_option("--csv", csv);

    auto* bench = app.add_subcommand("bench", "Measure sampling latency");
    bench->add_option("--checkpoint", ckpt)->required();
    bench->add_option("--iterations", iterations);
    bench->add_option("--skeleton", skel_path);
    bench->add_option("--ddim-steps", ddim_steps);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (synth->parsed()) return cmd_synth(kind, count, frames, fps, seed, out);
        if (train->parsed())
            return cmd_train(data, config_path, steps, seed_override, ckpt, log_path, skel_path);
        if (sample->parsed()) {
            mage::pipe::InferenceConfig icfg = load_cli_config(config_path).infer;
            if (sample_history->count()) icfg.history = history;
            if (sample_steps->count()) icfg.ddim_steps = ddim_steps;
            if (sample_eta->count()) icfg.eta = eta;
            if (sample_fade->count()) icfg.crossfade = crossfade;
            if (sample_seed->count()) icfg.seed = seed;
            return cmd_sample(ckpt, conditions, icfg, out, skel_path, csv);
        }
        if (eval->parsed()) {
            mage::pipe::InferenceConfig icfg = load_cli_config(config_path).infer;
            if (eval_history->count()) icfg.history = history;
            if (eval_steps->count()) icfg.ddim_steps = ddim_steps;
            if (eval_eta->count()) icfg.eta = eta;
            if (eval_fade->count()) icfg.crossfade = crossfade;
            if (eval_seed->count()) icfg.seed = seed;
            return cmd_eval(ckpt, data, report_path, skel_path, icfg, csv);
        }
        if (bench->parsed()) return cmd_bench(ckpt, iterations, skel_path, ddim_steps);
    } catch (const mage::CorruptCheckpoint& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return kExitCheckpoint;
    } catch (const mage::ConfigMismatch& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return kExitCheckpoint;
    } catch (const mage::InvalidArgument& e) {
        std::cerr << "invalid arguments: " << e.what() << "\n";
        return kExitUsage;
    } catch (const mage::Error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
