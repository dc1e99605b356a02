// Command-line front end. Subcommand logic lives in eat/pipeline.hpp; this
// file parses arguments and maps failures onto exit codes:
//   0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "eat/config.hpp"
#include "eat/pipeline.hpp"

namespace {

struct PretrainArgs {
    std::string config, manifest, out;
    std::string resume;
    long long seed = -1;
    bool deterministic = false;
};

struct FinetuneArgs {
    std::string config, init, manifest, out;
    bool head_only = false;
    std::string prediction_mode;
    long long seed = -1;
    bool deterministic = false;
};

struct EvaluateArgs {
    std::string ckpt, manifest, json_path;
};

struct InspectArgs {
    std::string grid = "64x8";
    double ratio = 0.8;
    std::string block = "5x5";
    uint64_t seed = 0;
    std::string pgm;
};

std::pair<int, int> parse_dims(const std::string &text, const char *what) {
    auto x = text.find('x');
    if (x == std::string::npos) throw eat::DataError(std::string("expected HxW for ") + what + ", got '" + text + "'");
    return {std::stoi(text.substr(0, x)), std::stoi(text.substr(x + 1))};
}

void apply_overrides(eat::Config &cfg, long long seed, bool deterministic) {
    if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
    if (deterministic) cfg.deterministic = true;
}

int run_pretrain(const PretrainArgs &args) {
    eat::Config cfg = eat::load_config(args.config);
    apply_overrides(cfg, args.seed, args.deterministic);
    eat::Manifest manifest = eat::load_manifest(args.manifest);
    eat::PretrainRun run = eat::pretrain(cfg, manifest, args.out, args.resume);
    std::printf("pretrain done: %lld steps, final l_ufo %.6f\n", cfg.steps,
                run.records.empty() ? 0.0 : run.records.back().l_ufo);
    std::printf("checkpoint: %s\n", run.final_checkpoint.c_str());
    std::printf("log: %s\n", run.log_path.c_str());
    return 0;
}

int run_finetune(const FinetuneArgs &args) {
    eat::Config cfg = eat::load_config(args.config);
    apply_overrides(cfg, args.seed, args.deterministic);
    if (!args.prediction_mode.empty()) {
        if (args.prediction_mode == "cls") {
            cfg.prediction_mode = "cls";
        } else if (args.prediction_mode == "mean" || args.prediction_mode == "mean_pool") {
            cfg.prediction_mode = "mean_pool";
        } else {
            throw CLI::ValidationError("--prediction-mode must be cls or mean");
        }
    }
    eat::Manifest manifest = eat::load_manifest(args.manifest);
    eat::FinetuneRun run = eat::finetune(cfg, args.init, manifest, args.out, args.head_only);
    std::printf("finetune done: %lld steps, final loss %.6f\n", cfg.steps,
                run.records.empty() ? 0.0 : run.records.back().loss);
    std::printf("checkpoint: %s\n", run.final_checkpoint.c_str());
    return 0;
}

int run_evaluate(const EvaluateArgs &args) {
    eat::Manifest manifest = eat::load_manifest(args.manifest);
    eat::EvalReport report = eat::evaluate(args.ckpt, manifest);
    std::string dumped = report.json.dump(2);
    if (!args.json_path.empty()) {
        std::ofstream out(args.json_path);
        if (!out) throw eat::DataError("cannot write report: " + args.json_path);
        out << dumped << "\n";
    }
    std::printf("%s\n", dumped.c_str());
    return 0;
}

int run_inspect(const InspectArgs &args) {
    auto [gt, gf] = parse_dims(args.grid, "--grid");
    std::vector<eat::BlockShape> shapes;
    std::stringstream ss(args.block);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto [h, w] = parse_dims(item, "--block");
        shapes.push_back({h, w});
    }
    std::string art = eat::inspect_mask(gt, gf, args.ratio, shapes, args.seed, args.pgm);
    std::fputs(art.c_str(), stdout);
    return 0;
}

int run_stats(const std::string &manifest_path) {
    eat::Manifest manifest = eat::load_manifest(manifest_path);
    eat::MelConfig cfg;
    auto [mean, stddev] = eat::compute_corpus_stats(manifest, cfg);
    std::printf("norm_mean = %.6f\n", mean);
    std::printf("norm_std = %.6f\n", stddev);
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"bootstrapped masked audio pre-training with an utterance-frame objective"};
    app.require_subcommand(1);

    PretrainArgs pre;
    auto *pretrain_cmd = app.add_subcommand("pretrain", "self-supervised pre-training");
    pretrain_cmd->add_option("--config", pre.config, "config file")->required();
    pretrain_cmd->add_option("--manifest", pre.manifest, "training manifest CSV")->required();
    pretrain_cmd->add_option("--out", pre.out, "output directory")->required();
    pretrain_cmd->add_option("--seed", pre.seed, "override config seed");
    pretrain_cmd->add_flag("--deterministic", pre.deterministic, "bit-reproducible mode");
    pretrain_cmd->add_option("--resume", pre.resume, "resume from a checkpoint");

    FinetuneArgs fin;
    auto *finetune_cmd = app.add_subcommand("finetune", "supervised fine-tuning from a checkpoint");
    finetune_cmd->add_option("--config", fin.config, "config file")->required();
    finetune_cmd->add_option("--init", fin.init, "pre-trained checkpoint")->required();
    finetune_cmd->add_option("--manifest", fin.manifest, "labeled manifest CSV")->required();
    finetune_cmd->add_option("--out", fin.out, "output directory")->required();
    finetune_cmd->add_flag("--head-only", fin.head_only, "freeze everything except the head");
    finetune_cmd->add_option("--prediction-mode", fin.prediction_mode, "cls or mean");
    finetune_cmd->add_option("--seed", fin.seed, "override config seed");
    finetune_cmd->add_flag("--deterministic", fin.deterministic, "bit-reproducible mode");

    EvaluateArgs eval;
    auto *evaluate_cmd = app.add_subcommand("evaluate", "metric report for a fine-tuned checkpoint");
    evaluate_cmd->add_option("--ckpt", eval.ckpt, "fine-tuned checkpoint")->required();
    evaluate_cmd->add_option("--manifest", eval.manifest, "evaluation manifest CSV")->required();
    evaluate_cmd->add_option("--json", eval.json_path, "write the JSON report here");

    InspectArgs inspect;
    auto *inspect_cmd = app.add_subcommand("inspect-mask", "render an inverse block mask");
    inspect_cmd->add_option("--grid", inspect.grid, "patch grid TxF (default 64x8)");
    inspect_cmd->add_option("--ratio", inspect.ratio, "mask ratio (default 0.8)");
    inspect_cmd->add_option("--block", inspect.block, "block HxW[,HxW...] (default 5x5)");
    inspect_cmd->add_option("--seed", inspect.seed, "rng seed");
    inspect_cmd->add_option("--pgm", inspect.pgm, "also write an 8-bit PGM");

    std::string stats_manifest;
    auto *stats_cmd = app.add_subcommand("stats", "corpus normalization statistics");
    stats_cmd->add_option("--manifest", stats_manifest, "manifest CSV")->required();

    try {
        app.parse(argc, argv);
        if (pretrain_cmd->parsed()) return run_pretrain(pre);
        if (finetune_cmd->parsed()) return run_finetune(fin);
        if (evaluate_cmd->parsed()) return run_evaluate(eval);
        if (inspect_cmd->parsed()) return run_inspect(inspect);
        if (stats_cmd->parsed()) return run_stats(stats_manifest);
        return 1;
    } catch (const CLI::ParseError &e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const eat::NumericalError &e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const eat::DataError &e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument &e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const std::exception &e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    }
}
