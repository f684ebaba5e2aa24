// SPDX-License-Identifier: Apache-2.0
//
// sitgru: train, evaluate and inspect recurrent autoencoders for frame-level
// anomaly detection.
//
//   sitgru train     [--config FILE] [--KEY VALUE ...]
//   sitgru eval      ...
//   sitgru gradcheck ...
//   sitgru bench     ...
//   sitgru sweep     ...
//   sitgru synth     ...
//
// Exit codes: 0 ok, 1 bad usage or arguments, 2 I/O, format or
// compatibility error, 3 a verification step failed.
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "sitgru/pipeline.hpp"

namespace {

using namespace sitgru;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerify = 3;

int run(const std::string& command, const RunConfig& cfg) {
    if (command == "train") {
        const TrainOutcome r = cmd_train(cfg, [](const EpochRecord& e) {
            std::cout << "epoch " << e.epoch << " train_loss=" << format_double(e.train_loss)
                      << " val_loss=" << format_double(e.val_loss) << '\n'
                      << std::flush;
        });
        std::cout << "best epoch " << r.fit.best_epoch << " val_loss=" << format_double(r.fit.best_val_loss) << '\n'
                  << "checkpoint " << cfg.checkpoint_path().string() << '\n';
        return 0;
    }
    if (command == "eval") {
        const EvalOutcome r = cmd_eval(cfg);
        std::cout << "frames=" << r.scores.size() << " auc=" << format_double(r.roc.auc)
                  << " eer=" << format_double(r.roc.eer) << '\n';
        return 0;
    }
    if (command == "gradcheck") {
        const auto lines = run_gradcheck(cfg);
        std::cout << gradcheck_text(lines);
        for (const auto& l : lines)
            if (!l.passed()) return kExitVerify;
        return 0;
    }
    if (command == "bench") {
        const auto rows = cmd_bench(cfg);
        for (const auto& r : rows)
            std::cout << to_string(r.kind) << " min=" << format_double(r.min) << "s max=" << format_double(r.max)
                      << "s median=" << format_double(r.median) << "s\n";
        std::cout << "ordered repetitions " << ordered_repetitions(rows) << "/" << cfg.bench_reps << '\n';
        return 0;
    }
    if (command == "sweep") {
        const SweepResult r = cmd_sweep(cfg);
        std::cout << sweep_csv(r);
        for (const auto& c : r.cells)
            if (!c.ok) std::cerr << "cell " << to_string(c.loss) << "/" << to_string(c.optimizer) << " failed: " << c.error << '\n';
        return r.best ? 0 : kExitVerify;
    }
    if (command == "synth") {
        std::cout << cmd_synth(cfg).string() << '\n';
        return 0;
    }
    throw UsageError("unknown command '" + command + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Recurrent autoencoder anomaly detection"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(sitgru::kToolVersion));

    std::string config_file;
    std::map<std::string, std::string> overrides;
    const char* commands[][2] = {{"train", "train a model on normal footage"},
                                 {"eval", "score test footage with a trained model"},
                                 {"gradcheck", "compare analytic and numeric gradients"},
                                 {"bench", "time training epochs per cell kind"},
                                 {"sweep", "train and evaluate every loss x optimizer pair"},
                                 {"synth", "write a synthetic clip and its manifest"}};
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_file, "key=value file, applied before flags")->check(CLI::ExistingFile);
        for (const std::string& key : sitgru::RunConfig::keys()) {
            std::string flag = key;
            std::replace(flag.begin(), flag.end(), '_', '-');
            sub->add_option_function<std::string>(
                "--" + flag, [&overrides, key](const std::string& v) { overrides[key] = v; }, "config key " + key);
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        sitgru::RunConfig cfg;
        if (!config_file.empty()) cfg.load_file(config_file);
        for (const auto& [k, v] : overrides) cfg.set(k, v);
        return run(command, cfg);
    } catch (const sitgru::UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const sitgru::ArgumentError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
}
