#include "uqpen/errors.hpp"
#include "uqpen/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

namespace {

// Exit codes: 0 success, 1 usage/config error, 2 data or artifact format
// error, 3 numeric/invalid-state error.
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitState = 3;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string preset;
    std::string train_hand;
    std::string eval_hand;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
    auto* opt = cmd->add_option("-c,--config", args.config_path, "Experiment config JSON");
    if (config_required) {
        opt->required();
    }
    cmd->add_option("--set", args.overrides,
                    "Override a config value, e.g. --set train.epochs_max=30");
    cmd->add_option("--preset", args.preset, "Architecture preset: desk or paper");
    cmd->add_option("--train-hand", args.train_hand, "Training hand filter: right, left, both");
    cmd->add_option("--eval-hand", args.eval_hand, "Evaluation hand filter: right, left, both");
}

uqpen::ExperimentConfig load_config(const CommonArgs& args) {
    std::vector<std::string> overrides = args.overrides;
    if (!args.preset.empty()) {
        overrides.push_back("arch.preset=\"" + args.preset + "\"");
    }
    if (!args.train_hand.empty()) {
        overrides.push_back("eval.train_hand=\"" + args.train_hand + "\"");
    }
    if (!args.eval_hand.empty()) {
        overrides.push_back("eval.eval_hand=\"" + args.eval_hand + "\"");
    }
    if (args.config_path.empty()) {
        return uqpen::ExperimentConfig::from_json_text("{}", overrides);
    }
    return uqpen::ExperimentConfig::load(args.config_path, overrides);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Uncertainty-quantified character classification on pen-sensor time series"};
    app.require_subcommand(1);

    CommonArgs gen_args;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset CSV + split manifest");
    add_common(gen, gen_args, false);
    gen->add_option("-o,--out", gen_out, "Output dataset CSV path")->required();

    CommonArgs train_args;
    std::string train_out;
    auto* train = app.add_subcommand("train", "Train a single model");
    add_common(train, train_args);
    train->add_option("-o,--out", train_out, "Output directory")->required();

    CommonArgs swag_args;
    std::string swag_out;
    auto* swag = app.add_subcommand("swag-train", "Train with SWA statistics collection");
    add_common(swag, swag_args);
    swag->add_option("-o,--out", swag_out, "Output directory")->required();

    CommonArgs ens_args;
    std::string ens_out;
    auto* ens = app.add_subcommand("ensemble-train", "Train a deep ensemble");
    add_common(ens, ens_args);
    ens->add_option("-o,--out", ens_out, "Output directory")->required();

    CommonArgs eval_args;
    std::string eval_out;
    std::vector<std::string> eval_models;
    auto* eval = app.add_subcommand("evaluate", "Evaluate artifacts into a report bundle");
    add_common(eval, eval_args);
    eval->add_option("-m,--model", eval_models,
                     "Model artifacts: one .uqsp posterior or one or more .uqhw checkpoints")
        ->required();
    eval->add_option("-o,--out", eval_out, "Output directory")->required();

    std::string report_in, report_out;
    auto* report = app.add_subcommand("report", "Render SVG figures from a report bundle");
    report->add_option("-i,--in", report_in, "Report bundle directory")->required();
    report->add_option("-o,--out", report_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen->parsed()) {
            uqpen::run_gen(load_config(gen_args), gen_out);
        } else if (train->parsed()) {
            uqpen::run_train(load_config(train_args), train_out);
        } else if (swag->parsed()) {
            uqpen::run_swag_train(load_config(swag_args), swag_out);
        } else if (ens->parsed()) {
            uqpen::run_ensemble_train(load_config(ens_args), ens_out);
        } else if (eval->parsed()) {
            std::vector<std::filesystem::path> models(eval_models.begin(), eval_models.end());
            uqpen::run_evaluate(load_config(eval_args), models, eval_out);
        } else if (report->parsed()) {
            uqpen::run_report(report_in, report_out);
        }
    } catch (const uqpen::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const uqpen::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const uqpen::InvalidStateError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitState;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitState;
    }
    return 0;
}
