#include "uqpen/experiment.hpp"

#include "uqpen/calibration.hpp"
#include "uqpen/errors.hpp"
#include "uqpen/ioutil.hpp"
#include "uqpen/svg.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <thread>

namespace uqpen {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& section, const std::set<std::string>& allowed,
                         const std::string& name) {
    for (const auto& [key, value] : section.items()) {
        if (!allowed.count(key)) {
            throw std::invalid_argument("config: unknown key '" + name + "." + key + "'");
        }
    }
}

template <typename T>
void read_field(const json& section, const char* key, T& target) {
    if (section.contains(key)) {
        try {
            target = section.at(key).get<T>();
        } catch (const json::exception& e) {
            throw std::invalid_argument(std::string("config: bad value for '") + key + "': " +
                                        e.what());
        }
    }
}

HandSelector hand_selector_from(const std::string& token, const std::string& key) {
    if (token == "right") return HandSelector::Right;
    if (token == "left") return HandSelector::Left;
    if (token == "both") return HandSelector::Both;
    throw std::invalid_argument("config: " + key + " must be right, left, or both");
}

json parse_json_text(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(what + ": " + e.what());
    }
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw std::invalid_argument("--set expects section.key=value, got '" + assignment + "'");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string value_text = assignment.substr(eq + 1);

    json value = json::parse(value_text, nullptr, false);
    if (value.is_discarded()) {
        value = value_text; // plain string
    }

    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) {
            throw std::invalid_argument("--set: empty key segment in '" + path + "'");
        }
        if (dot == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

Matrix load_matrix_csv(const std::filesystem::path& path, std::vector<std::string>& class_names) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("report bundle: missing file " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("report bundle: empty file " + path.string());
    }
    std::vector<std::vector<double>> rows;
    class_names.clear();
    {
        std::size_t start = line.find(',');
        while (start != std::string::npos) {
            const auto next = line.find(',', start + 1);
            class_names.push_back(line.substr(
                start + 1, next == std::string::npos ? next : next - start - 1));
            start = next;
        }
    }
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> row;
        std::size_t start = line.find(',');
        while (start != std::string::npos) {
            const auto next = line.find(',', start + 1);
            const std::string cell = line.substr(
                start + 1, next == std::string::npos ? next : next - start - 1);
            row.push_back(parse_double(cell, path.string() + " line " + std::to_string(line_no)));
            start = next;
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty() || rows.size() != class_names.size()) {
        throw ParseError("report bundle: malformed matrix in " + path.string());
    }
    Matrix matrix(rows.size(), rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != class_names.size()) {
            throw ParseError("report bundle: ragged matrix in " + path.string());
        }
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            matrix(r, c) = rows[r][c];
        }
    }
    return matrix;
}

} // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text,
                                                  const std::vector<std::string>& overrides) {
    json doc = text.empty() ? json::object() : parse_json_text(text, "config");
    if (!doc.is_object()) {
        throw std::invalid_argument("config: top level must be a JSON object");
    }
    for (const auto& assignment : overrides) {
        apply_override(doc, assignment);
    }
    reject_unknown_keys(
        doc, {"data", "split", "arch", "train", "swag", "ensemble", "eval", "report"}, "config");

    ExperimentConfig config;

    if (doc.contains("data")) {
        const json& data = doc["data"];
        reject_unknown_keys(data, {"generator", "csv"}, "data");
        if (data.contains("csv") && data.contains("generator")) {
            throw std::invalid_argument("config: data must use either generator or csv");
        }
        if (data.contains("csv")) {
            config.data.use_generator = false;
            config.data.csv_path = data.at("csv").get<std::string>();
        } else if (data.contains("generator")) {
            const json& gen = data["generator"];
            reject_unknown_keys(gen,
                                {"class_count", "confusable_pairs", "writers_right",
                                 "writers_left", "samples_per_writer_per_class", "noise_sigma",
                                 "seed"},
                                "data.generator");
            read_field(gen, "class_count", config.data.generator.class_count);
            read_field(gen, "confusable_pairs", config.data.generator.confusable_pairs);
            read_field(gen, "writers_right", config.data.generator.writers_right);
            read_field(gen, "writers_left", config.data.generator.writers_left);
            read_field(gen, "samples_per_writer_per_class",
                       config.data.generator.samples_per_writer_per_class);
            read_field(gen, "noise_sigma", config.data.generator.noise_sigma);
            read_field(gen, "seed", config.data.generator.seed);
        }
    }

    if (doc.contains("split")) {
        const json& split = doc["split"];
        reject_unknown_keys(split, {"mode", "folds", "seed"}, "split");
        if (split.contains("mode")) {
            const std::string mode = split.at("mode").get<std::string>();
            if (mode == "WD") {
                config.split.mode = SplitMode::WriterDependent;
            } else if (mode == "WI") {
                config.split.mode = SplitMode::WriterIndependent;
            } else {
                throw std::invalid_argument("config: split.mode must be WD or WI");
            }
        }
        read_field(split, "folds", config.split.folds);
        read_field(split, "seed", config.split.seed);
    }

    config.arch = Architecture::desk_scale(0);
    if (doc.contains("arch")) {
        const json& arch = doc["arch"];
        reject_unknown_keys(
            arch, {"preset", "class_count", "conv_blocks", "tcn", "input_steps", "input_channels"},
            "arch");
        read_field(arch, "preset", config.arch_preset);
        if (config.arch_preset == "desk") {
            config.arch = Architecture::desk_scale(0);
        } else if (config.arch_preset == "paper") {
            config.arch = Architecture::paper_scale(0);
        } else {
            throw std::invalid_argument("config: arch.preset must be desk or paper");
        }
        read_field(arch, "input_steps", config.arch.input_steps);
        read_field(arch, "input_channels", config.arch.input_channels);
        read_field(arch, "class_count", config.arch.class_count);
        if (arch.contains("conv_blocks")) {
            config.arch.conv_blocks.clear();
            for (const auto& block : arch.at("conv_blocks")) {
                reject_unknown_keys(block, {"filters", "kernel_size", "dropout_rate"},
                                    "arch.conv_blocks[]");
                ConvBlockSpec spec;
                read_field(block, "filters", spec.filters);
                read_field(block, "kernel_size", spec.kernel_size);
                read_field(block, "dropout_rate", spec.dropout_rate);
                config.arch.conv_blocks.push_back(spec);
            }
        }
        if (arch.contains("tcn")) {
            const json& tcn = arch["tcn"];
            reject_unknown_keys(tcn, {"channels", "kernel_size", "dilations"}, "arch.tcn");
            read_field(tcn, "channels", config.arch.tcn.channels);
            read_field(tcn, "kernel_size", config.arch.tcn.kernel_size);
            read_field(tcn, "dilations", config.arch.tcn.dilations);
        }
    }

    if (doc.contains("train")) {
        const json& train = doc["train"];
        reject_unknown_keys(train,
                            {"learning_rate", "momentum", "weight_decay", "epochs_max",
                             "batch_size", "early_stop_patience", "validation_fraction", "seed"},
                            "train");
        read_field(train, "learning_rate", config.train.learning_rate);
        read_field(train, "momentum", config.train.momentum);
        read_field(train, "weight_decay", config.train.weight_decay);
        read_field(train, "epochs_max", config.train.epochs_max);
        read_field(train, "batch_size", config.train.batch_size);
        read_field(train, "early_stop_patience", config.train.early_stop_patience);
        read_field(train, "validation_fraction", config.train.validation_fraction);
        read_field(train, "seed", config.train.seed);
    }

    if (doc.contains("swag")) {
        const json& swag = doc["swag"];
        reject_unknown_keys(swag,
                            {"burn_in_epochs", "snapshot_every_epochs", "max_rank",
                             "swa_learning_rate", "scale"},
                            "swag");
        read_field(swag, "burn_in_epochs", config.swag.burn_in_epochs);
        read_field(swag, "snapshot_every_epochs", config.swag.snapshot_every_epochs);
        read_field(swag, "max_rank", config.swag.max_rank);
        read_field(swag, "swa_learning_rate", config.swag.swa_learning_rate);
        read_field(swag, "scale", config.swag_scale);
    }

    if (doc.contains("ensemble")) {
        const json& ensemble = doc["ensemble"];
        reject_unknown_keys(ensemble, {"member_count", "base_seed"}, "ensemble");
        read_field(ensemble, "member_count", config.ensemble.member_count);
        read_field(ensemble, "base_seed", config.ensemble.base_seed);
    }

    if (doc.contains("eval")) {
        const json& eval = doc["eval"];
        reject_unknown_keys(eval, {"draws", "train_hand", "eval_hand", "fold", "on"}, "eval");
        read_field(eval, "draws", config.eval.draws);
        if (eval.contains("train_hand")) {
            config.eval.train_hand =
                hand_selector_from(eval.at("train_hand").get<std::string>(), "eval.train_hand");
        }
        if (eval.contains("eval_hand")) {
            config.eval.eval_hand =
                hand_selector_from(eval.at("eval_hand").get<std::string>(), "eval.eval_hand");
        }
        read_field(eval, "fold", config.eval.fold);
        if (eval.contains("on")) {
            const std::string on = eval.at("on").get<std::string>();
            if (on == "test") {
                config.eval.on = EvalTarget::Test;
            } else if (on == "train") {
                config.eval.on = EvalTarget::Train;
            } else if (on == "all") {
                config.eval.on = EvalTarget::All;
            } else {
                throw std::invalid_argument("config: eval.on must be test, train, or all");
            }
        }
    }

    if (doc.contains("report")) {
        const json& report = doc["report"];
        reject_unknown_keys(report, {"out_dir"}, "report");
        read_field(report, "out_dir", config.report.out_dir);
    }

    return config;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path,
                                        const std::vector<std::string>& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("config: cannot open " + path.string());
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text, overrides);
}

int thread_cap() {
    if (const char* env = std::getenv("UQPEN_THREADS")) {
        const int value = std::atoi(env);
        if (value >= 1) {
            return value;
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

Dataset load_experiment_dataset(const ExperimentConfig& config) {
    if (config.data.use_generator) {
        return generate(config.data.generator);
    }
    return load_csv(config.data.csv_path);
}

Dataset select_hand(const Dataset& dataset, HandSelector selector) {
    if (selector == HandSelector::Both) {
        return dataset;
    }
    std::vector<int> empty;
    Dataset out = filter_by_hand(
        dataset, selector == HandSelector::Right ? Hand::Right : Hand::Left, &empty);
    if (!empty.empty()) {
        std::cerr << "warning: hand filter left " << empty.size() << " classes empty\n";
    }
    return out;
}

Architecture resolve_architecture(const ExperimentConfig& config, int class_count) {
    Architecture arch = config.arch;
    if (arch.class_count == 0) {
        arch.class_count = class_count;
    }
    arch.validate();
    return arch;
}

namespace {

struct TrainSetup {
    Dataset dataset; // train-hand view
    std::vector<std::size_t> train_indices;
    Architecture arch;
};

TrainSetup prepare_training(const ExperimentConfig& config) {
    TrainSetup setup;
    const Dataset full = load_experiment_dataset(config);
    setup.dataset = select_hand(full, config.eval.train_hand);
    if (setup.dataset.samples.empty()) {
        throw std::invalid_argument("training: hand selector yields an empty training set");
    }
    const FoldSplit folds =
        split(setup.dataset, config.split.mode, config.split.folds, config.split.seed);
    if (config.eval.fold < 0 || config.eval.fold >= folds.fold_count) {
        throw std::invalid_argument("training: eval.fold out of range");
    }
    setup.train_indices = folds.folds[static_cast<std::size_t>(config.eval.fold)].train;
    setup.arch = resolve_architecture(config, setup.dataset.class_count);
    return setup;
}

void require_directory(const std::filesystem::path& dir, const std::string& what) {
    if (!std::filesystem::is_directory(dir)) {
        throw std::invalid_argument(what + ": directory does not exist: " + dir.string());
    }
}

} // namespace

void run_gen(const ExperimentConfig& config, const std::filesystem::path& out_csv) {
    const auto parent = out_csv.parent_path();
    if (!parent.empty() && !std::filesystem::is_directory(parent)) {
        throw std::invalid_argument("gen: directory does not exist: " + parent.string());
    }
    const Dataset dataset = load_experiment_dataset(config);
    save_csv(dataset, out_csv);
    const FoldSplit folds =
        split(dataset, config.split.mode, config.split.folds, config.split.seed);
    std::filesystem::path manifest = out_csv;
    manifest.replace_extension(".split.json");
    save_split(folds, manifest);

    std::size_t right = 0, left = 0;
    for (const auto& s : dataset.samples) {
        (s.hand == Hand::Right ? right : left) += 1;
    }
    std::cout << "samples " << dataset.samples.size() << " (right " << right << ", left " << left
              << "), classes " << dataset.class_count << "\n";
    std::cout << "wrote " << out_csv.string() << " and " << manifest.string() << "\n";
}

void run_train(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
    require_directory(out_dir, "train");
    const TrainSetup setup = prepare_training(config);
    const TrainResult result =
        train(setup.arch, setup.dataset, setup.train_indices, config.train, thread_cap());
    save_checkpoint(result.params, setup.arch, out_dir / "checkpoint.uqhw");
    save_history_csv(result.history, out_dir / "history.csv");
    std::cout << "trained " << result.history.size() << " epochs, wrote "
              << (out_dir / "checkpoint.uqhw").string() << "\n";
}

void run_swag_train(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
    require_directory(out_dir, "swag-train");
    if (config.swag.max_rank < 2) {
        throw std::invalid_argument("swag-train: max_rank must be at least 2");
    }
    const TrainSetup setup = prepare_training(config);
    const SwagTrainResult result = train_swag(setup.arch, setup.dataset, setup.train_indices,
                                              config.train, config.swag, thread_cap());
    const SwagPosterior posterior = build_posterior(result.stats, config.swag_scale);
    save_posterior(posterior, setup.arch, out_dir / "posterior.uqsp");
    save_history_csv(result.history, out_dir / "history.csv");
    std::cout << "collected " << result.stats.n_snapshots << " snapshots, wrote "
              << (out_dir / "posterior.uqsp").string() << "\n";
}

void run_ensemble_train(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
    require_directory(out_dir, "ensemble-train");
    const TrainSetup setup = prepare_training(config);
    const auto results = train_ensemble(setup.arch, setup.dataset, setup.train_indices,
                                        config.train, config.ensemble, thread_cap());
    for (std::size_t i = 0; i < results.size(); ++i) {
        char suffix[16];
        std::snprintf(suffix, sizeof(suffix), "%02zu", i);
        save_checkpoint(results[i].params, setup.arch,
                        out_dir / ("member_" + std::string(suffix) + ".uqhw"));
        save_history_csv(results[i].history,
                         out_dir / ("history_" + std::string(suffix) + ".csv"));
    }
    std::cout << "trained " << results.size() << " members into " << out_dir.string() << "\n";
}

void run_evaluate(const ExperimentConfig& config,
                  const std::vector<std::filesystem::path>& model_paths,
                  const std::filesystem::path& out_dir) {
    require_directory(out_dir, "evaluate");
    if (model_paths.empty()) {
        throw std::invalid_argument("evaluate: no model artifacts given");
    }
    const Dataset full = load_experiment_dataset(config);

    // Reconstruct the training view to exclude trained-on samples.
    const Dataset train_view = select_hand(full, config.eval.train_hand);
    std::set<int> trained_ids;
    if (!train_view.samples.empty()) {
        const FoldSplit folds =
            split(train_view, config.split.mode, config.split.folds, config.split.seed);
        if (config.eval.fold < 0 || config.eval.fold >= folds.fold_count) {
            throw std::invalid_argument("evaluate: eval.fold out of range");
        }
        for (std::size_t index : folds.folds[static_cast<std::size_t>(config.eval.fold)].train) {
            trained_ids.insert(train_view.samples[index].sample_id);
        }
    }

    std::vector<std::size_t> eval_indices;
    for (std::size_t i = 0; i < full.samples.size(); ++i) {
        const auto& sample = full.samples[i];
        const bool hand_ok =
            config.eval.eval_hand == HandSelector::Both ||
            (config.eval.eval_hand == HandSelector::Right && sample.hand == Hand::Right) ||
            (config.eval.eval_hand == HandSelector::Left && sample.hand == Hand::Left);
        const bool trained = trained_ids.count(sample.sample_id) > 0;
        const bool target_ok = config.eval.on == EvalTarget::All ||
                               (config.eval.on == EvalTarget::Test && !trained) ||
                               (config.eval.on == EvalTarget::Train && trained);
        if (hand_ok && target_ok) {
            eval_indices.push_back(i);
        }
    }
    if (eval_indices.empty()) {
        throw std::invalid_argument("evaluate: selector yields an empty test set");
    }

    // A UQSP artifact is a SWAG posterior; UQHW checkpoints form an ensemble.
    UncertaintyReport report;
    {
        std::ifstream probe(model_paths[0], std::ios::binary);
        if (!probe) {
            throw FormatError("evaluate: cannot open " + model_paths[0].string());
        }
        char magic[4] = {0, 0, 0, 0};
        probe.read(magic, 4);
        probe.close();
        if (std::string(magic, 4) == "UQSP") {
            if (model_paths.size() != 1) {
                throw std::invalid_argument("evaluate: exactly one posterior file expected");
            }
            auto [arch, posterior] = load_posterior(model_paths[0]);
            if (arch.class_count != full.class_count) {
                throw std::invalid_argument("evaluate: model class count mismatch");
            }
            const RngStream rng = RngStream(config.train.seed).split(0xe7a1);
            report = evaluate(arch, posterior, full, eval_indices, config.eval.draws, rng);
        } else {
            std::vector<ParamVector> members;
            Architecture arch;
            for (std::size_t i = 0; i < model_paths.size(); ++i) {
                auto [member_arch, params] = load_checkpoint(model_paths[i]);
                if (i == 0) {
                    arch = member_arch;
                } else if (param_count(member_arch) != param_count(arch)) {
                    throw std::invalid_argument("evaluate: ensemble members disagree on size");
                }
                members.push_back(std::move(params));
            }
            if (arch.class_count != full.class_count) {
                throw std::invalid_argument("evaluate: model class count mismatch");
            }
            report = evaluate(arch, members, full, eval_indices);
        }
    }

    save_report(report, out_dir);

    std::vector<PredictionOutcome> outcomes;
    outcomes.reserve(report.samples.size());
    double mean_tu = 0.0, mean_au = 0.0, mean_eu = 0.0;
    for (const auto& sample : report.samples) {
        outcomes.push_back({sample.confidence, sample.correct});
        mean_tu += sample.total_bits;
        mean_au += sample.aleatoric_bits;
        mean_eu += sample.epistemic_bits;
    }
    const double inv_n = 1.0 / static_cast<double>(report.samples.size());
    const CalibrationTable table = calibrate(outcomes, 10);
    save_calibration_csv(table, out_dir / "calibration.csv");

    const auto sweep = entropy_threshold_sweep(report, default_threshold_grid(full.class_count));
    save_sweep_csv(sweep, out_dir / "sweep.csv");

    json summary;
    summary["accuracy"] = report.accuracy;
    summary["ece"] = table.ece;
    summary["mean_tu"] = mean_tu * inv_n;
    summary["mean_au"] = mean_au * inv_n;
    summary["mean_eu"] = mean_eu * inv_n;
    {
        std::ofstream out(out_dir / "summary.json", std::ios::binary);
        out << summary.dump(2) << "\n";
    }
    std::cout << "evaluated " << report.samples.size() << " samples: accuracy "
              << format_double(report.accuracy) << ", ece " << format_double(table.ece) << "\n";
}

void run_report(const std::filesystem::path& bundle_dir, const std::filesystem::path& out_dir) {
    require_directory(out_dir, "report");
    if (!std::filesystem::is_directory(bundle_dir)) {
        throw std::invalid_argument("report: bundle directory does not exist: " +
                                    bundle_dir.string());
    }

    // Calibration -> reliability diagram.
    const auto calibration_path = bundle_dir / "calibration.csv";
    std::ifstream cal_in(calibration_path, std::ios::binary);
    if (!cal_in) {
        throw std::invalid_argument("report: missing file " + calibration_path.string());
    }
    CalibrationTable table;
    {
        std::string line;
        std::getline(cal_in, line); // header
        long line_no = 1;
        while (std::getline(cal_in, line)) {
            ++line_no;
            if (line.empty()) continue;
            const std::string ctx = calibration_path.string() + " line " + std::to_string(line_no);
            std::vector<std::string> fields;
            std::size_t start = 0;
            while (true) {
                const auto comma = line.find(',', start);
                fields.push_back(
                    line.substr(start, comma == std::string::npos ? comma : comma - start));
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
            if (fields.size() != 5) {
                throw ParseError(ctx + ": expected 5 columns");
            }
            CalibrationBin bin;
            bin.lower = parse_double(fields[0], ctx);
            bin.upper = parse_double(fields[1], ctx);
            bin.count = static_cast<std::size_t>(parse_long(fields[2], ctx));
            bin.confidence = parse_double(fields[3], ctx);
            bin.accuracy = parse_double(fields[4], ctx);
            table.bins.push_back(bin);
            table.n += bin.count;
        }
        table.bin_count = static_cast<int>(table.bins.size());
        for (const auto& bin : table.bins) {
            if (bin.count > 0) {
                table.ece += static_cast<double>(bin.count) / static_cast<double>(table.n) *
                             std::abs(bin.accuracy - bin.confidence);
            }
        }
    }
    write_reliability_svg(table, out_dir / "reliability.svg");

    // Heatmaps share one color scale across all three matrices.
    std::vector<std::string> class_names;
    const Matrix aleatoric = load_matrix_csv(bundle_dir / "aleatoric.csv", class_names);
    const Matrix epistemic = load_matrix_csv(bundle_dir / "epistemic.csv", class_names);
    const Matrix confusion = load_matrix_csv(bundle_dir / "confusion.csv", class_names);
    double vmin = aleatoric.data()[0], vmax = aleatoric.data()[0];
    for (const Matrix* m : {&aleatoric, &epistemic, &confusion}) {
        for (double v : m->data()) {
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
        }
    }
    write_heatmap_svg(aleatoric, class_names, "aleatoric uncertainty", vmin, vmax,
                      out_dir / "heatmap_aleatoric.svg");
    write_heatmap_svg(epistemic, class_names, "epistemic uncertainty", vmin, vmax,
                      out_dir / "heatmap_epistemic.svg");
    write_heatmap_svg(confusion, class_names, "confusion (percent)", vmin, vmax,
                      out_dir / "heatmap_confusion.svg");

    // Per-class bars.
    {
        const auto path = bundle_dir / "per_class.csv";
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw std::invalid_argument("report: missing file " + path.string());
        }
        std::vector<std::string> names;
        std::vector<double> tu, au, eu;
        std::string line;
        std::getline(in, line);
        long line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            const std::string ctx = path.string() + " line " + std::to_string(line_no);
            std::vector<std::string> fields;
            std::size_t start = 0;
            while (true) {
                const auto comma = line.find(',', start);
                fields.push_back(
                    line.substr(start, comma == std::string::npos ? comma : comma - start));
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
            if (fields.size() != 5) {
                throw ParseError(ctx + ": expected 5 columns");
            }
            names.push_back(fields[0]);
            tu.push_back(parse_double(fields[2], ctx));
            au.push_back(parse_double(fields[3], ctx));
            eu.push_back(parse_double(fields[4], ctx));
        }
        write_class_bars_svg(names, tu, au, eu, out_dir / "per_class_uncertainty.svg");
    }

    // Entropy sweep.
    {
        const auto path = bundle_dir / "sweep.csv";
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw std::invalid_argument("report: missing file " + path.string());
        }
        std::vector<SweepRow> rows;
        std::string line;
        std::getline(in, line);
        long line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            const std::string ctx = path.string() + " line " + std::to_string(line_no);
            std::vector<std::string> fields;
            std::size_t start = 0;
            while (true) {
                const auto comma = line.find(',', start);
                fields.push_back(
                    line.substr(start, comma == std::string::npos ? comma : comma - start));
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
            if (fields.size() != 5) {
                throw ParseError(ctx + ": expected 5 columns");
            }
            SweepRow row;
            row.threshold = parse_double(fields[0], ctx);
            if (fields[1] != "nan") {
                row.acc_below = parse_double(fields[1], ctx);
            }
            if (fields[2] != "nan") {
                row.acc_above = parse_double(fields[2], ctx);
            }
            row.n_below = static_cast<std::size_t>(parse_long(fields[3], ctx));
            row.n_above = static_cast<std::size_t>(parse_long(fields[4], ctx));
            rows.push_back(row);
        }
        write_sweep_svg(rows, out_dir / "entropy_sweep.svg");
    }

    std::cout << "wrote figures to " << out_dir.string() << "\n";
}

} // namespace uqpen
