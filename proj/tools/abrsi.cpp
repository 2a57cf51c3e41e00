// abrsi: batch entry point for training, ablation groups, sensitivity sweeps,
// CSV preprocessing and report aggregation.
//
//   abrsi train  --config exp.json [--seed 2 --seed 3] [--ablation B1] [--binary]
//   abrsi ablate --config exp.json --group A
//   abrsi sweep  --config exp.json --param rho_max --values 0.01,0.05,0.1,0.2
//   abrsi prep   --recipe recipes/nsl_kdd.json --input KDDTrain+.csv --output kdd.csv
//   abrsi report --dir runs/exp
//
// Output goes to the config's output_dir, under $ABRSI_OUTPUT_ROOT when set.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "abrsi/experiment.hpp"

namespace {

struct Overrides {
    std::string config;
    std::vector<std::uint64_t> seeds;
    std::string ablation;
    bool binary = false;
    std::string output;
    std::optional<std::size_t> epochs;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config,-c", o.config, "Experiment config (JSON)")->required();
    cmd->add_option("--seed,-s", o.seeds, "Run seed; repeat for several (replaces the config's seeds)");
    cmd->add_option("--ablation", o.ablation, "Ablation preset, e.g. A1 or full");
    cmd->add_flag("--binary", o.binary, "Collapse intrusion categories to benign vs intrusion");
    cmd->add_option("--output,-o", o.output, "Output directory (replaces output_dir)");
    cmd->add_option("--epochs", o.epochs, "Training epochs");
}

abrsi::ExperimentConfig load(const Overrides& o) {
    auto cfg = abrsi::load_experiment(o.config);
    if (!o.seeds.empty()) cfg.seeds = o.seeds;
    if (!o.ablation.empty()) cfg.training.apply_ablation(o.ablation);
    if (o.binary) cfg.data.binary = true;
    if (!o.output.empty()) cfg.output_dir = o.output;
    if (o.epochs) cfg.training.epochs = *o.epochs;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ABRSI heterogeneous domain adaptation experiments"};
    app.require_subcommand(1);

    Overrides train_o, ablate_o, sweep_o;
    auto* train = app.add_subcommand("train", "Train on every seed and aggregate the finals");
    add_overrides(train, train_o);

    auto* ablate = app.add_subcommand("ablate", "Full model vs one ablation group under the same seeds");
    add_overrides(ablate, ablate_o);
    std::string group;
    ablate->add_option("--group,-g", group, "Ablation group A..F")
        ->required()
        ->check(CLI::IsMember({"A", "B", "C", "D", "E", "F"}));

    auto* sweep = app.add_subcommand("sweep", "Final accuracy against one training parameter");
    add_overrides(sweep, sweep_o);
    std::string param;
    std::vector<double> values;
    sweep->add_option("--param,-p", param, "Training parameter name")->required();
    sweep->add_option("--values,-v", values, "Comma-separated values")->required()->delimiter(',');

    auto* prep = app.add_subcommand("prep", "Preprocess one CSV with a recipe");
    std::string recipe, input, output;
    double fraction = 1.0;
    std::uint64_t prep_seed = 1;
    prep->add_option("--recipe,-r", recipe, "Recipe JSON")->required();
    prep->add_option("--input,-i", input, "Raw CSV")->required();
    prep->add_option("--output,-o", output, "Preprocessed CSV")->required();
    prep->add_option("--fraction", fraction, "Stratified fraction to keep")->check(CLI::Range(0.0, 1.0));
    prep->add_option("--seed", prep_seed, "Sampling seed");

    auto* report = app.add_subcommand("report", "Collect summary.json files into one CSV");
    std::string report_dir, report_out;
    report->add_option("--dir,-d", report_dir, "Directory searched recursively")->required();
    report->add_option("--output,-o", report_out, "CSV path (stdout when omitted)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            const auto cfg = load(train_o);
            const auto out = abrsi::resolve_output_dir(cfg);
            const auto agg = abrsi::cmd_train(cfg, out, &std::cerr);
            if (agg["metrics"].contains("accuracy")) {
                const auto& a = agg["metrics"]["accuracy"];
                std::printf("target accuracy %.4f +- %.4f over %zu seed(s)\n", a["mean"].get<double>(),
                            a["std"].get<double>(), cfg.seeds.size());
            }
            std::printf("wrote %s\n", (out / "aggregate.json").string().c_str());
        } else if (*ablate) {
            const auto cfg = load(ablate_o);
            const auto out = abrsi::resolve_output_dir(cfg);
            const auto rows = abrsi::cmd_ablate(cfg, group[0], out, &std::cerr);
            std::fputs(abrsi::ablation_csv(rows).c_str(), stdout);
            std::printf("wrote %s\n", (out / ("ablation_" + group + ".csv")).string().c_str());
        } else if (*sweep) {
            const auto cfg = load(sweep_o);
            const auto out = abrsi::resolve_output_dir(cfg);
            const auto rows = abrsi::cmd_sweep(cfg, param, values, out, &std::cerr);
            std::fputs(abrsi::sweep_csv(rows).c_str(), stdout);
            std::printf("wrote %s\n", (out / ("sweep_" + param + ".csv")).string().c_str());
        } else if (*prep) {
            const auto rep = abrsi::cmd_prep(recipe, input, output, fraction, prep_seed);
            std::printf("%s\n", abrsi::to_json(rep).dump(2).c_str());
        } else if (*report) {
            const auto csv = abrsi::cmd_report(report_dir);
            if (report_out.empty()) {
                std::fputs(csv.c_str(), stdout);
            } else {
                std::ofstream f(report_out);
                if (!f) throw std::runtime_error("cannot write " + report_out);
                f << csv;
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "abrsi: %s\n", e.what());
        return 1;
    }
    return 0;
}
