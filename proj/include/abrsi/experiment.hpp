#pragma once

// Config-driven experiment runs on top of the trainer: data preparation,
// multi-seed training, ablation tables, sensitivity sweeps and report
// aggregation. The CLI is a thin shell around these.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "abrsi/data.hpp"
#include "abrsi/trainer.hpp"
#include "json.hpp"

namespace abrsi {

struct DataSpec {
    enum class Kind { synthetic, csv };
    Kind kind = Kind::synthetic;

    SynthOptions synth;
    // Seed for synth_pair and for subsampling; the run seed when unset.
    std::optional<std::uint64_t> data_seed;

    std::filesystem::path source_path;
    std::filesystem::path target_path;
    std::filesystem::path source_recipe;
    std::filesystem::path target_recipe;
    LabelAlignment alignment;
    bool binary = false;
    // Stratified fraction kept from each domain after loading.
    double fraction = 1.0;
};

struct ExperimentConfig {
    std::string name = "experiment";
    DataSpec data;
    TrainConfig training;
    std::vector<std::uint64_t> seeds{1};
    std::filesystem::path output_dir = "runs";

    // Throws std::invalid_argument on bad values and std::runtime_error naming
    // the path when a referenced file is missing.
    void validate() const;
};

// Relative data and recipe paths resolve against `base_dir`.
ExperimentConfig experiment_from_json(const nlohmann::json& j,
                                      const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

// output_dir, placed under $ABRSI_OUTPUT_ROOT when that is set and the
// directory is relative.
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg);

struct PreparedData {
    AlignedPair pair;
    std::vector<LoadReport> loads;  // empty for synthetic data
};

nlohmann::json to_json(const LoadReport& r);

PreparedData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed);

struct SeedRun {
    std::uint64_t seed = 0;
    RunReport report;
    Checkpoint checkpoint;  // final state, resumable
    nlohmann::json data;    // provenance: sizes, dropped and deduplicated rows
};

// One training run on the data prepared for `seed`. `training` overrides the
// config's training section (used by ablations and sweeps).
SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                 const std::optional<TrainConfig>& training = std::nullopt);

// Mean and population std over per-seed summaries of every final metric.
nlohmann::json aggregate(const std::vector<nlohmann::json>& summaries);

// Runs every seed and writes <out>/seed_<s>/{report.csv,summary.json,
// checkpoint.json,experiment.json} plus <out>/aggregate.json.
nlohmann::json cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out,
                         std::ostream* log = nullptr);

struct AblationRow {
    std::string variant;
    std::string description;
    std::vector<double> accuracy;  // per seed
    std::vector<double> f1;
    std::vector<std::optional<double>> auc;
    std::vector<std::optional<double>> hard_accuracy;
    std::vector<std::optional<double>> hellinger;
};

// "full" followed by every member of `group`, all under the same seeds.
std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, char group,
                                      std::ostream* log = nullptr);
std::string ablation_csv(const std::vector<AblationRow>& rows);
std::vector<AblationRow> cmd_ablate(const ExperimentConfig& cfg, char group,
                                    const std::filesystem::path& out, std::ostream* log = nullptr);

struct SweepRow {
    std::string param;
    double value = 0.0;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    double f1 = 0.0;
    std::optional<double> auc;
};

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const std::string& param,
                                const std::vector<double>& values, std::ostream* log = nullptr);
std::string sweep_csv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg, const std::string& param,
                                const std::vector<double>& values,
                                const std::filesystem::path& out, std::ostream* log = nullptr);

// Loads one CSV with a recipe, optionally subsamples, and writes the scaled
// features with the recipe's label names plus a matching recipe for reuse
// (<output> and <output stem>.recipe.json).
LoadReport cmd_prep(const std::filesystem::path& recipe, const std::filesystem::path& input,
                    const std::filesystem::path& output, double fraction = 1.0,
                    std::uint64_t seed = 1);

// Collects every summary.json under `root` into a flat CSV, one row per run.
std::string cmd_report(const std::filesystem::path& root);

}  // namespace abrsi
