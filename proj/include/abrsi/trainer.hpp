#pragma once

// The epoch loop: project, refit the recommenders, vote, evaluate the weighted
// objective and take one fused minimax step.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "abrsi/data.hpp"
#include "abrsi/eval.hpp"
#include "abrsi/losses.hpp"
#include "abrsi/network.hpp"
#include "abrsi/pseudolabel.hpp"
#include "abrsi/recommender.hpp"
#include "json.hpp"

namespace abrsi {

struct AblationFlags {
    bool disable_abr = false;
    bool disable_rs_vote = false;
    bool disable_sr_vote = false;
    bool disable_tr_vote = false;
    bool hard_only = false;
    bool soft_only = false;
    bool disable_div = false;
    bool disable_te = false;
    bool disable_ekl = false;
    bool domain_discriminator_instead = false;
    bool prob_matching_instead = false;
    bool disable_ek_prev = false;
    bool disable_ek_rev = false;

    void validate() const;
    bool operator==(const AblationFlags&) const = default;
};

// "full", or a group member such as "A1" .. "F2". Throws on unknown names.
AblationFlags ablation_preset(const std::string& name);
// Members of group 'A'..'F', without "full".
std::vector<std::string> ablation_group(char group);
std::string ablation_description(const std::string& name);

struct TrainConfig {
    double rho_max = 0.1;
    double delta = 1.0;
    double tau = 0.005;
    double gamma = 0.1;
    std::size_t top_n = 3;
    std::size_t sr_neighbors = 3;
    double alpha_max = 8.0;
    double alpha_min = 4.0;
    double psi = -0.3;
    double phi = -0.05;
    std::size_t lsi_rank = 32;
    std::size_t hidden_width = 128;
    std::size_t shared_width = 32;
    double lr = 1e-3;
    std::size_t epochs = 200;
    std::uint64_t seed = 1;
    std::string ablation = "full";
    AblationFlags flags;

    // Source-only baseline: no pseudo labels or recommenders are computed at all.
    bool source_only = false;

    FoldIn fold_in = FoldIn::scaled;
    SrRule sr_rule = SrRule::unanimous;
    SrMetric sr_metric = SrMetric::euclidean;
    EklGrouping ekl_grouping = EklGrouping::sum_variants;
    bool abr_source_side = false;
    std::size_t tr_clusters = 0;  // 0: one cluster per category
    // Evaluate target accuracy every epoch when truth is supplied.
    bool track_target_accuracy = true;

    void validate() const;
    // Sets `ablation` and `flags` together.
    void apply_ablation(const std::string& name);
    static TrainConfig source_only_baseline(TrainConfig base);
};

nlohmann::json to_json(const TrainConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
// Names accepted by set_config_value, i.e. the sweepable fields.
std::vector<std::string> config_fields();
void set_config_value(TrainConfig& cfg, const std::string& name, double value);

struct LossBreakdown {
    double l_sup = 0.0;
    double l_abr = 0.0;
    double l_div = 0.0;
    double l_te = 0.0;
    double l_ekl = 0.0;
    // Effective weights after schedules and ablation switches.
    double w_abr = 0.0;
    double w_div = 0.0;
    double w_te = 0.0;
    double w_ekl = 0.0;
    double total = 0.0;

    double weighted_sum() const {
        return l_sup + w_abr * l_abr + w_div * l_div + w_te * l_te + w_ekl * l_ekl;
    }
    std::string describe() const;
};

// Everything discrete that an epoch decides before the losses: recommender
// selections and pseudo labels. Held fixed while differentiating.
struct EpochPlan {
    std::size_t epoch = 0;
    Matrix probs_t;  // classifier output on the target at plan time
    std::optional<BiRecommendation> rec;
    std::optional<PlAssignment> pl;
    std::vector<std::optional<int>> hard;  // per target row
};

struct Objective {
    LossBreakdown loss;
    ParamGrads grads;      // d(total)/d(theta), discriminator included, not reversed
    Matrix ek;             // K' x K, empty when EK was not formed
    std::vector<int> ek_categories;
    double d_accuracy = 0.0;
    std::size_t abr_categories = 0;
    std::vector<std::string> warnings;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double rho = 0.0;
    double alpha = 0.0;
    LossBreakdown loss;
    double d_accuracy = 0.0;
    double hard_ratio = 0.0;
    std::optional<double> hard_accuracy;
    double rs_agreement = 0.0;
    double sr_agreement = 0.0;
    double tr_agreement = 0.0;
    std::size_t abr_categories = 0;
    std::optional<double> target_accuracy;
    double seconds = 0.0;
};

struct FinalEvaluation {
    std::optional<ClassificationMetrics> target;
    double source_accuracy = 0.0;
    double certainty_70 = 0.0;
    // Hard pseudo labels of the final model: the configured voters vs NN alone.
    std::optional<PlQuality> pl_voting;
    std::optional<PlQuality> pl_nn_only;
    double inference_seconds_per_instance = 0.0;
};

struct RunReport {
    nlohmann::json config;
    std::vector<EpochRecord> epochs;
    FinalEvaluation final;
    std::vector<std::string> warnings;
    double total_seconds = 0.0;

    // With include_timing false the output is a pure function of config and seed.
    std::string csv(bool include_timing = true) const;
    nlohmann::json summary(bool include_timing = true) const;
    void write(const std::filesystem::path& dir) const;  // report.csv + summary.json
};

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Trainer {
public:
    // `eval_truth` only feeds report diagnostics; no parameter update reads it.
    Trainer(const DomainDataset& source, const DomainDataset& target, TrainConfig cfg,
            const TargetTruth* eval_truth = nullptr);

    const TrainConfig& config() const { return cfg_; }
    const NetworkParams& params() const { return params_; }
    NetworkParams& mutable_params() { return params_; }
    const EkState& ek_state() const { return ek_; }
    std::size_t epoch() const { return epoch_; }
    bool done() const { return epoch_ >= cfg_.epochs; }
    const Schedules& schedules() const { return sched_; }

    EpochPlan plan_epoch(std::size_t epoch) const;
    Objective evaluate(const EpochPlan& plan, bool want_grads) const;
    EpochRecord step();
    RunReport run();
    FinalEvaluation final_evaluation() const;

    Checkpoint checkpoint() const;
    void resume(const Checkpoint& ck);

private:
    EpochPlan make_plan(std::size_t epoch, bool with_pl) const;
    VoterMask voter_mask() const;
    bool needs_recommender() const;

    const DomainDataset& source_;
    const DomainDataset& target_;
    const TargetTruth* truth_;
    TrainConfig cfg_;
    Schedules sched_;
    NetworkParams params_;
    AdamState adam_;
    EkState ek_;
    Rng init_rng_;
    std::size_t epoch_ = 0;
    std::size_t k_ = 0;
    std::vector<EpochRecord> history_;
    std::vector<std::string> warnings_;
};

struct TrainResult {
    NetworkParams params;
    RunReport report;
};

TrainResult train(const DomainDataset& source, const DomainDataset& target, const TrainConfig& cfg,
                  const TargetTruth* eval_truth = nullptr);

}  // namespace abrsi
