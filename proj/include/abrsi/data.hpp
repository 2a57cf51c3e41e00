#pragma once

// Domain datasets, CSV preprocessing recipes, label alignment between a
// source and a target domain, and a synthetic heterogeneous domain pair.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "abrsi/numerics.hpp"

namespace abrsi {

enum class DomainTag { source, target };

std::string to_string(DomainTag tag);

// Category ids are 1-based: every label lies in [1, k_categories].
struct DomainDataset {
    Matrix features;                         // n x d
    std::optional<std::vector<int>> labels;  // length n when present
    DomainTag tag = DomainTag::source;
    std::size_t k_categories = 0;

    std::size_t dim() const noexcept { return features.cols(); }
    std::size_t n_instances() const noexcept { return features.rows(); }
    bool labelled() const noexcept { return labels.has_value(); }

    // Throws std::invalid_argument when the label invariants do not hold.
    void validate() const;
};

// Ground-truth target labels. Kept apart from DomainDataset so the trainer
// can only ever see an unlabelled target.
class TargetTruth {
public:
    TargetTruth() = default;
    TargetTruth(std::vector<int> labels, std::size_t k_categories);

    const std::vector<int>& labels() const noexcept { return labels_; }
    std::size_t size() const noexcept { return labels_.size(); }
    std::size_t k_categories() const noexcept { return k_; }
    // Empirical category distribution (length K).
    std::vector<double> distribution() const;

private:
    std::vector<int> labels_;
    std::size_t k_ = 0;
};

// Splits a labelled target dataset into its unlabelled training view and
// the evaluation-only truth.
std::pair<DomainDataset, TargetTruth> split_truth(DomainDataset labelled_target);

struct PreprocessRecipe {
    std::string name;
    std::vector<std::string> selected_features;
    std::string label_column = "label";
    // column -> (raw value -> numeric code)
    std::map<std::string, std::map<std::string, double>> categorical_maps;
    // raw label -> category id in [1, K]
    std::map<std::string, int> label_map;
    bool binary_mode = false;
    // Category that stays "benign" when labels collapse to two classes.
    int benign_category = 1;

    std::size_t k_categories() const;
    void validate() const;

    static PreprocessRecipe load(const std::filesystem::path& path);
};

struct LoadReport {
    std::string path;
    std::size_t rows_read = 0;
    std::size_t malformed_rows = 0;
    std::size_t unmapped_labels = 0;
    std::size_t duplicates_removed = 0;
    std::size_t rows_kept = 0;
    std::vector<std::string> warnings;
};

// Reads a header-first CSV, keeps recipe columns, maps categoricals and
// labels, drops duplicate rows and min-max scales every column to [0, 1]
// (constant columns become 0).
DomainDataset load_csv(const std::filesystem::path& path, const PreprocessRecipe& recipe,
                       DomainTag tag, LoadReport* report = nullptr);

// Per-column min-max scaling in place; constant columns map to 0.
void minmax_scale(Matrix& m);

// Draws `fraction` of every category (at least one instance per non-empty
// category) without replacement.
DomainDataset stratified_sample(const DomainDataset& data, double fraction, Rng& rng);

struct LabelAlignment {
    // Domain category id -> shared category id. Empty maps mean identity.
    std::map<int, int> source_to_shared;
    std::map<int, int> target_to_shared;
    bool binary_mode = false;
    int benign_shared = 1;
};

struct AlignedPair {
    DomainDataset source;
    DomainDataset target;  // unlabelled
    TargetTruth truth;
    std::size_t k_categories = 0;
    std::size_t dropped_source = 0;
    std::size_t dropped_target = 0;
};

// Restricts both domains to the categories they share, renumbers those to
// 1..K, and optionally collapses every non-benign category into one.
AlignedPair align_labels(const DomainDataset& source, const DomainDataset& target,
                         const TargetTruth& truth, const LabelAlignment& alignment);

struct SynthOptions {
    std::size_t k = 4;
    std::size_t d_s = 20;
    std::size_t d_t = 12;
    std::size_t n_s = 2000;
    std::size_t n_t = 2000;
    double separation = 6.0;
    double feature_noise = 0.1;
    // Seeds for the two latent-to-feature maps; drawn from the main rng when unset.
    std::optional<std::uint64_t> source_map_seed;
    std::optional<std::uint64_t> target_map_seed;
};

struct SynthPair {
    DomainDataset source;
    DomainDataset target;
    TargetTruth truth;
    Matrix source_latents;
    Matrix target_latents;
};

SynthPair synth_pair(Rng& rng, const SynthOptions& opts);

}  // namespace abrsi
