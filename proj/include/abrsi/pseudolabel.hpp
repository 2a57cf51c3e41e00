#pragma once

// The four target voters and the hybrid hard/soft assignment built from them.

#include <optional>
#include <string>
#include <vector>

#include "abrsi/numerics.hpp"

namespace abrsi {

using Votes = std::vector<std::optional<int>>;

// Row-wise argmax as a 1-based category id; ties go to the lowest id.
std::vector<int> vote_nn(const Matrix& probs);

enum class SrRule { unanimous, majority };
enum class SrMetric { euclidean, cosine };

struct SrOptions {
    std::size_t k_neighbors = 3;
    SrRule rule = SrRule::unanimous;
    SrMetric metric = SrMetric::euclidean;
};

// Label of the k nearest source rows when they agree (all of them, or a strict
// majority), otherwise absent. Equal distances are broken by source index.
Votes vote_sr(const Matrix& tgt_feats, const Matrix& src_feats, const std::vector<int>& src_labels,
              const SrOptions& opts = {});

// k-means over the target rows; every member of a cluster votes the cluster's
// most common NN label. A tied mode leaves the whole cluster absent.
Votes vote_tr(const Matrix& tgt_feats, const std::vector<int>& nn_labels, std::size_t k_clusters,
              Rng& rng);

struct VoterMask {
    bool rs = true;
    bool sr = true;
    bool tr = true;

    std::size_t count() const { return 1 + rs + sr + tr; }
    std::string describe() const;
};

struct PlRecord {
    int nn = 0;
    int rs = 0;
    std::optional<int> sr;
    std::optional<int> tr;
    std::optional<int> hard;         // set iff every active voter agrees
    std::vector<double> soft_probs;  // classifier row, only when not hard

    bool is_hard() const { return hard.has_value(); }
};

struct PlSummary {
    std::size_t n = 0;
    std::size_t hard_count = 0;
    double hard_ratio = 0.0;
    // Fraction of rows where the voter was present and agreed with NN.
    double rs_agreement = 0.0;
    double sr_agreement = 0.0;
    double tr_agreement = 0.0;
    double sr_present = 0.0;
    double tr_present = 0.0;
    std::optional<double> hard_accuracy;  // only with evaluation truth
};

struct PlAssignment {
    std::vector<PlRecord> records;
    PlSummary summary;

    std::vector<std::optional<int>> hard_labels() const;
};

// Inactive voters in `mask` are ignored (their vote vectors may be empty).
// `truth` is evaluation-only and feeds nothing but summary.hard_accuracy.
PlAssignment assemble(const std::vector<int>& nn, const std::vector<int>& rs, const Votes& sr,
                      const Votes& tr, const Matrix& probs, const VoterMask& mask = {},
                      const std::vector<int>* truth = nullptr);

}  // namespace abrsi
