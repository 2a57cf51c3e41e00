#include "abrsi/pseudolabel.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>

namespace abrsi {

std::vector<int> vote_nn(const Matrix& probs) {
    std::vector<int> out(probs.rows());
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        const auto row = probs.row(i);
        if (row.empty()) throw DimensionError("vote_nn: zero categories");
        std::size_t best = 0;
        for (std::size_t k = 1; k < row.size(); ++k)
            if (row[k] > row[best]) best = k;
        out[i] = static_cast<int>(best) + 1;
    }
    return out;
}

Votes vote_sr(const Matrix& tgt_feats, const Matrix& src_feats, const std::vector<int>& src_labels,
              const SrOptions& opts) {
    if (tgt_feats.cols() != src_feats.cols())
        throw DimensionError("vote_sr: target " + tgt_feats.shape() + " vs source " +
                             src_feats.shape());
    if (src_labels.size() != src_feats.rows())
        throw DimensionError("vote_sr: label count mismatch");
    const std::size_t kn = opts.k_neighbors;
    if (kn == 0) throw std::invalid_argument("vote_sr: k_neighbors must be at least 1");
    if (kn > src_feats.rows())
        throw std::invalid_argument("vote_sr: k_neighbors " + std::to_string(kn) + " exceeds " +
                                    std::to_string(src_feats.rows()) + " source instances");

    std::vector<double> src_norm(src_feats.rows());
    if (opts.metric == SrMetric::cosine)
        for (std::size_t j = 0; j < src_feats.rows(); ++j) src_norm[j] = norm2(src_feats.row(j));

    Votes out(tgt_feats.rows());
    std::vector<double> dist(src_feats.rows());
    std::vector<std::size_t> idx(src_feats.rows());
    for (std::size_t i = 0; i < tgt_feats.rows(); ++i) {
        const auto t = tgt_feats.row(i);
        if (opts.metric == SrMetric::euclidean) {
            for (std::size_t j = 0; j < src_feats.rows(); ++j)
                dist[j] = squared_distance(t, src_feats.row(j));
        } else {
            const double tn = norm2(t);
            for (std::size_t j = 0; j < src_feats.rows(); ++j) {
                const double den = tn * src_norm[j];
                dist[j] = den < 1e-12 ? 1.0 : 1.0 - dot(t, src_feats.row(j)) / den;
            }
        }
        std::iota(idx.begin(), idx.end(), 0);
        std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(kn), idx.end(),
                          [&](std::size_t a, std::size_t b) {
                              return dist[a] != dist[b] ? dist[a] < dist[b] : a < b;
                          });
        std::map<int, std::size_t> tally;
        for (std::size_t r = 0; r < kn; ++r) ++tally[src_labels[idx[r]]];
        for (const auto& [label, count] : tally) {
            const bool ok = opts.rule == SrRule::unanimous ? count == kn : 2 * count > kn;
            if (ok) out[i] = label;
        }
    }
    return out;
}

Votes vote_tr(const Matrix& tgt_feats, const std::vector<int>& nn_labels, std::size_t k_clusters,
              Rng& rng) {
    if (nn_labels.size() != tgt_feats.rows())
        throw DimensionError("vote_tr: label count mismatch");
    if (k_clusters == 0) throw std::invalid_argument("vote_tr: k_clusters must be at least 1");
    const auto km = kmeans(tgt_feats, k_clusters, rng);

    std::vector<std::map<int, std::size_t>> tally(k_clusters);
    for (std::size_t i = 0; i < nn_labels.size(); ++i) ++tally[km.assignments[i]][nn_labels[i]];
    std::vector<std::optional<int>> cluster_label(k_clusters);
    for (std::size_t c = 0; c < k_clusters; ++c) {
        std::size_t top = 0;
        bool tied = false;
        for (const auto& [label, count] : tally[c]) {
            if (count > top) {
                top = count;
                cluster_label[c] = label;
                tied = false;
            } else if (count == top) {
                tied = true;
            }
        }
        if (tied) cluster_label[c].reset();
    }
    Votes out(tgt_feats.rows());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = cluster_label[km.assignments[i]];
    return out;
}

std::string VoterMask::describe() const {
    std::string s = "NN";
    if (rs) s += "+RS";
    if (sr) s += "+SR";
    if (tr) s += "+TR";
    return s;
}

std::vector<std::optional<int>> PlAssignment::hard_labels() const {
    std::vector<std::optional<int>> out(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) out[i] = records[i].hard;
    return out;
}

PlAssignment assemble(const std::vector<int>& nn, const std::vector<int>& rs, const Votes& sr,
                      const Votes& tr, const Matrix& probs, const VoterMask& mask,
                      const std::vector<int>* truth) {
    const std::size_t n = nn.size();
    auto check = [n](std::size_t got, const char* what) {
        if (got != n)
            throw DimensionError(std::string("assemble: ") + what + " has " + std::to_string(got) +
                                 " entries for " + std::to_string(n) + " target instances");
    };
    check(probs.rows(), "probs");
    if (mask.rs) check(rs.size(), "rs");
    if (mask.sr) check(sr.size(), "sr");
    if (mask.tr) check(tr.size(), "tr");
    if (truth) check(truth->size(), "truth");

    PlAssignment out;
    out.records.resize(n);
    std::size_t rs_agree = 0, sr_agree = 0, tr_agree = 0, sr_present = 0, tr_present = 0;
    std::size_t hard_correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        PlRecord& r = out.records[i];
        r.nn = nn[i];
        if (mask.rs) r.rs = rs[i];
        if (mask.sr) r.sr = sr[i];
        if (mask.tr) r.tr = tr[i];
        bool agree = true;
        if (mask.rs) {
            rs_agree += r.rs == r.nn;
            agree = agree && r.rs == r.nn;
        }
        if (mask.sr) {
            sr_present += r.sr.has_value();
            sr_agree += r.sr == r.nn;
            agree = agree && r.sr == r.nn;
        }
        if (mask.tr) {
            tr_present += r.tr.has_value();
            tr_agree += r.tr == r.nn;
            agree = agree && r.tr == r.nn;
        }
        if (agree) {
            r.hard = r.nn;
            ++out.summary.hard_count;
            if (truth && (*truth)[i] == r.nn) ++hard_correct;
        } else {
            const auto row = probs.row(i);
            r.soft_probs.assign(row.begin(), row.end());
        }
    }
    PlSummary& s = out.summary;
    s.n = n;
    if (n > 0) {
        const double dn = static_cast<double>(n);
        s.hard_ratio = static_cast<double>(s.hard_count) / dn;
        s.rs_agreement = static_cast<double>(rs_agree) / dn;
        s.sr_agreement = static_cast<double>(sr_agree) / dn;
        s.tr_agreement = static_cast<double>(tr_agree) / dn;
        s.sr_present = static_cast<double>(sr_present) / dn;
        s.tr_present = static_cast<double>(tr_present) / dn;
    }
    if (truth && s.hard_count > 0)
        s.hard_accuracy = static_cast<double>(hard_correct) / static_cast<double>(s.hard_count);
    return out;
}

}  // namespace abrsi
