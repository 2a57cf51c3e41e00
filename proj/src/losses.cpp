#include "abrsi/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace abrsi {

namespace {

double safe_log(double x) { return std::log(std::max(x, kLogFloor)); }

void require_simplex_shape(const Matrix& p, const char* what) {
    if (p.rows() == 0 || p.cols() < 2)
        throw DimensionError(std::string(what) + ": need at least one row and two categories, got " +
                             p.shape());
}

}  // namespace

LossGrad l_sup(const Matrix& probs_s, const std::vector<int>& labels) {
    require_simplex_shape(probs_s, "l_sup");
    if (labels.size() != probs_s.rows())
        throw DimensionError("l_sup: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(probs_s.rows()) + " rows");
    const double n = static_cast<double>(probs_s.rows());
    LossGrad out{0.0, Matrix(probs_s.rows(), probs_s.cols())};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 1 || y > static_cast<int>(probs_s.cols()))
            throw std::invalid_argument("l_sup: label " + std::to_string(y) + " outside [1, " +
                                        std::to_string(probs_s.cols()) + "]");
        const double p = probs_s(i, static_cast<std::size_t>(y - 1));
        out.value -= safe_log(p) / n;
        if (p > kLogFloor) out.grad(i, static_cast<std::size_t>(y - 1)) = -1.0 / (n * p);
    }
    return out;
}

LossGrad l_div(const Matrix& probs_t) {
    require_simplex_shape(probs_t, "l_div");
    const std::size_t k = probs_t.cols();
    const double n = static_cast<double>(probs_t.rows());
    std::vector<double> m(k, 0.0);
    for (std::size_t j = 0; j < probs_t.rows(); ++j)
        for (std::size_t c = 0; c < k; ++c) m[c] += probs_t(j, c);
    LossGrad out{0.0, Matrix(probs_t.rows(), k)};
    std::vector<double> g(k);
    for (std::size_t c = 0; c < k; ++c) {
        m[c] /= n;
        if (m[c] > 0.0) out.value += m[c] * safe_log(m[c]);
        g[c] = (safe_log(m[c]) + 1.0) / n;
    }
    for (std::size_t j = 0; j < probs_t.rows(); ++j)
        std::copy(g.begin(), g.end(), out.grad.row(j).begin());
    return out;
}

LossGrad l_te(const Matrix& probs_t, double alpha) {
    require_simplex_shape(probs_t, "l_te");
    if (!(alpha > 0.0) || alpha == 1.0)
        throw std::invalid_argument("l_te: alpha must be positive and different from 1, got " +
                                    std::to_string(alpha));
    LossGrad out{0.0, Matrix(probs_t.rows(), probs_t.cols())};
    const double inv = 1.0 / (alpha - 1.0);
    for (std::size_t j = 0; j < probs_t.rows(); ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < probs_t.cols(); ++c) {
            const double p = std::max(probs_t(j, c), 0.0);
            s += std::pow(p, alpha);
            out.grad(j, c) = -alpha * inv * std::pow(p, alpha - 1.0);
        }
        out.value += inv * (1.0 - s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Error knowledge
// ---------------------------------------------------------------------------

namespace {

void check_inputs(const EkInputs& in) {
    if (!in.probs_s || !in.labels_s || !in.probs_t || !in.hard)
        throw std::invalid_argument("EkInputs: missing input");
    if (in.labels_s->size() != in.probs_s->rows())
        throw DimensionError("EkInputs: source labels do not match source rows");
    if (in.hard->size() != in.probs_t->rows())
        throw DimensionError("EkInputs: hard label vector does not match target rows");
    if (in.probs_s->cols() != in.probs_t->cols())
        throw DimensionError("EkInputs: source " + in.probs_s->shape() + " and target " +
                             in.probs_t->shape() + " disagree on K");
    if (in.use_hard == false && in.exclude_soft)
        throw std::invalid_argument("EkInputs: excluding soft rows requires hard labels");
}

// Row j of the effective target matrix: one-hot for hard rows, the
// classifier row otherwise. Returns false when the row is excluded.
bool target_row(const EkInputs& in, std::size_t j, std::vector<double>& q, bool& is_hard) {
    const auto& h = (*in.hard)[j];
    is_hard = in.use_hard && h.has_value();
    if (in.exclude_soft && !is_hard) return false;
    if (is_hard) {
        std::fill(q.begin(), q.end(), 0.0);
        q[static_cast<std::size_t>(*h - 1)] = 1.0;
    } else {
        const auto row = in.probs_t->row(j);
        std::copy(row.begin(), row.end(), q.begin());
    }
    return true;
}

}  // namespace

CategoryMeans category_means(const EkInputs& in) {
    check_inputs(in);
    const std::size_t k = in.probs_s->cols();
    const auto& ps = *in.probs_s;
    std::vector<std::vector<double>> src_sum(k, std::vector<double>(k, 0.0));
    std::vector<double> src_count(k, 0.0);
    for (std::size_t i = 0; i < ps.rows(); ++i) {
        const int y = (*in.labels_s)[i];
        if (y < 1 || y > static_cast<int>(k))
            throw std::invalid_argument("category_means: source label out of range");
        const auto c = static_cast<std::size_t>(y - 1);
        for (std::size_t m = 0; m < k; ++m) src_sum[c][m] += ps(i, m);
        src_count[c] += 1.0;
    }
    std::vector<std::vector<double>> tgt_sum(k, std::vector<double>(k, 0.0));
    std::vector<double> weight(k, 0.0);
    std::vector<double> q(k);
    for (std::size_t j = 0; j < in.probs_t->rows(); ++j) {
        bool hard = false;
        if (!target_row(in, j, q, hard)) continue;
        for (std::size_t c = 0; c < k; ++c) {
            if (q[c] == 0.0) continue;
            weight[c] += q[c];
            for (std::size_t m = 0; m < k; ++m) tgt_sum[c][m] += q[c] * q[m];
        }
    }
    CategoryMeans out;
    std::vector<std::vector<double>> a_rows, b_rows;
    for (std::size_t c = 0; c < k; ++c) {
        const std::string id = std::to_string(c + 1);
        if (src_count[c] == 0.0) {
            out.warnings.push_back("category " + id + " has no source instances; skipped");
            continue;
        }
        if (weight[c] < kLogFloor) {
            out.warnings.push_back("category " + id + " has no target mass; skipped");
            continue;
        }
        out.categories.push_back(static_cast<int>(c + 1));
        std::vector<double> a(k), b(k);
        for (std::size_t m = 0; m < k; ++m) {
            a[m] = src_sum[c][m] / src_count[c];
            b[m] = tgt_sum[c][m] / weight[c];
        }
        a_rows.push_back(std::move(a));
        b_rows.push_back(std::move(b));
        out.target_weight.push_back(weight[c]);
    }
    if (!a_rows.empty()) {
        out.source_mean = Matrix::from_rows(a_rows);
        out.target_mean = Matrix::from_rows(b_rows);
    } else {
        out.source_mean = Matrix(0, k);
        out.target_mean = Matrix(0, k);
    }
    return out;
}

void category_means_backward(const EkInputs& in, const CategoryMeans& means, const Matrix& d_source,
                             const Matrix& d_target, Matrix& g_probs_s, Matrix& g_probs_t) {
    check_inputs(in);
    const std::size_t k = in.probs_s->cols();
    const std::size_t kp = means.categories.size();
    if (d_source.rows() != kp || d_target.rows() != kp)
        throw DimensionError("category_means_backward: gradient rows do not match categories");
    if (g_probs_s.rows() != in.probs_s->rows() || g_probs_t.rows() != in.probs_t->rows())
        throw DimensionError("category_means_backward: output buffers have the wrong shape");
    std::vector<int> slot(k + 1, -1);
    for (std::size_t c = 0; c < kp; ++c) slot[static_cast<std::size_t>(means.categories[c])] = static_cast<int>(c);

    std::vector<double> count(kp, 0.0);
    for (int y : *in.labels_s)
        if (slot[static_cast<std::size_t>(y)] >= 0) count[static_cast<std::size_t>(slot[static_cast<std::size_t>(y)])] += 1.0;
    for (std::size_t i = 0; i < in.probs_s->rows(); ++i) {
        const int s = slot[static_cast<std::size_t>((*in.labels_s)[i])];
        if (s < 0) continue;
        const auto c = static_cast<std::size_t>(s);
        auto g = g_probs_s.row(i);
        for (std::size_t m = 0; m < k; ++m) g[m] += d_source(c, m) / count[c];
    }

    // b = sum_j q_jk q_j / W with W = sum_j q_jk; for a soft row j and
    // h = dL/db: dL/dq_jl = [q_jk h_l + [l == k](h.q_j - h.b)] / W.
    std::vector<double> hb(kp);
    for (std::size_t c = 0; c < kp; ++c) hb[c] = dot(d_target.row(c), means.target_mean.row(c));
    std::vector<double> q(k);
    for (std::size_t j = 0; j < in.probs_t->rows(); ++j) {
        bool hard = false;
        if (!target_row(in, j, q, hard) || hard) continue;
        auto g = g_probs_t.row(j);
        for (std::size_t c = 0; c < kp; ++c) {
            const auto cat = static_cast<std::size_t>(means.categories[c] - 1);
            const auto h = d_target.row(c);
            const double w = means.target_weight[c];
            const double qk = q[cat];
            for (std::size_t l = 0; l < k; ++l) g[l] += qk * h[l] / w;
            g[cat] += (dot(h, q) - hb[c]) / w;
        }
    }
}

Matrix error_knowledge(const CategoryMeans& means, bool scalar) {
    const std::size_t kp = means.categories.size();
    const std::size_t k = means.source_mean.cols();
    Matrix ek(kp, scalar ? 1 : k);
    for (std::size_t c = 0; c < kp; ++c)
        for (std::size_t m = 0; m < k; ++m) {
            const double d = means.source_mean(c, m) - means.target_mean(c, m);
            if (scalar) ek(c, 0) += d * d;
            else ek(c, m) = d * d;
        }
    return ek;
}

void error_knowledge_backward(const CategoryMeans& means, bool scalar, const Matrix& d_ek,
                              Matrix& d_source, Matrix& d_target) {
    const std::size_t kp = means.categories.size();
    const std::size_t k = means.source_mean.cols();
    d_source = Matrix(kp, k);
    d_target = Matrix(kp, k);
    for (std::size_t c = 0; c < kp; ++c)
        for (std::size_t m = 0; m < k; ++m) {
            const double d = means.source_mean(c, m) - means.target_mean(c, m);
            const double g = 2.0 * d * (scalar ? d_ek(c, 0) : d_ek(c, m));
            d_source(c, m) = g;
            d_target(c, m) = -g;
        }
}

EkBuild build_ek(const EkInputs& in, bool scalar) {
    EkBuild out;
    out.means = category_means(in);
    out.ek = error_knowledge(out.means, scalar);
    return out;
}

EkState EkState::make(std::size_t k, std::size_t width, double psi, double phi) {
    if (psi > 0.0 || phi > 0.0)
        throw std::invalid_argument("EkState: psi and phi must not be positive");
    EkState s;
    s.current = Matrix(k, width);
    s.previous = Matrix(k, width);
    s.current_present.assign(k, false);
    s.psi = psi;
    s.phi = phi;
    return s;
}

void EkState::record(const std::vector<int>& categories, const Matrix& ek) {
    if (ek.rows() != categories.size() || ek.cols() != current.cols())
        throw DimensionError("EkState::record: expected " + std::to_string(categories.size()) +
                             "x" + std::to_string(current.cols()) + ", got " + ek.shape());
    current = Matrix(current.rows(), current.cols());
    current_present.assign(current.rows(), false);
    for (std::size_t c = 0; c < categories.size(); ++c) {
        const auto r = static_cast<std::size_t>(categories[c] - 1);
        std::copy(ek.row(c).begin(), ek.row(c).end(), current.row(r).begin());
        current_present[r] = true;
    }
}

void EkState::advance_epoch() {
    previous = current;
    current = Matrix(current.rows(), current.cols());
    current_present.assign(current.rows(), false);
}

EklResult l_ekl(const Matrix& ek, const std::vector<int>& categories, const EkState& state,
                const Mlp& d, const EklOptions& opts) {
    const std::size_t kp = ek.rows();
    const std::size_t width = ek.cols();
    if (categories.size() != kp) throw DimensionError("l_ekl: categories do not match EK rows");
    if (width != d.in_dim())
        throw DimensionError("l_ekl: EK width " + std::to_string(width) +
                             " does not match discriminator input " + std::to_string(d.in_dim()));
    EklResult out;
    out.d_grads = d.zero_grads();
    out.d_ek = Matrix(kp, width);
    if (kp == 0) return out;

    enum Kind { k_ek, k_zero, k_rev, k_prev };
    std::vector<Kind> kinds{k_ek};
    if (opts.use_zero) kinds.push_back(k_zero);
    if (opts.use_reverse) kinds.push_back(k_rev);
    if (opts.use_previous) kinds.push_back(k_prev);
    const double variants = static_cast<double>(kinds.size() - 1);

    Matrix x(kinds.size() * kp, width);
    for (std::size_t v = 0; v < kinds.size(); ++v)
        for (std::size_t c = 0; c < kp; ++c) {
            auto row = x.row(v * kp + c);
            const auto prev = state.previous.row(static_cast<std::size_t>(categories[c] - 1));
            for (std::size_t m = 0; m < width; ++m) {
                switch (kinds[v]) {
                    case k_ek: row[m] = ek(c, m); break;
                    case k_zero: row[m] = 0.0; break;
                    case k_rev: row[m] = state.psi * ek(c, m); break;
                    case k_prev: row[m] = state.phi * prev[m]; break;
                }
            }
        }
    GradTape tape;
    const Matrix raw = d.forward(x, &tape);
    Matrix up(raw.rows(), 1);
    const double kpd = static_cast<double>(kp);
    for (std::size_t r = 0; r < raw.rows(); ++r) {
        const double o_raw = raw(r, 0);
        const double o = std::clamp(o_raw, kDiscClampLo, kDiscClampHi);
        const bool clamped = o != o_raw;
        if (r < kp) {
            out.value += std::log(o) / kpd;
            if (!clamped) up(r, 0) = 1.0 / (kpd * o);
        } else {
            const double lead = opts.grouping == EklGrouping::sum_variants ? 1.0 : variants;
            out.value += (lead - std::log(o)) / (variants * kpd);
            if (!clamped) up(r, 0) = -1.0 / (variants * kpd * o);
        }
    }
    const Matrix dx = d.backward(tape, up, out.d_grads, true);
    for (std::size_t v = 0; v < kinds.size(); ++v) {
        if (kinds[v] != k_ek && kinds[v] != k_rev) continue;
        const double f = kinds[v] == k_ek ? 1.0 : state.psi;
        for (std::size_t c = 0; c < kp; ++c)
            for (std::size_t m = 0; m < width; ++m) out.d_ek(c, m) += f * dx(v * kp + c, m);
    }

    const Matrix zero_out = d.forward(Matrix(1, width));
    std::size_t correct = 0;
    for (std::size_t c = 0; c < kp; ++c) correct += raw(c, 0) > 0.5;
    correct += kp * static_cast<std::size_t>(zero_out(0, 0) < 0.5);
    out.d_accuracy = static_cast<double>(correct) / (2.0 * kpd);
    return out;
}

DomainAdvResult domain_adversarial(const Matrix& f_s, const Matrix& f_t, const Mlp& d) {
    DomainAdvResult out;
    out.d_grads = d.zero_grads();
    GradTape ts, tt;
    const Matrix os = d.forward(f_s, &ts);
    const Matrix ot = d.forward(f_t, &tt);
    const double ns = static_cast<double>(f_s.rows()), nt = static_cast<double>(f_t.rows());
    Matrix us(os.rows(), 1), ut(ot.rows(), 1);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < os.rows(); ++i) {
        const double o = std::clamp(os(i, 0), kDiscClampLo, kDiscClampHi);
        out.value += std::log(o) / ns;
        if (o == os(i, 0)) us(i, 0) = 1.0 / (ns * o);
        correct += os(i, 0) > 0.5;
    }
    for (std::size_t j = 0; j < ot.rows(); ++j) {
        const double o = std::clamp(ot(j, 0), kDiscClampLo, kDiscClampHi);
        out.value += std::log(1.0 - o) / nt;
        if (o == ot(j, 0)) ut(j, 0) = -1.0 / (nt * (1.0 - o));
        correct += ot(j, 0) < 0.5;
    }
    out.d_fs = d.backward(ts, us, out.d_grads, true);
    out.d_ft = d.backward(tt, ut, out.d_grads, true);
    out.d_accuracy = static_cast<double>(correct) / (ns + nt);
    return out;
}

ProbMatchResult prob_matching(const CategoryMeans& means) {
    const std::size_t kp = means.categories.size();
    const std::size_t k = means.source_mean.cols();
    ProbMatchResult out{0.0, Matrix(kp, k), Matrix(kp, k)};
    if (kp == 0) return out;
    for (std::size_t c = 0; c < kp; ++c) {
        double sq = 0.0;
        for (std::size_t m = 0; m < k; ++m) {
            const double dd = means.source_mean(c, m) - means.target_mean(c, m);
            sq += dd * dd;
        }
        const double dist = std::sqrt(sq);
        out.value += dist / static_cast<double>(kp);
        if (dist < 1e-12) continue;
        for (std::size_t m = 0; m < k; ++m) {
            const double g = (means.source_mean(c, m) - means.target_mean(c, m)) /
                             (dist * static_cast<double>(kp));
            out.d_source(c, m) = g;
            out.d_target(c, m) = -g;
        }
    }
    return out;
}

double Schedules::rho(std::size_t epoch) const {
    if (total_epochs <= 1 || epoch + 1 >= total_epochs) return rho_max;
    return rho_max * static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
}

double Schedules::alpha(std::size_t epoch) const {
    if (total_epochs <= 1 || epoch + 1 >= total_epochs) return alpha_min;
    return alpha_max - (alpha_max - alpha_min) * static_cast<double>(epoch) /
                           static_cast<double>(total_epochs - 1);
}

}  // namespace abrsi
