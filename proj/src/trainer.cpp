#include "abrsi/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace abrsi {

using nlohmann::json;

// ---- ablations ------------------------------------------------------------

void AblationFlags::validate() const {
    if (hard_only && soft_only)
        throw std::invalid_argument("ablation: hard_only and soft_only are exclusive");
    const int swaps = int(disable_ekl) + int(domain_discriminator_instead) + int(prob_matching_instead);
    if (swaps > 1)
        throw std::invalid_argument(
            "ablation: at most one of disable_ekl, domain_discriminator_instead, "
            "prob_matching_instead may be set");
}

namespace {

struct Preset {
    const char* name;
    const char* description;
    std::function<void(AblationFlags&)> apply;
};

const std::vector<Preset>& presets() {
    static const std::vector<Preset> p{
        {"full", "full model", [](AblationFlags&) {}},
        {"A1", "without ABR matching", [](AblationFlags& f) { f.disable_abr = true; }},
        {"A2", "without the RS vote", [](AblationFlags& f) { f.disable_rs_vote = true; }},
        {"A3", "without ABR matching and RS vote",
         [](AblationFlags& f) { f.disable_abr = f.disable_rs_vote = true; }},
        {"B1", "voters NN+RS", [](AblationFlags& f) { f.disable_sr_vote = f.disable_tr_vote = true; }},
        {"B2", "voters NN+SR", [](AblationFlags& f) { f.disable_rs_vote = f.disable_tr_vote = true; }},
        {"B3", "voters NN+TR", [](AblationFlags& f) { f.disable_rs_vote = f.disable_sr_vote = true; }},
        {"C1", "hard PL only", [](AblationFlags& f) { f.hard_only = true; }},
        {"C2", "soft PL only", [](AblationFlags& f) { f.soft_only = true; }},
        {"D1", "without L_TE", [](AblationFlags& f) { f.disable_te = true; }},
        {"D2", "without L_DIV", [](AblationFlags& f) { f.disable_div = true; }},
        {"D3", "without L_TE and L_DIV", [](AblationFlags& f) { f.disable_te = f.disable_div = true; }},
        {"E1", "without EKL", [](AblationFlags& f) { f.disable_ekl = true; }},
        {"E2", "domain discriminator instead of EKL",
         [](AblationFlags& f) { f.domain_discriminator_instead = true; }},
        {"E3", "probabilistic output matching instead of EKL",
         [](AblationFlags& f) { f.prob_matching_instead = true; }},
        {"F1", "without previous EK", [](AblationFlags& f) { f.disable_ek_prev = true; }},
        {"F2", "without reverse EK", [](AblationFlags& f) { f.disable_ek_rev = true; }},
    };
    return p;
}

const Preset& find_preset(const std::string& name) {
    for (const auto& p : presets())
        if (name == p.name) return p;
    throw std::invalid_argument("unknown ablation preset '" + name + "'");
}

}  // namespace

AblationFlags ablation_preset(const std::string& name) {
    AblationFlags f;
    find_preset(name).apply(f);
    return f;
}

std::vector<std::string> ablation_group(char group) {
    std::vector<std::string> out;
    for (const auto& p : presets())
        if (p.name[0] == group) out.emplace_back(p.name);
    if (out.empty()) throw std::invalid_argument(std::string("unknown ablation group '") + group + "'");
    return out;
}

std::string ablation_description(const std::string& name) { return find_preset(name).description; }

// ---- config ---------------------------------------------------------------

void TrainConfig::validate() const {
    for (auto [name, v] : {std::pair{"rho_max", rho_max}, {"delta", delta}, {"tau", tau},
                           {"gamma", gamma}, {"lr", lr}})
        if (!std::isfinite(v) || v < 0)
            throw std::invalid_argument(std::string("config: ") + name + " must be finite and non-negative");
    if (!(lr > 0)) throw std::invalid_argument("config: lr must be positive");
    if (!std::isfinite(psi) || !std::isfinite(phi) || psi > 0 || phi > 0)
        throw std::invalid_argument("config: psi and phi must be finite and not positive");
    if (!(alpha_min > 0) || !(alpha_max > 0) || !std::isfinite(alpha_max))
        throw std::invalid_argument("config: alpha bounds must be positive");
    if ((alpha_min - 1.0) * (alpha_max - 1.0) <= 0.0)
        throw std::invalid_argument("config: the alpha schedule must not reach 1");
    if (epochs == 0) throw std::invalid_argument("config: epochs must be positive");
    if (top_n == 0 || sr_neighbors == 0 || lsi_rank == 0 || hidden_width == 0 || shared_width == 0)
        throw std::invalid_argument("config: counts and widths must be positive");
    flags.validate();
    if (ablation_preset(ablation) != flags)
        throw std::invalid_argument("config: flags do not match ablation preset '" + ablation + "'");
}

void TrainConfig::apply_ablation(const std::string& name) {
    flags = ablation_preset(name);
    ablation = name;
}

TrainConfig TrainConfig::source_only_baseline(TrainConfig base) {
    base.rho_max = base.delta = base.tau = base.gamma = 0.0;
    base.source_only = true;
    base.apply_ablation("full");
    return base;
}

namespace {

template <class E>
using EnumNames = std::vector<std::pair<E, const char*>>;

const EnumNames<FoldIn> kFoldIn{{FoldIn::scaled, "scaled"}, {FoldIn::standard, "standard"}};
const EnumNames<SrRule> kSrRule{{SrRule::unanimous, "unanimous"}, {SrRule::majority, "majority"}};
const EnumNames<SrMetric> kSrMetric{{SrMetric::euclidean, "euclidean"}, {SrMetric::cosine, "cosine"}};
const EnumNames<EklGrouping> kGrouping{{EklGrouping::sum_variants, "sum_variants"},
                                       {EklGrouping::three_minus_log_each, "three_minus_log_each"}};

template <class E>
std::string enum_name(const EnumNames<E>& names, E v) {
    for (const auto& [e, n] : names)
        if (e == v) return n;
    return "?";
}

template <class E>
E enum_value(const EnumNames<E>& names, const std::string& s, const char* field) {
    for (const auto& [e, n] : names)
        if (s == n) return e;
    throw std::invalid_argument(std::string("config: bad value '") + s + "' for " + field);
}

// Numeric fields, addressable by name for JSON and sweeps.
struct NumField {
    const char* name;
    std::function<double&(TrainConfig&)> real;
    std::function<std::size_t&(TrainConfig&)> count;
};

const std::vector<NumField>& num_fields() {
    static const std::vector<NumField> f{
        {"rho_max", [](TrainConfig& c) -> double& { return c.rho_max; }, nullptr},
        {"delta", [](TrainConfig& c) -> double& { return c.delta; }, nullptr},
        {"tau", [](TrainConfig& c) -> double& { return c.tau; }, nullptr},
        {"gamma", [](TrainConfig& c) -> double& { return c.gamma; }, nullptr},
        {"alpha_max", [](TrainConfig& c) -> double& { return c.alpha_max; }, nullptr},
        {"alpha_min", [](TrainConfig& c) -> double& { return c.alpha_min; }, nullptr},
        {"psi", [](TrainConfig& c) -> double& { return c.psi; }, nullptr},
        {"phi", [](TrainConfig& c) -> double& { return c.phi; }, nullptr},
        {"lr", [](TrainConfig& c) -> double& { return c.lr; }, nullptr},
        {"top_n", nullptr, [](TrainConfig& c) -> std::size_t& { return c.top_n; }},
        {"sr_neighbors", nullptr, [](TrainConfig& c) -> std::size_t& { return c.sr_neighbors; }},
        {"lsi_rank", nullptr, [](TrainConfig& c) -> std::size_t& { return c.lsi_rank; }},
        {"hidden_width", nullptr, [](TrainConfig& c) -> std::size_t& { return c.hidden_width; }},
        {"shared_width", nullptr, [](TrainConfig& c) -> std::size_t& { return c.shared_width; }},
        {"epochs", nullptr, [](TrainConfig& c) -> std::size_t& { return c.epochs; }},
        {"tr_clusters", nullptr, [](TrainConfig& c) -> std::size_t& { return c.tr_clusters; }},
    };
    return f;
}

}  // namespace

json to_json(const TrainConfig& cfg) {
    TrainConfig c = cfg;
    json j;
    for (const auto& f : num_fields()) {
        if (f.real) j[f.name] = f.real(c);
        else j[f.name] = f.count(c);
    }
    j["seed"] = cfg.seed;
    j["ablation"] = cfg.ablation;
    j["source_only"] = cfg.source_only;
    j["fold_in"] = enum_name(kFoldIn, cfg.fold_in);
    j["sr_rule"] = enum_name(kSrRule, cfg.sr_rule);
    j["sr_metric"] = enum_name(kSrMetric, cfg.sr_metric);
    j["ekl_grouping"] = enum_name(kGrouping, cfg.ekl_grouping);
    j["abr_source_side"] = cfg.abr_source_side;
    j["track_target_accuracy"] = cfg.track_target_accuracy;
    return j;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
    if (!j.is_object()) throw std::invalid_argument("config: training section must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        const json& v = it.value();
        auto num = std::find_if(num_fields().begin(), num_fields().end(),
                                [&](const NumField& f) { return key == f.name; });
        if (num != num_fields().end()) {
            if (!v.is_number()) throw std::invalid_argument("config: " + key + " must be a number");
            if (num->real) num->real(c) = v.get<double>();
            else {
                if (!v.is_number_integer() || v.get<long long>() < 0) throw std::invalid_argument("config: " + key + " must be a non-negative integer");
                num->count(c) = v.get<std::size_t>();
            }
        } else if (key == "seed") c.seed = v.get<std::uint64_t>();
        else if (key == "ablation") c.apply_ablation(v.get<std::string>());
        else if (key == "source_only") c.source_only = v.get<bool>();
        else if (key == "fold_in") c.fold_in = enum_value(kFoldIn, v.get<std::string>(), "fold_in");
        else if (key == "sr_rule") c.sr_rule = enum_value(kSrRule, v.get<std::string>(), "sr_rule");
        else if (key == "sr_metric") c.sr_metric = enum_value(kSrMetric, v.get<std::string>(), "sr_metric");
        else if (key == "ekl_grouping") c.ekl_grouping = enum_value(kGrouping, v.get<std::string>(), "ekl_grouping");
        else if (key == "abr_source_side") c.abr_source_side = v.get<bool>();
        else if (key == "track_target_accuracy") c.track_target_accuracy = v.get<bool>();
        else throw std::invalid_argument("config: unknown training key '" + key + "'");
    }
    c.validate();
    return c;
}

std::vector<std::string> config_fields() {
    std::vector<std::string> out;
    for (const auto& f : num_fields()) out.emplace_back(f.name);
    return out;
}

void set_config_value(TrainConfig& cfg, const std::string& name, double value) {
    for (const auto& f : num_fields()) {
        if (name != f.name) continue;
        if (f.real) f.real(cfg) = value;
        else {
            if (value < 0 || value != std::floor(value))
                throw std::invalid_argument("config: " + name + " takes a non-negative integer");
            f.count(cfg) = static_cast<std::size_t>(value);
        }
        return;
    }
    throw std::invalid_argument("unknown config parameter '" + name + "'");
}

std::string LossBreakdown::describe() const {
    std::ostringstream os;
    os.precision(6);
    os << "sup=" << l_sup << " abr=" << l_abr << "(w " << w_abr << ") div=" << l_div << "(w "
       << w_div << ") te=" << l_te << "(w " << w_te << ") ekl=" << l_ekl << "(w " << w_ekl
       << ") total=" << total;
    return os.str();
}

// ---- trainer --------------------------------------------------------------

namespace {

void add_scaled(Matrix& acc, const Matrix& g, double w) {
    if (w == 0.0) return;
    auto& a = acc.data();
    const auto& b = g.data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += w * b[i];
}

Matrix scaled(const Matrix& m, double w) {
    Matrix out = m;
    for (double& v : out.data()) v *= w;
    return out;
}

void note(std::vector<std::string>& into, const std::vector<std::string>& from) {
    for (const auto& w : from)
        if (std::find(into.begin(), into.end(), w) == into.end()) into.push_back(w);
}

// Voting and LSI draws get their own stream per epoch so that switching them
// off leaves every other random draw unchanged.
Rng epoch_rng(std::uint64_t seed, std::size_t epoch) {
    return Rng(seed * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL * (epoch + 1));
}

double accuracy(const Matrix& probs, const std::vector<int>& truth) {
    const auto pred = vote_nn(probs);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
    return pred.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(pred.size());
}

}  // namespace

Trainer::Trainer(const DomainDataset& source, const DomainDataset& target, TrainConfig cfg,
                 const TargetTruth* eval_truth)
    : source_(source), target_(target), truth_(eval_truth), cfg_(std::move(cfg)), init_rng_(cfg_.seed) {
    cfg_.validate();
    source_.validate();
    target_.validate();
    if (!source_.labelled()) throw std::invalid_argument("train: source domain must be labelled");
    if (target_.labelled())
        throw std::invalid_argument("train: target domain must be unlabelled; split its truth off first");
    if (source_.k_categories != target_.k_categories)
        throw std::invalid_argument("train: source has " + std::to_string(source_.k_categories) +
                                    " categories, target " + std::to_string(target_.k_categories));
    if (truth_ && truth_->size() != target_.n_instances())
        throw DimensionError("train: evaluation truth does not match the target set");
    if (target_.n_instances() == 0 || source_.n_instances() == 0)
        throw std::invalid_argument("train: empty domain");
    k_ = source_.k_categories;
    if (!cfg_.source_only && !cfg_.flags.disable_sr_vote && cfg_.sr_neighbors > source_.n_instances())
        throw std::invalid_argument("train: sr_neighbors exceeds the source set");

    NetworkShape shape;
    shape.d_s = source_.dim();
    shape.d_t = target_.dim();
    shape.d_c = cfg_.shared_width;
    shape.hidden = cfg_.hidden_width;
    shape.k = k_;
    shape.d_in = cfg_.flags.domain_discriminator_instead ? cfg_.shared_width : k_;
    params_ = NetworkParams::build(shape, init_rng_);
    ek_ = EkState::make(k_, k_, cfg_.psi, cfg_.phi);
    sched_ = Schedules{cfg_.rho_max, cfg_.alpha_max, cfg_.alpha_min, cfg_.epochs};
}

VoterMask Trainer::voter_mask() const {
    VoterMask m;
    m.rs = !cfg_.flags.disable_rs_vote;
    m.sr = !cfg_.flags.disable_sr_vote;
    m.tr = !cfg_.flags.disable_tr_vote;
    return m;
}

bool Trainer::needs_recommender() const {
    return !cfg_.flags.disable_abr || !cfg_.flags.disable_rs_vote;
}

EpochPlan Trainer::plan_epoch(std::size_t epoch) const { return make_plan(epoch, !cfg_.source_only); }

EpochPlan Trainer::make_plan(std::size_t epoch, bool with_pl) const {
    EpochPlan plan;
    plan.epoch = epoch;
    const Matrix ft = project(params_, target_.features, DomainSide::target);
    plan.probs_t = classify(params_, ft);
    plan.hard.assign(target_.n_instances(), std::nullopt);
    if (!with_pl) return plan;

    Rng rng = epoch_rng(cfg_.seed, epoch);
    const Matrix fs = project(params_, source_.features, DomainSide::source);
    const auto& ys = *source_.labels;
    const VoterMask mask = voter_mask();
    if (needs_recommender()) {
        const std::size_t rank = std::min({cfg_.lsi_rank, cfg_.shared_width, fs.rows(), ft.rows()});
        const auto ms = fit_lsi(fs, rank, rng, cfg_.fold_in);
        const auto mt = fit_lsi(ft, rank, rng, cfg_.fold_in);
        RecommendOptions ro;
        ro.top_n = cfg_.top_n;
        ro.abr_source_side = cfg_.abr_source_side;
        plan.rec = recommend(ms, mt, fs, ys, ft, k_, ro);
    }
    const auto nn = vote_nn(plan.probs_t);
    Votes sr, tr;
    if (mask.sr) {
        SrOptions so;
        so.k_neighbors = cfg_.sr_neighbors;
        so.rule = cfg_.sr_rule;
        so.metric = cfg_.sr_metric;
        sr = vote_sr(ft, fs, ys, so);
    }
    if (mask.tr) {
        const std::size_t clusters = std::min(cfg_.tr_clusters ? cfg_.tr_clusters : k_, ft.rows());
        tr = vote_tr(ft, nn, clusters, rng);
    }
    static const std::vector<int> no_rs;
    plan.pl = assemble(nn, plan.rec ? plan.rec->pl_rs : no_rs, sr, tr, plan.probs_t, mask,
                       truth_ ? &truth_->labels() : nullptr);
    plan.hard = plan.pl->hard_labels();
    return plan;
}

Objective Trainer::evaluate(const EpochPlan& plan, bool want_grads) const {
    const auto& fl = cfg_.flags;
    const auto& ys = *source_.labels;
    Objective out;
    out.grads = ParamGrads::zeros_like(params_);
    GradTape tes, tet, tcs, tct;
    const Matrix fs = params_.e_s.forward(source_.features, &tes);
    const Matrix ft = params_.e_t.forward(target_.features, &tet);
    const Matrix ps = params_.c.forward(fs, &tcs);
    const Matrix pt = params_.c.forward(ft, &tct);
    if (!ps.all_finite() || !pt.all_finite())
        throw TrainingDiverged("epoch " + std::to_string(plan.epoch) + ": non-finite classifier output");
    Matrix g_fs(fs.rows(), fs.cols()), g_ft(ft.rows(), ft.cols());
    Matrix g_ps(ps.rows(), ps.cols()), g_pt(pt.rows(), pt.cols());
    LossBreakdown& L = out.loss;

    const auto sup = l_sup(ps, ys);
    L.l_sup = sup.value;
    add_scaled(g_ps, sup.grad, 1.0);

    if (!cfg_.source_only) {
        const double rho = sched_.rho(plan.epoch);
        if (!fl.disable_abr && plan.rec) {
            const auto abr = abr_loss(*plan.rec, fs, ft);
            L.l_abr = abr.value;
            L.w_abr = rho;
            add_scaled(g_fs, abr.d_fs, rho);
            add_scaled(g_ft, abr.d_ft, rho);
            out.abr_categories = plan.rec->present_count();
            note(out.warnings, abr.warnings);
        }
        // Both act on the soft assignment, which the hard-only variant does not have.
        if (!fl.disable_div && !fl.hard_only) {
            const auto div = l_div(pt);
            L.l_div = div.value;
            L.w_div = cfg_.delta;
            add_scaled(g_pt, div.grad, cfg_.delta);
        }
        if (!fl.disable_te && !fl.hard_only) {
            const auto te = l_te(pt, sched_.alpha(plan.epoch));
            L.l_te = te.value;
            L.w_te = cfg_.tau;
            add_scaled(g_pt, te.grad, cfg_.tau);
        }
        if (!fl.disable_ekl) {
            const double gamma = cfg_.gamma;
            L.w_ekl = gamma;
            if (fl.domain_discriminator_instead) {
                auto adv = domain_adversarial(fs, ft, params_.d);
                L.l_ekl = adv.value;
                add_scaled(g_fs, adv.d_fs, gamma);
                add_scaled(g_ft, adv.d_ft, gamma);
                scale(adv.d_grads, gamma);
                out.grads.d = std::move(adv.d_grads);
                out.d_accuracy = adv.d_accuracy;
            } else {
                EkInputs in;
                in.probs_s = &ps;
                in.labels_s = &ys;
                in.probs_t = &pt;
                in.hard = &plan.hard;
                in.use_hard = !fl.soft_only;
                in.exclude_soft = fl.hard_only;
                const auto means = category_means(in);
                note(out.warnings, means.warnings);
                if (fl.prob_matching_instead) {
                    const auto pm = prob_matching(means);
                    L.l_ekl = pm.value;
                    category_means_backward(in, means, scaled(pm.d_source, gamma),
                                            scaled(pm.d_target, gamma), g_ps, g_pt);
                } else {
                    const Matrix ek = error_knowledge(means, false);
                    EklOptions o;
                    o.grouping = cfg_.ekl_grouping;
                    o.use_previous = !fl.disable_ek_prev;
                    o.use_reverse = !fl.disable_ek_rev;
                    auto r = l_ekl(ek, means.categories, ek_, params_.d, o);
                    L.l_ekl = r.value;
                    Matrix d_src, d_tgt;
                    error_knowledge_backward(means, false, scaled(r.d_ek, gamma), d_src, d_tgt);
                    category_means_backward(in, means, d_src, d_tgt, g_ps, g_pt);
                    scale(r.d_grads, gamma);
                    out.grads.d = std::move(r.d_grads);
                    out.d_accuracy = r.d_accuracy;
                    out.ek = ek;
                    out.ek_categories = means.categories;
                    if (means.categories.empty())
                        note(out.warnings, {"no category formed error knowledge; L_EKL = 0"});
                }
            }
        }
    }
    L.total = L.weighted_sum();
    if (!std::isfinite(L.total))
        throw TrainingDiverged("epoch " + std::to_string(plan.epoch) +
                               ": non-finite loss (" + L.describe() + ")");
    if (!want_grads) return out;

    add_scaled(g_fs, params_.c.backward(tcs, g_ps, out.grads.c), 1.0);
    add_scaled(g_ft, params_.c.backward(tct, g_pt, out.grads.c), 1.0);
    params_.e_s.backward(tes, g_fs, out.grads.e_s, false);
    params_.e_t.backward(tet, g_ft, out.grads.e_t, false);
    return out;
}

EpochRecord Trainer::step() {
    if (done()) throw std::logic_error("Trainer::step: training already finished");
    const auto t0 = std::chrono::steady_clock::now();
    EpochPlan plan;
    Objective obj;
    try {
        plan = plan_epoch(epoch_);
        obj = evaluate(plan, true);
    } catch (const TrainingDiverged& e) {
        std::string msg = e.what();
        if (!history_.empty()) msg += "; previous epoch: " + history_.back().loss.describe();
        throw TrainingDiverged(msg);
    } catch (const std::domain_error& e) {
        // Non-finite values caught before the loss was even formed.
        std::string msg = "epoch " + std::to_string(epoch_) + ": " + e.what();
        if (!history_.empty()) msg += "; previous epoch: " + history_.back().loss.describe();
        throw TrainingDiverged(msg);
    }

    // Gradient reversal: E and C descend on the objective, D ascends on its term.
    scale(obj.grads.d, -1.0);
    AdamConfig ac;
    ac.lr = cfg_.lr;
    adam_step(tensors(params_), tensors(obj.grads), adam_, ac);
    if (obj.ek_categories.empty()) ek_.record({}, Matrix(0, k_));
    else ek_.record(obj.ek_categories, obj.ek);
    ek_.advance_epoch();

    EpochRecord r;
    r.epoch = epoch_;
    r.rho = sched_.rho(epoch_);
    r.alpha = sched_.alpha(epoch_);
    r.loss = obj.loss;
    r.d_accuracy = obj.d_accuracy;
    r.abr_categories = obj.abr_categories;
    if (plan.pl) {
        const auto& s = plan.pl->summary;
        r.hard_ratio = s.hard_ratio;
        r.hard_accuracy = s.hard_accuracy;
        r.rs_agreement = s.rs_agreement;
        r.sr_agreement = s.sr_agreement;
        r.tr_agreement = s.tr_agreement;
    }
    if (truth_ && cfg_.track_target_accuracy) r.target_accuracy = accuracy(plan.probs_t, truth_->labels());
    note(warnings_, obj.warnings);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history_.push_back(r);
    ++epoch_;
    return r;
}

FinalEvaluation Trainer::final_evaluation() const {
    FinalEvaluation fe;
    const auto t0 = std::chrono::steady_clock::now();
    const Matrix pt = classify(params_, project(params_, target_.features, DomainSide::target));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    fe.inference_seconds_per_instance = secs / static_cast<double>(target_.n_instances());
    const Matrix ps = classify(params_, project(params_, source_.features, DomainSide::source));
    fe.source_accuracy = accuracy(ps, *source_.labels);
    fe.certainty_70 = certainty_fraction(pt, 0.7);
    if (!truth_) return fe;
    fe.target = classification_metrics(pt, truth_->labels());
    // The voting diagnostics need the recommender even for variants that train without it.
    Trainer probe(*this);
    probe.cfg_.flags.disable_abr = false;
    const EpochPlan plan = probe.make_plan(cfg_.epochs, true);
    fe.pl_voting = pl_quality(*plan.pl, truth_->labels(), k_);
    const auto nn = vote_nn(pt);
    fe.pl_nn_only = pl_quality(std::vector<std::optional<int>>(nn.begin(), nn.end()), truth_->labels(), k_);
    return fe;
}

RunReport Trainer::run() {
    const auto t0 = std::chrono::steady_clock::now();
    while (!done()) step();
    RunReport rep;
    rep.config = to_json(cfg_);
    rep.epochs = history_;
    rep.final = final_evaluation();
    rep.warnings = warnings_;
    rep.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint ck;
    ck.params = params_;
    ck.adam = adam_;
    ck.rng_state = init_rng_.state();
    ck.epoch = epoch_;
    ck.extra["ek_previous"] = ek_.previous;
    return ck;
}

void Trainer::resume(const Checkpoint& ck) {
    if (ck.epoch > cfg_.epochs) throw std::invalid_argument("resume: checkpoint is past the configured epochs");
    auto dims = [](const NetworkParams& p) {
        std::vector<std::size_t> d;
        for (auto& t : tensors(const_cast<NetworkParams&>(p))) d.push_back(t.values.size());
        return d;
    };
    if (dims(ck.params) != dims(params_))
        throw DimensionError("resume: checkpoint network does not match this configuration");
    const auto it = ck.extra.find("ek_previous");
    if (it == ck.extra.end() || it->second.rows() != k_ || it->second.cols() != k_)
        throw std::invalid_argument("resume: checkpoint lacks a usable ek_previous");
    params_ = ck.params;
    adam_ = ck.adam;
    init_rng_.restore(ck.rng_state);
    epoch_ = ck.epoch;
    ek_.previous = it->second;
    history_.clear();
}

TrainResult train(const DomainDataset& source, const DomainDataset& target, const TrainConfig& cfg,
                  const TargetTruth* eval_truth) {
    Trainer t(source, target, cfg, eval_truth);
    RunReport rep = t.run();
    return {t.params(), std::move(rep)};
}

// ---- report ---------------------------------------------------------------

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json pl_json(const std::optional<PlQuality>& q) {
    if (!q) return nullptr;
    return {{"hard_ratio", q->hard_ratio}, {"hard_accuracy", opt(q->hard_accuracy)},
            {"hellinger", opt(q->hellinger)}};
}

}  // namespace

std::string RunReport::csv(bool include_timing) const {
    std::ostringstream os;
    os << "epoch,rho,alpha,l_sup,l_abr,l_div,l_te,l_ekl,total,d_accuracy,hard_ratio,hard_accuracy,"
          "rs_agreement,sr_agreement,tr_agreement,abr_categories,target_accuracy";
    if (include_timing) os << ",seconds";
    os << '\n';
    for (const auto& e : epochs) {
        os << e.epoch << ',' << fmt(e.rho) << ',' << fmt(e.alpha) << ',' << fmt(e.loss.l_sup) << ','
           << fmt(e.loss.l_abr) << ',' << fmt(e.loss.l_div) << ',' << fmt(e.loss.l_te) << ','
           << fmt(e.loss.l_ekl) << ',' << fmt(e.loss.total) << ',' << fmt(e.d_accuracy) << ','
           << fmt(e.hard_ratio) << ',' << fmt(e.hard_accuracy) << ',' << fmt(e.rs_agreement) << ','
           << fmt(e.sr_agreement) << ',' << fmt(e.tr_agreement) << ',' << e.abr_categories << ','
           << fmt(e.target_accuracy);
        if (include_timing) os << ',' << fmt(e.seconds);
        os << '\n';
    }
    return os.str();
}

json RunReport::summary(bool include_timing) const {
    json j;
    j["config"] = config;
    j["epochs"] = epochs.size();
    if (!epochs.empty()) {
        const auto& l = epochs.back().loss;
        j["final_loss"] = {{"l_sup", l.l_sup}, {"l_abr", l.l_abr}, {"l_div", l.l_div},
                           {"l_te", l.l_te},   {"l_ekl", l.l_ekl}, {"total", l.total}};
    }
    j["source_accuracy"] = final.source_accuracy;
    j["certainty_70"] = final.certainty_70;
    if (final.target) {
        const auto& m = *final.target;
        j["target"] = {{"accuracy", m.accuracy},
                       {"weighted_precision", m.weighted_precision},
                       {"weighted_recall", m.weighted_recall},
                       {"weighted_f1", m.weighted_f1},
                       {"auc", opt(m.auc)},
                       {"confusion", m.confusion},
                       {"warnings", m.warnings}};
    } else {
        j["target"] = nullptr;
    }
    j["pl_voting"] = pl_json(final.pl_voting);
    j["pl_nn_only"] = pl_json(final.pl_nn_only);
    j["warnings"] = warnings;
    if (include_timing) {
        std::vector<double> per_epoch;
        for (const auto& e : epochs) per_epoch.push_back(e.seconds);
        double mean = 0;
        for (double s : per_epoch) mean += s;
        if (!per_epoch.empty()) mean /= static_cast<double>(per_epoch.size());
        j["timing"] = {{"total_seconds", total_seconds},
                       {"mean_epoch_seconds", mean},
                       {"inference_seconds_per_instance", final.inference_seconds_per_instance}};
    }
    return j;
}

void RunReport::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir / "report.csv");
        if (!f) throw std::runtime_error("cannot write " + (dir / "report.csv").string());
        f << csv(true);
    }
    std::ofstream f(dir / "summary.json");
    if (!f) throw std::runtime_error("cannot write " + (dir / "summary.json").string());
    f << summary(true).dump(2) << '\n';
}

}  // namespace abrsi
