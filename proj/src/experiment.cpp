#include "abrsi/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace abrsi {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
}

std::map<int, int> parse_id_map(const json& j, const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
    std::map<int, int> out;
    for (auto it = j.begin(); it != j.end(); ++it) {
        std::size_t used = 0;
        int from = 0;
        try {
            from = std::stoi(it.key(), &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != it.key().size())
            throw std::invalid_argument("config: " + where + " key '" + it.key() + "' is not a category id");
        out[from] = it.value().get<int>();
    }
    return out;
}

json id_map_json(const std::map<int, int>& m) {
    json j = json::object();
    for (const auto& [a, b] : m) j[std::to_string(a)] = b;
    return j;
}

fs::path resolve(const fs::path& p, const fs::path& base) {
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return base / p;
}

void require_file(const fs::path& p, const std::string& what) {
    if (p.empty()) throw std::invalid_argument("config: " + what + " is not set");
    if (!fs::exists(p)) throw std::runtime_error(what + " not found: " + p.string());
}

std::string csv_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_opt(const std::optional<double>& v) { return v ? csv_num(*v) : std::string(); }

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
}

struct Stats {
    double mean = 0.0, std = 0.0;
    std::size_t n = 0;
};

Stats stats(const std::vector<double>& v) {
    Stats s;
    s.n = v.size();
    if (v.empty()) return s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    for (double x : v) s.std += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(s.std / static_cast<double>(v.size()));
    return s;
}

Stats stats(const std::vector<std::optional<double>>& v) {
    std::vector<double> present;
    for (const auto& x : v)
        if (x) present.push_back(*x);
    return stats(present);
}

std::optional<double> json_number(const json& j, const json::json_pointer& ptr) {
    if (!j.contains(ptr)) return std::nullopt;
    const auto& v = j.at(ptr);
    if (!v.is_number()) return std::nullopt;
    return v.get<double>();
}

// Metrics pulled from each summary by aggregate() and cmd_report().
const std::vector<std::pair<std::string, std::string>>& metric_paths() {
    static const std::vector<std::pair<std::string, std::string>> m = {
        {"accuracy", "/target/accuracy"},
        {"weighted_precision", "/target/weighted_precision"},
        {"weighted_recall", "/target/weighted_recall"},
        {"weighted_f1", "/target/weighted_f1"},
        {"auc", "/target/auc"},
        {"source_accuracy", "/source_accuracy"},
        {"certainty_70", "/certainty_70"},
        {"pl_voting_hard_ratio", "/pl_voting/hard_ratio"},
        {"pl_voting_hard_accuracy", "/pl_voting/hard_accuracy"},
        {"pl_voting_hellinger", "/pl_voting/hellinger"},
        {"pl_nn_only_hard_accuracy", "/pl_nn_only/hard_accuracy"},
        {"pl_nn_only_hellinger", "/pl_nn_only/hellinger"},
    };
    return m;
}

SeedRun train_prepared(const PreparedData& data, TrainConfig t, std::uint64_t seed) {
    t.seed = seed;
    Trainer trainer(data.pair.source, data.pair.target, t, &data.pair.truth);
    SeedRun run;
    run.seed = seed;
    run.report = trainer.run();
    run.checkpoint = trainer.checkpoint();
    json d;
    d["n_source"] = data.pair.source.n_instances();
    d["n_target"] = data.pair.target.n_instances();
    d["d_source"] = data.pair.source.dim();
    d["d_target"] = data.pair.target.dim();
    d["k_categories"] = data.pair.k_categories;
    d["dropped_source"] = data.pair.dropped_source;
    d["dropped_target"] = data.pair.dropped_target;
    d["loads"] = json::array();
    for (const auto& l : data.loads) d["loads"].push_back(to_json(l));
    run.data = std::move(d);
    return run;
}

double final_accuracy(const RunReport& r) { return r.final.target ? r.final.target->accuracy : NAN; }
double final_f1(const RunReport& r) { return r.final.target ? r.final.target->weighted_f1 : NAN; }
std::optional<double> final_auc(const RunReport& r) {
    return r.final.target ? r.final.target->auc : std::nullopt;
}

}  // namespace

// ---- config -----------------------------------------------------------------

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw std::invalid_argument("config: seeds must not be empty");
    training.validate();
    if (data.kind == DataSpec::Kind::synthetic) {
        if (data.synth.k < 2) throw std::invalid_argument("config: synthetic k must be at least 2");
        if (data.synth.n_s == 0 || data.synth.n_t == 0 || data.synth.d_s == 0 || data.synth.d_t == 0)
            throw std::invalid_argument("config: synthetic sizes must be positive");
    } else {
        require_file(data.source_path, "source data");
        require_file(data.target_path, "target data");
        require_file(data.source_recipe, "source recipe");
        require_file(data.target_recipe, "target recipe");
    }
    if (!(data.fraction > 0.0 && data.fraction <= 1.0))
        throw std::invalid_argument("config: fraction must lie in (0, 1]");
}

ExperimentConfig experiment_from_json(const json& j, const fs::path& base_dir) {
    reject_unknown(j, {"name", "data", "training", "seeds", "output_dir"}, "experiment");
    ExperimentConfig c;
    c.name = j.value("name", c.name);
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("training")) c.training = train_config_from_json(j.at("training"));

    if (j.contains("data")) {
        const json& d = j.at("data");
        reject_unknown(d,
                       {"kind", "synth", "data_seed", "source", "target", "source_recipe",
                        "target_recipe", "recipe", "alignment", "binary", "fraction"},
                       "data");
        const std::string kind = d.value("kind", std::string("synthetic"));
        if (kind == "synthetic") c.data.kind = DataSpec::Kind::synthetic;
        else if (kind == "csv") c.data.kind = DataSpec::Kind::csv;
        else throw std::invalid_argument("config: data.kind must be synthetic or csv, got " + kind);
        if (d.contains("synth")) {
            const json& s = d.at("synth");
            reject_unknown(s,
                           {"k", "d_s", "d_t", "n_s", "n_t", "separation", "feature_noise",
                            "source_map_seed", "target_map_seed"},
                           "data.synth");
            auto& o = c.data.synth;
            o.k = s.value("k", o.k);
            o.d_s = s.value("d_s", o.d_s);
            o.d_t = s.value("d_t", o.d_t);
            o.n_s = s.value("n_s", o.n_s);
            o.n_t = s.value("n_t", o.n_t);
            o.separation = s.value("separation", o.separation);
            o.feature_noise = s.value("feature_noise", o.feature_noise);
            if (s.contains("source_map_seed")) o.source_map_seed = s.at("source_map_seed").get<std::uint64_t>();
            if (s.contains("target_map_seed")) o.target_map_seed = s.at("target_map_seed").get<std::uint64_t>();
        }
        if (d.contains("data_seed")) c.data.data_seed = d.at("data_seed").get<std::uint64_t>();
        auto path = [&](const char* key) {
            return d.contains(key) ? resolve(d.at(key).get<std::string>(), base_dir) : fs::path{};
        };
        c.data.source_path = path("source");
        c.data.target_path = path("target");
        // "recipe" is shorthand for the same recipe on both sides.
        c.data.source_recipe = d.contains("source_recipe") ? path("source_recipe") : path("recipe");
        c.data.target_recipe = d.contains("target_recipe") ? path("target_recipe") : path("recipe");
        if (d.contains("alignment")) {
            const json& a = d.at("alignment");
            reject_unknown(a, {"source_to_shared", "target_to_shared", "benign_shared"}, "data.alignment");
            if (a.contains("source_to_shared"))
                c.data.alignment.source_to_shared = parse_id_map(a.at("source_to_shared"), "source_to_shared");
            if (a.contains("target_to_shared"))
                c.data.alignment.target_to_shared = parse_id_map(a.at("target_to_shared"), "target_to_shared");
            c.data.alignment.benign_shared = a.value("benign_shared", c.data.alignment.benign_shared);
        }
        c.data.binary = d.value("binary", false);
        c.data.fraction = d.value("fraction", 1.0);
    }
    c.validate();
    return c;
}

ExperimentConfig load_experiment(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config file not found: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed config " + path.string() + ": " + e.what());
    }
    return experiment_from_json(j, path.parent_path());
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["name"] = c.name;
    j["seeds"] = c.seeds;
    j["output_dir"] = c.output_dir.string();
    j["training"] = to_json(c.training);
    json d;
    d["binary"] = c.data.binary;
    d["fraction"] = c.data.fraction;
    if (c.data.data_seed) d["data_seed"] = *c.data.data_seed;
    if (c.data.kind == DataSpec::Kind::synthetic) {
        const auto& o = c.data.synth;
        d["kind"] = "synthetic";
        d["synth"] = {{"k", o.k},     {"d_s", o.d_s}, {"d_t", o.d_t}, {"n_s", o.n_s},
                      {"n_t", o.n_t}, {"separation", o.separation}, {"feature_noise", o.feature_noise}};
        if (o.source_map_seed) d["synth"]["source_map_seed"] = *o.source_map_seed;
        if (o.target_map_seed) d["synth"]["target_map_seed"] = *o.target_map_seed;
    } else {
        // Absolute paths so the echo re-runs from any working directory.
        d["kind"] = "csv";
        d["source"] = fs::absolute(c.data.source_path).string();
        d["target"] = fs::absolute(c.data.target_path).string();
        d["source_recipe"] = fs::absolute(c.data.source_recipe).string();
        d["target_recipe"] = fs::absolute(c.data.target_recipe).string();
        d["alignment"] = {{"source_to_shared", id_map_json(c.data.alignment.source_to_shared)},
                          {"target_to_shared", id_map_json(c.data.alignment.target_to_shared)},
                          {"benign_shared", c.data.alignment.benign_shared}};
    }
    j["data"] = d;
    return j;
}

fs::path resolve_output_dir(const ExperimentConfig& cfg) {
    const char* root = std::getenv("ABRSI_OUTPUT_ROOT");
    if (root && *root && cfg.output_dir.is_relative()) return fs::path(root) / cfg.output_dir;
    return cfg.output_dir;
}

json to_json(const LoadReport& r) {
    return {{"path", r.path},
            {"rows_read", r.rows_read},
            {"malformed_rows", r.malformed_rows},
            {"unmapped_labels", r.unmapped_labels},
            {"duplicates_removed", r.duplicates_removed},
            {"rows_kept", r.rows_kept},
            {"warnings", r.warnings}};
}

// ---- data ---------------------------------------------------------------------

PreparedData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed) {
    const auto& spec = cfg.data;
    Rng rng(spec.data_seed.value_or(seed));
    PreparedData out;
    DomainDataset source, target;
    TargetTruth truth;
    bool binary = spec.binary;
    int benign = spec.alignment.benign_shared;
    if (spec.kind == DataSpec::Kind::synthetic) {
        auto sp = synth_pair(rng, spec.synth);
        source = std::move(sp.source);
        target = std::move(sp.target);
        truth = std::move(sp.truth);
    } else {
        const auto rs = PreprocessRecipe::load(spec.source_recipe);
        const auto rt = PreprocessRecipe::load(spec.target_recipe);
        binary = binary || rs.binary_mode || rt.binary_mode;
        LoadReport ls, lt;
        source = load_csv(spec.source_path, rs, DomainTag::source, &ls);
        auto labelled = load_csv(spec.target_path, rt, DomainTag::target, &lt);
        out.loads = {ls, lt};
        if (spec.fraction < 1.0) {
            source = stratified_sample(source, spec.fraction, rng);
            labelled = stratified_sample(labelled, spec.fraction, rng);
        }
        auto split = split_truth(std::move(labelled));
        target = std::move(split.first);
        truth = std::move(split.second);
    }
    const bool identity = spec.alignment.source_to_shared.empty() && spec.alignment.target_to_shared.empty();
    if (spec.kind == DataSpec::Kind::synthetic && identity && !binary) {
        out.pair.k_categories = source.k_categories;
        out.pair.source = std::move(source);
        out.pair.target = std::move(target);
        out.pair.truth = std::move(truth);
        return out;
    }
    LabelAlignment a = spec.alignment;
    a.binary_mode = binary;
    a.benign_shared = benign;
    out.pair = align_labels(source, target, truth, a);
    return out;
}

// ---- runs -----------------------------------------------------------------------

SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const std::optional<TrainConfig>& training) {
    const auto data = prepare_data(cfg, seed);
    return train_prepared(data, training.value_or(cfg.training), seed);
}

json aggregate(const std::vector<json>& summaries) {
    json out;
    out["runs"] = summaries.size();
    json seeds = json::array();
    for (const auto& s : summaries)
        if (s.contains("config") && s["config"].contains("seed")) seeds.push_back(s["config"]["seed"]);
    out["seeds"] = seeds;
    json metrics = json::object();
    for (const auto& [name, ptr] : metric_paths()) {
        std::vector<double> values;
        for (const auto& s : summaries)
            if (auto v = json_number(s, json::json_pointer(ptr))) values.push_back(*v);
        if (values.empty()) continue;
        const auto st = stats(values);
        metrics[name] = {{"mean", st.mean}, {"std", st.std}, {"n", st.n}, {"values", values}};
    }
    out["metrics"] = metrics;
    return out;
}

json cmd_train(const ExperimentConfig& cfg, const fs::path& out, std::ostream* log) {
    cfg.validate();
    std::vector<json> summaries;
    for (auto seed : cfg.seeds) {
        const auto run = run_seed(cfg, seed);
        const fs::path dir = out / ("seed_" + std::to_string(seed));
        fs::create_directories(dir);
        write_text(dir / "report.csv", run.report.csv(true));
        json summary = run.report.summary(true);
        summary["data"] = run.data;
        write_text(dir / "summary.json", summary.dump(2) + "\n");
        save_checkpoint(dir / "checkpoint.json", run.checkpoint);
        ExperimentConfig echo = cfg;
        echo.seeds = {seed};
        write_text(dir / "experiment.json", to_json(echo).dump(2) + "\n");
        summaries.push_back(std::move(summary));
        if (log) {
            *log << "seed " << seed << ": target accuracy " << csv_num(final_accuracy(run.report))
                 << ", " << run.report.epochs.size() << " epochs, " << run.report.total_seconds << " s\n";
        }
    }
    json agg = aggregate(summaries);
    agg["name"] = cfg.name;
    agg["experiment"] = to_json(cfg);
    write_text(out / "aggregate.json", agg.dump(2) + "\n");
    return agg;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, char group, std::ostream* log) {
    std::vector<std::string> variants{"full"};
    for (auto& m : ablation_group(group)) variants.push_back(m);
    std::vector<AblationRow> rows(variants.size());
    for (std::size_t v = 0; v < variants.size(); ++v) {
        rows[v].variant = variants[v];
        rows[v].description = ablation_description(variants[v]);
    }
    for (auto seed : cfg.seeds) {
        const auto data = prepare_data(cfg, seed);
        for (std::size_t v = 0; v < variants.size(); ++v) {
            TrainConfig t = cfg.training;
            t.apply_ablation(variants[v]);
            const auto run = train_prepared(data, t, seed);
            const auto& f = run.report.final;
            auto& row = rows[v];
            row.accuracy.push_back(final_accuracy(run.report));
            row.f1.push_back(final_f1(run.report));
            row.auc.push_back(final_auc(run.report));
            row.hard_accuracy.push_back(f.pl_voting ? f.pl_voting->hard_accuracy : std::nullopt);
            row.hellinger.push_back(f.pl_voting ? f.pl_voting->hellinger : std::nullopt);
            if (log)
                *log << variants[v] << " seed " << seed << ": target accuracy "
                     << csv_num(row.accuracy.back()) << "\n";
        }
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "variant,description,seeds,accuracy_mean,accuracy_std,f1_mean,f1_std,auc_mean,"
          "pl_hard_accuracy_mean,pl_hellinger_mean,accuracy_per_seed\n";
    for (const auto& r : rows) {
        const auto acc = stats(r.accuracy), f1 = stats(r.f1), auc = stats(r.auc),
                   hacc = stats(r.hard_accuracy), hel = stats(r.hellinger);
        std::string per_seed;
        for (std::size_t i = 0; i < r.accuracy.size(); ++i)
            per_seed += (i ? ";" : "") + csv_num(r.accuracy[i]);
        os << r.variant << ',' << csv_field(r.description) << ',' << r.accuracy.size() << ','
           << csv_num(acc.mean) << ',' << csv_num(acc.std) << ',' << csv_num(f1.mean) << ','
           << csv_num(f1.std) << ',' << (auc.n ? csv_num(auc.mean) : "") << ','
           << (hacc.n ? csv_num(hacc.mean) : "") << ',' << (hel.n ? csv_num(hel.mean) : "") << ','
           << per_seed << '\n';
    }
    return os.str();
}

std::vector<AblationRow> cmd_ablate(const ExperimentConfig& cfg, char group, const fs::path& out,
                                    std::ostream* log) {
    cfg.validate();
    auto rows = run_ablation(cfg, group, log);
    write_text(out / (std::string("ablation_") + group + ".csv"), ablation_csv(rows));
    return rows;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const std::string& param,
                                const std::vector<double>& values, std::ostream* log) {
    if (values.empty()) throw std::invalid_argument("sweep: no values given");
    std::vector<TrainConfig> configs;
    for (double v : values) {
        TrainConfig t = cfg.training;
        set_config_value(t, param, v);  // throws on unknown names before any run starts
        t.validate();
        configs.push_back(t);
    }
    std::vector<SweepRow> rows;
    for (auto seed : cfg.seeds) {
        const auto data = prepare_data(cfg, seed);
        for (std::size_t i = 0; i < values.size(); ++i) {
            const auto run = train_prepared(data, configs[i], seed);
            rows.push_back({param, values[i], seed, final_accuracy(run.report), final_f1(run.report),
                            final_auc(run.report)});
            if (log)
                *log << param << "=" << csv_num(values[i]) << " seed " << seed << ": target accuracy "
                     << csv_num(rows.back().accuracy) << "\n";
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [&](const SweepRow& a, const SweepRow& b) {
        auto ia = std::find(values.begin(), values.end(), a.value) - values.begin();
        auto ib = std::find(values.begin(), values.end(), b.value) - values.begin();
        return ia < ib;
    });
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "param,value,seed,accuracy,weighted_f1,auc\n";
    for (const auto& r : rows)
        os << r.param << ',' << csv_num(r.value) << ',' << r.seed << ',' << csv_num(r.accuracy) << ','
           << csv_num(r.f1) << ',' << csv_opt(r.auc) << '\n';
    return os.str();
}

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg, const std::string& param,
                                const std::vector<double>& values, const fs::path& out,
                                std::ostream* log) {
    cfg.validate();
    auto rows = run_sweep(cfg, param, values, log);
    write_text(out / ("sweep_" + param + ".csv"), sweep_csv(rows));
    return rows;
}

// ---- prep and report ------------------------------------------------------------

LoadReport cmd_prep(const fs::path& recipe_path, const fs::path& input, const fs::path& output,
                    double fraction, std::uint64_t seed) {
    require_file(recipe_path, "recipe");
    require_file(input, "input");
    const auto recipe = PreprocessRecipe::load(recipe_path);
    LoadReport rep;
    auto ds = load_csv(input, recipe, DomainTag::source, &rep);
    if (fraction < 1.0) {
        Rng rng(seed);
        ds = stratified_sample(ds, fraction, rng);
        rep.warnings.push_back("kept a stratified " + csv_num(fraction) + " fraction: " +
                               std::to_string(ds.n_instances()) + " rows");
    }
    // First raw name per category, so the written labels go back through the same map.
    std::map<int, std::string> names;
    for (const auto& [raw, id] : recipe.label_map) names.emplace(id, raw);

    std::ostringstream os;
    for (const auto& f : recipe.selected_features) os << csv_field(f) << ',';
    os << csv_field(recipe.label_column) << '\n';
    for (std::size_t i = 0; i < ds.n_instances(); ++i) {
        for (std::size_t c = 0; c < ds.dim(); ++c) os << csv_num(ds.features(i, c)) << ',';
        os << csv_field(names.at((*ds.labels)[i])) << '\n';
    }
    write_text(output, os.str());

    json r;
    r["name"] = recipe.name + "-prepared";
    r["selected_features"] = recipe.selected_features;
    r["label_column"] = recipe.label_column;
    r["label_map"] = recipe.label_map;
    r["binary_mode"] = recipe.binary_mode;
    r["benign_category"] = recipe.benign_category;
    fs::path rp = output;
    rp.replace_extension(".recipe.json");
    write_text(rp, r.dump(2) + "\n");
    return rep;
}

std::string cmd_report(const fs::path& root) {
    if (!fs::exists(root)) throw std::runtime_error("report directory not found: " + root.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file() && e.path().filename() == "summary.json") files.push_back(e.path());
    if (files.empty()) throw std::runtime_error("no summary.json under " + root.string());
    std::sort(files.begin(), files.end());

    std::ostringstream os;
    os << "run,ablation,seed,source_only,epochs";
    for (const auto& [name, ptr] : metric_paths()) os << ',' << name;
    os << '\n';
    for (const auto& p : files) {
        std::ifstream in(p);
        json s;
        try {
            in >> s;
        } catch (const json::exception& e) {
            throw std::runtime_error("malformed summary " + p.string() + ": " + e.what());
        }
        const json& c = s.value("config", json::object());
        os << csv_field(fs::relative(p.parent_path(), root).string()) << ','
           << c.value("ablation", std::string()) << ',' << c.value("seed", std::uint64_t{0}) << ','
           << (c.value("source_only", false) ? "true" : "false") << ',' << s.value("epochs", std::size_t{0});
        for (const auto& [name, ptr] : metric_paths())
            os << ',' << csv_opt(json_number(s, json::json_pointer(ptr)));
        os << '\n';
    }
    return os.str();
}

}  // namespace abrsi
