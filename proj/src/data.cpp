#include "abrsi/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace abrsi {

std::string to_string(DomainTag tag) {
    return tag == DomainTag::source ? "source" : "target";
}

void DomainDataset::validate() const {
    if (tag == DomainTag::source && !labels)
        throw std::invalid_argument("source dataset must be labelled");
    if (!labels) return;
    if (labels->size() != n_instances())
        throw std::invalid_argument("label count " + std::to_string(labels->size()) +
                                    " does not match " + std::to_string(n_instances()) +
                                    " instances");
    for (int y : *labels)
        if (y < 1 || y > static_cast<int>(k_categories))
            throw std::invalid_argument("label " + std::to_string(y) + " outside [1, " +
                                        std::to_string(k_categories) + "]");
}

TargetTruth::TargetTruth(std::vector<int> labels, std::size_t k_categories)
    : labels_(std::move(labels)), k_(k_categories) {
    for (int y : labels_)
        if (y < 1 || y > static_cast<int>(k_))
            throw std::invalid_argument("TargetTruth: label " + std::to_string(y) +
                                        " outside [1, " + std::to_string(k_) + "]");
}

std::vector<double> TargetTruth::distribution() const {
    std::vector<double> p(k_, 0.0);
    for (int y : labels_) p[static_cast<std::size_t>(y - 1)] += 1.0;
    for (double& x : p) x /= static_cast<double>(std::max<std::size_t>(labels_.size(), 1));
    return p;
}

std::pair<DomainDataset, TargetTruth> split_truth(DomainDataset labelled_target) {
    if (!labelled_target.labels) throw std::invalid_argument("split_truth: dataset has no labels");
    TargetTruth truth(std::move(*labelled_target.labels), labelled_target.k_categories);
    labelled_target.labels.reset();
    labelled_target.tag = DomainTag::target;
    return {std::move(labelled_target), std::move(truth)};
}

// ---------------------------------------------------------------------------
// Recipes
// ---------------------------------------------------------------------------

std::size_t PreprocessRecipe::k_categories() const {
    int k = 0;
    for (const auto& [raw, id] : label_map) k = std::max(k, id);
    return static_cast<std::size_t>(k);
}

void PreprocessRecipe::validate() const {
    if (selected_features.empty()) throw std::invalid_argument("recipe: no selected_features");
    if (label_map.empty()) throw std::invalid_argument("recipe: empty label_map");
    std::set<std::string> seen;
    for (const auto& f : selected_features)
        if (!seen.insert(f).second) throw std::invalid_argument("recipe: duplicate feature " + f);
    for (const auto& [raw, id] : label_map)
        if (id < 1) throw std::invalid_argument("recipe: label id for '" + raw + "' must be >= 1");
}

PreprocessRecipe PreprocessRecipe::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open recipe file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed recipe " + path.string() + ": " + e.what());
    }
    PreprocessRecipe r;
    r.name = j.value("name", path.stem().string());
    r.selected_features = j.at("selected_features").get<std::vector<std::string>>();
    r.label_column = j.value("label_column", std::string("label"));
    if (j.contains("categorical_maps"))
        r.categorical_maps =
            j.at("categorical_maps").get<std::map<std::string, std::map<std::string, double>>>();
    r.label_map = j.at("label_map").get<std::map<std::string, int>>();
    r.binary_mode = j.value("binary_mode", false);
    r.benign_category = j.value("benign_category", 1);
    r.validate();
    return r;
}

// ---------------------------------------------------------------------------
// CSV loading
// ---------------------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n'))
        --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace

void minmax_scale(Matrix& m) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t r = 0; r < m.rows(); ++r) {
            lo = std::min(lo, m(r, c));
            hi = std::max(hi, m(r, c));
        }
        const double span = hi - lo;
        for (std::size_t r = 0; r < m.rows(); ++r)
            m(r, c) = span > 0.0 ? std::clamp((m(r, c) - lo) / span, 0.0, 1.0) : 0.0;
    }
}

DomainDataset load_csv(const std::filesystem::path& path, const PreprocessRecipe& recipe,
                       DomainTag tag, LoadReport* report) {
    recipe.validate();
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open CSV file: " + path.string());
    LoadReport local;
    LoadReport& rep = report ? *report : local;
    rep = LoadReport{};
    rep.path = path.string();

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty CSV file: " + path.string());
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
    const auto header = split_csv_line(line);
    auto column_of = [&](const std::string& name) -> std::size_t {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw std::runtime_error("CSV " + path.string() + " is missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    std::vector<std::size_t> feature_cols;
    for (const auto& f : recipe.selected_features) feature_cols.push_back(column_of(f));
    const std::size_t label_col = column_of(recipe.label_column);

    std::vector<double> values;
    std::vector<int> labels;
    std::set<std::pair<std::vector<double>, int>> seen;
    const std::size_t d = feature_cols.size();
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++rep.rows_read;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            ++rep.malformed_rows;
            continue;
        }
        std::vector<double> row(d);
        bool ok = true;
        for (std::size_t j = 0; j < d && ok; ++j) {
            const std::string& cell = cells[feature_cols[j]];
            const auto cat = recipe.categorical_maps.find(recipe.selected_features[j]);
            if (cat != recipe.categorical_maps.end()) {
                const auto hit = cat->second.find(cell);
                if (hit == cat->second.end()) ok = false;
                else row[j] = hit->second;
            } else if (auto v = parse_number(cell)) {
                row[j] = *v;
            } else {
                ok = false;
            }
        }
        if (!ok) {
            ++rep.malformed_rows;
            continue;
        }
        const auto lab = recipe.label_map.find(cells[label_col]);
        if (lab == recipe.label_map.end()) {
            ++rep.unmapped_labels;
            continue;
        }
        if (!seen.emplace(row, lab->second).second) {
            ++rep.duplicates_removed;
            continue;
        }
        values.insert(values.end(), row.begin(), row.end());
        labels.push_back(lab->second);
    }
    if (rep.malformed_rows > 0)
        rep.warnings.push_back(std::to_string(rep.malformed_rows) + " malformed rows skipped");
    if (rep.unmapped_labels > 0)
        rep.warnings.push_back(std::to_string(rep.unmapped_labels) +
                               " rows dropped with unmapped labels");
    if (labels.empty())
        throw std::runtime_error("CSV " + path.string() + " has no usable rows after filtering");
    rep.rows_kept = labels.size();

    DomainDataset ds;
    ds.features = Matrix(labels.size(), d, std::move(values));
    minmax_scale(ds.features);
    ds.labels = std::move(labels);
    ds.tag = tag;
    ds.k_categories = recipe.k_categories();
    ds.validate();
    return ds;
}

DomainDataset stratified_sample(const DomainDataset& data, double fraction, Rng& rng) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw std::invalid_argument("stratified_sample: fraction must lie in (0, 1]");
    if (!data.labels) throw std::invalid_argument("stratified_sample: dataset is unlabelled");
    std::vector<std::vector<std::size_t>> by_class(data.k_categories);
    for (std::size_t i = 0; i < data.n_instances(); ++i)
        by_class[static_cast<std::size_t>((*data.labels)[i] - 1)].push_back(i);
    std::vector<std::size_t> keep;
    for (auto& members : by_class) {
        if (members.empty()) continue;
        // Partial Fisher-Yates.
        const auto take = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size()))));
        for (std::size_t i = 0; i < take; ++i) {
            const std::size_t j = i + rng.uniform_index(members.size() - i);
            std::swap(members[i], members[j]);
        }
        keep.insert(keep.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::sort(keep.begin(), keep.end());
    DomainDataset out;
    out.features = data.features.select_rows(keep);
    std::vector<int> labels;
    for (std::size_t i : keep) labels.push_back((*data.labels)[i]);
    out.labels = std::move(labels);
    out.tag = data.tag;
    out.k_categories = data.k_categories;
    return out;
}

// ---------------------------------------------------------------------------
// Label alignment
// ---------------------------------------------------------------------------

AlignedPair align_labels(const DomainDataset& source, const DomainDataset& target,
                         const TargetTruth& truth, const LabelAlignment& alignment) {
    source.validate();
    if (target.labels) throw std::invalid_argument("align_labels: target must be unlabelled");
    if (truth.size() != target.n_instances())
        throw std::invalid_argument("align_labels: truth length does not match target");

    auto identity_map = [](std::size_t k) {
        std::map<int, int> m;
        for (int i = 1; i <= static_cast<int>(k); ++i) m[i] = i;
        return m;
    };
    const auto s_map = alignment.source_to_shared.empty() ? identity_map(source.k_categories)
                                                          : alignment.source_to_shared;
    const auto t_map = alignment.target_to_shared.empty() ? identity_map(truth.k_categories())
                                                          : alignment.target_to_shared;
    std::set<int> s_ids, t_ids;
    for (const auto& [from, to] : s_map) s_ids.insert(to);
    for (const auto& [from, to] : t_map) t_ids.insert(to);
    std::vector<int> shared;
    std::set_intersection(s_ids.begin(), s_ids.end(), t_ids.begin(), t_ids.end(),
                          std::back_inserter(shared));
    if (shared.empty()) throw std::invalid_argument("align_labels: domains share no categories");

    std::map<int, int> compact;  // shared id -> output id
    if (alignment.binary_mode) {
        for (int id : shared) compact[id] = (id == alignment.benign_shared) ? 1 : 2;
    } else {
        int next = 1;
        for (int id : shared) compact[id] = next++;
    }
    const std::size_t k = alignment.binary_mode ? 2 : shared.size();

    auto remap = [&](const std::map<int, int>& dom, int y) -> std::optional<int> {
        const auto a = dom.find(y);
        if (a == dom.end()) return std::nullopt;
        const auto b = compact.find(a->second);
        if (b == compact.end()) return std::nullopt;
        return b->second;
    };

    AlignedPair out;
    out.k_categories = k;
    std::vector<std::size_t> keep_s, keep_t;
    std::vector<int> ys, yt;
    for (std::size_t i = 0; i < source.n_instances(); ++i)
        if (auto y = remap(s_map, (*source.labels)[i])) {
            keep_s.push_back(i);
            ys.push_back(*y);
        }
    for (std::size_t i = 0; i < target.n_instances(); ++i)
        if (auto y = remap(t_map, truth.labels()[i])) {
            keep_t.push_back(i);
            yt.push_back(*y);
        }
    if (keep_s.empty() || keep_t.empty())
        throw std::invalid_argument("align_labels: no instances left after alignment");
    out.dropped_source = source.n_instances() - keep_s.size();
    out.dropped_target = target.n_instances() - keep_t.size();
    out.source.features = source.features.select_rows(keep_s);
    out.source.labels = std::move(ys);
    out.source.tag = DomainTag::source;
    out.source.k_categories = k;
    out.target.features = target.features.select_rows(keep_t);
    out.target.tag = DomainTag::target;
    out.target.k_categories = k;
    out.truth = TargetTruth(std::move(yt), k);
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic pair
// ---------------------------------------------------------------------------

namespace {

Matrix random_map(std::size_t out_dim, std::size_t latent_dim, Rng& rng) {
    Matrix a(latent_dim, out_dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(latent_dim));
    for (double& x : a.data()) x = rng.normal() * scale;
    return a;
}

}  // namespace

SynthPair synth_pair(Rng& rng, const SynthOptions& opts) {
    if (opts.k < 2) throw std::invalid_argument("synth_pair: need at least two categories");
    if (opts.d_s == 0 || opts.d_t == 0 || opts.n_s == 0 || opts.n_t == 0)
        throw std::invalid_argument("synth_pair: counts and dimensions must be positive");
    if (!(opts.separation >= 0.0)) throw std::invalid_argument("synth_pair: negative separation");

    const std::size_t latent = opts.k;
    // Class means sit on scaled basis vectors: every pair is `separation` apart.
    Matrix means(opts.k, latent);
    for (std::size_t c = 0; c < opts.k; ++c) means(c, c) = opts.separation / std::sqrt(2.0);

    Rng src_map_rng(opts.source_map_seed ? *opts.source_map_seed : rng.next_u64());
    Rng tgt_map_rng(opts.target_map_seed ? *opts.target_map_seed : rng.next_u64());
    const Matrix map_s = random_map(opts.d_s, latent, src_map_rng);
    const Matrix map_t = random_map(opts.d_t, latent, tgt_map_rng);

    auto draw = [&](std::size_t n, const Matrix& map, Matrix& latents, std::vector<int>& labels) {
        latents = Matrix(n, latent);
        labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = i % opts.k;
            labels[i] = static_cast<int>(c + 1);
            for (std::size_t j = 0; j < latent; ++j) latents(i, j) = means(c, j) + rng.normal();
        }
        Matrix x = matmul(latents, map);
        for (double& v : x.data()) v += opts.feature_noise * rng.normal();
        minmax_scale(x);
        return x;
    };

    SynthPair out;
    std::vector<int> ys, yt;
    out.source.features = draw(opts.n_s, map_s, out.source_latents, ys);
    out.source.labels = std::move(ys);
    out.source.tag = DomainTag::source;
    out.source.k_categories = opts.k;
    out.target.features = draw(opts.n_t, map_t, out.target_latents, yt);
    out.target.tag = DomainTag::target;
    out.target.k_categories = opts.k;
    out.truth = TargetTruth(std::move(yt), opts.k);
    return out;
}

}  // namespace abrsi
