#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "abrsi/data.hpp"
#include "oracles.hpp"

using abrsi::DomainDataset;
using abrsi::DomainTag;
using abrsi::Matrix;
using abrsi::PreprocessRecipe;
using abrsi::Rng;

namespace {

struct TempFile {
    std::filesystem::path path;
    TempFile(const std::string& name, const std::string& body)
        : path(std::filesystem::temp_directory_path() / ("abrsi_test_" + name)) {
        std::ofstream(path) << body;
    }
    ~TempFile() { std::filesystem::remove(path); }
};

PreprocessRecipe two_feature_recipe() {
    PreprocessRecipe r;
    r.name = "fixture";
    r.selected_features = {"a", "b"};
    r.label_map = {{"normal", 1}, {"dos", 2}};
    return r;
}

// Logistic regression by plain gradient descent; returns training accuracy.
double logistic_probe_accuracy(const Matrix& x, const std::vector<int>& y) {
    const std::size_t n = x.rows(), d = x.cols();
    std::vector<double> w(d, 0.0);
    double b = 0.0;
    for (int it = 0; it < 500; ++it) {
        std::vector<double> gw(d, 0.0);
        double gb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double z = b;
            for (std::size_t j = 0; j < d; ++j) z += w[j] * x(i, j);
            const double p = 1.0 / (1.0 + std::exp(-z));
            const double err = p - (y[i] == 2 ? 1.0 : 0.0);
            for (std::size_t j = 0; j < d; ++j) gw[j] += err * x(i, j);
            gb += err;
        }
        for (std::size_t j = 0; j < d; ++j) w[j] -= 0.1 * gw[j] / static_cast<double>(n);
        b -= 0.1 * gb / static_cast<double>(n);
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double z = b;
        for (std::size_t j = 0; j < d; ++j) z += w[j] * x(i, j);
        correct += ((z > 0) == (y[i] == 2));
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace

TEST_CASE("load_csv drops a duplicate row") {
    TempFile f("dup.csv", "a,b,label\n1,2,normal\n1,2,normal\n3,4,dos\n");
    abrsi::LoadReport rep;
    const auto ds = abrsi::load_csv(f.path, two_feature_recipe(), DomainTag::source, &rep);
    CHECK(ds.n_instances() == 2);
    CHECK(rep.duplicates_removed == 1);
    CHECK(ds.k_categories == 2);
}

TEST_CASE("load_csv scales a constant column to zero") {
    TempFile f("const.csv", "a,b,label\n5,1,normal\n5,2,dos\n5,3,dos\n");
    const auto ds = abrsi::load_csv(f.path, two_feature_recipe(), DomainTag::source);
    for (std::size_t i = 0; i < ds.n_instances(); ++i) CHECK(ds.features(i, 0) == 0.0);
}

TEST_CASE("load_csv min-max scaling matches a hand oracle") {
    const std::vector<double> a{3, -1, 7, 2.5, 0, 10, -4, 6, 1, 8};
    const std::vector<double> b{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.7};
    std::string body = "label,b,extra,a\n";
    for (std::size_t i = 0; i < a.size(); ++i)
        body += std::string(i % 2 ? "dos" : "normal") + "," + std::to_string(b[i]) + ",x," +
                std::to_string(a[i]) + "\n";
    TempFile f("ten.csv", body);
    const auto ds = abrsi::load_csv(f.path, two_feature_recipe(), DomainTag::source);
    REQUIRE(ds.n_instances() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(std::abs(ds.features(i, 0) - (a[i] + 4.0) / 14.0) < 1e-12);
        CHECK(std::abs(ds.features(i, 1) - (b[i] - 0.1) / 1.6) < 1e-12);
        CHECK((*ds.labels)[i] == (i % 2 ? 2 : 1));
    }
}

TEST_CASE("load_csv skips malformed rows and unmapped labels, and reports them") {
    TempFile f("messy.csv",
               "a,b,label\n1,2,normal\n1,oops,dos\n1,2\n4,5,probe\n\"6\",7,dos\n");
    abrsi::LoadReport rep;
    const auto ds = abrsi::load_csv(f.path, two_feature_recipe(), DomainTag::source, &rep);
    CHECK(ds.n_instances() == 2);
    CHECK(rep.rows_read == 5);
    CHECK(rep.malformed_rows == 2);
    CHECK(rep.unmapped_labels == 1);
    CHECK(rep.warnings.size() == 2);
}

TEST_CASE("load_csv errors name the problem") {
    TempFile missing("missing.csv", "a,label\n1,normal\n");
    try {
        abrsi::load_csv(missing.path, two_feature_recipe(), DomainTag::source);
        FAIL("expected throw");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("'b'") != std::string::npos);
    }
    TempFile empty("allbad.csv", "a,b,label\n1,2,probe\n");
    CHECK_THROWS_AS(abrsi::load_csv(empty.path, two_feature_recipe(), DomainTag::source),
                    std::runtime_error);
}

TEST_CASE("categorical columns map through the recipe") {
    auto recipe = two_feature_recipe();
    recipe.categorical_maps["b"] = {{"tcp", 0.0}, {"udp", 1.0}, {"icmp", 2.0}};
    TempFile f("cat.csv", "a,b,label\n0,tcp,normal\n1,icmp,dos\n2,udp,dos\n3,gre,dos\n");
    abrsi::LoadReport rep;
    const auto ds = abrsi::load_csv(f.path, recipe, DomainTag::source, &rep);
    REQUIRE(ds.n_instances() == 3);
    CHECK(ds.features(0, 1) == 0.0);
    CHECK(ds.features(1, 1) == 1.0);
    CHECK(ds.features(2, 1) == 0.5);
    CHECK(rep.malformed_rows == 1);
}

TEST_CASE("recipe files round-trip from json") {
    TempFile f("recipe.json", R"({"name": "r", "selected_features": ["x", "y"],
        "label_map": {"benign": 1, "attack": 2}, "binary_mode": true})");
    const auto r = PreprocessRecipe::load(f.path);
    CHECK(r.selected_features.size() == 2);
    CHECK(r.k_categories() == 2);
    CHECK(r.binary_mode);
    TempFile bad("bad.json", R"({"selected_features": ["x", "x"], "label_map": {"a": 1}})");
    CHECK_THROWS_AS(PreprocessRecipe::load(bad.path), std::invalid_argument);
}

namespace {

DomainDataset labelled(std::vector<int> labels, std::size_t k, DomainTag tag) {
    DomainDataset d;
    d.features = Matrix(labels.size(), 2, 0.5);
    for (std::size_t i = 0; i < labels.size(); ++i) d.features(i, 0) = static_cast<double>(i);
    d.labels = std::move(labels);
    d.tag = tag;
    d.k_categories = k;
    return d;
}

}  // namespace

TEST_CASE("align_labels with identical label sets keeps everything") {
    const auto src = labelled({1, 2, 3, 4, 1}, 4, DomainTag::source);
    auto [tgt, truth] = abrsi::split_truth(labelled({4, 3, 2, 1}, 4, DomainTag::target));
    const auto out = abrsi::align_labels(src, tgt, truth, {});
    CHECK(out.k_categories == 4);
    CHECK(out.dropped_source == 0);
    CHECK(out.dropped_target == 0);
    CHECK(*out.source.labels == *src.labels);
    CHECK(out.truth.labels() == truth.labels());
}

TEST_CASE("align_labels binary mode collapses intrusion categories") {
    const auto src = labelled({1, 2, 3, 4}, 4, DomainTag::source);
    auto [tgt, truth] = abrsi::split_truth(labelled({1, 4, 2, 1}, 4, DomainTag::target));
    abrsi::LabelAlignment al;
    al.binary_mode = true;
    const auto out = abrsi::align_labels(src, tgt, truth, al);
    CHECK(out.k_categories == 2);
    CHECK(*out.source.labels == std::vector<int>{1, 2, 2, 2});
    CHECK(out.truth.labels() == std::vector<int>{1, 2, 2, 1});
}

TEST_CASE("align_labels drops exactly the unshared categories") {
    Rng rng(3);
    std::vector<int> ys;
    for (int i = 0; i < 200; ++i) ys.push_back(1 + static_cast<int>(rng.uniform_index(5)));
    const auto src = labelled(ys, 5, DomainTag::source);
    auto [tgt, truth] = abrsi::split_truth(labelled({1, 2, 3, 1, 2, 3}, 3, DomainTag::target));
    // Source categories 2 and 5 have no target counterpart.
    abrsi::LabelAlignment al;
    al.source_to_shared = {{1, 10}, {2, 20}, {3, 30}, {4, 40}, {5, 50}};
    al.target_to_shared = {{1, 10}, {2, 30}, {3, 40}};
    const auto out = abrsi::align_labels(src, tgt, truth, al);
    std::size_t expect_dropped = 0;
    for (int y : ys) expect_dropped += (y == 2 || y == 5);
    CHECK(out.dropped_source == expect_dropped);
    CHECK(out.dropped_target == 0);
    CHECK(out.k_categories == 3);
    // Renumbered to 1..3, order of shared ids preserved.
    for (std::size_t i = 0, j = 0; i < ys.size(); ++i) {
        if (ys[i] == 2 || ys[i] == 5) continue;
        const int expect = ys[i] == 1 ? 1 : ys[i] == 3 ? 2 : 3;
        CHECK((*out.source.labels)[j++] == expect);
    }
    CHECK(out.truth.labels() == std::vector<int>{1, 2, 3, 1, 2, 3});

    abrsi::LabelAlignment none;
    none.source_to_shared = {{1, 1}};
    none.target_to_shared = {{1, 2}};
    CHECK_THROWS_AS(abrsi::align_labels(src, tgt, truth, none), std::invalid_argument);
}

TEST_CASE("stratified_sample keeps every category") {
    Rng rng(6);
    std::vector<int> ys;
    for (int i = 0; i < 100; ++i) ys.push_back(i < 90 ? 1 : 2);
    const auto d = labelled(ys, 2, DomainTag::source);
    const auto s = abrsi::stratified_sample(d, 0.1, rng);
    CHECK(s.n_instances() == 10);
    CHECK(std::count(s.labels->begin(), s.labels->end(), 2) == 1);
}

TEST_CASE("synth_pair is deterministic and bounded") {
    abrsi::SynthOptions o;
    o.n_s = 300;
    o.n_t = 200;
    Rng a(42), b(42);
    const auto p = abrsi::synth_pair(a, o);
    const auto q = abrsi::synth_pair(b, o);
    CHECK(p.source.features == q.source.features);
    CHECK(p.target.features == q.target.features);
    CHECK(*p.source.labels == *q.source.labels);
    CHECK(p.truth.labels() == q.truth.labels());
    CHECK(p.source.dim() == 20);
    CHECK(p.target.dim() == 12);
    CHECK_FALSE(p.target.labelled());
    for (double v : p.source.features.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    for (double v : p.target.features.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    const auto dist = p.truth.distribution();
    for (double x : dist) CHECK(x == doctest::Approx(0.25));
    o.n_s = 0;
    CHECK_THROWS_AS(abrsi::synth_pair(a, o), std::invalid_argument);
}

TEST_CASE("synth_pair separation controls the signal") {
    abrsi::SynthOptions o;
    o.k = 2;
    o.n_s = 1000;
    o.n_t = 10;
    o.separation = 10.0;
    Rng rng(1);
    const auto strong = abrsi::synth_pair(rng, o);
    CHECK(logistic_probe_accuracy(strong.source_latents, *strong.source.labels) > 0.99);

    o.separation = 0.0;
    const auto none = abrsi::synth_pair(rng, o);
    CHECK(logistic_probe_accuracy(none.source_latents, *none.source.labels) < 0.6);
}

TEST_CASE("synth_pair with matching maps yields matching class centroids") {
    abrsi::SynthOptions o;
    o.d_s = o.d_t = 10;
    o.source_map_seed = o.target_map_seed = 77;
    o.n_s = o.n_t = 4000;
    Rng rng(5);
    const auto p = abrsi::synth_pair(rng, o);
    for (int c = 1; c <= 4; ++c) {
        std::vector<double> ms(10, 0.0), mt(10, 0.0), ss(10, 0.0);
        double ns = 0, nt = 0;
        for (std::size_t i = 0; i < o.n_s; ++i)
            if ((*p.source.labels)[i] == c) {
                for (std::size_t j = 0; j < 10; ++j) ms[j] += p.source.features(i, j);
                ++ns;
            }
        for (std::size_t i = 0; i < o.n_t; ++i)
            if (p.truth.labels()[i] == c) {
                for (std::size_t j = 0; j < 10; ++j) mt[j] += p.target.features(i, j);
                ++nt;
            }
        for (std::size_t j = 0; j < 10; ++j) ms[j] /= ns;
        for (std::size_t i = 0; i < o.n_s; ++i)
            if ((*p.source.labels)[i] == c)
                for (std::size_t j = 0; j < 10; ++j)
                    ss[j] += std::pow(p.source.features(i, j) - ms[j], 2) / ns;
        // Within-class spread is the noise scale.
        for (std::size_t j = 0; j < 10; ++j) CHECK(std::abs(ms[j] - mt[j] / nt) < std::sqrt(ss[j]));
    }
}
