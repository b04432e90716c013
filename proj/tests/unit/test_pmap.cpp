#include <algorithm>
#include <cmath>
#include <sstream>

#include <doctest.h>

#include "ceda/chain.hpp"
#include "ceda/error.hpp"
#include "ceda/log.hpp"
#include "ceda/pmap.hpp"
#include "ceda/rng.hpp"
#include "ceda/synth.hpp"

using namespace ceda;

namespace {

const std::vector<std::string> kXY{"f1", "f2"};

LabeledDataset clouds(std::vector<std::vector<double>> centers, double sd, std::size_t n, std::uint64_t seed) {
    GaussCloudsParams p;
    p.centers = std::move(centers);
    p.sd = {sd};
    p.n_per_label = n;
    return synth_generate(p, seed);
}

std::pair<LabeledDataset, LabeledDataset> halves(const LabeledDataset& ds, std::uint64_t seed) {
    SplitSpec s;
    s.seed = seed;
    return split_train_test(ds, s);
}

CompetitionConfig no_outliers() {
    CompetitionConfig c;
    c.outlier_enabled = false;
    return c;
}

}  // namespace

TEST_CASE("competition config validation") {
    CompetitionConfig c;
    CHECK_NOTHROW(c.validate());
    c.c_lower = 1.2;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.k_star = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.dominant_fraction = 0.5;
    CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("silverman bandwidth and kde") {
    const std::vector<double> s{1, 2, 3, 4, 5};
    const double h = silverman_bandwidth(s);
    CHECK(h > 0.0);
    // kde of one point is a normal density
    const std::vector<double> one{0.0};
    CHECK(log_kde(one, 2.0, 1.0) == doctest::Approx(-0.5 * std::log(2 * M_PI) - std::log(2.0) - 0.125));
    // far tails stay finite
    CHECK(std::isfinite(log_kde(s, h, 1e3)));
}

TEST_CASE("label set ordering and names") {
    CHECK(label_set_less({1}, {0, 1}));
    CHECK(label_set_less({0, 2}, {1, 2}));
    CHECK(label_set_less({0, 1, 2}, {}));
    const std::vector<std::string> names{"a", "b", "c"};
    CHECK(label_set_display({1, 2}, names) == "b, c");
    CHECK(label_set_display({0, 1, 2}, names) == "all");
    CHECK(label_set_display({}, names) == "none");
    CHECK(label_set_token({1, 2}, names) == "bc");
    CHECK(label_set_token({0, 2}, {"ab", "cd", "ef"}) == "ab+ef");
}

TEST_CASE("a point deep inside the left cloud wins every vote") {
    const LabeledDataset train = clouds({{0, 0}, {10, 10}}, 1.0, 100, 1);
    const LabelTree tree = build_let(train, kXY, LetOptions{});
    const TreeClassifier cls(train, kXY, tree, CompetitionConfig{});
    const std::vector<double> x{0.0, 0.0};
    const CompetitionResult r = cls.compete(x, tree.root);
    const bool left_is_zero = tree.node(tree.node(tree.root).left).labels == std::vector<int>{0};
    CHECK(r.decision == (left_is_zero ? BranchDecision::left : BranchDecision::right));
    CHECK(std::max(r.left_votes, r.right_votes) == 20);
    CHECK(cls.predict(x).labels == std::vector<int>{0});
}

TEST_CASE("interleaved identical clouds stop at the root") {
    const LabeledDataset train = clouds({{0, 0}, {0, 0}}, 1.0, 400, 2);
    const LabelTree tree = build_let(train, kXY, LetOptions{});
    const TreeClassifier cls(train, kXY, tree, no_outliers());
    const std::vector<double> x{0.0, 0.0};
    const CompetitionResult r = cls.compete(x, tree.root);
    REQUIRE(r.pl_ratio);
    CHECK(*r.pl_ratio > 0.65);
    CHECK(*r.pl_ratio < 100.0 / 65.0);
    CHECK(r.decision == BranchDecision::stop);
    CHECK(cls.predict(x).labels == std::vector<int>{0, 1});
}

TEST_CASE("a far point is an outlier with the empty set") {
    const LabeledDataset train = clouds({{0, 0}, {1, 1}}, 0.1, 100, 3);
    const LabelTree tree = build_let(train, kXY, LetOptions{});
    const TreeClassifier cls(train, kXY, tree, CompetitionConfig{});
    const std::vector<double> x{15.0, -15.0};
    const PredictedLabelSet p = cls.predict(x);
    CHECK(p.labels.empty());
    CHECK(p.path.back().decision == BranchDecision::outlier);
    CHECK(std::isfinite(cls.outlier_threshold(tree.root)));
    CHECK(std::isinf(TreeClassifier(train, kXY, tree, no_outliers()).outlier_threshold(tree.root)));
}

TEST_CASE("single-label tree predicts that label") {
    const LabeledDataset train = clouds({{0, 0}}, 1.0, 50, 4);
    const LabelTree tree = build_let(train, kXY, LetOptions{});
    const TreeClassifier cls(train, kXY, tree, no_outliers());
    const std::vector<double> x{0.3, 0.1};
    CHECK(cls.predict(x).labels == std::vector<int>{0});
}

TEST_CASE("thresholds (1,1) always give singletons") {
    const LabeledDataset ds = clouds({{0, 0}, {0.5, 0}, {0, 0.5}, {0.5, 0.5}}, 0.5, 100, 5);
    const auto [train, test] = halves(ds, 5);
    CompetitionConfig c = no_outliers();
    c.c_lower = c.c_upper = 1.0;
    const LabelTree tree = build_let(train, kXY, LetOptions{});
    const PredictiveMap map = predictive_map(test, tree, train, kXY, c);
    for (const auto& p : map.points) CHECK(p.prediction.labels.size() == 1);
}

TEST_CASE("separable clouds give a diagonal map") {
    const LabeledDataset ds = clouds({{0, 0}, {1, 0}, {0, 1}}, 0.05, 100, 6);
    const auto [train, test] = halves(ds, 6);
    const LabelTree tree = build_let(train, kXY, LetOptions{});
    const PredictiveMap map = predictive_map(test, tree, train, kXY, no_outliers());
    REQUIRE(map.categories.size() == 3);
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(map.categories[c].labels == std::vector<int>{static_cast<int>(c)});
        CHECK(map.categories[c].certain);
        CHECK(map.categories[c].counts[c] == map.categories[c].total());
    }
}

TEST_CASE("property: paths are root-to-stop chains and counts add up") {
    Rng rng(7);
    for (int trial = 0; trial < 8; ++trial) {
        std::vector<std::vector<double>> centers;
        const std::size_t labels = 2 + rng.index(4);
        for (std::size_t l = 0; l < labels; ++l) centers.push_back({rng.uniform(0, 3), rng.uniform(0, 3)});
        const LabeledDataset ds = clouds(centers, 0.6, 60, derive_seed(7, trial));
        const auto [train, test] = halves(ds, trial);
        const LabelTree tree = build_let(train, kXY, LetOptions{});
        const PredictiveMap map = predictive_map(test, tree, train, kXY, CompetitionConfig{});
        std::size_t total = 0;
        for (std::size_t s : map.column_sums()) total += s;
        CHECK(total == test.n_rows());
        for (const auto& p : map.points) {
            const auto& path = p.prediction.path;
            REQUIRE_FALSE(path.empty());
            CHECK(path.front().node == tree.root);
            for (std::size_t i = 1; i < path.size(); ++i) {
                const TreeNode& parent = tree.node(path[i - 1].node);
                const int expect = path[i - 1].decision == BranchDecision::left ? parent.left : parent.right;
                CHECK(path[i].node == expect);
            }
            if (!p.prediction.labels.empty()) {
                CHECK(tree.node(p.prediction.stop_node).labels == p.prediction.labels);
            }
        }
    }
}

TEST_CASE("predictive map csv layout") {
    const LabeledDataset ds = clouds({{0, 0}, {0, 0}, {5, 5}}, 0.5, 80, 8);
    const auto [train, test] = halves(ds, 8);
    const LabelTree tree = build_let(train, kXY, LetOptions{});
    PredictiveMap map = predictive_map(test, tree, train, kXY, no_outliers());
    map.feature_set = "xy";
    std::ostringstream out;
    write_predictive_map_csv(out, map);
    std::istringstream in(out.str());
    std::string header;
    std::getline(in, header);
    CHECK(header == "xy,L1,L2,L3");
    CHECK(out.str().find("*L1, L2") != std::string::npos);
}

TEST_CASE("too few candidates warns, a branch without rows throws") {
    const LabeledDataset train = clouds({{0, 0}, {3, 3}}, 0.5, 5, 9);
    const LabelTree tree = build_let(train, kXY, LetOptions{});
    WarningCapture capture;
    const TreeClassifier cls(train, kXY, tree, CompetitionConfig{});
    CHECK_FALSE(capture.messages().empty());
    const LabeledDataset only_a = train.select_rows(std::vector<std::size_t>{0, 1, 2, 3, 4});
    CHECK_THROWS_AS(TreeClassifier(only_a, kXY, tree, CompetitionConfig{}), Error);
}

TEST_CASE("chain of length one reproduces the predictive map") {
    const LabeledDataset ds = clouds({{0, 0}, {1, 0}, {0.5, 0.5}}, 0.4, 100, 10);
    const auto [train, test] = halves(ds, 10);
    FeatureChain chain;
    chain.links.push_back({{"xy", kXY}, CompetitionConfig{}});
    ChainOptions opts;
    opts.let.seed = 4;
    const ChainResult result = chain_categories(test, train, chain, opts);
    LetOptions let = opts.let;
    let.seed = derive_seed(opts.let.seed, 0);
    const LabelTree tree = build_let(train, kXY, let);
    const PredictiveMap map = predictive_map(test, tree, train, kXY, CompetitionConfig{});
    REQUIRE(result.tables.size() == 1);
    REQUIRE(result.tables[0].rows.size() == map.categories.size());
    for (std::size_t r = 0; r < map.categories.size(); ++r) {
        CHECK(result.tables[0].rows[r].sets.back() == map.categories[r].labels);
        CHECK(result.tables[0].rows[r].counts == map.categories[r].counts);
    }
}

TEST_CASE("orthogonal chain refines to certainty") {
    const LabeledDataset ds = clouds({{0, 0}, {10, 0}, {10, 10}}, 1.0, 150, 11);
    const auto [train, test] = halves(ds, 11);
    FeatureChain chain;
    chain.links.push_back({{"x", {"f1"}}, no_outliers()});
    chain.links.push_back({{"y", {"f2"}}, no_outliers()});
    const ChainResult result = chain_categories(test, train, chain);
    REQUIRE(result.tables.size() == 2);
    CHECK(result.tables[1].certain_fraction() == 1.0);
    const auto& t1 = result.tables[0];
    bool found = false;
    for (std::size_t r = 0; r < t1.rows.size(); ++r) {
        if (t1.rows[r].sets[0] == std::vector<int>{1, 2}) {
            found = true;
            CHECK(t1.row_name(r) == "*L2, L3");
        }
    }
    CHECK(found);
    for (std::size_t r = 0; r < result.tables[1].rows.size(); ++r) {
        const std::string name = result.tables[1].row_name(r);
        CHECK(name.find('-') != std::string::npos);
    }
    CHECK_THROWS_AS(FeatureChain{}.validate(train.table()), Error);
}

TEST_CASE("dissection cases") {
    const LabeledDataset ds = clouds({{0, 0}, {5, 0}, {5, 0}}, 0.5, 60, 12);
    const auto [train, test] = halves(ds, 12);
    FeatureChain chain;
    chain.links.push_back({{"xy", kXY}, no_outliers()});
    const ChainResult result = chain_categories(test, train, chain);
    ExternalPredictions ext;
    for (std::size_t i = 0; i < result.row_ids.size(); ++i) ext[result.row_ids[i]] = 1;
    const DissectionReport rep = dissect_external(ext, result);
    CHECK(rep.total() == result.row_ids.size());
    std::size_t a_in_a = 0;
    for (const auto& r : rep.records) {
        const auto& row = result.tables[r.depth - 1].rows[r.row];
        const auto& set = row.sets.back();
        CHECK(r.coherent == (std::find(set.begin(), set.end(), 1) != set.end()));
        CHECK(r.certain == row.certain);
        const DissectionCase expect = r.certain ? (r.coherent ? DissectionCase::certain_coherent
                                                              : DissectionCase::certain_incoherent)
                                                : (r.coherent ? DissectionCase::uncertain_coherent
                                                              : DissectionCase::uncertain_incoherent);
        CHECK(r.kase == expect);
        if (set == std::vector<int>{0}) {
            CHECK(r.kase == DissectionCase::certain_incoherent);
            ++a_in_a;
        }
    }
    CHECK(a_in_a > 0);
    CHECK(to_string(DissectionCase::uncertain_coherent) == "uncertainty-coherent");

    ExternalPredictions missing = ext;
    missing.erase(missing.begin());
    CHECK_THROWS_AS(dissect_external(missing, result), Error);
    ExternalPredictions extra = ext;
    extra[999999] = 0;
    CHECK_THROWS_AS(dissect_external(extra, result), Error);
}

TEST_CASE("external predictions csv round-trip and validation") {
    const std::vector<std::string> names{"a", "b"};
    const ExternalPredictions p{{3, 0}, {7, 1}};
    std::ostringstream out;
    write_external_predictions(out, p, names);
    std::istringstream in(out.str());
    CHECK(read_external_predictions(in, names) == p);
    std::istringstream unknown("row_id,predicted_label\n1,z\n");
    CHECK_THROWS_AS(read_external_predictions(unknown, names), Error);
    std::istringstream dup("row_id,predicted_label\n1,a\n1,b\n");
    CHECK_THROWS_AS(read_external_predictions(dup, names), Error);
}

TEST_CASE("knn baseline recovers separated clouds") {
    const LabeledDataset ds = clouds({{0, 0}, {5, 5}}, 0.3, 50, 13);
    const auto [train, test] = halves(ds, 13);
    const ExternalPredictions p = knn_majority_predict(train, test, kXY);
    REQUIRE(p.size() == test.n_rows());
    for (std::size_t i = 0; i < test.n_rows(); ++i) CHECK(p.at(test.table().row_ids()[i]) == test.label_codes()[i]);
}
