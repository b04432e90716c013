#include <cmath>
#include <numeric>

#include <doctest.h>

#include "ceda/association.hpp"
#include "ceda/discretize.hpp"
#include "ceda/error.hpp"
#include "ceda/rng.hpp"
#include "ceda/synth.hpp"

using namespace ceda;

namespace {

Column numeric(std::string name, std::vector<double> values) {
    Column c;
    c.name = std::move(name);
    c.kind = FeatureKind::continuous;
    c.values = std::move(values);
    return c;
}

// H(col | row) / H(col) by the textbook formula
double by_hand(const std::vector<std::vector<double>>& t) {
    double n = 0.0, h = 0.0, hc = 0.0;
    std::vector<double> col(t[0].size(), 0.0);
    for (const auto& r : t) {
        const double nr = std::accumulate(r.begin(), r.end(), 0.0);
        n += nr;
        for (std::size_t c = 0; c < r.size(); ++c) col[c] += r[c];
        for (double v : r) {
            if (v > 0) hc -= v * std::log(v / nr);
        }
    }
    for (double v : col) {
        if (v > 0) h -= v / n * std::log(v / n);
    }
    return hc / n / h;
}

}  // namespace

TEST_CASE("default histogram: 0..99 gives 8 equal bins without gaps") {
    std::vector<double> v(100);
    std::iota(v.begin(), v.end(), 0.0);
    const Binning b = build_histogram(v);
    CHECK(b.n_bins() == 8);
    CHECK(b.gaps.empty());
    CHECK(std::accumulate(b.counts.begin(), b.counts.end(), std::size_t{0}) == 100);
    const double width = b.edges[1] - b.edges[0];
    for (std::size_t i = 1; i + 1 < b.edges.size(); ++i) CHECK(b.edges[i + 1] - b.edges[i] == doctest::Approx(width));
}

TEST_CASE("an empty run between two clusters collapses into one gap") {
    Rng rng(4);
    std::vector<double> v;
    for (int i = 0; i < 32; ++i) v.push_back(rng.uniform(0, 1));
    for (int i = 0; i < 32; ++i) v.push_back(rng.uniform(10, 11));
    const Binning b = build_histogram(v);
    CHECK(b.gaps.size() == 1);
    CHECK(std::count(b.gap_flags.begin(), b.gap_flags.end(), true) == 1);
    for (std::size_t c : b.counts) CHECK(c > 0);
    // every value lands in a bin whose neighbours are on the same side of the gap
    const double cut = b.edges[static_cast<std::size_t>(std::find(b.gap_flags.begin(), b.gap_flags.end(), true) -
                                                        b.gap_flags.begin())];
    CHECK(cut > 1.0);
    CHECK(cut < 10.0);
}

TEST_CASE("constant values are a degenerate feature") {
    const std::vector<double> v(10, 3.0);
    CHECK_THROWS_AS(build_histogram(v), Error);
}

TEST_CASE("bin boundaries are left-closed with a closed final bin") {
    std::vector<double> v(100);
    std::iota(v.begin(), v.end(), 0.0);
    const Binning b = build_histogram(v);
    CHECK(categorize(b, 0.0).bin == 0);
    CHECK(categorize(b, 99.0).bin == static_cast<int>(b.n_bins()) - 1);
    CHECK_FALSE(categorize(b, 99.0).out_of_range);
    const BinAssignment beyond = categorize(b, 150.0);
    CHECK(beyond.bin == static_cast<int>(b.n_bins()) - 1);
    CHECK(beyond.out_of_range);
    CHECK(categorize(b, -1.0).bin == 0);
    CHECK(categorize(b, b.edges[1]).bin == 1);
}

TEST_CASE("property: bins count their training values exactly") {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v(20 + rng.index(200));
        for (auto& x : v) x = rng.normal(0, 1 + trial);
        const Binning b = build_histogram(v, 3 + rng.index(10));
        std::vector<std::size_t> counts(b.n_bins(), 0);
        for (double x : v) ++counts[static_cast<std::size_t>(categorize(b, x).bin)];
        CHECK(counts == b.counts);
    }
}

TEST_CASE("contingency of two copies of one column is diagonal") {
    const std::vector<std::string> cells{"a", "b", "c", "a", "b", "c", "c"};
    const DataTable t({make_categorical("u", cells), make_categorical("v", cells)});
    const ContingencyTable ct = contingency_table(t, "u", "v", {});
    REQUIRE(ct.rows() == 3);
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 3; ++c) CHECK((ct.at(r, c) > 0) == (r == c));
    }
    CHECK(directed_conditional_entropy(ct, Direction::row_to_col) == 0.0);
    CHECK(mutual_conditional_entropy(ct) == 0.0);
}

TEST_CASE("contingency tally matches a hand count on binned data") {
    const LabeledDataset ds = synth_generate(MagnusParams{}, 3);
    const std::vector<std::string> f{"spin_dir"};
    const BinningSet bins = build_binnings(ds.table(), f);
    const ContingencyTable ct = contingency_table(ds.table(), "label", "spin_dir", bins);
    std::vector<std::int64_t> hand(ct.rows() * ct.cols(), 0);
    for (std::size_t i = 0; i < ds.n_rows(); ++i) {
        const int bin = categorize(bins.at("spin_dir"), ds.table().column("spin_dir").values[i]).bin;
        ++hand[static_cast<std::size_t>(ds.label_codes()[i]) * ct.cols() + static_cast<std::size_t>(bin)];
    }
    CHECK(ct.counts == hand);
}

TEST_CASE("uniform independent table gives 1") {
    const ContingencyTable ct = make_contingency({{25, 25}, {25, 25}});
    CHECK(directed_conditional_entropy(ct, Direction::row_to_col) == doctest::Approx(1.0));
    CHECK(mutual_conditional_entropy(ct) == doctest::Approx(1.0));
}

TEST_CASE("[[30,10],[10,30]] matches the direct formula") {
    const ContingencyTable ct = make_contingency({{30, 10}, {10, 30}});
    const double expect = by_hand({{30, 10}, {10, 30}});
    CHECK(directed_conditional_entropy(ct, Direction::row_to_col) == doctest::Approx(expect).epsilon(1e-14));
    CHECK(directed_conditional_entropy(ct, Direction::col_to_row) == doctest::Approx(expect).epsilon(1e-14));
    CHECK(mutual_conditional_entropy(ct) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("property: directed entropy stays in [0, 1] and agrees with the formula") {
    Rng rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t r = 2 + rng.index(4), c = 2 + rng.index(4);
        std::vector<std::vector<std::int64_t>> counts(r, std::vector<std::int64_t>(c));
        std::vector<std::vector<double>> dense(r, std::vector<double>(c));
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) dense[i][j] = static_cast<double>(counts[i][j] = 1 + rng.index(40));
        }
        const double v = directed_conditional_entropy(make_contingency(counts), Direction::row_to_col);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0 + 1e-12);
        CHECK(v == doctest::Approx(by_hand(dense)).epsilon(1e-12));
    }
}

TEST_CASE("mce matrix of {X, X, Y} with Y independent") {
    Rng rng(23);
    std::vector<double> x(4000), y(4000);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = rng.uniform();
        y[i] = rng.uniform();
    }
    const DataTable t({numeric("x", x), numeric("x2", x), numeric("y", y)});
    const std::vector<std::string> f{"x", "x2", "y"};
    const MceMatrix m = mce_matrix(t, f, build_binnings(t, f));
    CHECK(m.at(0, 1) == 0.0);
    CHECK(m.at(0, 0) == 0.0);
    CHECK(m.at(0, 2) > 0.95);
    CHECK(m.at(0, 2) == m.at(2, 0));
    CHECK(m.dendrogram.merges.front().height == 0.0);
}

TEST_CASE("label association ranks the separating dimension first and noise last") {
    GaussCloudsParams p;
    p.centers = {{0, 0}, {3, 0}, {6, 0}};
    p.sd = {0.5};
    p.noise_dims = 1;
    const LabeledDataset ds = synth_generate(p, 6);
    const auto f = ds.feature_names();
    const auto ranking = rank_features_by_label_association(ds, f, build_binnings(ds.table(), f));
    REQUIRE(ranking.size() == f.size());
    CHECK(ranking.front().feature == "f1");
    CHECK(ranking.front().label_to_feature < ranking.back().label_to_feature);
}
