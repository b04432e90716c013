#include <benchmark/benchmark.h>

#include "ceda/association.hpp"
#include "ceda/discretize.hpp"
#include "ceda/hclust.hpp"
#include "ceda/let.hpp"
#include "ceda/log.hpp"
#include "ceda/pmap.hpp"
#include "ceda/rma.hpp"
#include "ceda/rng.hpp"
#include "ceda/synth.hpp"

using namespace ceda;

namespace {

const std::vector<std::string> kXY{"f1", "f2"};

LabeledDataset five_clouds(std::size_t per_label) {
    GaussCloudsParams p;
    p.centers = {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {0.5, 0.5}};
    p.sd = {0.3};
    p.n_per_label = per_label;
    return synth_generate(p, 1);
}

void BM_Agglomerate(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(2);
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) d(i, j) = d(j, i) = rng.uniform();
    }
    for (auto _ : state) benchmark::DoNotOptimize(agglomerate(d));
}
BENCHMARK(BM_Agglomerate)->Arg(50)->Arg(200)->Arg(800);

void BM_MceMatrix(benchmark::State& state) {
    MagnusParams p;
    p.n_per_label = static_cast<std::size_t>(state.range(0));
    const LabeledDataset ds = synth_generate(p, 3);
    const auto features = ds.feature_names();
    const BinningSet bins = build_binnings(ds.table(), features);
    for (auto _ : state) benchmark::DoNotOptimize(mce_matrix(ds.table(), features, bins));
}
BENCHMARK(BM_MceMatrix)->Arg(1000)->Arg(10000);

void BM_BuildLet(benchmark::State& state) {
    const LabeledDataset ds = five_clouds(200);
    LetOptions opts;
    opts.samples_per_triplet = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(build_let(ds, kXY, opts));
}
BENCHMARK(BM_BuildLet)->Arg(200)->Arg(2000);

void BM_PredictiveMap(benchmark::State& state) {
    WarningCapture quiet;
    const LabeledDataset ds = five_clouds(static_cast<std::size_t>(state.range(0)));
    const auto [train, test] = split_train_test(ds, SplitSpec{});
    const LabelTree tree = build_let(train, kXY, LetOptions{});
    const TreeClassifier cls(train, kXY, tree, CompetitionConfig{});
    for (auto _ : state) benchmark::DoNotOptimize(predictive_map(test, cls));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * test.n_rows()));
}
BENCHMARK(BM_PredictiveMap)->Arg(200)->Arg(1000);

void BM_RmaPredict(benchmark::State& state) {
    MagnusParams p;
    p.labels = 1;
    p.n_per_label = static_cast<std::size_t>(state.range(0));
    const LabeledDataset train = synth_generate(p, 4);
    p.n_per_label = 1000;
    const LabeledDataset test = synth_generate(p, 5);
    ResponseSpec spec;
    spec.responses = {"pfx_x", "pfx_z"};
    const std::vector<std::string> majors{"spin_dir", "spin_rate"};
    const RmaModel model(train.table(),
                         build_locality_lattice(train.table(), spec, majors, coarse_binnings(train.table(), majors, 8)));
    for (auto _ : state) benchmark::DoNotOptimize(model.predict_table(test.table()));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * test.n_rows()));
}
BENCHMARK(BM_RmaPredict)->Arg(5000)->Arg(50000);

}  // namespace
BENCHMARK_MAIN();
