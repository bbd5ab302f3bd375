#include "sonoedit/editor.hpp"
#include "sonoedit/linalg.hpp"
#include "sonoedit/nullspace.hpp"
#include "sonoedit/planner.hpp"
#include "sonoedit/tracing.hpp"

#include <benchmark/benchmark.h>

using namespace sonoedit;

namespace {

Matrix gaussian(Rng & rng, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (double & v : m.data()) v = rng.normal();
    return m;
}

NullProjector half_rank_projector(Rng & rng, std::size_t d) {
    CovarianceAccumulator acc(d);
    acc.accumulate(matmul(gaussian(rng, d, d / 2), gaussian(rng, d / 2, 2 * d)));
    return build_projector(acc);
}

void BM_SymEig(benchmark::State & state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    const Matrix a = gram(gaussian(rng, n, n));
    for (auto _ : state) benchmark::DoNotOptimize(sym_eig(a));
}
BENCHMARK(BM_SymEig)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_BuildProjector(benchmark::State & state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    Rng rng(2);
    CovarianceAccumulator acc(d);
    acc.accumulate(gaussian(rng, d, d / 2));
    for (auto _ : state) benchmark::DoNotOptimize(build_projector(acc));
}
BENCHMARK(BM_BuildProjector)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_RankOneEdit(benchmark::State & state) {
    Rng rng(3);
    const NullProjector proj = half_rank_projector(rng, 128);
    const Matrix w = gaussian(rng, 32, 128);
    const EditRequest req{gaussian(rng, 128, 1).col(0), gaussian(rng, 32, 1).col(0)};
    for (auto _ : state) benchmark::DoNotOptimize(rank_one_edit(w, req, proj));
}
BENCHMARK(BM_RankOneEdit)->Unit(benchmark::kMicrosecond);

void BM_SequentialEdit(benchmark::State & state) {
    Rng rng(4);
    const NullProjector proj = half_rank_projector(rng, 128);
    const Matrix w = gaussian(rng, 32, 128);
    const Matrix k1 = gaussian(rng, 128, 4);
    const Matrix v1 = gaussian(rng, 32, 4);
    const SequentialEditState prev{gaussian(rng, 128, 8), 8};
    for (auto _ : state) benchmark::DoNotOptimize(sequential_edit(w, k1, v1, prev, proj));
}
BENCHMARK(BM_SequentialEdit)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State & state) {
    const ToyPlanner m = init_planner({});
    const TokenSeq prompt{1, 2, 3, 4, 5, 6, 7, 8};
    for (auto _ : state) benchmark::DoNotOptimize(forward(m, prompt));
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMicrosecond);

void BM_GradientNorm(benchmark::State & state) {
    const ToyPlanner m = init_planner({});
    const TokenSeq prompt{1, 2, 3, 4, 5, 6};
    for (auto _ : state) benchmark::DoNotOptimize(gradient_norm(m, prompt, 7, 4));
}
BENCHMARK(BM_GradientNorm)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
