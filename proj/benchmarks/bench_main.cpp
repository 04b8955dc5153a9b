#include <benchmark/benchmark.h>

#include "cql/clinical_mdp.hpp"
#include "cql/cohort_sim.hpp"
#include "cql/cql_loss.hpp"
#include "cql/dataset.hpp"
#include "cql/oracle.hpp"
#include "cql/qnet.hpp"

using namespace cql;

namespace {

Matrix random_states(std::size_t rows, Rng& rng) {
    Matrix m(rows, kStateFeatures);
    for (double& v : m.data()) v = 2.0 * uniform01(rng) - 1.0;
    return m;
}

TransitionBatch random_batch(std::size_t n, Rng& rng) {
    TransitionBatch b;
    b.states = random_states(n, rng);
    b.next_states = random_states(n, rng);
    for (std::size_t i = 0; i < n; ++i) {
        b.actions.push_back(static_cast<int>(rng() % kNumActions));
        b.rewards.push_back(uniform01(rng));
        b.terminal.push_back(i % 10 == 0);
    }
    return b;
}

void BM_QValues(benchmark::State& state) {
    Rng rng(1);
    const DuelingQNet net(QNetShape{}, rng);
    const auto x = random_states(static_cast<std::size_t>(state.range(0)), rng);
    for (auto _ : state) benchmark::DoNotOptimize(q_values(net, x));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_QValues)->Arg(1)->Arg(32)->Arg(256);

void BM_ForwardBackward(benchmark::State& state) {
    Rng rng(2);
    const DuelingQNet net(QNetShape{}, rng);
    const auto x = random_states(static_cast<std::size_t>(state.range(0)), rng);
    for (auto _ : state) {
        const auto fwd = q_forward(net, x);
        benchmark::DoNotOptimize(q_backward(net, fwd, fwd.q));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(256);

void BM_TotalLoss(benchmark::State& state) {
    Rng rng(3);
    const DuelingQNet net(QNetShape{}, rng);
    const auto target = make_target(net);
    const auto batch = random_batch(static_cast<std::size_t>(state.range(0)), rng);
    for (auto _ : state) benchmark::DoNotOptimize(total_loss(net, target, batch, 0.99, 0.1));
}
BENCHMARK(BM_TotalLoss)->Arg(32)->Arg(256);

void BM_TrainStep(benchmark::State& state) {
    Rng rng(4);
    DuelingQNet net(QNetShape{}, rng);
    const auto target = make_target(net);
    auto adam = AdamState::for_layers(net.layers());
    const auto batch = random_batch(32, rng);
    for (auto _ : state) {
        const auto res = total_loss(net, target, batch, 0.99, 0.1);
        adam_step(net.layers(), res.grads, adam, 1e-4);
    }
}
BENCHMARK(BM_TrainStep);

void BM_Logsumexp(benchmark::State& state) {
    Rng rng(5);
    std::vector<double> v(kNumActions);
    for (double& x : v) x = 10.0 * uniform01(rng);
    for (auto _ : state) benchmark::DoNotOptimize(logsumexp(v));
}
BENCHMARK(BM_Logsumexp);

void BM_FitBins(benchmark::State& state) {
    Rng rng(6);
    std::vector<double> doses(static_cast<std::size_t>(state.range(0)));
    for (double& d : doses) d = 0.01 + 500.0 * uniform01(rng);
    for (auto _ : state) benchmark::DoNotOptimize(fit_bins(doses));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FitBins)->Arg(1000)->Arg(100000);

void BM_DoseToBin(benchmark::State& state) {
    const DrugCuts cuts{10.0, 100.0, 400.0, 1000};
    double dose = 0.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(dose_to_bin(cuts, dose));
        dose = dose > 2000.0 ? 0.0 : dose + 3.7;
    }
}
BENCHMARK(BM_DoseToBin);

void BM_SimulateCohort(benchmark::State& state) {
    SimParams p;
    p.patients = static_cast<std::uint64_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(generate_cohort(p));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SimulateCohort)->Arg(100);

void BM_ValueIteration(benchmark::State& state) {
    Rng rng(7);
    const auto n = static_cast<std::size_t>(state.range(0));
    auto mdp = TabularMDP::zeros(n, 3, 0.95);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t a = 0; a < 3; ++a) {
            mdp.r(s, a) = uniform01(rng);
            double total = 0.0;
            for (std::size_t t = 0; t < n; ++t) total += mdp.p(s, a, t) = uniform01(rng);
            for (std::size_t t = 0; t < n; ++t) mdp.p(s, a, t) /= total;
        }
    }
    for (auto _ : state) benchmark::DoNotOptimize(value_iteration(mdp, 1e-8));
}
BENCHMARK(BM_ValueIteration)->Arg(5)->Arg(48);

}  // namespace

BENCHMARK_MAIN();
