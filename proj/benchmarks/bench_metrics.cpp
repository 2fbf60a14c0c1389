#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "phenoeval/metrics.hpp"

namespace pe = phenoeval;

namespace {

void BM_Confusion(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937 rng(1);
  std::vector<pe::FinalDecision> decisions;
  std::vector<pe::GroundTruthLabel> truth;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "c" + std::to_string(i);
    pe::FinalDecision d;
    d.concept_id = id;
    d.decision = rng() % 2 ? pe::Decision::Yes : pe::Decision::No;
    decisions.push_back(d);
    truth.push_back({id, rng() % 5 == 0});
  }
  for (auto _ : state) benchmark::DoNotOptimize(pe::auc_binary(pe::confusion(decisions, truth)));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * n));
}
BENCHMARK(BM_Confusion)->Range(100, 100000);

void BM_ConsistencyRate(benchmark::State& state) {
  std::mt19937 rng(2);
  std::vector<std::vector<pe::Outcome>> groups(static_cast<std::size_t>(state.range(0)));
  for (auto& g : groups) {
    for (int i = 0; i < 10; ++i) g.push_back(rng() % 10 ? pe::Outcome::No : pe::Outcome::Yes);
  }
  for (auto _ : state) benchmark::DoNotOptimize(pe::consistency_rate(groups));
}
BENCHMARK(BM_ConsistencyRate)->Range(10, 10000);

}  // namespace
