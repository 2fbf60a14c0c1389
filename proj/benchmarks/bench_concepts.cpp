#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "phenoeval/concepts.hpp"

namespace pe = phenoeval;

namespace {

std::vector<pe::ConstructedConcept> pool(std::size_t n) {
  std::vector<pe::ConstructedConcept> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(pe::make_concept("Infusion Drug", "drug-" + std::to_string(i)));
  return out;
}

void BM_MakeConcept(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(pe::make_concept("Nurse Charting", "O2 Admin Device:   BiPAP/CPAP"));
}
BENCHMARK(BM_MakeConcept);

void BM_Sample(benchmark::State& state) {
  const auto all = pool(static_cast<std::size_t>(state.range(0)));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(pe::sample(all, 100, seed++));
}
BENCHMARK(BM_Sample)->Range(1000, 64000);

void BM_Dedupe(benchmark::State& state) {
  auto all = pool(static_cast<std::size_t>(state.range(0)));
  const auto copy = all;
  all.insert(all.end(), copy.begin(), copy.end());
  for (auto _ : state) benchmark::DoNotOptimize(pe::dedupe(all));
}
BENCHMARK(BM_Dedupe)->Range(1000, 64000);

}  // namespace
