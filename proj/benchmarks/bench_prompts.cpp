#include <benchmark/benchmark.h>

#include "phenoeval/concepts.hpp"
#include "phenoeval/prompts.hpp"

namespace pe = phenoeval;

namespace {

void BM_Render(benchmark::State& state) {
  const auto& t = pe::default_template(pe::PromptId::Therapy);
  const auto c = pe::make_concept("Nurse Charting", "O2 Admin Device: BiPAP/CPAP");
  for (auto _ : state) benchmark::DoNotOptimize(pe::render(t, c));
}
BENCHMARK(BM_Render);

void BM_Perturb(benchmark::State& state) {
  const auto& t = pe::default_template(pe::PromptId::Therapy);
  const auto p = static_cast<pe::Perturbation>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(pe::perturb(t, p));
}
BENCHMARK(BM_Perturb)->DenseRange(0, 2);

}  // namespace
