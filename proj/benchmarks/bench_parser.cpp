#include <string>

#include <benchmark/benchmark.h>

#include "phenoeval/prompts.hpp"
#include "phenoeval/response_parser.hpp"

namespace pe = phenoeval;

namespace {

std::string response(std::size_t padding) {
  std::string text = "<think>" + std::string(padding, 'x') + "</think>\n";
  text += "Q1: NO\nQ2: NO\nQ3: NO\nQ4: YES\n";
  return text;
}

void BM_ExtractFinalAnswer(benchmark::State& state) {
  const auto& t = pe::default_template(pe::PromptId::Therapy);
  const std::string text = response(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(pe::extract_final_answer(text, t));
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_ExtractFinalAnswer)->Range(64, 64 << 10);

void BM_ValidateFormat(benchmark::State& state) {
  const auto& t = pe::default_template(pe::PromptId::Therapy);
  const std::string text = response(256);
  for (auto _ : state) benchmark::DoNotOptimize(pe::validate_format(text, t));
}
BENCHMARK(BM_ValidateFormat);

}  // namespace
