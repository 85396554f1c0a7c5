#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "mdssl/config_io.hpp"
#include "mdssl/trainer.hpp"

namespace mdssl {

struct BenchmarkOptions {
  ExperimentConfig config;
  std::vector<Preset> presets;        // empty: ladder plus full_md_bank_all
  std::vector<std::uint64_t> seeds;   // empty: config seed .. config seed + 4
  std::size_t threads = 0;            // 0: hardware concurrency
};

struct BenchmarkRun {
  Preset preset = Preset::ssl_sd;
  std::uint64_t seed = 0;
  double eer_percent = 0.0;
  double min_dcf = 0.0;
  double final_loss = 0.0;
};

struct PresetSummary {
  Preset preset = Preset::ssl_sd;
  double median_eer = 0.0;
  double median_min_dcf = 0.0;
};

struct BenchmarkReport {
  std::vector<BenchmarkRun> runs;  // preset-major, seeds in order
  std::vector<PresetSummary> summaries;
  std::optional<double> relative_improvement;  // (EER_ssl_sd - EER_full_md) / EER_ssl_sd on medians
  std::size_t trials = 0;
  std::size_t targets = 0;

  const PresetSummary* summary(Preset p) const;
};

double median(std::vector<double> values);
double relative_improvement(double eer_baseline, double eer_method);

/// Trains every (preset, seed) pair on the dev split and scores the pooled
/// eval trials. Runs are independent and may execute concurrently; the report
/// does not depend on the thread count.
BenchmarkReport run_benchmark(const BenchmarkOptions& opts, const Corpus& corpus);

void write_benchmark_runs_csv(std::ostream& out, const BenchmarkReport& r);
void write_benchmark_summary_csv(std::ostream& out, const BenchmarkReport& r);

}  // namespace mdssl
