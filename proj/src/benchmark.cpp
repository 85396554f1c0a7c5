#include "mdssl/benchmark.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>

#include "mdssl/errors.hpp"
#include "mdssl/eval.hpp"

namespace mdssl {

const PresetSummary* BenchmarkReport::summary(Preset p) const {
  for (const auto& s : summaries)
    if (s.preset == p) return &s;
  return nullptr;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InsufficientSamplesError("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double relative_improvement(double eer_baseline, double eer_method) {
  if (!(eer_baseline > 0.0)) throw UndefinedMetricError("relative improvement needs a positive baseline EER");
  return (eer_baseline - eer_method) / eer_baseline;
}

BenchmarkReport run_benchmark(const BenchmarkOptions& opts, const Corpus& corpus) {
  std::vector<Preset> presets = opts.presets;
  if (presets.empty()) {
    presets = ladder_presets();
    presets.push_back(Preset::full_md_bank_all);
  }
  std::vector<std::uint64_t> seeds = opts.seeds;
  if (seeds.empty()) {
    for (std::uint64_t k = 0; k < 5; ++k) seeds.push_back(opts.config.train.seed + k);
  }

  const TrialList trials = build_trials(corpus.select(Split::eval), opts.config.trials, TrialMode::pooled);

  BenchmarkReport report;
  report.trials = trials.trials.size();
  report.targets = trials.num_targets();
  report.runs.resize(presets.size() * seeds.size());
  for (Preset p : presets) {
    TrainConfig cfg = opts.config.train;
    cfg.loss = preset_loss(p, cfg.loss);
    validate(cfg);
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t job = next++; job < report.runs.size(); job = next++) {
      try {
        const Preset preset = presets[job / seeds.size()];
        TrainConfig cfg = opts.config.train;
        cfg.loss = preset_loss(preset, cfg.loss);
        cfg.seed = seeds[job % seeds.size()];
        cfg.prefetch = false;
        const TrainResult tr = run(cfg, corpus);
        const ScoredTrials scored = score_trials(tr.params, trials);
        const PooledMetrics m = pooled_metrics(scored.scores);
        report.runs[job] = {preset, cfg.seed, m.eer_percent, m.min_dcf, tr.log.empty() ? 0.0 : tr.log.back().total};
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::size_t threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, report.runs.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  for (std::size_t p = 0; p < presets.size(); ++p) {
    std::vector<double> eers, dcfs;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      eers.push_back(report.runs[p * seeds.size() + s].eer_percent);
      dcfs.push_back(report.runs[p * seeds.size() + s].min_dcf);
    }
    report.summaries.push_back({presets[p], median(eers), median(dcfs)});
  }
  const auto* sd = report.summary(Preset::ssl_sd);
  const auto* md = report.summary(Preset::full_md);
  if (sd && md && sd->median_eer > 0.0) report.relative_improvement = relative_improvement(sd->median_eer, md->median_eer);
  return report;
}

void write_benchmark_runs_csv(std::ostream& out, const BenchmarkReport& r) {
  out << "preset,seed,eer_percent,min_dcf,final_loss\n";
  char buf[200];
  for (const auto& run : r.runs) {
    std::snprintf(buf, sizeof buf, "%s,%llu,%.10f,%.10f,%.10f\n", preset_name(run.preset).c_str(),
                  static_cast<unsigned long long>(run.seed), run.eer_percent, run.min_dcf, run.final_loss);
    out << buf;
  }
}

void write_benchmark_summary_csv(std::ostream& out, const BenchmarkReport& r) {
  out << "preset,median_eer_percent,median_min_dcf\n";
  char buf[160];
  for (const auto& s : r.summaries) {
    std::snprintf(buf, sizeof buf, "%s,%.10f,%.10f\n", preset_name(s.preset).c_str(), s.median_eer, s.median_min_dcf);
    out << buf;
  }
  if (r.relative_improvement) {
    std::snprintf(buf, sizeof buf, "relative_improvement_full_md_vs_ssl_sd,%.10f,\n", *r.relative_improvement);
    out << buf;
  }
}

}  // namespace mdssl
