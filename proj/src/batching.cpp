#include "mdssl/batching.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "mdssl/errors.hpp"

namespace mdssl {

std::vector<int> MiniBatch::domains() const {
  std::vector<int> d;
  d.reserve(items.size());
  for (const auto& it : items) d.push_back(it.domain_id);
  return d;
}

std::map<int, std::vector<std::size_t>> partition_by_domain(std::span<const int> domains) {
  std::map<int, std::vector<std::size_t>> part;
  for (std::size_t i = 0; i < domains.size(); ++i) part[domains[i]].push_back(i);
  return part;
}

MiniBatch build_batch(std::span<const Utterance> pool, const BatchConfig& cfg, Rng& rng) {
  if (cfg.min_per_domain < 1) throw ConfigError("min_per_domain must be >= 1");
  if (cfg.batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (cfg.batch_size < cfg.min_per_domain) {
    throw InfeasibleBatchError("batch_size " + std::to_string(cfg.batch_size) + " < min_per_domain " +
                               std::to_string(cfg.min_per_domain));
  }

  std::map<int, std::vector<std::size_t>> eligible;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].length() >= 2 * cfg.view_min_frames) eligible[pool[i].domain_id].push_back(i);
  }
  std::vector<int> domains;
  std::size_t capacity = 0;
  for (const auto& [d, idx] : eligible) {
    if (idx.size() >= cfg.min_per_domain) {
      domains.push_back(d);
      capacity += idx.size();
    }
  }
  if (domains.empty() || capacity < cfg.batch_size) {
    throw InfeasibleBatchError("pool cannot supply " + std::to_string(cfg.batch_size) + " utterances with >= " +
                               std::to_string(cfg.min_per_domain) + " per domain (capacity " +
                               std::to_string(capacity) + ")");
  }

  std::shuffle(domains.begin(), domains.end(), rng);
  const std::size_t max_domains = cfg.batch_size / cfg.min_per_domain;
  if (domains.size() > max_domains) {
    // Keep a random subset, swapping in larger domains while it cannot fill the batch.
    std::vector<int> rest(domains.begin() + static_cast<std::ptrdiff_t>(max_domains), domains.end());
    domains.resize(max_domains);
    const auto size_of = [&](int d) { return eligible[d].size(); };
    const auto by_size = [&](int a, int b) { return size_of(a) < size_of(b); };
    std::size_t kept = 0;
    for (int d : domains) kept += size_of(d);
    while (kept < cfg.batch_size && !rest.empty()) {
      auto small = std::min_element(domains.begin(), domains.end(), by_size);
      auto big = std::max_element(rest.begin(), rest.end(), by_size);
      if (size_of(*big) <= size_of(*small)) break;
      kept += size_of(*big) - size_of(*small);
      std::swap(*small, *big);
    }
  }

  // Even allocation, then hand leftovers to domains that still have room.
  std::vector<std::size_t> quota(domains.size(), 0);
  std::size_t assigned = 0;
  while (assigned < cfg.batch_size) {
    bool progressed = false;
    for (std::size_t k = 0; k < domains.size() && assigned < cfg.batch_size; ++k) {
      if (quota[k] < eligible[domains[k]].size()) {
        ++quota[k];
        ++assigned;
        progressed = true;
      }
    }
    if (!progressed) {
      throw InfeasibleBatchError("selected domains cannot fill batch of " + std::to_string(cfg.batch_size));
    }
  }

  std::vector<std::size_t> chosen;
  chosen.reserve(cfg.batch_size);
  for (std::size_t k = 0; k < domains.size(); ++k) {
    auto& idx = eligible[domains[k]];
    // Partial Fisher-Yates: the first quota[k] entries become a uniform sample.
    for (std::size_t j = 0; j < quota[k]; ++j) {
      const std::size_t r = std::uniform_int_distribution<std::size_t>(j, idx.size() - 1)(rng);
      std::swap(idx[j], idx[r]);
      chosen.push_back(idx[j]);
    }
  }
  std::shuffle(chosen.begin(), chosen.end(), rng);

  MiniBatch batch;
  batch.items.reserve(chosen.size());
  for (std::size_t i : chosen) {
    const Utterance& u = pool[i];
    auto [v1, v2] = sample_views(u, cfg.view_min_frames, rng);
    Segment q = augment(v1, cfg.gain, cfg.augment_noise, rng);
    Segment k = augment(v2, cfg.gain, cfg.augment_noise, rng);
    batch.items.push_back(BatchItem{std::move(q), std::move(k), u.id, u.domain_id});
  }
  const auto doms = batch.domains();
  batch.domain_partition = partition_by_domain(doms);
  return batch;
}

std::vector<std::size_t> negatives_for(std::span<const int> domains, std::size_t anchor, SamplingMode mode) {
  if (anchor >= domains.size()) throw ShapeError("negatives_for: anchor index out of range");
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < domains.size(); ++j) {
    if (j == anchor) continue;
    if (mode == SamplingMode::in_domain && domains[j] != domains[anchor]) continue;
    out.push_back(j);
  }
  return out;
}

std::vector<std::size_t> negatives_for(const MiniBatch& batch, std::size_t anchor, SamplingMode mode) {
  const auto doms = batch.domains();
  return negatives_for(doms, anchor, mode);
}

}  // namespace mdssl
