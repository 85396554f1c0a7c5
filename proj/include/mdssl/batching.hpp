#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "mdssl/data.hpp"
#include "mdssl/encoder.hpp"

namespace mdssl {

enum class SamplingMode { single_domain, in_domain };

struct BatchItem {
  Segment query;  // view 1
  Segment key;    // view 2
  int utterance_id = -1;
  int domain_id = -1;
};

struct MiniBatch {
  std::vector<BatchItem> items;
  std::map<int, std::vector<std::size_t>> domain_partition;

  std::size_t size() const { return items.size(); }
  std::vector<int> domains() const;
};

struct BatchConfig {
  std::size_t batch_size = 64;
  std::size_t min_per_domain = 2;
  std::size_t view_min_frames = 8;
  GainRange gain{0.8, 1.2};
  double augment_noise = 0.2;
};

/// Groups item indices by domain label.
std::map<int, std::vector<std::size_t>> partition_by_domain(std::span<const int> domains);

/// Domain-stratified batch. Domains with at least min_per_domain eligible
/// utterances (those long enough for two views) are visited in random order
/// and filled as evenly as possible; every represented domain ends up with at
/// least min_per_domain items. Utterances are drawn without replacement.
/// Throws InfeasibleBatchError when the pool cannot satisfy the request.
MiniBatch build_batch(std::span<const Utterance> pool, const BatchConfig& cfg, Rng& rng);

/// single_domain: every other index; in_domain: every other index in the anchor's domain.
std::vector<std::size_t> negatives_for(std::span<const int> domains, std::size_t anchor, SamplingMode mode);
std::vector<std::size_t> negatives_for(const MiniBatch& batch, std::size_t anchor, SamplingMode mode);

}  // namespace mdssl
