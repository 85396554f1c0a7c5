#pragma once

#include <span>
#include <vector>

#include "mdssl/batching.hpp"
#include "mdssl/membank.hpp"
#include "mdssl/numerics.hpp"

namespace mdssl {

// infonce: -(1/N) sum_i log(ratio_i). verbatim: (1/N) sum_i ratio_i, kept
// only for inspection since minimizing it pushes positives apart.
enum class LossForm { infonce, verbatim };

struct LossConfig {
  double tau = 0.07;
  double lambda = 1.0;
  SamplingMode sampling_mode = SamplingMode::in_domain;
  bool use_bank = true;
  BankNegatives bank_negatives = BankNegatives::in_domain;
  bool use_coral = true;
  LossForm form = LossForm::infonce;

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

void validate(const LossConfig& cfg);

struct LossValue {
  double total = 0.0;
  double contrastive = 0.0;
  double coral = 0.0;
};

/// exp(cosine(x, y) / tau)
double sim(std::span<const double> x, std::span<const double> y, double tau);

struct ContrastiveResult {
  double loss = 0.0;
  std::vector<Vector> grad_queries;
  std::vector<Vector> grad_keys;
};

/// Contrastive loss of queries[i] against keys[i] (positive) and the negative
/// keys selected by cfg.sampling_mode, plus bank entries when cfg.use_bank and
/// bank != nullptr. The positive term is part of the denominator. Bank entries
/// are constants. Evaluated with log-sum-exp.
/// Throws InfeasibleAnchorError if some anchor has no negative.
ContrastiveResult contrastive_loss(std::span<const Vector> queries, std::span<const Vector> keys,
                                   std::span<const int> domains, const LossConfig& cfg,
                                   const MemoryBank* bank = nullptr);

struct CoralResult {
  double loss = 0.0;
  std::vector<Vector> grads;
  bool degenerate = false;  // fewer than two domains with >= 2 embeddings
  std::size_t domains_used = 0;
};

/// Mean over unordered domain pairs of ||C_i - C_j||_F^2 / (4 dim^2), where
/// C_g is the unbiased covariance of domain g's embeddings. Domains with fewer
/// than two embeddings are left out.
CoralResult coral_loss(std::span<const Vector> embeddings, std::span<const int> domain_of, std::size_t dim);

struct CombinedResult {
  LossValue value;
  std::vector<Vector> grad_queries;
  std::vector<Vector> grad_keys;
  bool coral_degenerate = false;
};

/// contrastive + lambda * coral, with CORAL over both views grouped by domain.
CombinedResult combined_loss(std::span<const Vector> queries, std::span<const Vector> keys,
                             std::span<const int> domains, const LossConfig& cfg, const MemoryBank* bank = nullptr);

}  // namespace mdssl
