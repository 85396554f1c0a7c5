#include "mdssl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "mdssl/errors.hpp"

namespace mdssl {

namespace {

double checked_norm(std::span<const double> v) {
  const double n = norm(v);
  if (!(n > kNormFloor)) throw DegenerateInputError("zero-norm embedding in loss");
  return n;
}

// out += scale * d cos(a, b) / da
void add_cosine_grad(std::span<const double> a, std::span<const double> b, double cos_ab, double na, double nb,
                     double scale, Vector& out) {
  const double inv = 1.0 / (na * nb);
  const double self = cos_ab / (na * na);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += scale * (b[i] * inv - a[i] * self);
}

std::vector<Vector> zeros(std::size_t n, std::size_t d) { return std::vector<Vector>(n, Vector(d, 0.0)); }

}  // namespace

void validate(const LossConfig& cfg) {
  if (!(cfg.tau > 0.0) || !std::isfinite(cfg.tau)) throw ConfigError("loss.tau must be > 0");
  if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda)) throw ConfigError("loss.lambda must be >= 0");
}

double sim(std::span<const double> x, std::span<const double> y, double tau) {
  if (!(tau > 0.0)) throw ConfigError("sim: tau must be > 0");
  return std::exp(cosine(x, y) / tau);
}

ContrastiveResult contrastive_loss(std::span<const Vector> queries, std::span<const Vector> keys,
                                   std::span<const int> domains, const LossConfig& cfg, const MemoryBank* bank) {
  validate(cfg);
  const std::size_t n = queries.size();
  if (keys.size() != n || domains.size() != n) throw ShapeError("contrastive_loss: queries/keys/domains differ in length");
  if (n < 2) throw InfeasibleAnchorError("contrastive_loss needs at least 2 items");
  const std::size_t dim = queries.front().size();
  for (std::size_t i = 0; i < n; ++i) {
    if (queries[i].size() != dim || keys[i].size() != dim) throw ShapeError("contrastive_loss: ragged embeddings");
  }

  Vector qn(n), kn(n);
  for (std::size_t i = 0; i < n; ++i) {
    qn[i] = checked_norm(queries[i]);
    kn[i] = checked_norm(keys[i]);
  }

  ContrastiveResult res;
  res.grad_queries = zeros(n, dim);
  res.grad_keys = zeros(n, dim);
  const double inv_tau = 1.0 / cfg.tau;
  const double inv_n = 1.0 / static_cast<double>(n);
  const bool with_bank = cfg.use_bank && bank != nullptr && !bank->empty();

  std::vector<double> logits;
  std::vector<double> cosines;
  std::vector<double> bank_norms;
  for (std::size_t i = 0; i < n; ++i) {
    const auto batch_neg = negatives_for(domains, i, cfg.sampling_mode);
    std::vector<std::span<const double>> bank_neg;
    if (with_bank) bank_neg = bank->negatives(domains[i], cfg.bank_negatives);
    if (batch_neg.empty() && bank_neg.empty()) {
      throw InfeasibleAnchorError("anchor " + std::to_string(i) + " (domain " + std::to_string(domains[i]) +
                                  ") has no negatives");
    }
    if (bank_neg.size() > 0 && bank_neg.front().size() != dim) throw ShapeError("bank dim != embedding dim");

    // Slot 0 is the positive, then in-batch negatives, then bank negatives.
    const std::size_t m = 1 + batch_neg.size() + bank_neg.size();
    logits.assign(m, 0.0);
    cosines.assign(m, 0.0);
    bank_norms.assign(bank_neg.size(), 0.0);
    auto cos_to = [&](std::span<const double> k, double nk) {
      return std::clamp(dot(queries[i], k) / (qn[i] * nk), -1.0, 1.0);
    };
    cosines[0] = cos_to(keys[i], kn[i]);
    for (std::size_t a = 0; a < batch_neg.size(); ++a) cosines[1 + a] = cos_to(keys[batch_neg[a]], kn[batch_neg[a]]);
    for (std::size_t b = 0; b < bank_neg.size(); ++b) {
      bank_norms[b] = checked_norm(bank_neg[b]);
      cosines[1 + batch_neg.size() + b] = cos_to(bank_neg[b], bank_norms[b]);
    }
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < m; ++s) {
      logits[s] = cosines[s] * inv_tau;
      max_logit = std::max(max_logit, logits[s]);
    }
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - max_logit);
    const double lse = max_logit + std::log(sum);
    const double nll = lse - logits[0];

    // dloss_i / dlogit_s
    std::vector<double> dlogit(m);
    for (std::size_t s = 0; s < m; ++s) dlogit[s] = std::exp(logits[s] - lse);
    if (cfg.form == LossForm::infonce) {
      res.loss += nll * inv_n;
      dlogit[0] -= 1.0;
    } else {
      const double ratio = std::exp(-nll);
      res.loss += ratio * inv_n;
      for (std::size_t s = 0; s < m; ++s) dlogit[s] *= -ratio;
      dlogit[0] += ratio;
    }

    auto backprop = [&](std::span<const double> k, double nk, double c, double g, Vector* key_grad) {
      const double scale = g * inv_tau * inv_n;
      if (scale == 0.0) return;
      add_cosine_grad(queries[i], k, c, qn[i], nk, scale, res.grad_queries[i]);
      if (key_grad) add_cosine_grad(k, queries[i], c, nk, qn[i], scale, *key_grad);
    };
    backprop(keys[i], kn[i], cosines[0], dlogit[0], &res.grad_keys[i]);
    for (std::size_t a = 0; a < batch_neg.size(); ++a) {
      const std::size_t j = batch_neg[a];
      backprop(keys[j], kn[j], cosines[1 + a], dlogit[1 + a], &res.grad_keys[j]);
    }
    for (std::size_t b = 0; b < bank_neg.size(); ++b) {
      const std::size_t s = 1 + batch_neg.size() + b;
      backprop(bank_neg[b], bank_norms[b], cosines[s], dlogit[s], nullptr);
    }
  }
  return res;
}

CoralResult coral_loss(std::span<const Vector> embeddings, std::span<const int> domain_of, std::size_t dim) {
  if (embeddings.size() != domain_of.size()) throw ShapeError("coral_loss: embeddings/domains differ in length");
  for (const auto& e : embeddings) {
    if (e.size() != dim) throw ShapeError("coral_loss: embedding length != dim");
  }

  CoralResult res;
  res.grads = zeros(embeddings.size(), dim);

  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < domain_of.size(); ++i) groups[domain_of[i]].push_back(i);
  struct DomainStats {
    std::vector<std::size_t> members;
    Vector mean;
    Matrix cov;
  };
  std::vector<DomainStats> stats;
  for (auto& [domain, members] : groups) {
    if (members.size() < 2) continue;
    Matrix rows(members.size(), dim);
    for (std::size_t r = 0; r < members.size(); ++r) {
      std::copy(embeddings[members[r]].begin(), embeddings[members[r]].end(), rows.row(r).begin());
    }
    Vector mean(dim, 0.0);
    for (std::size_t r = 0; r < rows.rows(); ++r)
      for (std::size_t c = 0; c < dim; ++c) mean[c] += rows(r, c);
    for (double& m : mean) m /= static_cast<double>(rows.rows());
    stats.push_back({members, std::move(mean), covariance(rows)});
  }
  res.domains_used = stats.size();
  if (stats.size() < 2) {
    res.degenerate = true;
    return res;
  }

  const double k = static_cast<double>(stats.size());
  const double d = static_cast<double>(dim);
  const double scale = 2.0 / (k * (k - 1.0)) / (4.0 * d * d);

  // dL/dC_g = 2 * scale * sum_{h != g} (C_g - C_h)
  std::vector<Matrix> dcov(stats.size(), Matrix(dim, dim));
  for (std::size_t g = 0; g < stats.size(); ++g) {
    for (std::size_t h = g + 1; h < stats.size(); ++h) {
      const Matrix diff = stats[g].cov - stats[h].cov;
      res.loss += scale * frobenius_sq(diff);
      auto dv = diff.values();
      auto gg = dcov[g].values();
      auto gh = dcov[h].values();
      for (std::size_t t = 0; t < dv.size(); ++t) {
        gg[t] += 2.0 * scale * dv[t];
        gh[t] -= 2.0 * scale * dv[t];
      }
    }
  }

  // dL/dx_r = 2/(n-1) * G (x_r - mean); G is symmetric.
  Vector centered(dim);
  for (std::size_t g = 0; g < stats.size(); ++g) {
    const auto& st = stats[g];
    const double f = 2.0 / static_cast<double>(st.members.size() - 1);
    for (std::size_t idx : st.members) {
      for (std::size_t c = 0; c < dim; ++c) centered[c] = embeddings[idx][c] - st.mean[c];
      auto& out = res.grads[idx];
      for (std::size_t r = 0; r < dim; ++r) out[r] = f * dot(dcov[g].row(r), centered);
    }
  }
  return res;
}

CombinedResult combined_loss(std::span<const Vector> queries, std::span<const Vector> keys,
                             std::span<const int> domains, const LossConfig& cfg, const MemoryBank* bank) {
  ContrastiveResult cl = contrastive_loss(queries, keys, domains, cfg, bank);
  CombinedResult res;
  res.value.contrastive = cl.loss;
  res.grad_queries = std::move(cl.grad_queries);
  res.grad_keys = std::move(cl.grad_keys);

  if (cfg.use_coral) {
    const std::size_t n = queries.size();
    std::vector<Vector> all(queries.begin(), queries.end());
    all.insert(all.end(), keys.begin(), keys.end());
    std::vector<int> doms(domains.begin(), domains.end());
    doms.insert(doms.end(), domains.begin(), domains.end());
    CoralResult coral = coral_loss(all, doms, queries.front().size());
    res.value.coral = coral.loss;
    res.coral_degenerate = coral.degenerate;
    if (cfg.lambda != 0.0) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < res.grad_queries[i].size(); ++c) {
          res.grad_queries[i][c] += cfg.lambda * coral.grads[i][c];
          res.grad_keys[i][c] += cfg.lambda * coral.grads[n + i][c];
        }
      }
    }
  }
  res.value.total = res.value.contrastive + cfg.lambda * res.value.coral;
  return res;
}

}  // namespace mdssl
