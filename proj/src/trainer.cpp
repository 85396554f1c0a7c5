#include "mdssl/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <future>
#include <ostream>

#include "mdssl/errors.hpp"

namespace mdssl {

void validate(const TrainConfig& cfg) {
  if (cfg.steps < 1) throw ConfigError("steps must be >= 1");
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (cfg.batch.batch_size < 2) throw ConfigError("batch.batch_size must be >= 2");
  if (cfg.batch.min_per_domain < 1) throw ConfigError("batch.min_per_domain must be >= 1");
  if (cfg.batch.view_min_frames < 1) throw ConfigError("batch.view_min_frames must be >= 1");
  if (!(cfg.batch.gain.lo > 0.0) || cfg.batch.gain.hi < cfg.batch.gain.lo) {
    throw ConfigError("batch gain range must satisfy 0 < gain_lo <= gain_hi");
  }
  if (cfg.batch.augment_noise < 0.0) throw ConfigError("batch.augment_noise must be >= 0");
  if (cfg.loss.sampling_mode == SamplingMode::in_domain && cfg.batch.min_per_domain < 2) {
    throw ConfigError("in-domain sampling needs batch.min_per_domain >= 2");
  }
  if (cfg.loss.use_bank && cfg.bank_capacity < 1) throw ConfigError("bank_capacity must be >= 1 when the bank is on");
  if (cfg.dims.input == 0 || cfg.dims.hidden == 0 || cfg.dims.embedding == 0) {
    throw ConfigError("encoder dims must be positive");
  }
  validate(cfg.loss);
}

const std::vector<Preset>& ladder_presets() {
  static const std::vector<Preset> ladder = {Preset::ssl_sd, Preset::ssl_sd_moco, Preset::idns, Preset::idns_moco,
                                             Preset::full_md};
  return ladder;
}

std::string preset_name(Preset p) {
  switch (p) {
    case Preset::ssl_sd: return "ssl_sd";
    case Preset::ssl_sd_moco: return "ssl_sd_moco";
    case Preset::idns: return "idns";
    case Preset::idns_moco: return "idns_moco";
    case Preset::full_md: return "full_md";
    case Preset::full_md_bank_all: return "full_md_bank_all";
  }
  return "?";
}

Preset parse_preset(const std::string& name) {
  for (Preset p : {Preset::ssl_sd, Preset::ssl_sd_moco, Preset::idns, Preset::idns_moco, Preset::full_md,
                   Preset::full_md_bank_all}) {
    if (preset_name(p) == name) return p;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

LossConfig preset_loss(Preset p, const LossConfig& base) {
  LossConfig c = base;
  switch (p) {
    case Preset::ssl_sd:
      c.sampling_mode = SamplingMode::single_domain;
      c.use_bank = false;
      c.use_coral = false;
      break;
    case Preset::ssl_sd_moco:
      c.sampling_mode = SamplingMode::single_domain;
      c.use_bank = true;
      c.bank_negatives = BankNegatives::all;
      c.use_coral = false;
      break;
    case Preset::idns:
      c.sampling_mode = SamplingMode::in_domain;
      c.use_bank = false;
      c.use_coral = false;
      break;
    case Preset::idns_moco:
      c.sampling_mode = SamplingMode::in_domain;
      c.use_bank = true;
      c.bank_negatives = BankNegatives::in_domain;
      c.use_coral = false;
      break;
    case Preset::full_md:
      c.sampling_mode = SamplingMode::in_domain;
      c.use_bank = true;
      c.bank_negatives = BankNegatives::in_domain;
      c.use_coral = true;
      break;
    case Preset::full_md_bank_all:
      c.sampling_mode = SamplingMode::in_domain;
      c.use_bank = true;
      c.bank_negatives = BankNegatives::all;
      c.use_coral = true;
      break;
  }
  return c;
}

Rng make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

TrainState init_state(const TrainConfig& cfg, const EncoderParams* init) {
  EncoderParams theta;
  if (init) {
    validate(*init);
    if (init->dims != cfg.dims) throw ConfigError("initial checkpoint dims differ from config dims");
    theta = *init;
  } else {
    Rng rng = make_rng(cfg.seed, kInitStream);
    theta = init_params(cfg.dims, rng);
  }
  TrainState st{theta, theta, MemoryBank(cfg.bank_capacity, cfg.dims.embedding), 0};
  return st;
}

BatchGradient batch_loss_grad(const EncoderParams& theta, const EncoderParams* momentum_encoder,
                              const MiniBatch& batch, const LossConfig& cfg, const MemoryBank* bank) {
  const std::size_t n = batch.size();
  const EncoderParams& key_encoder = momentum_encoder ? *momentum_encoder : theta;
  std::vector<Vector> queries;
  BatchGradient out;
  queries.reserve(n);
  out.keys.reserve(n);
  for (const auto& item : batch.items) {
    queries.push_back(encode(theta, item.query));
    out.keys.push_back(encode(key_encoder, item.key));
  }
  const auto domains = batch.domains();
  out.loss = combined_loss(queries, out.keys, domains, cfg, bank);
  out.grad = EncoderParams::zeros(theta.dims, theta.activation);
  for (std::size_t i = 0; i < n; ++i) {
    accumulate_encode_grad(theta, batch.items[i].query, out.loss.grad_queries[i], out.grad);
    if (!momentum_encoder) accumulate_encode_grad(theta, batch.items[i].key, out.loss.grad_keys[i], out.grad);
  }
  return out;
}

TrainRecord train_step(TrainState& state, const MiniBatch& batch, const TrainConfig& cfg) {
  const bool moco = cfg.loss.use_bank;
  const bool bank_ready = moco && state.bank.size() >= cfg.batch.batch_size;
  BatchGradient bg = batch_loss_grad(state.theta, moco ? &state.theta_k : nullptr, batch, cfg.loss,
                                     bank_ready ? &state.bank : nullptr);

  TrainRecord rec;
  rec.step = state.step;
  rec.total = bg.loss.value.total;
  rec.contrastive = bg.loss.value.contrastive;
  rec.coral = bg.loss.value.coral;
  if (!std::isfinite(rec.total)) {
    char msg[160];
    std::snprintf(msg, sizeof msg, "non-finite loss at step %zu (cl=%g coral=%g)", rec.step, rec.contrastive,
                  rec.coral);
    throw NonFiniteError(msg);
  }

  const Vector g = bg.grad.flatten();
  rec.grad_norm = norm(g);
  if (!std::isfinite(rec.grad_norm)) throw NonFiniteError("non-finite gradient at step " + std::to_string(rec.step));

  Vector theta = state.theta.flatten();
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= cfg.learning_rate * g[i];
  state.theta.assign(theta);

  momentum_update(state.theta_k, state.theta, cfg.momentum);

  if (moco) {
    const auto domains = batch.domains();
    std::vector<BankEntry> entries;
    entries.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) entries.push_back({std::move(bg.keys[i]), domains[i]});
    state.bank.enqueue(entries);
  }
  rec.bank_fill = state.bank.size();
  ++state.step;
  return rec;
}

TrainResult run(const TrainConfig& cfg, const Corpus& corpus, const TrainHooks& hooks, const EncoderParams* init) {
  TrainState state = init_state(cfg, init);
  TrainResult result;
  if (cfg.steps == 0) {
    result.params = state.theta;
    return result;
  }
  const std::vector<Utterance> pool = combine_short(corpus.select(Split::dev), cfg.combine_min_frames);
  if (pool.empty()) throw InfeasibleBatchError("dev split is empty after short-utterance combination");

  auto make_batch = [&](std::size_t step) {
    Rng rng = make_rng(cfg.seed, kBatchStream, step);
    return build_batch(pool, cfg.batch, rng);
  };

  result.log.reserve(cfg.steps);
  std::future<MiniBatch> next;
  MiniBatch current = make_batch(0);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    if (cfg.prefetch && step + 1 < cfg.steps) next = std::async(std::launch::async, make_batch, step + 1);
    result.log.push_back(train_step(state, current, cfg));
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0) {
      hooks.on_checkpoint(state);
    }
    if (hooks.on_eval && cfg.eval_every > 0 && state.step % cfg.eval_every == 0) hooks.on_eval(state);
    if (step + 1 < cfg.steps) current = cfg.prefetch ? next.get() : make_batch(step + 1);
  }
  result.params = state.theta;
  return result;
}

void write_log_csv(std::ostream& out, const TrainLog& log) {
  out << "step,total,cl,coral,bank_fill,grad_norm\n";
  char buf[256];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%zu,%.17g\n", r.step, r.total, r.contrastive, r.coral,
                  r.bank_fill, r.grad_norm);
    out << buf;
  }
}

}  // namespace mdssl
