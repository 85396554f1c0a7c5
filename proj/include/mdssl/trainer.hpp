#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mdssl/batching.hpp"
#include "mdssl/data.hpp"
#include "mdssl/encoder.hpp"
#include "mdssl/losses.hpp"
#include "mdssl/membank.hpp"

namespace mdssl {

struct TrainConfig {
  std::size_t steps = 1000;
  BatchConfig batch;
  double learning_rate = 0.05;
  double momentum = 0.99;
  std::size_t bank_capacity = 512;
  LossConfig loss;
  EncoderDims dims;
  std::size_t combine_min_frames = 20;
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 0;
  std::size_t eval_every = 0;
  bool prefetch = true;  // build the next batch on a worker thread
};

/// Pre-flight checks that do not need data. Throws ConfigError.
void validate(const TrainConfig& cfg);

/// The ablation ladder, plus one variant that draws bank negatives from every domain.
enum class Preset { ssl_sd, ssl_sd_moco, idns, idns_moco, full_md, full_md_bank_all };

const std::vector<Preset>& ladder_presets();
std::string preset_name(Preset p);
Preset parse_preset(const std::string& name);
LossConfig preset_loss(Preset p, const LossConfig& base);

/// Independent, reproducible RNG stream for (seed, stream, index).
Rng make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kBatchStream = 2;

struct TrainState {
  EncoderParams theta;
  EncoderParams theta_k;  // momentum encoder
  MemoryBank bank;
  std::size_t step = 0;
};

/// theta from the init stream (or `init` when given), theta_k an exact copy, empty bank.
TrainState init_state(const TrainConfig& cfg, const EncoderParams* init = nullptr);

struct TrainRecord {
  std::size_t step = 0;
  double total = 0.0;
  double contrastive = 0.0;
  double coral = 0.0;
  std::size_t bank_fill = 0;
  double grad_norm = 0.0;

  friend bool operator==(const TrainRecord&, const TrainRecord&) = default;
};

using TrainLog = std::vector<TrainRecord>;

struct BatchGradient {
  CombinedResult loss;
  EncoderGrad grad;           // d total / d theta
  std::vector<Vector> keys;   // key embeddings as fed to the loss
};

/// Loss and theta-gradient for one batch. With a momentum encoder the keys
/// are encoded by it and treated as constants; without one both views go
/// through theta. Bank entries are constants either way.
BatchGradient batch_loss_grad(const EncoderParams& theta, const EncoderParams* momentum_encoder,
                              const MiniBatch& batch, const LossConfig& cfg, const MemoryBank* bank);

/// One adaptation step. With the bank enabled (MoCo mode) keys come from the
/// momentum encoder and carry no gradient; otherwise both views go through
/// theta and both backpropagate. Bank negatives are used only once the bank
/// holds at least one batch worth of entries.
/// Throws NonFiniteError if the loss or gradient is not finite.
TrainRecord train_step(TrainState& state, const MiniBatch& batch, const TrainConfig& cfg);

struct TrainHooks {
  std::function<void(const TrainState&)> on_checkpoint;
  std::function<void(const TrainState&)> on_eval;
};

struct TrainResult {
  EncoderParams params;
  TrainLog log;
};

/// Adapts on the dev split of the corpus (after short-utterance combination).
TrainResult run(const TrainConfig& cfg, const Corpus& corpus, const TrainHooks& hooks = {},
                const EncoderParams* init = nullptr);

void write_log_csv(std::ostream& out, const TrainLog& log);

}  // namespace mdssl
