#pragma once

#include <string>

#include "json.hpp"
#include "mdssl/data.hpp"
#include "mdssl/eval.hpp"
#include "mdssl/trainer.hpp"

namespace mdssl {

struct ExperimentConfig {
  TrainConfig train;
  TrialConfig trials;
};

nlohmann::json to_json(const CorpusSpec& spec);
/// Every field is required; a missing or mistyped field raises ConfigError naming it.
CorpusSpec corpus_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Fields absent from j keep their value in `base`; unknown keys are rejected.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const ExperimentConfig& base = {});

nlohmann::json read_json_file(const std::string& path);

std::string to_string(SamplingMode m);
std::string to_string(BankNegatives m);
std::string to_string(LossForm f);
SamplingMode parse_sampling_mode(const std::string& s);
BankNegatives parse_bank_negatives(const std::string& s);
LossForm parse_loss_form(const std::string& s);

/// 64-bit FNV-1a, written as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace mdssl
