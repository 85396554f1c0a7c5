#include "mdssl/config_io.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "mdssl/errors.hpp"

namespace mdssl {

using nlohmann::json;

namespace {

template <typename T>
T required(const json& j, const char* field) {
  if (!j.contains(field)) throw ConfigError(std::string("missing field '") + field + "'");
  try {
    return j.at(field).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("field '") + field + "' has the wrong type");
  }
}

template <typename T>
void optional_field(const json& j, const char* field, T& out, const std::string& prefix = "") {
  if (!j.contains(field)) return;
  try {
    out = j.at(field).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("field '" + prefix + field + "' has the wrong type");
  }
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& prefix) {
  if (!j.is_object()) throw ConfigError("section '" + prefix + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config field '" + prefix + key + "'");
  }
}

}  // namespace

json to_json(const CorpusSpec& s) {
  return json{{"num_speakers", s.num_speakers},
              {"num_domains", s.num_domains},
              {"domains_per_speaker", s.domains_per_speaker},
              {"utterances_per_speaker_per_domain", s.utterances_per_speaker_per_domain},
              {"min_frames", s.min_frames},
              {"max_frames", s.max_frames},
              {"feature_dim", s.feature_dim},
              {"speaker_scale", s.speaker_scale},
              {"domain_shift_scale", s.domain_shift_scale},
              {"domain_transform_scale", s.domain_transform_scale},
              {"noise_scale", s.noise_scale},
              {"num_eval_speakers", s.num_eval_speakers},
              {"seed", s.seed}};
}

CorpusSpec corpus_spec_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("corpus spec must be a JSON object");
  reject_unknown(j,
                 {"num_speakers", "num_domains", "domains_per_speaker", "utterances_per_speaker_per_domain",
                  "min_frames", "max_frames", "feature_dim", "speaker_scale", "domain_shift_scale",
                  "domain_transform_scale", "noise_scale", "num_eval_speakers", "seed"},
                 "");
  CorpusSpec s;
  s.num_speakers = required<int>(j, "num_speakers");
  s.num_domains = required<int>(j, "num_domains");
  s.domains_per_speaker = required<int>(j, "domains_per_speaker");
  s.utterances_per_speaker_per_domain = required<int>(j, "utterances_per_speaker_per_domain");
  s.min_frames = required<int>(j, "min_frames");
  s.max_frames = required<int>(j, "max_frames");
  s.feature_dim = required<int>(j, "feature_dim");
  s.speaker_scale = required<double>(j, "speaker_scale");
  s.domain_shift_scale = required<double>(j, "domain_shift_scale");
  s.domain_transform_scale = required<double>(j, "domain_transform_scale");
  s.noise_scale = required<double>(j, "noise_scale");
  s.num_eval_speakers = required<int>(j, "num_eval_speakers");
  s.seed = required<std::uint64_t>(j, "seed");
  validate(s);
  return s;
}

std::string to_string(SamplingMode m) { return m == SamplingMode::in_domain ? "in_domain" : "single_domain"; }
std::string to_string(BankNegatives m) { return m == BankNegatives::in_domain ? "in_domain" : "all"; }
std::string to_string(LossForm f) { return f == LossForm::infonce ? "infonce" : "verbatim"; }

SamplingMode parse_sampling_mode(const std::string& s) {
  if (s == "in_domain") return SamplingMode::in_domain;
  if (s == "single_domain") return SamplingMode::single_domain;
  throw ConfigError("loss.sampling_mode must be single_domain or in_domain, got '" + s + "'");
}

BankNegatives parse_bank_negatives(const std::string& s) {
  if (s == "in_domain") return BankNegatives::in_domain;
  if (s == "all") return BankNegatives::all;
  throw ConfigError("loss.bank_negatives must be all or in_domain, got '" + s + "'");
}

LossForm parse_loss_form(const std::string& s) {
  if (s == "infonce") return LossForm::infonce;
  if (s == "verbatim") return LossForm::verbatim;
  throw ConfigError("loss.loss_form must be infonce or verbatim, got '" + s + "'");
}

json to_json(const ExperimentConfig& cfg) {
  const auto& t = cfg.train;
  return json{
      {"steps", t.steps},
      {"learning_rate", t.learning_rate},
      {"momentum", t.momentum},
      {"bank_capacity", t.bank_capacity},
      {"combine_min_frames", t.combine_min_frames},
      {"seed", t.seed},
      {"checkpoint_every", t.checkpoint_every},
      {"eval_every", t.eval_every},
      {"encoder", {{"input", t.dims.input}, {"hidden", t.dims.hidden}, {"embedding", t.dims.embedding}}},
      {"batch",
       {{"batch_size", t.batch.batch_size},
        {"min_per_domain", t.batch.min_per_domain},
        {"view_min_frames", t.batch.view_min_frames},
        {"gain_lo", t.batch.gain.lo},
        {"gain_hi", t.batch.gain.hi},
        {"augment_noise", t.batch.augment_noise}}},
      {"loss",
       {{"tau", t.loss.tau},
        {"lambda", t.loss.lambda},
        {"sampling_mode", to_string(t.loss.sampling_mode)},
        {"use_bank", t.loss.use_bank},
        {"bank_negatives", to_string(t.loss.bank_negatives)},
        {"use_coral", t.loss.use_coral},
        {"loss_form", to_string(t.loss.form)}}},
      {"eval", {{"enroll_frames", cfg.trials.enroll_frames}, {"top_domains", cfg.trials.top_domains}}},
  };
}

ExperimentConfig experiment_config_from_json(const json& j, const ExperimentConfig& base) {
  ExperimentConfig cfg = base;
  auto& t = cfg.train;
  reject_unknown(j,
                 {"steps", "learning_rate", "momentum", "bank_capacity", "combine_min_frames", "seed",
                  "checkpoint_every", "eval_every", "encoder", "batch", "loss", "eval"},
                 "");
  optional_field(j, "steps", t.steps);
  optional_field(j, "learning_rate", t.learning_rate);
  optional_field(j, "momentum", t.momentum);
  optional_field(j, "bank_capacity", t.bank_capacity);
  optional_field(j, "combine_min_frames", t.combine_min_frames);
  optional_field(j, "seed", t.seed);
  optional_field(j, "checkpoint_every", t.checkpoint_every);
  optional_field(j, "eval_every", t.eval_every);
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    reject_unknown(e, {"input", "hidden", "embedding"}, "encoder.");
    optional_field(e, "input", t.dims.input, "encoder.");
    optional_field(e, "hidden", t.dims.hidden, "encoder.");
    optional_field(e, "embedding", t.dims.embedding, "encoder.");
  }
  if (j.contains("batch")) {
    const auto& b = j.at("batch");
    reject_unknown(b, {"batch_size", "min_per_domain", "view_min_frames", "gain_lo", "gain_hi", "augment_noise"},
                   "batch.");
    optional_field(b, "batch_size", t.batch.batch_size, "batch.");
    optional_field(b, "min_per_domain", t.batch.min_per_domain, "batch.");
    optional_field(b, "view_min_frames", t.batch.view_min_frames, "batch.");
    optional_field(b, "gain_lo", t.batch.gain.lo, "batch.");
    optional_field(b, "gain_hi", t.batch.gain.hi, "batch.");
    optional_field(b, "augment_noise", t.batch.augment_noise, "batch.");
  }
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    reject_unknown(l, {"tau", "lambda", "sampling_mode", "use_bank", "bank_negatives", "use_coral", "loss_form"},
                   "loss.");
    optional_field(l, "tau", t.loss.tau, "loss.");
    optional_field(l, "lambda", t.loss.lambda, "loss.");
    optional_field(l, "use_bank", t.loss.use_bank, "loss.");
    optional_field(l, "use_coral", t.loss.use_coral, "loss.");
    std::string s;
    if (l.contains("sampling_mode")) {
      optional_field(l, "sampling_mode", s, "loss.");
      t.loss.sampling_mode = parse_sampling_mode(s);
    }
    if (l.contains("bank_negatives")) {
      optional_field(l, "bank_negatives", s, "loss.");
      t.loss.bank_negatives = parse_bank_negatives(s);
    }
    if (l.contains("loss_form")) {
      optional_field(l, "loss_form", s, "loss.");
      t.loss.form = parse_loss_form(s);
    }
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    reject_unknown(e, {"enroll_frames", "top_domains"}, "eval.");
    optional_field(e, "enroll_frames", cfg.trials.enroll_frames, "eval.");
    optional_field(e, "top_domains", cfg.trials.top_domains, "eval.");
  }
  return cfg;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace mdssl
