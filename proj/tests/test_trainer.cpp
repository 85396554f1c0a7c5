#include <sstream>

#include "doctest.h"
#include "mdssl/errors.hpp"
#include "mdssl/trainer.hpp"
#include "test_util.hpp"

using namespace mdssl;

namespace {

CorpusSpec small_spec() {
  CorpusSpec s;
  s.num_speakers = 12;
  s.num_domains = 3;
  s.domains_per_speaker = 3;
  s.utterances_per_speaker_per_domain = 6;
  s.num_eval_speakers = 4;
  return s;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.batch.batch_size = 12;
  cfg.bank_capacity = 48;
  cfg.steps = 20;
  return cfg;
}

MiniBatch sample_batch(const TrainConfig& cfg, std::uint64_t index) {
  static const Corpus corpus = generate(small_spec());
  static const auto pool = combine_short(corpus.select(Split::dev), 20);
  Rng rng = make_rng(99, kBatchStream, index);
  return build_batch(pool, cfg.batch, rng);
}

}  // namespace

TEST_CASE("preset wiring") {
  const LossConfig base;
  const auto sd = preset_loss(Preset::ssl_sd, base);
  CHECK(sd.sampling_mode == SamplingMode::single_domain);
  CHECK_FALSE(sd.use_bank);
  CHECK_FALSE(sd.use_coral);
  const auto md = preset_loss(Preset::full_md, base);
  CHECK(md.sampling_mode == SamplingMode::in_domain);
  CHECK(md.use_bank);
  CHECK(md.use_coral);
  CHECK(md.bank_negatives == BankNegatives::in_domain);
  CHECK(preset_loss(Preset::idns_moco, base).use_bank);
  CHECK_FALSE(preset_loss(Preset::idns_moco, base).use_coral);
  CHECK(preset_loss(Preset::ssl_sd_moco, base).bank_negatives == BankNegatives::all);
  CHECK(preset_loss(Preset::full_md_bank_all, base).bank_negatives == BankNegatives::all);
  CHECK(ladder_presets().size() == 5);
  for (Preset p : ladder_presets()) CHECK(parse_preset(preset_name(p)) == p);
  CHECK_THROWS_AS(parse_preset("moco"), ConfigError);
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(validate(TrainConfig{}));
  auto cfg = TrainConfig{};
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = TrainConfig{};
  cfg.loss.tau = 0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = TrainConfig{};
  cfg.batch.min_per_domain = 1;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg.loss.sampling_mode = SamplingMode::single_domain;
  CHECK_NOTHROW(validate(cfg));
  cfg = TrainConfig{};
  cfg.loss.lambda = -1;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
}

TEST_CASE("rng streams are reproducible and distinct") {
  Rng a = make_rng(5, kBatchStream, 3), b = make_rng(5, kBatchStream, 3);
  CHECK(a() == b());
  CHECK(make_rng(5, kBatchStream, 3)() != make_rng(5, kBatchStream, 4)());
  CHECK(make_rng(5, kBatchStream, 3)() != make_rng(5, kInitStream, 3)());
  CHECK(make_rng(5, kBatchStream, 3)() != make_rng(6, kBatchStream, 3)());
}

TEST_CASE("momentum encoder starts as an exact copy") {
  const auto st = init_state(small_config());
  CHECK(st.theta == st.theta_k);
  CHECK(st.bank.empty());
  CHECK(st.bank.capacity() == 48);
}

TEST_CASE("baseline mode ignores the momentum encoder") {
  auto cfg = small_config();
  cfg.loss = preset_loss(Preset::idns, cfg.loss);
  const MiniBatch batch = sample_batch(cfg, 0);
  auto a = init_state(cfg);
  auto b = a;
  std::mt19937_64 rng(1);
  b.theta_k = testutil::random_params(cfg.dims, rng);
  const auto ra = train_step(a, batch, cfg);
  const auto rb = train_step(b, batch, cfg);
  CHECK(a.theta == b.theta);
  CHECK(ra == rb);
  CHECK(a.bank.empty());
}

TEST_CASE("MoCo mode moves the momentum encoder by the momentum rule only") {
  auto cfg = small_config();
  cfg.loss = preset_loss(Preset::full_md, cfg.loss);
  cfg.momentum = 0.9;
  auto st = init_state(cfg);
  std::mt19937_64 rng(2);
  st.theta_k = testutil::random_params(cfg.dims, rng);
  for (std::uint64_t step = 0; step < 6; ++step) {
    const auto before = st.theta_k;
    const auto rec = train_step(st, sample_batch(cfg, step), cfg);
    auto expected = before;
    momentum_update(expected, st.theta, cfg.momentum);
    CHECK(st.theta_k == expected);
    CHECK(rec.bank_fill == std::min<std::size_t>(48, 12 * (step + 1)));
    CHECK(st.bank.consistent());
  }
}

TEST_CASE("bank negatives wait for a full batch worth of entries") {
  auto cfg = small_config();
  cfg.loss = preset_loss(Preset::idns_moco, cfg.loss);
  const MiniBatch batch = sample_batch(cfg, 0);
  auto st = init_state(cfg);
  std::mt19937_64 rng(3);
  std::vector<BankEntry> few;
  for (int i = 0; i < 5; ++i) few.push_back({testutil::random_vector(cfg.dims.embedding, rng), i % 3});
  st.bank.enqueue(few);
  auto without = st;
  without.bank.clear();
  CHECK(train_step(st, batch, cfg).total == train_step(without, batch, cfg).total);
}

TEST_CASE("theta gradient through the encoder matches finite differences") {
  const EncoderDims dims{8, 5, 4};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto cfg = small_config();
    cfg.dims = dims;
    cfg.batch.batch_size = 6;
    cfg.loss = preset_loss(seed % 2 ? Preset::full_md : Preset::idns, cfg.loss);
    cfg.loss.tau = 0.2;
    const MiniBatch batch = sample_batch(cfg, seed);
    std::mt19937_64 rng(900 + seed);
    const auto theta = testutil::random_params(dims, rng, 0.4);
    const auto theta_k = testutil::random_params(dims, rng, 0.4);
    MemoryBank bank(20, dims.embedding);
    std::vector<BankEntry> es;
    for (int i = 0; i < 15; ++i) es.push_back({testutil::random_vector(dims.embedding, rng), i % 6});
    bank.enqueue(es);
    const EncoderParams* mom = cfg.loss.use_bank ? &theta_k : nullptr;

    const auto bg = batch_loss_grad(theta, mom, batch, cfg.loss, &bank);
    const auto numeric = finite_diff_grad(
        [&](std::span<const double> flat) {
          EncoderParams p = theta;
          p.assign(flat);
          return batch_loss_grad(p, mom, batch, cfg.loss, &bank).loss.value.total;
        },
        theta.flatten());
    CHECK(compare_gradients(bg.grad.flatten(), numeric).max_rel_err <= 1e-4);
  }
}

TEST_CASE("non-finite training state is reported") {
  auto cfg = small_config();
  cfg.loss = preset_loss(Preset::full_md, cfg.loss);
  auto st = init_state(cfg);
  for (double& v : st.theta.b2) v = 1e300;
  CHECK_THROWS_AS(train_step(st, sample_batch(cfg, 0), cfg), NonFiniteError);
}

TEST_CASE("training runs are deterministic with or without prefetch") {
  const Corpus corpus = generate(small_spec());
  auto cfg = small_config();
  const auto a = run(cfg, corpus);
  const auto b = run(cfg, corpus);
  cfg.prefetch = false;
  const auto c = run(cfg, corpus);
  CHECK(a.params == b.params);
  CHECK(a.log == b.log);
  CHECK(a.params == c.params);
  CHECK(a.log == c.log);
  REQUIRE(a.log.size() == 20);
  CHECK(a.log.back().bank_fill == 48);
}

TEST_CASE("hooks fire on schedule") {
  const Corpus corpus = generate(small_spec());
  auto cfg = small_config();
  cfg.steps = 10;
  cfg.checkpoint_every = 4;
  cfg.eval_every = 5;
  std::vector<std::size_t> ckpt, evals;
  TrainHooks hooks{[&](const TrainState& s) { ckpt.push_back(s.step); },
                   [&](const TrainState& s) { evals.push_back(s.step); }};
  run(cfg, corpus, hooks);
  CHECK(ckpt == std::vector<std::size_t>{4, 8});
  CHECK(evals == std::vector<std::size_t>{5, 10});
}

TEST_CASE("seeded smoke run reproduces its recorded final loss") {
  const Corpus corpus = generate(small_spec());
  auto cfg = small_config();
  cfg.steps = 200;
  const auto r = run(cfg, corpus);
  // Recorded at first run on this toolchain.
  CHECK(r.log.back().total == doctest::Approx(1.3104395024325679).epsilon(1e-9));
  CHECK(r.log.back().bank_fill == 48);
}

TEST_CASE("log csv layout") {
  std::ostringstream os;
  write_log_csv(os, TrainLog{{0, 1.5, 1.25, 0.25, 12, 0.5}});
  CHECK(os.str() == "step,total,cl,coral,bank_fill,grad_norm\n0,1.5,1.25,0.25,12,0.5\n");
}
