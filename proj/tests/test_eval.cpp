#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "mdssl/errors.hpp"
#include "mdssl/eval.hpp"
#include "mdssl/trainer.hpp"
#include "test_util.hpp"

using namespace mdssl;

namespace {

Utterance utt(int id, int spk, int dom, std::size_t len, double fill = 1.0) {
  Utterance u{id, spk, dom, Matrix(len, 2)};
  for (double& v : u.frames.values()) v = fill;
  return u;
}

std::vector<ScoreRecord> records(std::initializer_list<double> targets, std::initializer_list<double> nontargets) {
  std::vector<ScoreRecord> out;
  for (double s : targets) out.push_back({s, true});
  for (double s : nontargets) out.push_back({s, false});
  return out;
}

std::vector<ScoreRecord> random_records(std::size_t n, std::mt19937_64& rng, double separation = 1.0) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<ScoreRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool target = i % 3 == 0;
    out.push_back({nd(rng) + (target ? separation : 0.0), target});
  }
  return out;
}

std::vector<ScoreRecord> subset(const TrialList& list, std::span<const ScoreRecord> scores, int enroll_domain,
                                int test_domain) {
  std::vector<ScoreRecord> out;
  for (std::size_t i = 0; i < list.trials.size(); ++i) {
    const auto& t = list.trials[i];
    if (t.enroll_domain == enroll_domain && (test_domain < 0 || t.test_domain == test_domain)) out.push_back(scores[i]);
  }
  return out;
}

}  // namespace

TEST_CASE("one speaker in one domain gives only target trials") {
  const std::vector<Utterance> u{utt(0, 0, 0, 10), utt(1, 0, 0, 7), utt(2, 0, 0, 9)};
  const auto list = build_trials(u, TrialConfig{10, 6}, TrialMode::pooled);
  CHECK(list.enrolls.size() == 1);
  CHECK(list.tests.size() == 2);
  CHECK(list.trials.size() == 2);
  CHECK(list.num_targets() == 2);
}

TEST_CASE("two speakers are fully crossed") {
  const std::vector<Utterance> u{utt(0, 0, 0, 10), utt(1, 0, 0, 7), utt(2, 1, 0, 12), utt(3, 1, 0, 4)};
  const auto list = build_trials(u, TrialConfig{10, 6}, TrialMode::pooled);
  CHECK(list.trials.size() == 4);
  CHECK(list.num_targets() == 2);
  std::ostringstream os;
  write_trials(os, list);
  CHECK(os.str().find("spk0-dom0-enroll utt1 target 0 0") != std::string::npos);
  CHECK(os.str().find("spk1-dom0-enroll utt1 nontarget 0 0") != std::string::npos);
}

TEST_CASE("enrollment splices leading utterances and skips thin cells") {
  const std::vector<Utterance> u{utt(0, 0, 0, 4), utt(1, 0, 0, 4), utt(2, 0, 0, 4), utt(3, 0, 0, 5),
                                 utt(4, 1, 0, 3), utt(5, 1, 1, 20), utt(6, 1, 1, 2)};
  const auto list = build_trials(u, TrialConfig{10, 6}, TrialMode::pooled);
  REQUIRE(list.enrolls.size() == 2);
  CHECK(list.enrolls[0].segment.frames.rows() == 12);
  CHECK(list.enrolls[1].segment.frames.rows() == 20);
  CHECK(list.skipped_cells == 1);
  CHECK(list.tests.size() == 2);
}

TEST_CASE("matrix mode keeps the most populated domains") {
  std::vector<Utterance> u;
  int id = 0;
  // domain 2: three speakers, domain 0: two, domain 1: one.
  for (auto [spk, dom] : std::vector<std::pair<int, int>>{{0, 2}, {1, 2}, {2, 2}, {0, 0}, {1, 0}, {0, 1}})
    for (int k = 0; k < 2; ++k) u.push_back(utt(id++, spk, dom, 10));
  CHECK(rank_domains(u) == std::vector<int>{2, 0, 1});
  const auto list = build_trials(u, TrialConfig{10, 2}, TrialMode::matrix);
  CHECK(list.domains == std::vector<int>{0, 2});
  for (const auto& t : list.trials) CHECK(t.enroll_domain != 1);
  CHECK(build_trials(u, TrialConfig{10, 2}, TrialMode::pooled).domains.size() == 3);
}

TEST_CASE("default eval split trial counts") {
  const Corpus c = generate(CorpusSpec{});
  const auto list = build_trials(c.select(Split::eval), TrialConfig{}, TrialMode::pooled);
  // Recorded at first run.
  CHECK(list.enrolls.size() == 120);
  CHECK(list.tests.size() == 758);
  CHECK(list.trials.size() == 90960);
  CHECK(list.num_targets() == 4548);
  CHECK(list.skipped_cells == 0);
}

TEST_CASE("eer on separable and inverted scores") {
  CHECK(eer(records({0.9, 0.8}, {0.1, 0.2})) == 0.0);
  CHECK(eer(records({0.1, 0.2}, {0.8, 0.9})) == 100.0);
  CHECK_THROWS_AS(eer(records({0.1, 0.2}, {})), UndefinedMetricError);
  CHECK_THROWS_AS(min_dcf(records({}, {0.3})), UndefinedMetricError);
}

TEST_CASE("eer and min_dcf match the brute-force sweep") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    auto scores = random_records(200, rng, 0.5 + 0.2 * static_cast<double>(seed % 5));
    if (seed % 4 == 0) {
      // Ties across classes.
      for (auto& s : scores) s.score = std::round(s.score * 4) / 4;
    }
    CHECK(std::abs(eer(scores) - testutil::brute_eer(scores)) <= 1e-9);
    CHECK(std::abs(min_dcf(scores) - testutil::brute_min_dcf(scores, 0.05, 1, 1)) <= 1e-9);
    CHECK(std::abs(min_dcf(scores, 0.3, 2, 1) - testutil::brute_min_dcf(scores, 0.3, 2, 1)) <= 1e-9);
  }
}

TEST_CASE("metrics are invariant under increasing transforms") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto scores = random_records(150, rng);
    auto moved = scores;
    for (auto& s : moved) s.score = std::exp(3 * s.score) + 7;
    CHECK(std::abs(eer(moved) - eer(scores)) <= 1e-9);
    CHECK(std::abs(min_dcf(moved) - min_dcf(scores)) <= 1e-9);
  }
}

TEST_CASE("flipping labels on a symmetric set mirrors the eer") {
  // Target and nontarget scores mirror each other around 0.5.
  const auto scores = records({0.3, 0.55, 0.7, 0.9}, {0.1, 0.3, 0.45, 0.7});
  auto flipped = scores;
  for (auto& s : flipped) s.is_target = !s.is_target;
  CHECK(std::abs(eer(flipped) - (100.0 - eer(scores))) <= 1e-9);
}

TEST_CASE("min_dcf floor and range") {
  CHECK(min_dcf(records({0.9, 0.8}, {0.1, 0.2})) == 0.0);
  CHECK(min_dcf(records({0.5, 0.5}, {0.5, 0.5, 0.5})) == doctest::Approx(1.0).epsilon(1e-15));
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = random_records(60, rng, -1.0);
    CHECK(min_dcf(s) <= 1.0 + 1e-12);
    CHECK(min_dcf(s) >= 0.0);
  }
}

TEST_CASE("domain matrix layout and pooled column") {
  std::vector<Utterance> u;
  int id = 0;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  for (int spk = 0; spk < 4; ++spk)
    for (int dom = 0; dom < 3; ++dom)
      for (int k = 0; k < 4; ++k) {
        Utterance x{id++, spk, dom, Matrix(6, 2)};
        for (double& v : x.frames.values()) v = nd(rng);
        u.push_back(std::move(x));
      }
  const auto list = build_trials(u, TrialConfig{10, 3}, TrialMode::matrix);
  const auto scores = random_records(list.trials.size(), rng);
  std::vector<ScoreRecord> labelled(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) labelled[i] = {scores[i].score, list.trials[i].is_target};
  const auto m = domain_matrix(list, labelled);
  REQUIRE(m.rows() == 3);
  for (std::size_t g = 0; g < 3; ++g) {
    REQUIRE(m.eer[g].size() == 4);
    for (std::size_t h = 0; h < 3; ++h) {
      REQUIRE(m.eer[g][h].has_value());
      CHECK(*m.eer[g][h] == eer(subset(list, labelled, m.domains[g], m.domains[h])));
    }
    CHECK(*m.eer[g][3] == eer(subset(list, labelled, m.domains[g], -1)));
  }
}

TEST_CASE("one-class cells are unavailable, not zero") {
  const std::vector<Utterance> u{utt(0, 0, 0, 10), utt(1, 0, 0, 10), utt(2, 1, 1, 10), utt(3, 1, 1, 10)};
  const auto list = build_trials(u, TrialConfig{10, 2}, TrialMode::matrix);
  std::vector<ScoreRecord> s;
  for (const auto& t : list.trials) s.push_back({t.is_target ? 0.9 : 0.1, t.is_target});
  const auto m = domain_matrix(list, s);
  CHECK_FALSE(m.eer[0][0].has_value());
  CHECK_FALSE(m.eer[0][1].has_value());
  REQUIRE(m.eer[0][2].has_value());
  CHECK(*m.eer[0][2] == 0.0);
  std::ostringstream os;
  write_matrix_csv(os, m, std::vector<std::string>{"a", "b"});
  CHECK(os.str() == "enroll,a,b,all\na,NA,NA,0.000000\nb,NA,NA,0.000000\n");
}

TEST_CASE("single-domain matrix has two equal entries") {
  auto spec = CorpusSpec{};
  spec.num_domains = 1;
  spec.domains_per_speaker = 1;
  const Corpus c = generate(spec);
  const auto list = build_trials(c.select(Split::eval), TrialConfig{}, TrialMode::matrix);
  Rng rng = make_rng(3, kInitStream);
  const auto st = score_trials(init_params(EncoderDims{}, rng), list);
  const auto m = domain_matrix(list, st.scores);
  REQUIRE(m.rows() == 1);
  REQUIRE(m.eer[0].size() == 2);
  CHECK(*m.eer[0][0] == *m.eer[0][1]);
}

TEST_CASE("without domain effects the matrix cells agree within sampling noise") {
  auto spec = CorpusSpec{};
  spec.domain_shift_scale = 0;
  spec.domain_transform_scale = 0;
  spec.num_domains = 3;
  spec.domains_per_speaker = 3;
  const Corpus c = generate(spec);
  const auto list = build_trials(c.select(Split::eval), TrialConfig{}, TrialMode::matrix);
  Rng rng = make_rng(3, kInitStream);
  const auto st = score_trials(init_params(EncoderDims{}, rng), list);
  const auto m = domain_matrix(list, st.scores);
  double sum = 0;
  std::size_t cells = 0;
  for (std::size_t g = 0; g < 3; ++g)
    for (std::size_t h = 0; h < 3; ++h) sum += *m.eer[g][h], ++cells;
  const double mean = sum / static_cast<double>(cells) / 100.0;
  for (std::size_t g = 0; g < 3; ++g)
    for (std::size_t h = 0; h < 3; ++h) {
      const auto cell = subset(list, st.scores, m.domains[g], m.domains[h]);
      std::size_t nt = 0;
      for (const auto& s : cell) nt += s.is_target ? 1 : 0;
      const double se = std::sqrt(mean * (1 - mean) * (1.0 / static_cast<double>(nt) +
                                                       1.0 / static_cast<double>(cell.size() - nt)));
      CHECK(std::abs(*m.eer[g][h] / 100.0 - mean) <= 4 * se);
    }
}

TEST_CASE("default corpus matrix reproduces its recorded values") {
  const Corpus c = generate(CorpusSpec{});
  TrialConfig tc;
  tc.top_domains = 4;
  const auto list = build_trials(c.select(Split::eval), tc, TrialMode::matrix);
  Rng rng = make_rng(3, kInitStream);
  const auto st = score_trials(init_params(EncoderDims{}, rng), list);
  const auto m = domain_matrix(list, st.scores);
  REQUIRE(m.rows() == 4);
  // Recorded at first run for this seeded, untrained encoder.
  CHECK(*m.eer[0][0] == doctest::Approx(1.1981172443303381).epsilon(1e-12));
  CHECK(*m.eer[0][1] == doctest::Approx(34.090909090909086).epsilon(1e-12));
  CHECK(*m.eer[1][1] == doctest::Approx(0.4784688995215311).epsilon(1e-12));
  CHECK(*m.eer[3][4] == doctest::Approx(36.526946107784433).epsilon(1e-12));
  const auto pm = pooled_metrics(st.scores);
  CHECK(pm.eer_percent == doctest::Approx(34.089715306229643).epsilon(1e-12));
  CHECK(pm.min_dcf == doctest::Approx(0.78892215568862278).epsilon(1e-12));
}

TEST_CASE("projection of centred 2-D data preserves distances") {
  std::mt19937_64 rng(12);
  auto xs = testutil::random_vectors(10, 2, rng);
  Vector mean{0, 0};
  for (const auto& x : xs) mean[0] += x[0] / 10, mean[1] += x[1] / 10;
  for (auto& x : xs) x[0] -= mean[0], x[1] -= mean[1];
  const std::vector<int> labels(10, 0);
  const auto pts = project_2d(xs, labels, labels);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 10; ++j) {
      const double a = std::hypot(xs[i][0] - xs[j][0], xs[i][1] - xs[j][1]);
      const double b = std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y);
      CHECK(std::abs(a - b) <= 1e-10);
    }
}

TEST_CASE("identical embeddings project to the origin") {
  const std::vector<Vector> xs(5, Vector{1, 2, 3});
  const std::vector<int> labels{0, 1, 2, 3, 4};
  for (const auto& p : project_2d(xs, labels, labels)) {
    CHECK(p.x == 0.0);
    CHECK(p.y == 0.0);
  }
  CHECK_THROWS_AS(project_2d(std::vector<Vector>(2, Vector{1.0}), std::vector<int>{0, 0}, std::vector<int>{0, 0}),
                  InsufficientSamplesError);
}

TEST_CASE("projected variance equals the top two eigenvalues") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 60;
    auto xs = testutil::random_vectors(n, 16, rng);
    for (auto& x : xs) x[3] *= 4, x[7] *= 2.5;
    const std::vector<int> speakers(n, 1), domains(n, 2);
    const auto pts = project_2d(xs, speakers, domains);
    double vx = 0, vy = 0, mx = 0, my = 0, cxy = 0;
    for (const auto& p : pts) mx += p.x / n, my += p.y / n;
    for (const auto& p : pts) {
      vx += (p.x - mx) * (p.x - mx) / (n - 1);
      vy += (p.y - my) * (p.y - my) / (n - 1);
      cxy += (p.x - mx) * (p.y - my) / (n - 1);
    }
    const auto ev = testutil::jacobi_eigenvalues(testutil::covariance_oracle(xs));
    CHECK(vx == doctest::Approx(ev[0]).epsilon(1e-9));
    CHECK(vy == doctest::Approx(ev[1]).epsilon(1e-9));
    CHECK(std::abs(mx) <= 1e-12);
    CHECK(std::abs(cxy) <= 1e-9 * ev[0]);
    CHECK(pts.front().speaker_id == 1);
    CHECK(pts.front().domain_id == 2);
  }
}

TEST_CASE("metrics and projection csv layouts") {
  std::ostringstream m;
  write_metrics_csv(m, PooledMetrics{12.5, 0.75, 10, 90});
  CHECK(m.str().rfind("eer_percent,min_dcf,targets,nontargets\n", 0) == 0);
  std::ostringstream p;
  const std::vector<ProjectedPoint> pts{{1.5, -2, 3, 4}};
  write_projection_csv(p, pts);
  CHECK(p.str() == "x,y,speaker,domain\n1.5,-2,3,4\n");
}
