#include "mdssl/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>

#include "mdssl/errors.hpp"

namespace mdssl {

std::size_t TrialList::num_targets() const {
  return static_cast<std::size_t>(std::count_if(trials.begin(), trials.end(), [](const Trial& t) { return t.is_target; }));
}

std::vector<int> rank_domains(std::span<const Utterance> utts) {
  std::map<int, std::set<int>> speakers;
  std::map<int, std::size_t> counts;
  for (const auto& u : utts) {
    speakers[u.domain_id].insert(u.speaker_id);
    ++counts[u.domain_id];
  }
  std::vector<int> order;
  for (const auto& [d, s] : speakers) order.push_back(d);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (speakers[a].size() != speakers[b].size()) return speakers[a].size() > speakers[b].size();
    if (counts[a] != counts[b]) return counts[a] > counts[b];
    return a < b;
  });
  return order;
}

namespace {

Segment splice(std::span<const Utterance* const> parts) {
  std::size_t total = 0;
  for (const Utterance* u : parts) total += u->length();
  const Utterance& first = *parts.front();
  Segment s{Matrix(total, first.frames.cols()), first.id, first.domain_id, 0};
  std::size_t r = 0;
  for (const Utterance* u : parts) {
    for (std::size_t t = 0; t < u->length(); ++t, ++r) {
      auto src = u->frames.row(t);
      std::copy(src.begin(), src.end(), s.frames.row(r).begin());
    }
  }
  return s;
}

}  // namespace

TrialList build_trials(std::span<const Utterance> eval_utts, const TrialConfig& cfg, TrialMode mode) {
  if (eval_utts.empty()) throw ConfigError("build_trials: eval split is empty");
  if (cfg.enroll_frames < 1) throw ConfigError("enroll_frames must be >= 1");
  TrialList list;
  list.domains = rank_domains(eval_utts);
  if (mode == TrialMode::matrix) {
    if (cfg.top_domains < 1) throw ConfigError("top_domains must be >= 1");
    if (list.domains.size() > cfg.top_domains) list.domains.resize(cfg.top_domains);
  }
  std::sort(list.domains.begin(), list.domains.end());
  const std::set<int> selected(list.domains.begin(), list.domains.end());

  std::map<std::pair<int, int>, std::vector<const Utterance*>> cells;  // (speaker, domain)
  for (const auto& u : eval_utts) {
    if (selected.count(u.domain_id)) cells[{u.speaker_id, u.domain_id}].push_back(&u);
  }

  for (const auto& [key, utts] : cells) {
    std::size_t frames = 0;
    std::size_t used = 0;
    while (used < utts.size() && frames < cfg.enroll_frames) frames += utts[used++]->length();
    if (frames < cfg.enroll_frames) {
      ++list.skipped_cells;
      continue;
    }
    const auto [speaker, domain] = key;
    list.enrolls.push_back({"spk" + std::to_string(speaker) + "-dom" + std::to_string(domain) + "-enroll", speaker,
                            domain, splice(std::span<const Utterance* const>(utts.data(), used))});
    for (std::size_t k = used; k < utts.size(); ++k) {
      const Utterance& u = *utts[k];
      list.tests.push_back({"utt" + std::to_string(u.id), u.speaker_id, u.domain_id, whole_segment(u)});
    }
  }

  list.trials.reserve(list.enrolls.size() * list.tests.size());
  for (std::size_t e = 0; e < list.enrolls.size(); ++e) {
    for (std::size_t t = 0; t < list.tests.size(); ++t) {
      const auto& en = list.enrolls[e];
      const auto& te = list.tests[t];
      list.trials.push_back({e, t, en.speaker_id == te.speaker_id, en.domain_id, te.domain_id});
    }
  }
  return list;
}

void write_trials(std::ostream& out, const TrialList& list) {
  for (const auto& t : list.trials) {
    out << list.enrolls[t.enroll].id << ' ' << list.tests[t.test].id << ' ' << (t.is_target ? "target" : "nontarget")
        << ' ' << t.enroll_domain << ' ' << t.test_domain << '\n';
  }
}

ScoredTrials score_trials(const EncoderParams& params, const TrialList& list) {
  ScoredTrials st;
  st.enroll_embeddings.reserve(list.enrolls.size());
  for (const auto& e : list.enrolls) st.enroll_embeddings.push_back(encode(params, e.segment));
  st.test_embeddings.reserve(list.tests.size());
  for (const auto& t : list.tests) st.test_embeddings.push_back(encode(params, t.segment));
  st.scores.reserve(list.trials.size());
  for (const auto& t : list.trials) {
    st.scores.push_back({cosine(st.enroll_embeddings[t.enroll], st.test_embeddings[t.test]), t.is_target});
  }
  return st;
}

namespace {

struct OperatingPoint {
  double p_miss;
  double p_fa;
};

// Rates at every distinct score used as threshold, plus the reject-all point.
std::vector<OperatingPoint> operating_points(std::span<const ScoreRecord> scores) {
  std::size_t targets = 0;
  for (const auto& s : scores) targets += s.is_target ? 1 : 0;
  const std::size_t nontargets = scores.size() - targets;
  if (targets == 0 || nontargets == 0) throw UndefinedMetricError("metric needs both target and nontarget scores");
  for (const auto& s : scores) {
    if (!std::isfinite(s.score)) throw NonFiniteError("non-finite score");
  }

  std::vector<ScoreRecord> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(), [](const ScoreRecord& a, const ScoreRecord& b) { return a.score < b.score; });

  const double t = static_cast<double>(targets);
  const double n = static_cast<double>(nontargets);
  std::vector<OperatingPoint> pts;
  pts.push_back({0.0, 1.0});
  std::size_t miss = 0;
  std::size_t fa = nontargets;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) {
      if (sorted[j].is_target) {
        ++miss;
      } else {
        --fa;
      }
      ++j;
    }
    pts.push_back({static_cast<double>(miss) / t, static_cast<double>(fa) / n});
    i = j;
  }
  return pts;
}

}  // namespace

double eer(std::span<const ScoreRecord> scores) {
  const auto pts = operating_points(scores);
  for (std::size_t k = 1; k < pts.size(); ++k) {
    const double d1 = pts[k].p_miss - pts[k].p_fa;
    if (d1 < 0.0) continue;
    const double d0 = pts[k - 1].p_miss - pts[k - 1].p_fa;
    const double alpha = d1 == d0 ? 1.0 : -d0 / (d1 - d0);
    const double rate = pts[k - 1].p_miss + alpha * (pts[k].p_miss - pts[k - 1].p_miss);
    return 100.0 * rate;
  }
  return 100.0 * pts.back().p_miss;  // unreachable: the last point has p_miss = 1, p_fa = 0
}

double min_dcf(std::span<const ScoreRecord> scores, double p_target, double c_miss, double c_fa) {
  if (!(p_target > 0.0 && p_target < 1.0)) throw ConfigError("p_target must lie in (0, 1)");
  if (!(c_miss > 0.0) || !(c_fa > 0.0)) throw ConfigError("detection costs must be positive");
  const auto pts = operating_points(scores);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : pts) best = std::min(best, c_miss * p.p_miss * p_target + c_fa * p.p_fa * (1.0 - p_target));
  return best / std::min(c_miss * p_target, c_fa * (1.0 - p_target));
}

DomainMatrix domain_matrix(const TrialList& list, std::span<const ScoreRecord> scores) {
  if (scores.size() != list.trials.size()) throw ShapeError("domain_matrix: scores do not match trials");
  DomainMatrix m;
  m.domains = list.domains;
  const std::size_t k = m.domains.size();
  std::map<int, std::size_t> pos;
  for (std::size_t i = 0; i < k; ++i) pos[m.domains[i]] = i;

  std::vector<std::vector<std::vector<ScoreRecord>>> cells(k, std::vector<std::vector<ScoreRecord>>(k + 1));
  for (std::size_t i = 0; i < list.trials.size(); ++i) {
    const auto& t = list.trials[i];
    auto r = pos.find(t.enroll_domain);
    auto c = pos.find(t.test_domain);
    if (r == pos.end() || c == pos.end()) continue;
    cells[r->second][c->second].push_back(scores[i]);
    cells[r->second][k].push_back(scores[i]);
  }
  m.eer.assign(k, std::vector<std::optional<double>>(k + 1));
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t c = 0; c <= k; ++c) {
      const auto& cell = cells[r][c];
      const bool has_target = std::any_of(cell.begin(), cell.end(), [](const ScoreRecord& s) { return s.is_target; });
      const bool has_non = std::any_of(cell.begin(), cell.end(), [](const ScoreRecord& s) { return !s.is_target; });
      if (has_target && has_non) m.eer[r][c] = eer(cell);
    }
  }
  return m;
}

std::vector<ProjectedPoint> project_2d(std::span<const Vector> embeddings, std::span<const int> speakers,
                                       std::span<const int> domains) {
  const std::size_t n = embeddings.size();
  if (n < 3) throw InsufficientSamplesError("project_2d needs at least 3 embeddings");
  if (speakers.size() != n || domains.size() != n) throw ShapeError("project_2d: label arrays differ in length");
  const std::size_t d = embeddings.front().size();

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    if (embeddings[i].size() != d) throw ShapeError("project_2d: ragged embeddings");
    for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = embeddings[i][j];
  }
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);

  const auto dd = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd axes = Eigen::MatrixXd::Zero(dd, 2);
  for (Eigen::Index c = 0; c < std::min<Eigen::Index>(2, dd); ++c) {
    Eigen::VectorXd v = solver.eigenvectors().col(dd - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    axes.col(c) = v;
  }
  const Eigen::MatrixXd proj = x * axes;

  std::vector<ProjectedPoint> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out[i] = {proj(r, 0), proj(r, 1), speakers[i], domains[i]};
  }
  return out;
}

PooledMetrics pooled_metrics(std::span<const ScoreRecord> scores) {
  PooledMetrics m;
  m.eer_percent = eer(scores);
  m.min_dcf = min_dcf(scores);
  for (const auto& s : scores) (s.is_target ? m.targets : m.nontargets) += 1;
  return m;
}

void write_metrics_csv(std::ostream& out, const PooledMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "eer_percent,min_dcf,targets,nontargets\n%.10f,%.10f,%zu,%zu\n", m.eer_percent,
                m.min_dcf, m.targets, m.nontargets);
  out << buf;
}

void write_matrix_csv(std::ostream& out, const DomainMatrix& m, std::span<const std::string> domain_names) {
  auto name = [&](int d) {
    return d >= 0 && static_cast<std::size_t>(d) < domain_names.size() ? domain_names[static_cast<std::size_t>(d)]
                                                                         : "domain" + std::to_string(d);
  };
  out << "enroll";
  for (int d : m.domains) out << ',' << name(d);
  out << ",all\n";
  char buf[32];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << name(m.domains[r]);
    for (const auto& cell : m.eer[r]) {
      if (cell) {
        std::snprintf(buf, sizeof buf, "%.6f", *cell);
        out << ',' << buf;
      } else {
        out << ",NA";
      }
    }
    out << '\n';
  }
}

void write_projection_csv(std::ostream& out, std::span<const ProjectedPoint> points) {
  out << "x,y,speaker,domain\n";
  char buf[96];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.10g,%.10g,%d,%d\n", p.x, p.y, p.speaker_id, p.domain_id);
    out << buf;
  }
}

void write_scores(std::ostream& out, const TrialList& list, std::span<const ScoreRecord> scores) {
  char buf[32];
  for (std::size_t i = 0; i < list.trials.size(); ++i) {
    const auto& t = list.trials[i];
    std::snprintf(buf, sizeof buf, "%.10f", scores[i].score);
    out << list.enrolls[t.enroll].id << ' ' << list.tests[t.test].id << ' ' << buf << ' '
        << (t.is_target ? "target" : "nontarget") << '\n';
  }
}

}  // namespace mdssl
