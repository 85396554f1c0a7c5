#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdssl/data.hpp"
#include "mdssl/encoder.hpp"

namespace mdssl {

// pooled: every domain of the eval split. matrix: the top_domains most
// populated domains only (by speaker count, then utterance count).
enum class TrialMode { pooled, matrix };

struct TrialConfig {
  std::size_t enroll_frames = 80;
  std::size_t top_domains = 6;
};

struct EnrollModel {
  std::string id;
  int speaker_id = -1;
  int domain_id = -1;
  Segment segment;
};

struct TestItem {
  std::string id;
  int speaker_id = -1;
  int domain_id = -1;
  Segment segment;
};

struct Trial {
  std::size_t enroll = 0;  // index into TrialList::enrolls
  std::size_t test = 0;    // index into TrialList::tests
  bool is_target = false;
  int enroll_domain = -1;
  int test_domain = -1;
};

struct TrialList {
  std::vector<int> domains;
  std::vector<EnrollModel> enrolls;
  std::vector<TestItem> tests;
  std::vector<Trial> trials;
  std::size_t skipped_cells = 0;  // speaker-domain cells too short to enroll

  std::size_t num_targets() const;
};

/// Domains ranked by distinct speakers, then utterances, then id.
std::vector<int> rank_domains(std::span<const Utterance> utts);

/// Per speaker and domain, leading utterances are spliced into an enrollment
/// segment of at least enroll_frames; the rest become test utterances. Every
/// enrollment is crossed with every test.
TrialList build_trials(std::span<const Utterance> eval_utts, const TrialConfig& cfg, TrialMode mode);

void write_trials(std::ostream& out, const TrialList& list);

struct ScoreRecord {
  double score = 0.0;
  bool is_target = false;
};

struct ScoredTrials {
  std::vector<Vector> enroll_embeddings;
  std::vector<Vector> test_embeddings;
  std::vector<ScoreRecord> scores;  // parallel to TrialList::trials
};

ScoredTrials score_trials(const EncoderParams& params, const TrialList& list);

/// Equal error rate in percent. Accept when score >= threshold; the rate curves
/// are evaluated at every distinct score and linearly interpolated at the
/// crossing. Throws UndefinedMetricError without both classes.
double eer(std::span<const ScoreRecord> scores);

/// Minimum normalized detection cost over all thresholds.
double min_dcf(std::span<const ScoreRecord> scores, double p_target = 0.05, double c_miss = 1.0, double c_fa = 1.0);

struct DomainMatrix {
  std::vector<int> domains;
  std::vector<std::vector<std::optional<double>>> eer;  // K rows x (K + 1) cols, last col pooled

  std::size_t rows() const { return domains.size(); }
};

DomainMatrix domain_matrix(const TrialList& list, std::span<const ScoreRecord> scores);

struct ProjectedPoint {
  double x = 0.0;
  double y = 0.0;
  int speaker_id = -1;
  int domain_id = -1;
};

/// Top two principal components of the mean-centered embeddings. Each axis is
/// signed so that its largest-magnitude loading is positive.
std::vector<ProjectedPoint> project_2d(std::span<const Vector> embeddings, std::span<const int> speakers,
                                       std::span<const int> domains);

struct PooledMetrics {
  double eer_percent = 0.0;
  double min_dcf = 0.0;
  std::size_t targets = 0;
  std::size_t nontargets = 0;
};

PooledMetrics pooled_metrics(std::span<const ScoreRecord> scores);

void write_metrics_csv(std::ostream& out, const PooledMetrics& m);
void write_matrix_csv(std::ostream& out, const DomainMatrix& m, std::span<const std::string> domain_names);
void write_projection_csv(std::ostream& out, std::span<const ProjectedPoint> points);
void write_scores(std::ostream& out, const TrialList& list, std::span<const ScoreRecord> scores);

}  // namespace mdssl
