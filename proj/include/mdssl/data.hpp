#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mdssl/encoder.hpp"
#include "mdssl/numerics.hpp"

namespace mdssl {

/// Parameters of the synthetic multi-domain speaker corpus.
///
/// Each speaker owns a latent vector s ~ N(0, speaker_scale^2 I). Each domain g
/// owns a shift mu_g ~ N(0, domain_shift_scale^2 I) and a mixing matrix
/// A_g = I + domain_transform_scale * G with standard normal G. A frame of
/// speaker s recorded in domain g is A_g s + mu_g + noise_scale * eps.
struct CorpusSpec {
  int num_speakers = 50;
  int num_domains = 6;
  int domains_per_speaker = 6;
  int utterances_per_speaker_per_domain = 10;
  int min_frames = 10;
  int max_frames = 40;
  int feature_dim = 8;
  double speaker_scale = 1.0;
  double domain_shift_scale = 1.0;
  double domain_transform_scale = 0.3;
  double noise_scale = 1.0;
  int num_eval_speakers = 20;
  std::uint64_t seed = 1234;

  friend bool operator==(const CorpusSpec&, const CorpusSpec&) = default;
};

/// Throws ConfigError naming the offending field.
void validate(const CorpusSpec& spec);

struct Utterance {
  int id = -1;
  int speaker_id = -1;
  int domain_id = -1;
  Matrix frames;  // one row per frame

  std::size_t length() const { return frames.rows(); }
  friend bool operator==(const Utterance&, const Utterance&) = default;
};

enum class Split { dev, eval };

struct Corpus {
  CorpusSpec spec;
  std::vector<std::string> domain_names;
  std::vector<Split> speaker_split;  // indexed by speaker id
  std::vector<Utterance> utterances;

  Split split_of(int speaker) const { return speaker_split.at(static_cast<std::size_t>(speaker)); }
  std::vector<Utterance> select(Split split) const;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

Corpus generate(const CorpusSpec& spec);

/// Splices utterances shorter than min_frames with later ones of the same
/// speaker and domain, greedily in input order, emitting each group as soon as
/// it reaches min_frames. Groups still short at the end are dropped. Long
/// utterances pass through unchanged. A spliced utterance keeps the id of its
/// first piece.
std::vector<Utterance> combine_short(std::span<const Utterance> utts, std::size_t min_frames);

/// Two contiguous, non-overlapping spans of u, each at least min_len frames.
/// Throws TooShortError when u has fewer than 2 * min_len frames.
std::pair<Segment, Segment> sample_views(const Utterance& u, std::size_t min_len, Rng& rng);

struct GainRange {
  double lo = 1.0;
  double hi = 1.0;
};

/// One random gain for the whole segment, then i.i.d. N(0, noise_scale^2) per value.
Segment augment(const Segment& s, GainRange gain, double noise_scale, Rng& rng);

Segment whole_segment(const Utterance& u);

// Structured-text corpus file: a header holding the generating spec, then one
// record per utterance. Numbers are written with 17 significant digits.
void save_corpus(std::ostream& out, const Corpus& c);
Corpus load_corpus(std::istream& in);
void save_corpus(const std::string& path, const Corpus& c);
Corpus load_corpus(const std::string& path);

/// Reads only the header of a corpus file and returns its spec.
CorpusSpec read_corpus_header(const std::string& path);

}  // namespace mdssl
