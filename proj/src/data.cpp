#include "mdssl/data.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "mdssl/config_io.hpp"
#include "mdssl/errors.hpp"

namespace mdssl {

namespace {

constexpr const char* kCorpusMagic = "mdssl-corpus";
constexpr int kCorpusVersion = 1;

void require(bool ok, const char* field, const std::string& why) {
  if (!ok) throw ConfigError(std::string("corpus spec field '") + field + "': " + why);
}

Vector gaussian_vector(std::size_t n, double scale, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (double& x : v) x = scale * normal(rng);
  return v;
}

}  // namespace

void validate(const CorpusSpec& s) {
  require(s.num_speakers >= 1, "num_speakers", "must be >= 1");
  require(s.num_domains >= 1, "num_domains", "must be >= 1");
  require(s.domains_per_speaker >= 1 && s.domains_per_speaker <= s.num_domains, "domains_per_speaker",
          "must lie in [1, num_domains]");
  require(s.utterances_per_speaker_per_domain >= 1, "utterances_per_speaker_per_domain", "must be >= 1");
  require(s.min_frames >= 1, "min_frames", "must be >= 1");
  require(s.max_frames >= s.min_frames, "max_frames", "must be >= min_frames");
  require(s.feature_dim >= 1, "feature_dim", "must be >= 1");
  require(s.speaker_scale >= 0.0, "speaker_scale", "must be >= 0");
  require(s.domain_shift_scale >= 0.0, "domain_shift_scale", "must be >= 0");
  require(s.domain_transform_scale >= 0.0, "domain_transform_scale", "must be >= 0");
  require(s.noise_scale >= 0.0, "noise_scale", "must be >= 0");
  require(s.num_eval_speakers >= 0 && s.num_eval_speakers < s.num_speakers, "num_eval_speakers",
          "must lie in [0, num_speakers)");
}

std::vector<Utterance> Corpus::select(Split split) const {
  std::vector<Utterance> out;
  for (const auto& u : utterances)
    if (split_of(u.speaker_id) == split) out.push_back(u);
  return out;
}

Corpus generate(const CorpusSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  const auto dim = static_cast<std::size_t>(spec.feature_dim);

  struct DomainModel {
    Vector shift;
    Matrix mix;
  };
  std::vector<DomainModel> domains;
  for (int g = 0; g < spec.num_domains; ++g) {
    DomainModel dm{gaussian_vector(dim, spec.domain_shift_scale, rng), Matrix::identity(dim)};
    Vector noise = gaussian_vector(dim * dim, 1.0, rng);
    auto mv = dm.mix.values();
    for (std::size_t i = 0; i < mv.size(); ++i) mv[i] += spec.domain_transform_scale * noise[i];
    domains.push_back(std::move(dm));
  }

  std::vector<Vector> speakers;
  for (int s = 0; s < spec.num_speakers; ++s) speakers.push_back(gaussian_vector(dim, spec.speaker_scale, rng));

  Corpus corpus;
  corpus.spec = spec;
  for (int g = 0; g < spec.num_domains; ++g) corpus.domain_names.push_back("domain" + std::to_string(g));
  const int num_dev = spec.num_speakers - spec.num_eval_speakers;
  for (int s = 0; s < spec.num_speakers; ++s) corpus.speaker_split.push_back(s < num_dev ? Split::dev : Split::eval);

  std::uniform_int_distribution<int> length_dist(spec.min_frames, spec.max_frames);
  std::normal_distribution<double> normal(0.0, 1.0);
  int next_id = 0;
  for (int s = 0; s < spec.num_speakers; ++s) {
    std::vector<int> domain_order(static_cast<std::size_t>(spec.num_domains));
    for (int g = 0; g < spec.num_domains; ++g) domain_order[static_cast<std::size_t>(g)] = g;
    if (spec.domains_per_speaker < spec.num_domains) {
      std::shuffle(domain_order.begin(), domain_order.end(), rng);
      domain_order.resize(static_cast<std::size_t>(spec.domains_per_speaker));
      std::sort(domain_order.begin(), domain_order.end());
    }
    for (int g : domain_order) {
      const auto& dm = domains[static_cast<std::size_t>(g)];
      Vector clean(dim);
      for (std::size_t i = 0; i < dim; ++i) clean[i] = dot(dm.mix.row(i), speakers[static_cast<std::size_t>(s)]) + dm.shift[i];
      for (int k = 0; k < spec.utterances_per_speaker_per_domain; ++k) {
        const auto len = static_cast<std::size_t>(length_dist(rng));
        Utterance u{next_id++, s, g, Matrix(len, dim)};
        for (std::size_t t = 0; t < len; ++t) {
          auto row = u.frames.row(t);
          for (std::size_t i = 0; i < dim; ++i) row[i] = clean[i] + spec.noise_scale * normal(rng);
        }
        corpus.utterances.push_back(std::move(u));
      }
    }
  }
  return corpus;
}

std::vector<Utterance> combine_short(std::span<const Utterance> utts, std::size_t min_frames) {
  struct Pending {
    std::vector<const Utterance*> pieces;
    std::size_t frames = 0;
  };
  std::map<std::pair<int, int>, Pending> pending;
  std::vector<Utterance> out;
  for (const auto& u : utts) {
    if (u.length() >= min_frames) {
      out.push_back(u);
      continue;
    }
    auto& p = pending[{u.speaker_id, u.domain_id}];
    p.pieces.push_back(&u);
    p.frames += u.length();
    if (p.frames < min_frames) continue;

    const Utterance& first = *p.pieces.front();
    Utterance joined{first.id, first.speaker_id, first.domain_id, Matrix(p.frames, first.frames.cols())};
    std::size_t r = 0;
    for (const Utterance* piece : p.pieces) {
      if (piece->frames.cols() != first.frames.cols()) throw ShapeError("combine_short: frame dims differ");
      for (std::size_t t = 0; t < piece->length(); ++t, ++r) {
        auto src = piece->frames.row(t);
        std::copy(src.begin(), src.end(), joined.frames.row(r).begin());
      }
    }
    out.push_back(std::move(joined));
    p = Pending{};
  }
  return out;
}

namespace {

Segment cut(const Utterance& u, std::size_t begin, std::size_t end) {
  Segment s{Matrix(end - begin, u.frames.cols()), u.id, u.domain_id, begin};
  for (std::size_t t = begin; t < end; ++t) {
    auto src = u.frames.row(t);
    std::copy(src.begin(), src.end(), s.frames.row(t - begin).begin());
  }
  return s;
}

}  // namespace

std::pair<Segment, Segment> sample_views(const Utterance& u, std::size_t min_len, Rng& rng) {
  if (min_len == 0) throw ConfigError("sample_views: min_len must be >= 1");
  const std::size_t n = u.length();
  if (n < 2 * min_len) {
    throw TooShortError("utterance " + std::to_string(u.id) + " has " + std::to_string(n) +
                        " frames, need " + std::to_string(2 * min_len));
  }
  using Dist = std::uniform_int_distribution<std::size_t>;
  const std::size_t split = Dist(min_len, n - min_len)(rng);
  const std::size_t begin = Dist(0, split - min_len)(rng);
  const std::size_t end = Dist(split + min_len, n)(rng);
  Segment left = cut(u, begin, split);
  Segment right = cut(u, split, end);
  if (std::bernoulli_distribution(0.5)(rng)) return {std::move(right), std::move(left)};
  return {std::move(left), std::move(right)};
}

Segment augment(const Segment& s, GainRange gain, double noise_scale, Rng& rng) {
  if (!(gain.lo > 0.0) || gain.hi < gain.lo) throw ConfigError("augment: gain range must satisfy 0 < lo <= hi");
  if (noise_scale < 0.0) throw ConfigError("augment: noise_scale must be >= 0");
  const double g = gain.lo == gain.hi ? gain.lo : std::uniform_real_distribution<double>(gain.lo, gain.hi)(rng);
  Segment out = s;
  for (double& v : out.frames.values()) v *= g;
  if (noise_scale > 0.0) {
    std::normal_distribution<double> normal(0.0, noise_scale);
    for (double& v : out.frames.values()) v += normal(rng);
  }
  return out;
}

Segment whole_segment(const Utterance& u) { return Segment{u.frames, u.id, u.domain_id, 0}; }

void save_corpus(std::ostream& out, const Corpus& c) {
  out << kCorpusMagic << ' ' << kCorpusVersion << '\n';
  out << "spec " << to_json(c.spec).dump() << '\n';
  out << "domains";
  for (const auto& name : c.domain_names) out << ' ' << name;
  out << '\n';
  out << "utterances " << c.utterances.size() << '\n';
  char buf[32];
  for (const auto& u : c.utterances) {
    out << "u " << u.id << ' ' << u.speaker_id << ' ' << u.domain_id << ' ' << u.frames.rows() << ' '
        << u.frames.cols();
    for (double v : u.frames.values()) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ' ' << buf;
    }
    out << '\n';
  }
}

namespace {

CorpusSpec parse_header(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kCorpusMagic) throw FormatError("not a corpus file");
  if (version != kCorpusVersion) throw FormatError("unsupported corpus version " + std::to_string(version));
  std::string key;
  if (!(in >> key) || key != "spec") throw FormatError("corpus: missing spec header");
  std::string line;
  std::getline(in, line);
  try {
    return corpus_spec_from_json(nlohmann::json::parse(line));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corpus: bad spec header: ") + e.what());
  }
}

}  // namespace

Corpus load_corpus(std::istream& in) {
  Corpus c;
  c.spec = parse_header(in);
  std::string key;
  std::string line;
  if (!(in >> key) || key != "domains") throw FormatError("corpus: missing domains line");
  std::getline(in, line);
  std::istringstream names(line);
  for (std::string n; names >> n;) c.domain_names.push_back(n);
  std::size_t count = 0;
  if (!(in >> key >> count) || key != "utterances") throw FormatError("corpus: missing utterance count");
  c.utterances.reserve(count);
  std::string tok;
  for (std::size_t k = 0; k < count; ++k) {
    Utterance u;
    std::size_t rows = 0, cols = 0;
    if (!(in >> key >> u.id >> u.speaker_id >> u.domain_id >> rows >> cols) || key != "u") {
      throw FormatError("corpus: bad utterance record " + std::to_string(k));
    }
    u.frames = Matrix(rows, cols);
    for (double& v : u.frames.values()) {
      if (!(in >> tok)) throw FormatError("corpus: truncated utterance record " + std::to_string(k));
      char* end = nullptr;
      v = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size()) throw FormatError("corpus: bad number '" + tok + "'");
    }
    c.utterances.push_back(std::move(u));
  }
  const int num_dev = c.spec.num_speakers - c.spec.num_eval_speakers;
  for (int s = 0; s < c.spec.num_speakers; ++s) c.speaker_split.push_back(s < num_dev ? Split::dev : Split::eval);
  return c;
}

void save_corpus(const std::string& path, const Corpus& c) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus " + path);
  save_corpus(out, c);
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus " + path);
  return load_corpus(in);
}

CorpusSpec read_corpus_header(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus " + path);
  return parse_header(in);
}

}  // namespace mdssl
