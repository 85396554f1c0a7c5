#include "mdssl/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "mdssl/errors.hpp"

namespace mdssl {

namespace {

constexpr const char* kCheckpointMagic = "mdssl-encoder";
constexpr int kCheckpointVersion = 1;

template <typename F>
void for_each_array(EncoderParams& p, F&& f) {
  f(p.w1.values());
  f(std::span<double>(p.b1));
  f(p.w2.values());
  f(std::span<double>(p.b2));
}

template <typename F>
void for_each_array(const EncoderParams& p, F&& f) {
  f(p.w1.values());
  f(std::span<const double>(p.b1));
  f(p.w2.values());
  f(std::span<const double>(p.b2));
}

double activate(Activation act, double z) { return act == Activation::tanh ? std::tanh(z) : z; }

// Derivative expressed through the activation output.
double activate_deriv(Activation act, double a) { return act == Activation::tanh ? 1.0 - a * a : 1.0; }

void check_segment(const EncoderParams& p, const Segment& s) {
  if (s.frames.rows() == 0) throw ShapeError("encode: empty segment");
  if (s.frames.cols() != p.dims.input) {
    throw ShapeError("encode: frame dim " + std::to_string(s.frames.cols()) + " != encoder input " +
                     std::to_string(p.dims.input));
  }
}

// Hidden activations per frame (rows) and their mean.
struct HiddenPass {
  Matrix act;
  Vector pooled;
};

HiddenPass hidden_pass(const EncoderParams& p, const Segment& s) {
  const std::size_t t_count = s.frames.rows();
  const std::size_t hid = p.dims.hidden;
  HiddenPass hp{Matrix(t_count, hid), Vector(hid, 0.0)};
  for (std::size_t t = 0; t < t_count; ++t) {
    auto x = s.frames.row(t);
    auto a = hp.act.row(t);
    for (std::size_t h = 0; h < hid; ++h) {
      const double z = dot(p.w1.row(h), x) + p.b1[h];
      a[h] = activate(p.activation, z);
      hp.pooled[h] += a[h];
    }
  }
  for (double& v : hp.pooled) v /= static_cast<double>(t_count);
  return hp;
}

std::string activation_name(Activation a) { return a == Activation::tanh ? "tanh" : "identity"; }

}  // namespace

EncoderParams EncoderParams::zeros(const EncoderDims& dims, Activation act) {
  EncoderParams p;
  p.dims = dims;
  p.activation = act;
  p.w1 = Matrix(dims.hidden, dims.input);
  p.b1.assign(dims.hidden, 0.0);
  p.w2 = Matrix(dims.embedding, dims.hidden);
  p.b2.assign(dims.embedding, 0.0);
  return p;
}

std::size_t EncoderParams::size() const {
  return dims.hidden * dims.input + dims.hidden + dims.embedding * dims.hidden + dims.embedding;
}

Vector EncoderParams::flatten() const {
  Vector flat;
  flat.reserve(size());
  for_each_array(*this, [&](std::span<const double> a) { flat.insert(flat.end(), a.begin(), a.end()); });
  return flat;
}

void EncoderParams::assign(std::span<const double> flat) {
  if (flat.size() != size()) throw ShapeError("EncoderParams::assign: wrong parameter count");
  std::size_t offset = 0;
  for_each_array(*this, [&](std::span<double> a) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), a.size(), a.begin());
    offset += a.size();
  });
}

EncoderParams init_params(const EncoderDims& dims, Rng& rng, Activation act) {
  EncoderParams p = EncoderParams::zeros(dims, act);
  const double r1 = std::sqrt(6.0 / static_cast<double>(dims.input + dims.hidden));
  const double r2 = std::sqrt(6.0 / static_cast<double>(dims.hidden + dims.embedding));
  std::uniform_real_distribution<double> u1(-r1, r1);
  std::uniform_real_distribution<double> u2(-r2, r2);
  for (double& w : p.w1.values()) w = u1(rng);
  for (double& w : p.w2.values()) w = u2(rng);
  return p;
}

void validate(const EncoderParams& p) {
  const auto& d = p.dims;
  if (d.input == 0 || d.hidden == 0 || d.embedding == 0) throw ShapeError("encoder dims must be positive");
  if (p.w1.rows() != d.hidden || p.w1.cols() != d.input || p.b1.size() != d.hidden ||
      p.w2.rows() != d.embedding || p.w2.cols() != d.hidden || p.b2.size() != d.embedding) {
    throw ShapeError("encoder parameter shapes inconsistent with dims");
  }
}

Vector encode(const EncoderParams& p, const Segment& s) {
  check_segment(p, s);
  const HiddenPass hp = hidden_pass(p, s);
  Vector e(p.dims.embedding);
  for (std::size_t k = 0; k < e.size(); ++k) e[k] = dot(p.w2.row(k), hp.pooled) + p.b2[k];
  return e;
}

void accumulate_encode_grad(const EncoderParams& p, const Segment& s, std::span<const double> upstream,
                            EncoderGrad& grad) {
  check_segment(p, s);
  if (upstream.size() != p.dims.embedding) throw ShapeError("encode_grad: upstream length != embedding dim");
  const HiddenPass hp = hidden_pass(p, s);
  const std::size_t hid = p.dims.hidden;

  Vector d_pooled(hid, 0.0);
  for (std::size_t k = 0; k < p.dims.embedding; ++k) {
    const double g = upstream[k];
    grad.b2[k] += g;
    auto gw2 = grad.w2.row(k);
    auto w2 = p.w2.row(k);
    for (std::size_t h = 0; h < hid; ++h) {
      gw2[h] += g * hp.pooled[h];
      d_pooled[h] += g * w2[h];
    }
  }

  const double inv_t = 1.0 / static_cast<double>(s.frames.rows());
  for (std::size_t t = 0; t < s.frames.rows(); ++t) {
    auto x = s.frames.row(t);
    auto a = hp.act.row(t);
    for (std::size_t h = 0; h < hid; ++h) {
      const double dz = d_pooled[h] * inv_t * activate_deriv(p.activation, a[h]);
      if (dz == 0.0) continue;
      grad.b1[h] += dz;
      auto gw1 = grad.w1.row(h);
      for (std::size_t i = 0; i < x.size(); ++i) gw1[i] += dz * x[i];
    }
  }
}

EncoderGrad encode_grad(const EncoderParams& p, const Segment& s, std::span<const double> upstream) {
  EncoderGrad g = EncoderParams::zeros(p.dims, p.activation);
  accumulate_encode_grad(p, s, upstream, g);
  return g;
}

void momentum_update(EncoderParams& theta_k, const EncoderParams& theta, double m) {
  if (!(m >= 0.0 && m < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (theta_k.dims != theta.dims) throw ShapeError("momentum_update: parameter shapes differ");
  Vector src = theta.flatten();
  std::size_t offset = 0;
  for_each_array(theta_k, [&](std::span<double> a) {
    for (double& v : a) v = m * v + (1.0 - m) * src[offset++];
  });
}

double max_abs_diff(const EncoderParams& a, const EncoderParams& b) {
  if (a.dims != b.dims) throw ShapeError("max_abs_diff: parameter shapes differ");
  const Vector fa = a.flatten();
  const Vector fb = b.flatten();
  double m = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) m = std::max(m, std::abs(fa[i] - fb[i]));
  return m;
}

void save_checkpoint(std::ostream& out, const EncoderParams& p) {
  validate(p);
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "activation " << activation_name(p.activation) << '\n';
  out << "dims " << p.dims.input << ' ' << p.dims.hidden << ' ' << p.dims.embedding << '\n';
  const char* names[] = {"w1", "b1", "w2", "b2"};
  int idx = 0;
  char buf[32];
  for_each_array(p, [&](std::span<const double> a) {
    out << names[idx++] << ' ' << a.size();
    for (double v : a) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ' ' << buf;
    }
    out << '\n';
  });
}

EncoderParams load_checkpoint(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kCheckpointMagic) throw FormatError("not an encoder checkpoint");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  std::string key, act;
  if (!(in >> key >> act) || key != "activation") throw FormatError("checkpoint: missing activation");
  Activation activation;
  if (act == "tanh") {
    activation = Activation::tanh;
  } else if (act == "identity") {
    activation = Activation::identity;
  } else {
    throw FormatError("checkpoint: unknown activation '" + act + "'");
  }
  EncoderDims dims;
  if (!(in >> key >> dims.input >> dims.hidden >> dims.embedding) || key != "dims") {
    throw FormatError("checkpoint: missing dims");
  }
  EncoderParams p = EncoderParams::zeros(dims, activation);
  const char* names[] = {"w1", "b1", "w2", "b2"};
  int idx = 0;
  for_each_array(p, [&](std::span<double> a) {
    std::size_t count = 0;
    if (!(in >> key >> count) || key != names[idx] || count != a.size()) {
      throw FormatError(std::string("checkpoint: bad block header for ") + names[idx]);
    }
    for (double& v : a) {
      std::string tok;
      if (!(in >> tok)) throw FormatError(std::string("checkpoint: truncated block ") + names[idx]);
      char* end = nullptr;
      v = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size()) throw FormatError("checkpoint: bad number '" + tok + "'");
    }
    ++idx;
  });
  require_finite(p.flatten(), "checkpoint");
  return p;
}

void save_checkpoint(const std::string& path, const EncoderParams& p) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path);
  save_checkpoint(out, p);
}

EncoderParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint " + path);
  return load_checkpoint(in);
}

}  // namespace mdssl
