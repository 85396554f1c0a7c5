#pragma once

#include <cstddef>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mdssl/numerics.hpp"

namespace mdssl {

using Rng = std::mt19937_64;

enum class Activation { tanh, identity };

struct EncoderDims {
  std::size_t input = 8;
  std::size_t hidden = 32;
  std::size_t embedding = 16;

  friend bool operator==(const EncoderDims&, const EncoderDims&) = default;
};

/// A contiguous run of frames cut from one utterance. Frames are rows.
struct Segment {
  Matrix frames;
  int utterance_id = -1;
  int domain_id = -1;
  std::size_t offset = 0;  // first frame within the source utterance

  std::size_t length() const { return frames.rows(); }
};

/// Two-layer frame MLP with mean pooling:
///   h_t = act(W1 x_t + b1),  e = W2 mean_t(h_t) + b2.
/// The same struct doubles as the gradient container.
struct EncoderParams {
  EncoderDims dims;
  Activation activation = Activation::tanh;
  Matrix w1;  // hidden x input
  Vector b1;  // hidden
  Matrix w2;  // embedding x hidden
  Vector b2;  // embedding

  static EncoderParams zeros(const EncoderDims& dims, Activation act = Activation::tanh);

  std::size_t size() const;
  Vector flatten() const;
  void assign(std::span<const double> flat);

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

using EncoderGrad = EncoderParams;

/// Glorot-uniform weights, zero biases.
EncoderParams init_params(const EncoderDims& dims, Rng& rng, Activation act = Activation::tanh);

/// Throws ShapeError if the weight shapes disagree with dims.
void validate(const EncoderParams& p);

Vector encode(const EncoderParams& p, const Segment& s);

/// Gradient of <upstream, encode(p, s)> w.r.t. every parameter.
EncoderGrad encode_grad(const EncoderParams& p, const Segment& s, std::span<const double> upstream);

/// grad += d<upstream, encode(p, s)>/dp. grad must already be shaped like p.
void accumulate_encode_grad(const EncoderParams& p, const Segment& s, std::span<const double> upstream,
                            EncoderGrad& grad);

/// theta_k <- m * theta_k + (1 - m) * theta.
void momentum_update(EncoderParams& theta_k, const EncoderParams& theta, double m);

double max_abs_diff(const EncoderParams& a, const EncoderParams& b);

// Text checkpoint; values written with 17 significant digits so that
// save -> load round-trips bit-exactly.
void save_checkpoint(std::ostream& out, const EncoderParams& p);
EncoderParams load_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const EncoderParams& p);
EncoderParams load_checkpoint(const std::string& path);

}  // namespace mdssl
