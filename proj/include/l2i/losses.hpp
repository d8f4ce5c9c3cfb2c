// Copyright 2026 The l2ieval Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Amodal-mask alignment losses over per-instance attention maps.
//
// All kernels are deterministic: reductions run in index order (Eigen
// column-major traversal, instances in list order).

#pragma once

#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <istream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace l2i {

class LossError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename Scalar>
using Grid = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// H x W nonnegative attention map with at least one positive entry.
template <typename Scalar = double>
class AttentionMap {
 public:
  explicit AttentionMap(Grid<Scalar> values) : values_(std::move(values)) {
    if (values_.size() == 0) throw LossError("attention map is empty");
    if (!values_.allFinite()) throw LossError("attention map has non-finite values");
    if ((values_ < Scalar(0)).any()) throw LossError("attention map has negative values");
    if (!(values_ > Scalar(0)).any()) throw LossError("attention map is all zero");
  }

  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }
  const Grid<Scalar>& values() const { return values_; }

 private:
  Grid<Scalar> values_;
};

/// H x W binary mask; soft values are rejected.
template <typename Scalar = double>
class AmodalMask {
 public:
  explicit AmodalMask(Grid<Scalar> values) : values_(std::move(values)) {
    if (values_.size() == 0) throw LossError("mask is empty");
    if (!((values_ == Scalar(0)) || (values_ == Scalar(1))).all()) throw LossError("mask must be strictly binary");
  }

  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }
  const Grid<Scalar>& values() const { return values_; }

 private:
  Grid<Scalar> values_;
};

struct LossWeights {
  double lambda = 0.5;
  double beta = 1.0;

  static LossWeights creatilayout_am() { return {0.5, 1.0}; }
  static LossWeights eligen_am() { return {1.0, 1.0}; }
};

namespace detail {

template <typename A, typename B>
void check_same_shape(const A& a, const B& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw LossError("shape mismatch: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                    std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

template <typename Scalar>
void check_lists(std::span<const AttentionMap<Scalar>> maps, std::span<const AmodalMask<Scalar>> masks) {
  if (maps.empty()) throw LossError("no instances");
  if (maps.size() != masks.size()) throw LossError("attention map and mask counts differ");
  for (std::size_t i = 0; i < maps.size(); ++i) check_same_shape(maps[i], masks[i]);
}

}  // namespace detail

/// Mean over instances of the fraction of attention mass falling outside
/// the instance mask. Result lies in [0, 1].
template <typename Scalar>
Scalar token_loss(std::span<const AttentionMap<Scalar>> maps, std::span<const AmodalMask<Scalar>> masks) {
  detail::check_lists(maps, masks);
  Scalar acc(0);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const auto& a = maps[i].values();
    const Scalar inside = (a * masks[i].values()).sum();
    acc += Scalar(1) - inside / a.sum();
  }
  return acc / static_cast<Scalar>(maps.size());
}

/// d token_loss / d A^i_u = -(m_u * S - S_in) / (n * S^2).
template <typename Scalar>
std::vector<Grid<Scalar>> token_loss_grad(std::span<const AttentionMap<Scalar>> maps,
                                          std::span<const AmodalMask<Scalar>> masks) {
  detail::check_lists(maps, masks);
  const auto n = static_cast<Scalar>(maps.size());
  std::vector<Grid<Scalar>> grads;
  grads.reserve(maps.size());
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const auto& a = maps[i].values();
    const auto& m = masks[i].values();
    const Scalar total = a.sum();
    const Scalar inside = (a * m).sum();
    grads.push_back(-(m * total - inside) / (n * total * total));
  }
  return grads;
}

/// How raw attention is turned into per-pixel probabilities before the
/// cross-entropy term.
enum class ProbabilityMap {
  None,     // values are already probabilities
  MaxScale, // divide by the map maximum
  Softmax,  // softmax over all pixels
};

template <typename Scalar>
Grid<Scalar> to_probabilities(const AttentionMap<Scalar>& map, ProbabilityMap how) {
  const auto& a = map.values();
  switch (how) {
    case ProbabilityMap::None:
      return a;
    case ProbabilityMap::MaxScale:
      return a / a.maxCoeff();
    case ProbabilityMap::Softmax: {
      const Grid<Scalar> e = (a - a.maxCoeff()).exp();
      return e / e.sum();
    }
  }
  return a;
}

struct PixelLossOptions {
  double epsilon = 1e-6;
  ProbabilityMap probability = ProbabilityMap::MaxScale;
};

/// Per-pixel mean binary cross-entropy between probabilities `prob` and a
/// binary mask, with prob clamped to [eps, 1 - eps].
template <typename Scalar>
Scalar pixel_loss(const Grid<Scalar>& prob, const AmodalMask<Scalar>& mask, Scalar eps = Scalar(1e-6)) {
  detail::check_same_shape(prob, mask);
  if (!(eps > Scalar(0) && eps < Scalar(0.5))) throw LossError("epsilon must lie in (0, 0.5)");
  const Grid<Scalar> p = prob.max(eps).min(Scalar(1) - eps);
  const auto& m = mask.values();
  const Grid<Scalar> ce = -(m * p.log() + (Scalar(1) - m) * (Scalar(1) - p).log());
  return ce.sum() / static_cast<Scalar>(ce.size());
}

template <typename Scalar>
Scalar pixel_loss(const AttentionMap<Scalar>& map, const AmodalMask<Scalar>& mask, const PixelLossOptions& opts = {}) {
  return pixel_loss(to_probabilities(map, opts.probability), mask, static_cast<Scalar>(opts.epsilon));
}

/// Gradient of pixel_loss with respect to the probabilities; zero where the
/// clamp is active.
template <typename Scalar>
Grid<Scalar> pixel_loss_grad(const Grid<Scalar>& prob, const AmodalMask<Scalar>& mask, Scalar eps = Scalar(1e-6)) {
  detail::check_same_shape(prob, mask);
  const auto& m = mask.values();
  const auto n = static_cast<Scalar>(prob.size());
  Grid<Scalar> g = (-m / prob + (Scalar(1) - m) / (Scalar(1) - prob)) / n;
  const auto clamped = (prob < eps) || (prob > Scalar(1) - eps);
  return clamped.select(Grid<Scalar>::Zero(prob.rows(), prob.cols()), g);
}

struct LossBreakdown {
  double ldm;
  double token;
  double pixel;
  double total;
};

/// ldm + lambda * token + beta * pixel.
inline LossBreakdown compose_total(double ldm, double token, double pixel, const LossWeights& w) {
  if (!std::isfinite(w.lambda) || !std::isfinite(w.beta) || w.lambda < 0 || w.beta < 0) {
    throw LossError("loss weights must be finite and nonnegative");
  }
  return {ldm, token, pixel, ldm + w.lambda * token + w.beta * pixel};
}

/// Full objective: the pixel term is the per-instance pixel_loss averaged
/// over instances. `ldm` is taken as given.
template <typename Scalar>
LossBreakdown total_loss(double ldm, std::span<const AttentionMap<Scalar>> maps,
                         std::span<const AmodalMask<Scalar>> masks, const LossWeights& w,
                         const PixelLossOptions& opts = {}) {
  const Scalar token = token_loss(maps, masks);
  Scalar pixel(0);
  for (std::size_t i = 0; i < maps.size(); ++i) pixel += pixel_loss(maps[i], masks[i], opts);
  pixel /= static_cast<Scalar>(maps.size());
  return compose_total(ldm, static_cast<double>(token), static_cast<double>(pixel), w);
}

/// Elementwise mean of the per-token maps of one instance.
template <typename Scalar>
AttentionMap<Scalar> average_attention(std::span<const AttentionMap<Scalar>> token_maps) {
  if (token_maps.empty()) throw LossError("no token maps to average");
  Grid<Scalar> acc = token_maps.front().values();
  for (std::size_t k = 1; k < token_maps.size(); ++k) {
    detail::check_same_shape(token_maps.front(), token_maps[k]);
    acc += token_maps[k].values();
  }
  return AttentionMap<Scalar>(acc / static_cast<Scalar>(token_maps.size()));
}

enum class LossKind { Token, Pixel };

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

/// Compares analytic gradients with central differences at every
/// coordinate. For LossKind::Pixel the map values are used directly as
/// probabilities and must stay away from the clamp boundaries.
template <typename Scalar>
GradCheckResult finite_diff_check(LossKind kind, std::span<const AttentionMap<Scalar>> maps,
                                  std::span<const AmodalMask<Scalar>> masks, Scalar step = Scalar(1e-4),
                                  Scalar eps = Scalar(1e-6)) {
  detail::check_lists(maps, masks);
  GradCheckResult r;
  auto rel = [&](Scalar analytic, Scalar numeric) {
    const double e = std::abs(static_cast<double>(analytic - numeric)) / (std::abs(static_cast<double>(numeric)) + 1e-8);
    r.max_rel_error = std::max(r.max_rel_error, e);
    ++r.coordinates;
  };

  if (kind == LossKind::Token) {
    const auto grads = token_loss_grad(maps, masks);
    const auto n = static_cast<Scalar>(maps.size());
    // Only instance i changes when perturbing its map, so difference its term.
    for (std::size_t i = 0; i < maps.size(); ++i) {
      const auto& m = masks[i].values();
      for (Eigen::Index u = 0; u < maps[i].values().size(); ++u) {
        auto eval = [&](Scalar delta) {
          Grid<Scalar> v = maps[i].values();
          v(u) += delta;
          return (Scalar(1) - (v * m).sum() / v.sum()) / n;
        };
        const Scalar numeric = (eval(step) - eval(-step)) / (Scalar(2) * step);
        rel(grads[i](u), numeric);
      }
    }
    return r;
  }

  for (std::size_t i = 0; i < maps.size(); ++i) {
    const Grid<Scalar>& p = maps[i].values();
    const Grid<Scalar> g = pixel_loss_grad(p, masks[i], eps);
    for (Eigen::Index u = 0; u < p.size(); ++u) {
      Grid<Scalar> hi = p, lo = p;
      hi(u) += step;
      lo(u) -= step;
      const Scalar numeric = (pixel_loss(hi, masks[i], eps) - pixel_loss(lo, masks[i], eps)) / (Scalar(2) * step);
      rel(g(u), numeric);
    }
  }
  return r;
}

/// Fixture of maps and masks: a header line "H W count", then for each
/// instance H rows of W attention values followed by H rows of W mask bits.
struct LossFixture {
  std::vector<AttentionMap<double>> maps;
  std::vector<AmodalMask<double>> masks;
};

LossFixture read_loss_fixture(std::istream& in);
LossFixture read_loss_fixture_file(const std::string& path);
void write_loss_fixture(std::ostream& out, const LossFixture& f);

}  // namespace l2i
