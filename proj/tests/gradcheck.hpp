#pragma once

// Central finite-difference check of the GCN backward pass, shared by the unit
// tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "rdgcn/gcn.hpp"
#include "rdgcn/matrix.hpp"

namespace oracle {

using rdgcn::Matrix;
namespace gcn = rdgcn::gcn;
using gcn::GCNModel;
using gcn::Mode;

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (double& v : m.data()) v = u(rng);
  return m;
}

/// Symmetric with entries in [0, 1/n).
inline Matrix random_propagation(std::mt19937_64& rng, std::size_t n) {
  Matrix p(n, n);
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) p(i, j) = p(j, i) = u(rng) / static_cast<double>(n);
  }
  return p;
}

/// Largest relative error between analytic and numeric gradients over every
/// weight of a 3-node model with `layers` layers and frozen dropout masks.
inline double max_relative_gradient_error(std::uint64_t seed, std::size_t layers, double dropout) {
  std::mt19937_64 rng(seed);
  const std::size_t n = 3;
  const auto p = random_propagation(rng, n);
  const auto x = random_matrix(rng, n, 3, 0, 3);
  std::vector<std::size_t> dims{3};
  for (std::size_t l = 1; l < layers; ++l) dims.push_back(4);
  dims.push_back(2);
  auto model = GCNModel::create(dims, dropout, seed);
  const std::vector<int> labels{1, 0, 1};
  const std::vector<std::size_t> mask{0, 1, 2};
  const double wd = 5e-4;

  const auto cache = gcn::gcn_forward(p, x, model, Mode::Train, seed + 100);
  const auto grads = gcn::gcn_backward(cache, p, labels, mask, model, wd);
  const auto frozen = cache.masks;

  double worst = 0;
  const double eps = 1e-5;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    for (std::size_t k = 0; k < model.weights[l].size(); ++k) {
      double& w = model.weights[l].data()[k];
      const double saved = w;
      w = saved + eps;
      const double up = gcn::nll_loss(gcn::gcn_forward_with_masks(p, x, model, frozen).log_probs, labels, mask, model, wd);
      w = saved - eps;
      const double down = gcn::nll_loss(gcn::gcn_forward_with_masks(p, x, model, frozen).log_probs, labels, mask, model, wd);
      w = saved;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = grads[l].data()[k];
      const double denom = std::max(std::abs(numeric) + std::abs(analytic), 1e-7);
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return worst;
}

}  // namespace oracle
