#pragma once

// Test-side oracles, kept independent of the library implementations they
// check: central finite differences for gradients, a plain complex-DFT, an
// exhaustive CTC path enumeration, and a textbook full-matrix edit
// distance.

#include <cmath>
#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "wavebank/rng.hpp"
#include "wavebank/tensor.hpp"

namespace oracles {

using wavebank::Rng;
using wavebank::Shape;
using wavebank::Tensor;

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// |a-b| / max(|a|,|b|,1): relative for O(1)+ magnitudes, absolute below.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

// Loss as a function of a set of input tensors; the callee builds a fresh
// graph per call.
using LossFn = std::function<double(const std::vector<Tensor>&)>;

// Central finite difference d loss / d inputs[which][flat].
inline double fd_grad(const LossFn& f, std::vector<Tensor> inputs, size_t which, int64_t flat,
                      double h = 1e-5) {
  const double x0 = inputs[which][flat];
  inputs[which][flat] = x0 + h;
  const double up = f(inputs);
  inputs[which][flat] = x0 - h;
  const double down = f(inputs);
  inputs[which][flat] = x0;
  return (up - down) / (2.0 * h);
}

// Worst rel_err between analytic gradients and central differences over all
// (or a sampled subset of) coordinates of every input.
// analytic[i] must have the shape of inputs[i].
inline double max_grad_error(const LossFn& f, const std::vector<Tensor>& inputs,
                             const std::vector<Tensor>& analytic, Rng& rng,
                             int64_t max_coords_per_input = -1, double h = 1e-5) {
  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const int64_t n = inputs[i].size();
    std::vector<int64_t> coords;
    if (max_coords_per_input < 0 || n <= max_coords_per_input) {
      for (int64_t k = 0; k < n; ++k) coords.push_back(k);
    } else {
      for (int64_t c = 0; c < max_coords_per_input; ++c) coords.push_back(rng.uniform_int(0, n - 1));
    }
    for (int64_t k : coords) {
      const double fd = fd_grad(f, inputs, i, k, h);
      worst = std::max(worst, rel_err(analytic[i][k], fd));
    }
  }
  return worst;
}

// Plain O(N^2) complex DFT magnitudes of a zero-padded signal, bins
// 0..dft_size/2.
inline std::vector<double> dft_magnitudes(const std::vector<double>& x, int dft_size) {
  std::vector<double> mags;
  for (int k = 0; k <= dft_size / 2; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (size_t n = 0; n < x.size(); ++n) {
      const double ang = -2.0 * M_PI * static_cast<double>(k) * static_cast<double>(n) /
                         static_cast<double>(dft_size);
      acc += x[n] * std::polar(1.0, ang);
    }
    mags.push_back(std::abs(acc));
  }
  return mags;
}

inline double centroid_oracle(const std::vector<double>& taps, int dft_size, double sample_rate) {
  const auto mags = dft_magnitudes(taps, dft_size);
  double num = 0.0, den = 0.0;
  for (size_t k = 0; k < mags.size(); ++k) {
    num += static_cast<double>(k) * sample_rate / dft_size * mags[k];
    den += mags[k];
  }
  return num / den;
}

// CTC by brute force: sum softmax path probabilities over every frame
// labelling whose collapse (merge adjacent repeats, then drop blanks)
// equals the label. Symbol 0 is the blank.
inline double ctc_enumeration_loss(const Tensor& logits, const std::vector<int>& label) {
  const int64_t T = logits.dim(0);
  const int64_t n_sym = logits.dim(1);
  // per-frame softmax
  std::vector<std::vector<double>> p(static_cast<size_t>(T), std::vector<double>(static_cast<size_t>(n_sym)));
  for (int64_t t = 0; t < T; ++t) {
    double mx = logits.at(t, 0);
    for (int64_t c = 1; c < n_sym; ++c) mx = std::max(mx, logits.at(t, c));
    double z = 0.0;
    for (int64_t c = 0; c < n_sym; ++c) z += std::exp(logits.at(t, c) - mx);
    for (int64_t c = 0; c < n_sym; ++c) p[static_cast<size_t>(t)][static_cast<size_t>(c)] = std::exp(logits.at(t, c) - mx) / z;
  }
  std::vector<int> path(static_cast<size_t>(T), 0);
  double total = 0.0;
  while (true) {
    // collapse
    std::vector<int> collapsed;
    for (int64_t t = 0; t < T; ++t) {
      if (t > 0 && path[static_cast<size_t>(t)] == path[static_cast<size_t>(t - 1)]) continue;
      collapsed.push_back(path[static_cast<size_t>(t)]);
    }
    std::vector<int> stripped;
    for (int s : collapsed) {
      if (s != 0) stripped.push_back(s);
    }
    if (stripped == label) {
      double prob = 1.0;
      for (int64_t t = 0; t < T; ++t) prob *= p[static_cast<size_t>(t)][static_cast<size_t>(path[static_cast<size_t>(t)])];
      total += prob;
    }
    // odometer
    int64_t pos = T - 1;
    while (pos >= 0 && path[static_cast<size_t>(pos)] == n_sym - 1) {
      path[static_cast<size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    ++path[static_cast<size_t>(pos)];
  }
  return -std::log(total);
}

// Textbook full-matrix Levenshtein.
template <typename Seq>
inline int64_t edit_distance_oracle(const Seq& a, const Seq& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<std::vector<int64_t>> d(n + 1, std::vector<int64_t>(m + 1, 0));
  for (size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int64_t>(i);
  for (size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      const int64_t del = d[i - 1][j] + 1;
      const int64_t ins = d[i][j - 1] + 1;
      const int64_t sub = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      d[i][j] = std::min({del, ins, sub});
    }
  }
  return d[n][m];
}

}  // namespace oracles
