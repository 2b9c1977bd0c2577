// Copyright 2026 The promptlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Independent reference implementations used by unit and acceptance tests.
// They share no code with the library beyond plain data access.

#ifndef PROMPTLAB_TESTS_ORACLES_HPP_
#define PROMPTLAB_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "promptlab/ctc.hpp"
#include "promptlab/encoder.hpp"

namespace promptlab::oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  }
  return m;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b.front().size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.front().size(); ++j) {
      for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
    }
  }
  return c;
}

// Pre-norm attention sub-block computed with explicit loops:
// xp + Concat_i(softmax(Q_i K_i^T / sqrt(dh)) V_i) W_O over LN(xp).
inline Mat attention_layer(const Mat& xp, const EncoderLayer& layer, std::size_t heads) {
  const std::size_t n = xp.size(), d = xp.front().size(), dh = d / heads;
  Mat z(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0, var = 0;
    for (double v : xp[i]) mu += v;
    mu /= d;
    for (double v : xp[i]) var += (v - mu) * (v - mu);
    var /= d;
    for (std::size_t j = 0; j < d; ++j) {
      z[i][j] = (xp[i][j] - mu) / std::sqrt(var + 1e-5) * layer.ln1_gamma.at(j) + layer.ln1_beta.at(j);
    }
  }
  const Mat q = matmul(z, to_mat(layer.w_q)), k = matmul(z, to_mat(layer.w_k)), v = matmul(z, to_mat(layer.w_v));
  Mat cat(n, std::vector<double>(d, 0.0));
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(n);
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0;
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) dot += q[i][c] * k[j][c];
        s[j] = dot / std::sqrt(static_cast<double>(dh));
      }
      const double mx = *std::max_element(s.begin(), s.end());
      double total = 0;
      for (auto& x : s) total += (x = std::exp(x - mx));
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) cat[i][c] += s[j] / total * v[j][c];
      }
    }
  }
  Mat out = matmul(cat, to_mat(layer.w_o));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i][j] += xp[i][j];
  }
  return out;
}

// Sum over every length-T label path whose collapse equals target.
inline double ctc_brute_force_log_likelihood(const Tensor& logits, const TokenSequence& target) {
  const std::size_t T = logits.rows(), K = logits.cols(), blank = K - 1;
  Mat logp = to_mat(logits);
  for (auto& row : logp) {
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0;
    for (double x : row) z += std::exp(x - mx);
    for (auto& x : row) x = x - mx - std::log(z);
  }
  std::vector<std::size_t> path(T, 0);
  double total = 0.0;
  while (true) {
    TokenSequence collapsed;
    std::size_t prev = K;
    for (std::size_t t = 0; t < T; ++t) {
      if (path[t] != prev && path[t] != blank) collapsed.push_back(static_cast<int>(path[t]));
      prev = path[t];
    }
    if (collapsed == target) {
      double lp = 0;
      for (std::size_t t = 0; t < T; ++t) lp += logp[t][path[t]];
      total += std::exp(lp);
    }
    std::size_t t = 0;
    while (t < T && ++path[t] == K) path[t++] = 0;
    if (t == T) break;
  }
  return total > 0 ? std::log(total) : -std::numeric_limits<double>::infinity();
}

// Levenshtein distance by plain recursion over suffixes.
inline std::size_t edit_distance_recursive(const TokenSequence& a, const TokenSequence& b, std::size_t i = 0,
                                           std::size_t j = 0) {
  if (i == a.size()) return b.size() - j;
  if (j == b.size()) return a.size() - i;
  const std::size_t sub = edit_distance_recursive(a, b, i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
  const std::size_t del = edit_distance_recursive(a, b, i + 1, j) + 1;
  const std::size_t ins = edit_distance_recursive(a, b, i, j + 1) + 1;
  return std::min({sub, del, ins});
}

// Cyclic Jacobi eigenvalue iteration for a symmetric matrix. Returns
// eigenvalues in descending order and matching unit eigenvectors (columns).
inline void jacobi_eigen(Mat a, std::vector<double>& values, Mat& vectors) {
  const std::size_t n = a.size();
  vectors.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) vectors[i][i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    }
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = vectors[k][p], vkq = vectors[k][q];
          vectors[k][p] = c * vkp - s * vkq;
          vectors[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });
  values.clear();
  Mat sorted(n, std::vector<double>(n));
  for (std::size_t c = 0; c < n; ++c) {
    values.push_back(a[order[c]][order[c]]);
    for (std::size_t r = 0; r < n; ++r) sorted[r][c] = vectors[r][order[c]];
  }
  vectors = sorted;
}

// Central finite difference of f at x along coordinate i.
inline double central_difference(const std::function<double()>& f, double& x, double h) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2 * h);
}

}  // namespace promptlab::oracle

#endif  // PROMPTLAB_TESTS_ORACLES_HPP_
