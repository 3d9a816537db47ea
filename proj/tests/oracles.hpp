#pragma once

// Reference implementations used only by the tests. None of them shares code
// with the library: plain loops, cyclic Jacobi, and the full 2^L spin space.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

struct Eigen {
  std::vector<double> values;  // ascending
  Matrix vectors;              // vectors[k] is the k-th eigenvector
};

/// Cyclic Jacobi rotations until the off-diagonal mass is below 1e-28.
inline Eigen jacobi(Matrix a) {
  const std::size_t n = a.size();
  Matrix v(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    v[i][i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q)
        off += a[p][q] * a[p][q];
    if (off < 1e-28)
      break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a[p][q] == 0.0)
          continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
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
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return a[x][x] < a[y][y]; });
  Eigen out;
  for (auto k : order) {
    out.values.push_back(a[k][k]);
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i)
      col[i] = v[i][k];
    out.vectors.push_back(std::move(col));
  }
  return out;
}

/// Open tight-binding chain with tilt h*i, i = 1..L.
inline Matrix stark_chain(int L, double J, double h) {
  Matrix m(L, std::vector<double>(L, 0.0));
  for (int i = 0; i < L; ++i) {
    m[i][i] = h * (i + 1);
    if (i + 1 < L)
      m[i][i + 1] = m[i + 1][i] = J;
  }
  return m;
}

/// Full 2^L Pauli Heisenberg chain with tilt; site i is bit i-1, set = up.
/// Built from explicit sigma matrices acting on basis states.
inline Matrix heisenberg_full(int L, double J, double h) {
  const std::size_t dim = std::size_t{1} << L;
  Matrix m(dim, std::vector<double>(dim, 0.0));
  auto sz = [](std::uint64_t s, int site) { return ((s >> site) & 1u) ? 1.0 : -1.0; };
  for (std::uint64_t s = 0; s < dim; ++s) {
    for (int i = 0; i < L; ++i)
      m[s][s] += h * (i + 1) * sz(s, i);
    for (int i = 0; i + 1 < L; ++i) {
      m[s][s] += J * sz(s, i) * sz(s, i + 1);
      // sigma^x sigma^x flips both bits with amplitude 1; sigma^y sigma^y
      // gives the same flip with sign -sz_i sz_{i+1}.
      const std::uint64_t t = s ^ (std::uint64_t{3} << i);
      const double yy = -sz(s, i) * sz(s, i + 1);
      m[t][s] += J * (1.0 + yy);
    }
  }
  return m;
}

/// 4 sum_{m != k} |<m|V|k>|^2 / (E_m - E_k)^2 with plain loops.
inline double qfi_sum(const Eigen &e, const std::vector<double> &V, std::size_t k) {
  double f = 0.0;
  for (std::size_t m = 0; m < e.values.size(); ++m) {
    if (m == k)
      continue;
    double vm = 0.0;
    for (std::size_t i = 0; i < V.size(); ++i)
      vm += e.vectors[m][i] * V[i] * e.vectors[k][i];
    f += vm * vm / ((e.values[m] - e.values[k]) * (e.values[m] - e.values[k]));
  }
  return 4.0 * f;
}

} // namespace oracle
