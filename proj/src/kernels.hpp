#pragma once

#include <cmath>
#include <cstddef>

// Reductions use a fixed eight-lane schedule: lane k accumulates elements
// i with i % 8 == k in increasing i, lanes combine as
// ((l0+l4)+(l1+l5)) + ((l2+l6)+(l3+l7)). Encoder and decoder depend on this
// order being identical, so no reduction may be reassociated.
namespace statesmix::kernels {

template <class Real>
inline Real combine_lanes(const Real (&acc)[8]) {
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

template <class Real>
inline Real dot(const Real* a, const Real* b, size_t n) {
  Real acc[8] = {};
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (size_t k = 0; k < 8; ++k) acc[k] += a[i + k] * b[i + k];
  }
  for (size_t k = 0; i < n; ++i, ++k) acc[k] += a[i] * b[i];
  return combine_lanes(acc);
}

template <class Real>
inline Real sum(const Real* a, size_t n) {
  Real acc[8] = {};
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (size_t k = 0; k < 8; ++k) acc[k] += a[i + k];
  }
  for (size_t k = 0; i < n; ++i, ++k) acc[k] += a[i];
  return combine_lanes(acc);
}

// y += alpha * x
template <class Real>
inline void axpy(Real alpha, const Real* x, Real* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class Real>
inline Real max_value(const Real* a, size_t n) {
  Real m = a[0];
  for (size_t i = 1; i < n; ++i) m = a[i] > m ? a[i] : m;
  return m;
}

template <class Real>
inline Real sigmoid(Real x) {
  return Real(1) / (Real(1) + std::exp(-x));
}

template <class Real>
inline Real silu(Real x) {
  return x * sigmoid(x);
}

template <class Real>
inline Real silu_grad(Real x) {
  const Real s = sigmoid(x);
  return s * (Real(1) + x * (Real(1) - s));
}

template <class Real>
inline Real softplus(Real x) {
  // log1p(exp(x)) without overflow for large x.
  return x > Real(20) ? x : std::log1p(std::exp(x));
}

// True when every element is finite (x - x is NaN for Inf and NaN).
template <class Real>
inline bool all_finite(const Real* a, size_t n) {
  Real acc = 0;
  for (size_t i = 0; i < n; ++i) acc += a[i] - a[i];
  return acc == Real(0);
}

}  // namespace statesmix::kernels
