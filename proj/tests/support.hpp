#ifndef KWNG_TESTS_SUPPORT_HPP
#define KWNG_TESTS_SUPPORT_HPP

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "kwng/error.hpp"
#include "kwng/model_spec.hpp"
#include "kwng/numerics.hpp"

namespace kwng::test {

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  return standard_normal(rng, rows * cols).reshaped(rows, cols);
}

/// Random SPD matrix with eigenvalues in [lo, hi].
inline Matrix random_spd(Rng& rng, Eigen::Index n, double lo = 0.5, double hi = 3.0) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(rng, n, n));
  const Matrix q = qr.householderQ();
  std::uniform_real_distribution<double> u(lo, hi);
  Vector ev(n);
  for (Eigen::Index i = 0; i < n; ++i) ev(i) = u(rng);
  return q * ev.asDiagonal() * q.transpose();
}

inline Matrix random_symmetric(Rng& rng, Eigen::Index n) {
  const Matrix a = random_matrix(rng, n, n);
  return 0.5 * (a + a.transpose());
}

inline double rel(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b) {
  const double scale = std::max(b.norm(), 1e-300);
  return (a - b).norm() / scale;
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::InvalidArgument;
}

}  // namespace kwng::test

#endif  // KWNG_TESTS_SUPPORT_HPP
