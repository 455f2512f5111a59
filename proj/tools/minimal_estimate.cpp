// Smallest end-to-end use of the library: estimate the natural gradient of a
// sphere model from samples and compare it with the exact one.

#include <iostream>

#include "kwng/estimator.hpp"
#include "kwng/models.hpp"

int main() {
  using namespace kwng;
  const Eigen::Index d = 3;
  const ModelSpec model = make_sphere_model(d);

  SphereParams p;
  p.c = Vector::Constant(d, 0.1);
  p.r = 0.8;
  const Vector theta = p.theta();
  Vector euclid(model.dim_q);
  euclid << 0.3, -0.2, 0.1, 0.4;

  KernelSpec kernel;
  kernel.bandwidth = BandwidthPolicy::fixed(1.0);
  EstimatorConfig cfg;  // eps = 1e-5, lambda = 0, column-norm damping

  Rng rng(42);
  const Eigen::Index n = 2000;
  const auto m = static_cast<Eigen::Index>(d * std::sqrt(static_cast<double>(n)));
  const Vector estimate_vec = estimate(model, theta, kernel, cfg, n, m, rng, euclid).values;
  const Vector exact = model.exact_wng(theta, euclid);

  std::cout << "estimate: " << estimate_vec.transpose() << '\n'
            << "exact:    " << exact.transpose() << '\n'
            << "relative error: " << (estimate_vec - exact).norm() / exact.norm() << '\n';
}
