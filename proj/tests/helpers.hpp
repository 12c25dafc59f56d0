#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "relkit/autodiff.hpp"
#include "relkit/rng.hpp"
#include "relkit/tensor.hpp"

namespace testutil {

using relkit::Rng;
using relkit::numerics::Tensor;

inline Tensor random_tensor(Rng& rng, std::vector<int64_t> shape,
                            double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& x : t.v) x = scale * rng.normal();
  return t;
}

inline Tensor random_positive(Rng& rng, std::vector<int64_t> shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& x : t.v) x = 0.1 + rng.uniform01();
  return t;
}

// Relative disagreement with a floor, so near-zero gradients compare on
// an absolute scale instead of blowing up the ratio.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

inline double max_rel_err(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i)
    worst = std::max(worst, rel_err(a.v[i], b.v[i]));
  return worst;
}

// Analytic-vs-central-difference check of d(loss)/d(x) where `build`
// maps a leaf value to a scalar loss on a fresh tape.
inline double grad_check(
    const std::function<relkit::numerics::Var(relkit::numerics::Tape&,
                                              relkit::numerics::Var)>& build,
    const Tensor& x, double h = 1e-5) {
  namespace nm = relkit::numerics;
  nm::Tape tape;
  nm::Var leaf = tape.leaf(x, true);
  nm::Var loss = build(tape, leaf);
  tape.backward(loss);
  Tensor analytic = tape.grad(leaf);

  Tensor numeric = nm::finite_diff_grad(
      [&](const Tensor& probe) {
        nm::Tape t2;
        nm::Var l2 = t2.leaf(probe, true);
        return t2.val(build(t2, l2)).v[0];
      },
      x, h);
  return max_rel_err(analytic, numeric);
}

}  // namespace testutil
