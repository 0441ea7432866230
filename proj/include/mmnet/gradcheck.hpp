#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mmnet/rng.hpp"
#include "mmnet/tensor.hpp"

namespace mmnet {

// Central-difference gradient verification. The forward function must build
// a fresh graph from its inputs on every call; outputs are scalarized with a
// fixed random weighting so every output element influences the loss.
//
// Returns the worst relative error max|a-n| / max(1, |a|+|n|) over every
// element of every requires-grad input. grad_scale deliberately mis-scales
// the analytic side (negative-control fixtures).
double gradcheck_all_elements(
    const std::function<Tensor(const std::vector<Tensor>&)>& fn,
    const std::vector<Tensor>& inputs, Rng& rng, double eps = 1e-4,
    double grad_scale = 1.0);

// Element probes against a closed-over loss for full-model checks (checking
// every parameter would need millions of forward passes).
struct GradProbe {
  Tensor param;
  int index = 0;
};
double gradcheck_probes(const std::function<Tensor()>& loss_fn,
                        const std::vector<GradProbe>& probes,
                        double eps = 1e-4);

struct OpCheckResult {
  std::string op;
  int instances = 0;
  double worst_rel_err = 0.0;
};

// Runs `instances` randomized finite-difference instances for every
// differentiable op in the library. `corrupt` appends a negative-control
// entry whose analytic gradient is intentionally wrong.
std::vector<OpCheckResult> run_op_gradchecks(std::uint64_t seed, int instances,
                                             bool corrupt = false);

}  // namespace mmnet
