#include "mmnet/params.hpp"

#include <cmath>

namespace mmnet {

Tensor ParamRegistry::add(std::string name, Tensor tensor) {
  if (find(name)) throw Error("duplicate parameter name: " + name);
  entries_.push_back({std::move(name), tensor});
  return tensor;
}

const Tensor* ParamRegistry::find(const std::string& name) const {
  for (const ParamEntry& e : entries_) {
    if (e.name == name) return &e.tensor;
  }
  return nullptr;
}

long long ParamRegistry::total_count() const {
  long long n = 0;
  for (const ParamEntry& e : entries_) n += e.tensor.numel();
  return n;
}

void ParamRegistry::zero_grads() {
  for (ParamEntry& e : entries_) e.tensor.zero_grad();
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from_vector(std::move(shape), std::move(v), true);
}

}  // namespace

Tensor init_conv_weight(int cout, int cin, int k, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin) * k * k);
  return uniform_tensor({cout, cin, k, k}, bound, rng);
}

Tensor init_linear_weight(int in_dim, int out_dim, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  return uniform_tensor({in_dim, out_dim}, bound, rng);
}

Tensor init_embedding(int rows, int cols, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(rows) * cols);
  for (double& x : v) x = 0.02 * rng.normal();
  return Tensor::from_vector({rows, cols}, std::move(v), true);
}

}  // namespace mmnet
