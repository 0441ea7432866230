#pragma once

#include <string>
#include <vector>

#include "mmnet/rng.hpp"
#include "mmnet/tensor.hpp"

namespace mmnet {

struct ParamEntry {
  std::string name;
  Tensor tensor;
};

// Ordered collection of named trainable tensors. Registration order is the
// manifest order, the checkpoint layout, and the initialization draw order.
class ParamRegistry {
 public:
  Tensor add(std::string name, Tensor tensor);
  const std::vector<ParamEntry>& entries() const { return entries_; }
  const Tensor* find(const std::string& name) const;
  long long total_count() const;
  void zero_grads();

 private:
  std::vector<ParamEntry> entries_;
};

// Fan-in-scaled uniform U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for conv and
// linear weights, zeros for biases, N(0,1)*0.02 for embeddings.
Tensor init_conv_weight(int cout, int cin, int k, Rng& rng);
Tensor init_linear_weight(int in_dim, int out_dim, Rng& rng);
Tensor init_embedding(int rows, int cols, Rng& rng);

}  // namespace mmnet
