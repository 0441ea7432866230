#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmnet/error.hpp"

namespace mmnet {

// Dimension sizes of a dense tensor, outermost first.
using Shape = std::vector<int>;

int shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool same_shape(const Shape& a, const Shape& b);

namespace detail {

// Heap buffer of doubles, 64-byte aligned, contents NOT value-initialized.
// Every producer writes the full range before anyone reads it.
class AlignedBuf {
 public:
  AlignedBuf() = default;
  explicit AlignedBuf(std::size_t n);
  AlignedBuf(AlignedBuf&& other) noexcept;
  AlignedBuf& operator=(AlignedBuf&& other) noexcept;
  AlignedBuf(const AlignedBuf&) = delete;
  AlignedBuf& operator=(const AlignedBuf&) = delete;
  ~AlignedBuf();

  double* data() { return ptr_; }
  const double* data() const { return ptr_; }
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  void reset();
  void zero();

 private:
  double* ptr_ = nullptr;
  std::size_t size_ = 0;
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One value in the computation graph. Interior nodes carry a backward
// closure that scatters this node's gradient into its parents; leaves
// (inputs, parameters) only receive gradient.
struct Node {
  Shape shape;
  AlignedBuf val;
  AlignedBuf grad;
  bool grad_ready = false;    // grad holds accumulated data
  bool requires_grad = false;
  bool is_leaf = true;
  bool consumed = false;      // participated in a completed backward pass
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;

  int numel() const { return shape_numel(shape); }

  // Accumulate src into grad; first contribution assigns instead of adding
  // so the buffer never needs a separate zero pass.
  void add_grad(const double* src, std::size_t n);
  // Grad buffer guaranteed zero-initialized, for scatter-style backwards.
  double* zeroed_grad();
  // Raw grad buffer; fresh tells the caller whether it must assign (true)
  // or accumulate (false). The caller must then write every element.
  double* raw_grad(bool& fresh);
  // Target for a GEMM that covers the whole gradient: beta is 0.0 for the
  // first contribution and 1.0 afterwards.
  std::pair<double*, double> gemm_grad_target();
};

NodePtr make_leaf(Shape shape, bool requires_grad);

}  // namespace detail

// While any NoGradGuard is alive on the current thread, ops do not record
// backward closures (evaluation mode).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// Dense n-dimensional array of doubles, row-major, with reverse-mode
// autodiff. Cheap to copy: copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int ndim() const { return static_cast<int>(shape().size()); }
  int numel() const;
  int dim(int axis) const;

  std::span<const double> data() const;
  // In-place mutation is only legal on leaves (parameter updates); interior
  // values are saved activations of someone's backward.
  std::span<double> mutable_data();

  bool requires_grad() const;
  bool is_leaf() const;
  // Empty span when no gradient has been populated.
  std::span<const double> grad() const;
  void zero_grad();

  double item() const;
  double at(std::initializer_list<int> idx) const;

  // Reverse-mode pass from this scalar. The traversed graph is single-use:
  // a second backward through any part of it throws AutogradError.
  void backward();

  detail::NodePtr node() const { return node_; }
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

 private:
  detail::NodePtr node_;
};

// Topologically ordered view of the graph below a root, used by backward
// and by tests that probe traversal invariants.
class Graph {
 public:
  static Graph from_root(const Tensor& root);
  const std::vector<detail::NodePtr>& nodes() const { return topo_; }
  std::size_t size() const { return topo_.size(); }
  // Runs the reverse pass and consumes the graph.
  void run_backward(const Tensor& root);

 private:
  std::vector<detail::NodePtr> topo_;  // parents-before-children
};

// Throws NumericError if any element is non-finite; `what` names the op.
void check_finite(const char* what, std::span<const double> values);

}  // namespace mmnet
