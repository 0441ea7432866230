#include "mmnet/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace mmnet {

int shape_numel(const Shape& shape) {
  long long n = 1;
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor dimensions must be positive");
    n *= d;
    if (n > (1LL << 31)) throw DimensionError("tensor too large");
  }
  return static_cast<int>(n);
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

namespace detail {

namespace {

// Training allocates and frees the same buffer sizes every pass; recycling
// them avoids re-faulting fresh pages each iteration. Buffers follow the
// freeing thread's pool, which is safe: the backing memory is ordinary heap.
struct BufPool {
  std::unordered_map<std::size_t, std::vector<double*>> free_list;
  ~BufPool() {
    for (auto& [size, ptrs] : free_list)
      for (double* p : ptrs) ::operator delete(p, std::align_val_t(64));
  }
  double* get(std::size_t n) {
    auto it = free_list.find(n);
    if (it != free_list.end() && !it->second.empty()) {
      double* p = it->second.back();
      it->second.pop_back();
      return p;
    }
    return static_cast<double*>(
        ::operator new(n * sizeof(double), std::align_val_t(64)));
  }
  void put(double* p, std::size_t n) { free_list[n].push_back(p); }
};

thread_local BufPool buf_pool;

}  // namespace

AlignedBuf::AlignedBuf(std::size_t n) : size_(n) {
  if (n) ptr_ = buf_pool.get(n);
}

AlignedBuf::AlignedBuf(AlignedBuf&& other) noexcept
    : ptr_(other.ptr_), size_(other.size_) {
  other.ptr_ = nullptr;
  other.size_ = 0;
}

AlignedBuf& AlignedBuf::operator=(AlignedBuf&& other) noexcept {
  if (this != &other) {
    reset();
    ptr_ = other.ptr_;
    size_ = other.size_;
    other.ptr_ = nullptr;
    other.size_ = 0;
  }
  return *this;
}

AlignedBuf::~AlignedBuf() { reset(); }

void AlignedBuf::reset() {
  if (ptr_) {
    buf_pool.put(ptr_, size_);
    ptr_ = nullptr;
    size_ = 0;
  }
}

void AlignedBuf::zero() {
  if (ptr_) std::memset(ptr_, 0, size_ * sizeof(double));
}

void Node::add_grad(const double* src, std::size_t n) {
  if (grad.empty()) grad = AlignedBuf(static_cast<std::size_t>(numel()));
  double* dst = grad.data();
  if (!grad_ready) {
    std::memcpy(dst, src, n * sizeof(double));
    grad_ready = true;
  } else {
    for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
  }
}

double* Node::zeroed_grad() {
  if (grad.empty()) grad = AlignedBuf(static_cast<std::size_t>(numel()));
  if (!grad_ready) {
    grad.zero();
    grad_ready = true;
  }
  return grad.data();
}

double* Node::raw_grad(bool& fresh) {
  if (grad.empty()) grad = AlignedBuf(static_cast<std::size_t>(numel()));
  fresh = !grad_ready;
  grad_ready = true;
  return grad.data();
}

std::pair<double*, double> Node::gemm_grad_target() {
  if (grad.empty()) grad = AlignedBuf(static_cast<std::size_t>(numel()));
  const double beta = grad_ready ? 1.0 : 0.0;
  grad_ready = true;
  return {grad.data(), beta};
}

NodePtr make_leaf(Shape shape, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->val = AlignedBuf(static_cast<std::size_t>(shape_numel(shape)));
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  node->is_leaf = true;
  return node;
}

namespace {
thread_local int no_grad_depth = 0;
}

}  // namespace detail

NoGradGuard::NoGradGuard() : prev_(grad_enabled()) {
  ++detail::no_grad_depth;
}
NoGradGuard::~NoGradGuard() { --detail::no_grad_depth; }

bool grad_enabled() { return detail::no_grad_depth == 0; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto node = detail::make_leaf(std::move(shape), requires_grad);
  node->val.zero();
  return Tensor(std::move(node));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto node = detail::make_leaf(std::move(shape), requires_grad);
  double* p = node->val.data();
  for (std::size_t i = 0; i < node->val.size(); ++i) p[i] = value;
  return Tensor(std::move(node));
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  const int n = shape_numel(shape);
  if (static_cast<std::size_t>(n) != values.size()) {
    throw DimensionError("from_vector: " + shape_str(shape) + " needs " +
                         std::to_string(n) + " values, got " +
                         std::to_string(values.size()));
  }
  auto node = detail::make_leaf(std::move(shape), requires_grad);
  std::memcpy(node->val.data(), values.data(), values.size() * sizeof(double));
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return full({1}, value); }

const Shape& Tensor::shape() const {
  if (!node_) throw Error("use of undefined tensor");
  return node_->shape;
}

int Tensor::numel() const { return node_->numel(); }

int Tensor::dim(int axis) const {
  const Shape& s = shape();
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw DimensionError("axis out of range");
  return s[axis];
}

std::span<const double> Tensor::data() const {
  if (!node_) throw Error("use of undefined tensor");
  return {node_->val.data(), node_->val.size()};
}

std::span<double> Tensor::mutable_data() {
  if (!node_) throw Error("use of undefined tensor");
  if (!node_->is_leaf)
    throw AutogradError("mutable_data: only leaf tensors may be mutated");
  return {node_->val.data(), node_->val.size()};
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::is_leaf() const { return node_ && node_->is_leaf; }

std::span<const double> Tensor::grad() const {
  if (!node_ || !node_->grad_ready) return {};
  return {node_->grad.data(), node_->grad.size()};
}

void Tensor::zero_grad() {
  if (node_) node_->grad_ready = false;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() requires a single element");
  return data()[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  const Shape& s = shape();
  if (idx.size() != s.size())
    throw DimensionError("at(): index rank mismatch");
  long long flat = 0;
  int axis = 0;
  for (int i : idx) {
    if (i < 0 || i >= s[axis]) throw DimensionError("at(): index out of range");
    flat = flat * s[axis] + i;
    ++axis;
  }
  return data()[static_cast<std::size_t>(flat)];
}

Graph Graph::from_root(const Tensor& root) {
  Graph g;
  if (!root.defined() || !root.requires_grad()) return g;
  // Iterative post-order DFS; parents end up before children.
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::NodePtr, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->consumed && node.get() != root.node().get()) {
      throw AutogradError(
          "graph overlaps an already-consumed backward pass (graphs are "
          "single-use)");
    }
    if (next < node->parents.size()) {
      detail::NodePtr parent = node->parents[next++];
      if (parent->requires_grad && !visited.count(parent.get())) {
        visited.insert(parent.get());
        stack.emplace_back(std::move(parent), 0);
      }
    } else {
      g.topo_.push_back(node);
      stack.pop_back();
    }
  }
  return g;
}

void Graph::run_backward(const Tensor& root) {
  detail::Node* root_node = root.node().get();
  const double one = 1.0;
  root_node->add_grad(&one, 1);
  for (auto it = topo_.rbegin(); it != topo_.rend(); ++it) {
    detail::Node& node = **it;
    if (node.backward_fn && node.grad_ready) node.backward_fn(node);
  }
  // Consume: interior nodes drop their closures and parent links; values
  // stay readable. Leaves remain usable in future graphs.
  for (const auto& node : topo_) {
    if (!node->is_leaf) {
      node->backward_fn = nullptr;
      node->parents.clear();
      node->consumed = true;
    }
  }
  root_node->consumed = true;
}

void Tensor::backward() {
  if (!node_) throw Error("use of undefined tensor");
  if (numel() != 1)
    throw AutogradError("backward() requires a scalar (single-element) loss");
  if (!node_->requires_grad)
    throw AutogradError("backward() on a tensor that requires no gradients");
  if (node_->consumed)
    throw AutogradError(
        "backward() already ran on this graph (graphs are single-use; zero "
        "grads and rebuild the forward pass)");
  Graph g = Graph::from_root(*this);
  g.run_backward(*this);
}

void check_finite(const char* what, std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(what) + ": non-finite value produced");
    }
  }
}

}  // namespace mmnet
