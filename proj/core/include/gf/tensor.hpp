#ifndef GF_TENSOR_HPP
#define GF_TENSOR_HPP

#include <functional>
#include <memory>

#include "gf/common.hpp"

namespace gf {

using Shape = std::vector<std::size_t>;

struct TensorData {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // empty until some backward rule touches it
  bool requires_grad = false;

  std::size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

// Value-semantics handle to a node in the differentiation graph. Copies
// share storage; the backward rules recorded on the active Tape hold the
// same nodes alive until the sweep completes.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Real> values,
                     bool requires_grad = false);
  static Tensor scalar(Real v);
  // Rank-1 tensor.
  static Tensor vec(std::vector<Real> values, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rank() const { return node_->shape.size(); }

  // Rank-2 accessors.
  std::size_t rows() const;
  std::size_t cols() const;
  Real at(std::size_t i, std::size_t j) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  std::vector<Real>& values() { return node_->value; }
  const std::vector<Real>& values() const { return node_->value; }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<Real>& grad() const;
  void zero_grad() {
    if (node_->requires_grad) node_->ensure_grad();
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  Real item() const;

  // Deep copy of values; fresh node with no recorded history.
  Tensor clone() const;

  std::shared_ptr<TensorData> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorData> node) : node_(std::move(node)) {}
  std::shared_ptr<TensorData> node_;
};

// Define-by-run tape. Constructing a Tape makes it the active tape for the
// current thread; operations record their backward rules onto it. Tapes on
// different threads are independent.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::function<void()> backward_step) {
    steps_.push_back(std::move(backward_step));
  }

  std::size_t size() const { return steps_.size(); }

  // Seeds d(loss)/d(loss) = 1 and replays the recorded rules in reverse.
  // Gradients accumulate additively into every requires_grad tensor
  // reachable from the loss.
  void backward(const Tensor& loss);

 private:
  std::vector<std::function<void()>> steps_;
  Tape* prev_ = nullptr;
};

// True when gradients should be tracked for an op consuming these inputs.
inline bool grad_enabled() { return Tape::active() != nullptr; }

}  // namespace gf

#endif
