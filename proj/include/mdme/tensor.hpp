#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mdme {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class GradientTape;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something accumulates into it
  // Reads `self.grad` and accumulates into the captured inputs.
  std::function<void(const Node& self)> backward;
  GradientTape* tape = nullptr;
  std::size_t id = 0;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major float64 array. Copies share the same storage; use
/// clone() or detach() for an independent copy.
///
/// A tensor is "tracked" while it belongs to a GradientTape, either as a
/// watched leaf or as the output of an op recorded on that tape.
class DiffTensor {
 public:
  DiffTensor() = default;
  DiffTensor(Shape shape, std::vector<double> data);

  static DiffTensor zeros(Shape shape);
  static DiffTensor filled(Shape shape, double value);
  static DiffTensor scalar(double value);
  static DiffTensor vector(std::vector<double> values);
  static DiffTensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Writable view; for parameter updates between tapes.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const { return data()[i]; }

  bool has_grad() const;
  /// Accumulated gradient; zeros if nothing flowed into this tensor.
  std::vector<double> grad() const;
  void zero_grad();

  GradientTape* tape() const;
  bool tracked() const { return tape() != nullptr; }
  std::size_t node_id() const;

  /// Untracked copy of the values.
  DiffTensor detach() const;
  DiffTensor clone() const { return detach(); }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit DiffTensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend DiffTensor make_op(Shape, std::vector<double>, std::span<const DiffTensor>,
                            std::function<void(const detail::Node&)>);

  std::shared_ptr<detail::Node> node_;
};

/// Records operations for one reverse-mode pass.
///
/// Ops are appended in execution order, which is a topological order of the
/// graph; backward() walks them in reverse exactly once. Watched leaves are
/// released when the tape is destroyed so they can join a later tape.
class GradientTape {
 public:
  GradientTape() = default;
  ~GradientTape();
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  /// Starts tracking a leaf and clears its gradient.
  /// Throws if the tensor already belongs to another tape.
  void watch(const DiffTensor& leaf);
  void watch(std::span<const DiffTensor> leaves);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every tracked input.
  void backward(const DiffTensor& loss);

  std::size_t op_count() const { return ops_.size(); }

  void record(const std::shared_ptr<detail::Node>& node);

 private:
  std::vector<std::shared_ptr<detail::Node>> leaves_;
  std::vector<std::shared_ptr<detail::Node>> ops_;
  std::size_t next_id_ = 1;
  bool consumed_ = false;
};

/// Builds an op output. If any input is tracked the output is recorded on
/// that tape with `backward`; mixing inputs from two tapes is an error.
DiffTensor make_op(Shape shape, std::vector<double> data, std::span<const DiffTensor> inputs,
                   std::function<void(const detail::Node&)> backward);
DiffTensor make_op(Shape shape, std::vector<double> data, std::initializer_list<DiffTensor> inputs,
                   std::function<void(const detail::Node&)> backward);

/// Adds `g` into the gradient buffer of `t` when it is tracked.
void accumulate_grad(const DiffTensor& t, std::span<const double> g);

}  // namespace mdme
