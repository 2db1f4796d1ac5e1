#include "mdme/tensor.hpp"

#include <sstream>

#include "mdme/errors.hpp"

namespace mdme {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
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

DiffTensor::DiffTensor(Shape shape, std::vector<double> data) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
}

DiffTensor DiffTensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

DiffTensor DiffTensor::filled(Shape shape, double value) {
  auto n = shape_numel(shape);
  return DiffTensor(std::move(shape), std::vector<double>(n, value));
}

DiffTensor DiffTensor::scalar(double value) { return DiffTensor({1}, {value}); }

DiffTensor DiffTensor::vector(std::vector<double> values) {
  auto n = values.size();
  return DiffTensor({n}, std::move(values));
}

DiffTensor DiffTensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return DiffTensor({rows, cols}, std::move(values));
}

const Shape& DiffTensor::shape() const {
  if (!node_) throw DimensionError("use of an undefined tensor");
  return node_->shape;
}

std::size_t DiffTensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

std::size_t DiffTensor::numel() const { return node_ ? node_->data.size() : 0; }

std::span<const double> DiffTensor::data() const {
  if (!node_) return {};
  return node_->data;
}

std::span<double> DiffTensor::mutable_data() {
  if (!node_) return {};
  return node_->data;
}

double DiffTensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

bool DiffTensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::vector<double> DiffTensor::grad() const {
  if (!node_) return {};
  if (node_->grad.empty()) return std::vector<double>(node_->data.size(), 0.0);
  return node_->grad;
}

void DiffTensor::zero_grad() {
  if (node_) node_->grad.clear();
}

GradientTape* DiffTensor::tape() const { return node_ ? node_->tape : nullptr; }

std::size_t DiffTensor::node_id() const { return node_ ? node_->id : 0; }

DiffTensor DiffTensor::detach() const { return DiffTensor(shape(), node_->data); }

GradientTape::~GradientTape() {
  for (auto& leaf : leaves_) {
    if (leaf->tape == this) leaf->tape = nullptr;
  }
  for (auto& op : ops_) {
    op->tape = nullptr;
    op->backward = nullptr;
  }
}

void GradientTape::watch(const DiffTensor& leaf) {
  auto& node = leaf.node();
  if (!node) throw DimensionError("cannot watch an undefined tensor");
  if (node->tape == this) return;
  if (node->tape != nullptr) throw ConfigError("tensor is already tracked by another gradient tape");
  node->tape = this;
  node->id = next_id_++;
  node->grad.clear();
  leaves_.push_back(node);
}

void GradientTape::watch(std::span<const DiffTensor> leaves) {
  for (const auto& l : leaves) watch(l);
}

void GradientTape::record(const std::shared_ptr<detail::Node>& node) {
  node->tape = this;
  node->id = next_id_++;
  ops_.push_back(node);
}

void GradientTape::backward(const DiffTensor& loss) {
  if (consumed_) throw ConfigError("backward() already ran on this tape");
  if (loss.numel() != 1) throw DimensionError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
  if (loss.tape() != this) throw ConfigError("loss is not recorded on this tape");
  consumed_ = true;
  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    auto& node = **it;
    if (node.grad.empty() || !node.backward) continue;
    node.backward(node);
  }
}

DiffTensor make_op(Shape shape, std::vector<double> data, std::initializer_list<DiffTensor> inputs,
                   std::function<void(const detail::Node&)> backward) {
  return make_op(std::move(shape), std::move(data), std::span<const DiffTensor>(inputs.begin(), inputs.size()),
                 std::move(backward));
}

DiffTensor make_op(Shape shape, std::vector<double> data, std::span<const DiffTensor> inputs,
                   std::function<void(const detail::Node&)> backward) {
  GradientTape* tape = nullptr;
  for (const auto& in : inputs) {
    auto* t = in.tape();
    if (!t) continue;
    if (tape && t != tape) throw ConfigError("op mixes tensors from two different gradient tapes");
    tape = t;
  }
  DiffTensor out(std::move(shape), std::move(data));
  if (tape) {
    out.node_->backward = std::move(backward);
    tape->record(out.node_);
  }
  return out;
}

void accumulate_grad(const DiffTensor& t, std::span<const double> g) {
  if (!t.tracked()) return;
  auto& buf = t.node()->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

}  // namespace mdme
