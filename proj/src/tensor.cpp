#include "patchcraft/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "patchcraft/errors.hpp"

namespace patchcraft {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    n *= d;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    out << (i ? "x" : "") << shape[i];
  }
  out << ']';
  return out.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  if (shape.empty()) {
    throw DimensionError("tensor shape must have at least one axis");
  }
  for (std::size_t d : shape) {
    if (d == 0) {
      throw DimensionError("tensor dims must be positive, got " + shape_string(shape));
    }
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T{0}, requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return BasicTensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return BasicTensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(shape()));
  }
  return node_->shape[axis];
}

template <typename T>
T BasicTensor<T>::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) {
    throw DimensionError("at(row, col) needs a rank-2 tensor, got " + shape_string(shape()));
  }
  return node_->data[row * node_->shape[1] + col];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) {
    throw DimensionError("item() needs a one-element tensor, got " + shape_string(shape()));
  }
  return node_->data[0];
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T{0});
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor(node_->shape, node_->data, false);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped_copy(Shape shape) const {
  return BasicTensor(std::move(shape), node_->data, false);
}

namespace {
template <typename T>
thread_local Tape<T>* active_tape = nullptr;
}  // namespace

template <typename T>
Tape<T>::Scope::Scope(Tape& tape) : previous_(active_tape<T>) {
  active_tape<T> = &tape;
}

template <typename T>
Tape<T>::Scope::~Scope() {
  active_tape<T> = previous_;
}

template <typename T>
Tape<T>::~Tape() {
  if (active_tape<T> == this) {
    active_tape<T> = nullptr;
  }
}

template <typename T>
Tape<T>* Tape<T>::active() {
  return active_tape<T>;
}

template <typename T>
void Tape<T>::push(std::vector<std::shared_ptr<Node>> inputs, const std::shared_ptr<Node>& output,
                   std::function<void()> backward) {
  output->id = next_id_++;
  records_.push_back(Record{std::move(inputs), output, std::move(backward)});
}

template <typename T>
void Tape<T>::backward(const BasicTensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("loss does not depend on any tensor that requires a gradient");
  }
  loss.node()->ensure_grad()[0] += T{1};
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output->grad.empty()) {
      continue;
    }
    it->backward();
  }
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace patchcraft
