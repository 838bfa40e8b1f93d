#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace patchcraft {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::uint64_t id = 0;  // recording sequence number; 0 for leaves

  std::span<T> ensure_grad() {
    if (grad.empty()) {
      grad.assign(data.size(), T{0});
    }
    return grad;
  }
};

}  // namespace detail

// Row-major dense array with an optional gradient buffer.
//
// A BasicTensor is a shared handle: copies alias the same storage. Values are
// treated as immutable once an operation has consumed them; only optimizer
// updates on leaf parameters write through mutable_data().
template <typename T>
class BasicTensor {
 public:
  using value_type = T;
  using Node = detail::TensorNode<T>;

  BasicTensor() = default;
  BasicTensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  std::span<T> mutable_data() { return node_->data; }
  T operator[](std::size_t i) const { return node_->data[i]; }
  // Element (row, col) of a rank-2 tensor.
  T at(std::size_t row, std::size_t col) const;
  // Value of a one-element tensor.
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  // Fresh leaf holding a copy of the values.
  BasicTensor detach() const;
  BasicTensor reshaped_copy(Shape shape) const;

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> values(node_->data.begin(), node_->data.end());
    return BasicTensor<U>(node_->shape, std::move(values), node_->requires_grad);
  }

  bool same_node(const BasicTensor& other) const { return node_ == other.node_; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T> tensor;
};

// Ordered record of differentiable operations for reverse-mode replay.
//
// Operations append to the tape that is active on the calling thread (see
// Tape::record) whenever at least one operand requires a gradient. With no
// active tape, operations only compute values.
template <typename T>
class Tape {
 public:
  using Node = detail::TensorNode<T>;

  struct Record {
    std::vector<std::shared_ptr<Node>> inputs;
    std::shared_ptr<Node> output;
    std::function<void()> backward;
  };

  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  Tape() = default;
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Makes this tape the active one until the returned scope ends.
  [[nodiscard]] Scope record() { return Scope(*this); }

  static Tape* active();

  void push(std::vector<std::shared_ptr<Node>> inputs, const std::shared_ptr<Node>& output,
            std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and replays the records in reverse order.
  // Gradients are summed into existing buffers.
  void backward(const BasicTensor<T>& loss);

  std::size_t size() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }
  void clear() { records_.clear(); }

 private:
  std::vector<Record> records_;
  std::uint64_t next_id_ = 1;
};

namespace detail {

// Registers `out` as produced from `inputs` when a tape is recording and some
// input needs a gradient.
template <typename T, typename Backward>
BasicTensor<T> record_op(BasicTensor<T> out, std::initializer_list<const BasicTensor<T>*> inputs,
                         Backward&& backward) {
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) {
    return out;
  }
  bool needed = false;
  std::vector<std::shared_ptr<TensorNode<T>>> nodes;
  nodes.reserve(inputs.size());
  for (const BasicTensor<T>* input : inputs) {
    needed = needed || input->requires_grad();
    nodes.push_back(input->node());
  }
  if (!needed) {
    return out;
  }
  out.set_requires_grad(true);
  tape->push(std::move(nodes), out.node(), std::function<void()>(std::forward<Backward>(backward)));
  return out;
}

template <typename T>
BasicTensor<T> record_op_list(BasicTensor<T> out, std::span<const BasicTensor<T>> inputs,
                              std::function<void()> backward) {
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) {
    return out;
  }
  bool needed = false;
  std::vector<std::shared_ptr<TensorNode<T>>> nodes;
  for (const BasicTensor<T>& input : inputs) {
    needed = needed || input.requires_grad();
    nodes.push_back(input.node());
  }
  if (!needed) {
    return out;
  }
  out.set_requires_grad(true);
  tape->push(std::move(nodes), out.node(), std::move(backward));
  return out;
}

}  // namespace detail

}  // namespace patchcraft
