// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors and the reverse-mode tape that differentiates them.
//
// A Tensor is a shared handle: copying it aliases the same storage, which is
// what lets the tape hold on to op inputs and outputs after the forward pass
// returns. Ops (see ops.hpp) record a backward closure on the tape that is
// active on the current thread, but only when at least one input requires a
// gradient. With no active tape nothing is recorded, so independent threads
// can run pure forward evaluation concurrently.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "poslab/error.hpp"

namespace poslab {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Keeps freed tensor storage in the process heap rather than unmapping it,
/// so the next step reuses pages that are already faulted in. Process-wide;
/// a no-op outside glibc.
void retain_freed_memory();

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until a gradient flows in
  bool requires_grad = false;
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  /// Takes ownership of `values`; throws DimensionError if the element count
  /// does not match the shape.
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T fill, bool requires_grad = false);
  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  /// Constness is shallow: a const handle still exposes mutable storage.
  std::span<T> data() const { return node_->value; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) const { node_->requires_grad = on; }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer, allocated (zero-filled) on first access.
  std::span<T> grad() const;
  void zero_grad() const;

  /// Deep copy of the values with no gradient and no tape history.
  Tensor detach() const;

  TensorNode<T>& node() const { return *node_; }
  const std::shared_ptr<TensorNode<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

/// Ordered record of executed differentiable ops. Entries are appended in
/// execution order, which is a topological order by construction, and
/// backward() replays them in exact reverse.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::string op, std::function<void()> backward_fn);

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse.
  /// Throws ContractError when `loss` is not a single element.
  void backward(const Tensor<T>& loss);

  std::size_t size() const { return entries_.size(); }
  const std::string& op_name(std::size_t i) const { return entries_.at(i).op; }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    std::string op;
    std::function<void()> backward_fn;
  };
  std::vector<Entry> entries_;
};

/// Tape active on this thread, or nullptr.
template <typename T>
Tape<T>* active_tape();

/// RAII activation of a tape on the current thread. Scopes nest.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// RAII suspension of recording (e.g. evaluation inside a training step).
template <typename T>
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* previous_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;
extern template class TapeScope<float>;
extern template class TapeScope<double>;
extern template class NoGradScope<float>;
extern template class NoGradScope<double>;

}  // namespace poslab
