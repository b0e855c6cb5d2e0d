#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "core/error.hpp"
#include "core/rng.hpp"

namespace aseg {

template <class S>
class TapeT;

// Dense row-major tensor. 4-D activations use [batch, channel, height, width].
// Values are immutable once constructed; every operation returns a new tensor.
// A tensor that participates in a recorded graph carries the id of its tape
// node; node() < 0 means the tensor is a plain constant.
template <class S>
class TensorT {
 public:
  TensorT() = default;

  // Internal constructor: accepts any consistent (dims, values) pair,
  // including zero extents, so graph code can form empty slices.
  TensorT(std::vector<int> dims, std::vector<S> values);

  // Public factories: these enforce the strict contract (extents >= 1).
  static TensorT from_values(std::vector<int> dims, std::vector<S> values);
  static TensorT full(std::vector<int> dims, S value);
  static TensorT gaussian(std::vector<int> dims, double mean, double stddev, Rng& rng);

  const std::vector<int>& dims() const { return dims_; }
  int dim(int axis) const { return dims_.at(static_cast<size_t>(axis)); }
  int rank() const { return static_cast<int>(dims_.size()); }
  size_t numel() const { return values_ ? values_->size() : 0; }
  const std::vector<S>& values() const&;
  // Calling values() on a temporary hands back a copy; the reference overload
  // would dangle once the temporary's storage is released.
  std::vector<S> values() const&& { return values(); }

  // Single-element accessors.
  S value() const;
  S at(size_t flat_index) const { return values().at(flat_index); }
  S at4(int n, int c, int h, int w) const;

  bool tracked() const { return node_ >= 0; }
  int node() const { return node_; }
  TensorT detached() const {
    TensorT copy = *this;
    copy.node_ = -1;
    return copy;
  }

  bool same_dims(const TensorT& other) const { return dims_ == other.dims_; }
  bool all_finite() const;

  // Used by operations to attach a result to its tape node.
  static TensorT with_node(std::vector<int> dims, std::vector<S> values, int node);

 private:
  std::vector<int> dims_;
  std::shared_ptr<const std::vector<S>> values_;
  int node_ = -1;
};

// Append-only record of tracked operations. Node ids are assigned in forward
// order, so every node only refers to earlier nodes. A tape belongs to one
// thread for its whole life.
template <class S>
class TapeT {
 public:
  // Per-node gradient buffers, indexed by node id; an empty buffer means zero.
  using Grads = std::vector<std::vector<S>>;
  using BackwardFn = std::function<void(const std::vector<S>& grad_out, Grads& grads)>;

  // Registers an operation result; `backward` routes grad_out into the
  // gradients of the node's inputs. Returns the new node id.
  int record(size_t numel, BackwardFn backward);

  // Registers `t` as a leaf and returns a tracked view of it.
  TensorT<S> leaf(const TensorT<S>& t);

  size_t size() const { return numel_.size(); }
  size_t node_numel(int id) const { return numel_.at(static_cast<size_t>(id)); }
  const BackwardFn& node_backward(int id) const { return backward_.at(static_cast<size_t>(id)); }

  // Fetches the accumulation buffer for a node, zero-initialized on demand.
  static std::vector<S>& slot(Grads& grads, int node, size_t numel);

 private:
  std::vector<size_t> numel_;
  std::vector<BackwardFn> backward_;
};

// Gradients of one scalar with respect to every tracked tensor, keyed by tape
// node id. Tensors without an entry have zero gradient.
template <class S>
class GradientMapT {
 public:
  GradientMapT() = default;
  explicit GradientMapT(typename TapeT<S>::Grads buffers) : buffers_(std::move(buffers)) {}

  bool has(const TensorT<S>& t) const;
  const std::vector<S>* raw(int node) const;
  // Gradient with the same dims as `t`; zeros when absent.
  TensorT<S> grad_or_zero(const TensorT<S>& t) const;

 private:
  typename TapeT<S>::Grads buffers_;
};

// Reverse sweep from a scalar loss produced through `tape`. Fan-out
// contributions accumulate additively.
template <class S>
GradientMapT<S> backward(const TensorT<S>& loss, const TapeT<S>& tape);

using Tensor = TensorT<float>;
using Tape = TapeT<float>;
using GradientMap = GradientMapT<float>;

}  // namespace aseg
