#include "core/tensor.hpp"

#include <cmath>
#include <string>

namespace aseg {

namespace {

size_t checked_numel(const std::vector<int>& dims) {
  require_arg(!dims.empty(), "tensor: rank must be at least 1");
  size_t n = 1;
  for (int d : dims) {
    require_arg(d >= 0, "tensor: negative extent");
    n *= static_cast<size_t>(d);
  }
  return n;
}

}  // namespace

template <class S>
TensorT<S>::TensorT(std::vector<int> dims, std::vector<S> values) {
  const size_t n = checked_numel(dims);
  require_arg(values.size() == n, "tensor: value count " + std::to_string(values.size()) +
                                      " does not match dims product " + std::to_string(n));
  dims_ = std::move(dims);
  values_ = std::make_shared<const std::vector<S>>(std::move(values));
}

template <class S>
TensorT<S> TensorT<S>::from_values(std::vector<int> dims, std::vector<S> values) {
  for (int d : dims) require_arg(d >= 1, "tensor: zero extent");
  return TensorT(std::move(dims), std::move(values));
}

template <class S>
TensorT<S> TensorT<S>::full(std::vector<int> dims, S value) {
  for (int d : dims) require_arg(d >= 1, "tensor: zero extent");
  const size_t n = checked_numel(dims);
  return TensorT(std::move(dims), std::vector<S>(n, value));
}

template <class S>
TensorT<S> TensorT<S>::gaussian(std::vector<int> dims, double mean, double stddev, Rng& rng) {
  for (int d : dims) require_arg(d >= 1, "tensor: zero extent");
  const size_t n = checked_numel(dims);
  std::vector<S> values(n);
  for (size_t i = 0; i < n; ++i) {
    values[i] = static_cast<S>(mean + stddev * rng.next_gaussian());
  }
  return TensorT(std::move(dims), std::move(values));
}

template <class S>
const std::vector<S>& TensorT<S>::values() const& {
  require(values_ != nullptr, ErrorCode::invalid_argument, "tensor: empty handle");
  return *values_;
}

template <class S>
S TensorT<S>::value() const {
  require_arg(numel() == 1, "tensor: value() needs exactly one element");
  return (*values_)[0];
}

template <class S>
S TensorT<S>::at4(int n, int c, int h, int w) const {
  require_arg(rank() == 4, "tensor: at4 needs a 4-D tensor");
  const size_t idx =
      ((static_cast<size_t>(n) * dims_[1] + c) * dims_[2] + h) * dims_[3] + w;
  return values().at(idx);
}

template <class S>
bool TensorT<S>::all_finite() const {
  for (S v : values()) {
    if (!std::isfinite(static_cast<double>(v))) return false;
  }
  return true;
}

template <class S>
TensorT<S> TensorT<S>::with_node(std::vector<int> dims, std::vector<S> values, int node) {
  TensorT t(std::move(dims), std::move(values));
  t.node_ = node;
  return t;
}

template <class S>
int TapeT<S>::record(size_t numel, BackwardFn backward) {
  numel_.push_back(numel);
  backward_.push_back(std::move(backward));
  return static_cast<int>(numel_.size()) - 1;
}

template <class S>
TensorT<S> TapeT<S>::leaf(const TensorT<S>& t) {
  const int id = record(t.numel(), nullptr);
  return TensorT<S>::with_node(t.dims(), t.values(), id);
}

template <class S>
std::vector<S>& TapeT<S>::slot(Grads& grads, int node, size_t numel) {
  auto& buffer = grads.at(static_cast<size_t>(node));
  if (buffer.empty()) buffer.assign(numel, S(0));
  return buffer;
}

template <class S>
bool GradientMapT<S>::has(const TensorT<S>& t) const {
  return raw(t.node()) != nullptr;
}

template <class S>
const std::vector<S>* GradientMapT<S>::raw(int node) const {
  if (node < 0 || static_cast<size_t>(node) >= buffers_.size()) return nullptr;
  const auto& buffer = buffers_[static_cast<size_t>(node)];
  return buffer.empty() ? nullptr : &buffer;
}

template <class S>
TensorT<S> GradientMapT<S>::grad_or_zero(const TensorT<S>& t) const {
  const std::vector<S>* buffer = raw(t.node());
  if (!buffer) return TensorT<S>(t.dims(), std::vector<S>(t.numel(), S(0)));
  require(buffer->size() == t.numel(), ErrorCode::internal, "gradient size mismatch");
  return TensorT<S>(t.dims(), *buffer);
}

template <class S>
GradientMapT<S> backward(const TensorT<S>& loss, const TapeT<S>& tape) {
  require_arg(loss.numel() == 1, "backward: loss must be a single element");
  require_arg(loss.tracked() && static_cast<size_t>(loss.node()) < tape.size(),
              "backward: loss is not on the tape");
  typename TapeT<S>::Grads grads(tape.size());
  grads[static_cast<size_t>(loss.node())] = {S(1)};
  for (int id = loss.node(); id >= 0; --id) {
    const auto& buffer = grads[static_cast<size_t>(id)];
    if (buffer.empty()) continue;
    const auto& fn = tape.node_backward(id);
    if (fn) fn(buffer, grads);
  }
  return GradientMapT<S>(std::move(grads));
}

template class TensorT<float>;
template class TensorT<double>;
template class TapeT<float>;
template class TapeT<double>;
template class GradientMapT<float>;
template class GradientMapT<double>;
template GradientMapT<float> backward(const TensorT<float>&, const TapeT<float>&);
template GradientMapT<double> backward(const TensorT<double>&, const TapeT<double>&);

}  // namespace aseg
