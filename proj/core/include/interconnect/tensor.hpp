#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "interconnect/errors.hpp"

namespace interconnect {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_str(const Shape& shape);

template <typename T>
constexpr const char* dtype_name() noexcept {
  if constexpr (std::is_same_v<T, float>) {
    return "float32";
  } else {
    static_assert(std::is_same_v<T, double>, "only float32 and float64 are supported");
    return "float64";
  }
}

namespace detail {

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until the first gradient arrives
  bool requires_grad = false;
};

}  // namespace detail

// Dense row-major array with an optional gradient slot. Copies share storage;
// use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0))
      : impl_(std::make_shared<detail::TensorStorage<T>>()) {
    for (std::size_t d : shape) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> values) : Tensor(std::move(shape)) {
    if (values.size() != impl_->data.size()) {
      throw ShapeError("buffer of " + std::to_string(values.size()) +
                       " elements does not match shape " + shape_str(impl_->shape));
    }
    impl_->data = std::move(values);
  }

  static Tensor scalar(T value) { return Tensor(Shape{1}, value); }

  static Tensor vector(std::initializer_list<T> values) {
    return Tensor(Shape{values.size()}, std::vector<T>(values));
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<T> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged matrix literal");
      values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(values));
  }

  bool defined() const noexcept { return impl_ != nullptr; }

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }
  // Rows of the tensor viewed as a matrix over its last dimension.
  std::size_t rows() const { return numel() / impl_->shape.back(); }
  std::size_t cols() const { return impl_->shape.back(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }

  T& operator[](std::size_t i) { return impl_->data[i]; }
  const T& operator[](std::size_t i) const { return impl_->data[i]; }
  T& at(std::size_t r, std::size_t c) { return impl_->data[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }

  T item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
  }

  bool requires_grad() const noexcept { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    if (!on) impl_->grad.clear();
    return *this;
  }

  bool has_grad() const noexcept { return impl_ && !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  // Allocates a zero gradient on first use.
  std::span<T> mutable_grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
    return impl_->grad;
  }
  void zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), T(0)); }
  void clear_grad() { impl_->grad.clear(); }

  Tensor clone() const {
    Tensor out(impl_->shape);
    out.impl_->data = impl_->data;
    return out;
  }

  // Same shape and data, new shape header; shares nothing.
  Tensor reshaped_copy(Shape shape) const {
    Tensor out(std::move(shape));
    if (out.numel() != numel()) {
      throw ShapeError("cannot reshape " + shape_str(this->shape()) + " to " + shape_str(out.shape()));
    }
    out.impl_->data = impl_->data;
    return out;
  }

  bool is_same(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  std::shared_ptr<detail::TensorStorage<T>> impl_;
};

// Records backward closures in forward order. backward() replays them once in
// reverse and then clears the tape.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void()>;

  void record(Backward fn) { entries_.push_back(std::move(fn)); }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  void clear() noexcept { entries_.clear(); }

  void backward(Tensor<T>& loss) {
    if (loss.numel() != 1) {
      throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
    }
    if (entries_.empty()) throw ContractError("backward() on an empty tape");
    loss.mutable_grad()[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    entries_.clear();
  }

 private:
  std::vector<Backward> entries_;
};

template <typename T>
Tape<T>*& active_tape_slot() noexcept {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}

template <typename T>
Tape<T>* active_tape() noexcept {
  return active_tape_slot<T>();
}

// Makes `tape` the recording tape of the current thread for the guard's
// lifetime. Ops run without a guard record nothing.
template <typename T>
class TapeGuard {
 public:
  explicit TapeGuard(Tape<T>& tape) noexcept : previous_(active_tape_slot<T>()) {
    active_tape_slot<T>() = &tape;
  }
  ~TapeGuard() { active_tape_slot<T>() = previous_; }
  TapeGuard(const TapeGuard&) = delete;
  TapeGuard& operator=(const TapeGuard&) = delete;

 private:
  Tape<T>* previous_;
};

// Suspends recording (e.g. for finite-difference probes).
template <typename T>
class NoGradGuard {
 public:
  NoGradGuard() noexcept : previous_(active_tape_slot<T>()) { active_tape_slot<T>() = nullptr; }
  ~NoGradGuard() { active_tape_slot<T>() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape<T>* previous_;
};

// The tape an op must record on, or nullptr when no input needs a gradient.
template <typename T, typename... Rest>
Tape<T>* recording_tape(const Tensor<T>& first, const Rest&... rest) noexcept {
  Tape<T>* tape = active_tape<T>();
  if (tape == nullptr) return nullptr;
  const bool any = (first.requires_grad() || ... || rest.requires_grad());
  return any ? tape : nullptr;
}

template <typename T>
Tape<T>* recording_tape(std::span<const Tensor<T>> inputs) noexcept {
  Tape<T>* tape = active_tape<T>();
  if (tape == nullptr) return nullptr;
  for (const auto& t : inputs) {
    if (t.requires_grad()) return tape;
  }
  return nullptr;
}

}  // namespace interconnect
