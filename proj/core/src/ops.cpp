#include "interconnect/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <vector>

#include "interconnect/rng.hpp"

namespace interconnect {

namespace {

std::atomic<bool> g_finite_checks{false};

template <typename T>
Tensor<T> finish(Tensor<T> out, const char* op) {
  if (g_finite_checks.load(std::memory_order_relaxed)) detail::check_finite(out, op);
  return out;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  }
}

template <typename T>
void require_rank(const Tensor<T>& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(x.shape()));
  }
}

template <typename T>
T sigmoid(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

}  // namespace

std::size_t shape_numel(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void set_finite_checks(bool enabled) noexcept { g_finite_checks.store(enabled); }
bool finite_checks_enabled() noexcept { return g_finite_checks.load(); }

namespace detail {
template <typename T>
void check_finite(const Tensor<T>& x, const char* op) {
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (!std::isfinite(x[i])) {
      throw NumericError(std::string(op) + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}
}  // namespace detail

namespace {

// Row-major GEMM kernels, all accumulating into C. Inner loops are AXPYs over
// contiguous rows so they vectorize without reassociating reductions.

// C[m x n] += A[m x k] B[k x n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x k] += A[m x n] B[k x n]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  std::vector<T> bt(n * k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  gemm_nn(m, n, k, a, bt.data(), c);
}

// C[k x n] += A[m x k]^T B[m x n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  Tensor<T> out({m, n});
  gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data().data());
  if (auto* tape = recording_tape(a, b)) {
    out.set_requires_grad(true);
    tape->record([a, b, out, m, k, n]() mutable {
      if (!out.has_grad()) return;
      const T* dc = out.grad().data();
      if (a.requires_grad()) gemm_nt(m, n, k, dc, b.data().data(), a.mutable_grad().data());
      if (b.requires_grad()) gemm_tn(m, k, n, a.data().data(), dc, b.mutable_grad().data());
    });
  }
  return finish(std::move(out), "matmul");
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor<T> out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  if (auto* tape = recording_tape(x)) {
    out.set_requires_grad(true);
    tape->record([x, out, r, c]() mutable {
      if (!out.has_grad()) return;
      auto dx = x.mutable_grad();
      auto dy = out.grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += dy[j * r + i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  Tensor<T> out = x.reshaped_copy(std::move(shape));
  if (auto* tape = recording_tape(x)) {
    out.set_requires_grad(true);
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      auto dx = x.mutable_grad();
      auto dy = out.grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
  if (auto* tape = recording_tape(a, b)) {
    out.set_requires_grad(true);
    tape->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto dy = out.grad();
      if (a.requires_grad()) {
        auto da = a.mutable_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
      }
      if (b.requires_grad()) {
        auto db = b.mutable_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
      }
    });
  }
  return finish(std::move(out), "add");
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  const std::size_t d = x.cols();
  if (bias.numel() != d) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match last dim of " +
                     shape_str(x.shape()));
  }
  const std::size_t rows = x.rows();
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x[r * d + j] + bias[j];
  if (auto* tape = recording_tape(x, bias)) {
    out.set_requires_grad(true);
    tape->record([x, bias, out, rows, d]() mutable {
      if (!out.has_grad()) return;
      auto dy = out.grad();
      if (x.requires_grad()) {
        auto dx = x.mutable_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
      }
      if (bias.requires_grad()) {
        auto db = bias.mutable_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) db[j] += dy[r * d + j];
      }
    });
  }
  return finish(std::move(out), "add_bias");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * b[i];
  if (auto* tape = recording_tape(a, b)) {
    out.set_requires_grad(true);
    tape->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto dy = out.grad();
      if (a.requires_grad()) {
        auto da = a.mutable_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * b[i];
      }
      if (b.requires_grad()) {
        auto db = b.mutable_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * a[i];
      }
    });
  }
  return finish(std::move(out), "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] * factor;
  if (auto* tape = recording_tape(x)) {
    out.set_requires_grad(true);
    tape->record([x, out, factor]() mutable {
      if (!out.has_grad()) return;
      auto dx = x.mutable_grad();
      auto dy = out.grad();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * factor;
    });
  }
  return finish(std::move(out), "scale");
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  // NaN fails `> 0` and is passed through rather than silently zeroed.
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] > T(0) || std::isnan(x[i]) ? x[i] : T(0);
  if (auto* tape = recording_tape(x)) {
    out.set_requires_grad(true);
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      auto dx = x.mutable_grad();
      auto dy = out.grad();
      for (std::size_t i = 0; i < dy.size(); ++i)
        if (x[i] > T(0)) dx[i] += dy[i];
    });
  }
  return finish(std::move(out), "relu");
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, bool causal) {
  if (causal) require_rank(x, 2, "softmax(causal)");
  const std::size_t n = x.cols();
  const std::size_t rows = x.rows();
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t limit = causal ? std::min(n, r + 1) : n;
    const T* in = x.data().data() + r * n;
    T* o = out.data().data() + r * n;
    T mx = in[0];
    for (std::size_t j = 1; j < limit; ++j) mx = std::max(mx, in[j]);
    T total = 0;
    for (std::size_t j = 0; j < limit; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    const T inv = T(1) / total;
    for (std::size_t j = 0; j < limit; ++j) o[j] *= inv;
  }
  if (auto* tape = recording_tape(x)) {
    out.set_requires_grad(true);
    tape->record([x, out, rows, n]() mutable {
      if (!out.has_grad()) return;
      auto dx = x.mutable_grad();
      auto dy = out.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        T dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += dy[r * n + j] * out[r * n + j];
        for (std::size_t j = 0; j < n; ++j)
          dx[r * n + j] += out[r * n + j] * (dy[r * n + j] - dot);
      }
    });
  }
  return finish(std::move(out), "softmax");
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  const std::size_t d = x.cols();
  if (gain.numel() != d || bias.numel() != d) {
    throw ShapeError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                     shape_str(bias.shape()) + " do not match last dim of " + shape_str(x.shape()));
  }
  if (!(eps > T(0))) throw ContractError("layer_norm: eps must be positive");
  const std::size_t rows = x.rows();
  Tensor<T> out(x.shape());
  // Per-row normalized values and inverse std, kept for the backward rule.
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * d;
    double mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<double>(d);
    double var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(d);
    const T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = static_cast<T>(in[j] - mu) * inv;
      xhat[r * d + j] = h;
      out[r * d + j] = h * gain[j] + bias[j];
    }
  }
  if (auto* tape = recording_tape(x, gain, bias)) {
    out.set_requires_grad(true);
    tape->record([x, gain, bias, out, xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
                  d]() mutable {
      if (!out.has_grad()) return;
      auto dy = out.grad();
      if (gain.requires_grad()) {
        auto dg = gain.mutable_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) dg[j] += dy[r * d + j] * xhat[r * d + j];
      }
      if (bias.requires_grad()) {
        auto db = bias.mutable_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) db[j] += dy[r * d + j];
      }
      if (x.requires_grad()) {
        auto dx = x.mutable_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          T mean_g = 0, mean_gx = 0;
          for (std::size_t j = 0; j < d; ++j) {
            const T g = dy[r * d + j] * gain[j];
            mean_g += g;
            mean_gx += g * xhat[r * d + j];
          }
          mean_g /= static_cast<T>(d);
          mean_gx /= static_cast<T>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const T g = dy[r * d + j] * gain[j];
            dx[r * d + j] += inv_std[r] * (g - mean_g - xhat[r * d + j] * mean_gx);
          }
        }
      }
    });
  }
  return finish(std::move(out), "layer_norm");
}

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                                 std::size_t padding) {
  if (stride == 0 || kernel == 0) throw ConfigError("conv1d: kernel and stride must be positive");
  if (length + 2 * padding < kernel) {
    throw LengthError("conv1d: input length " + std::to_string(length) + " with padding " +
                      std::to_string(padding) + " is shorter than kernel " + std::to_string(kernel));
  }
  return (length + 2 * padding - kernel) / stride + 1;
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding) {
  require_rank(x, 2, "conv1d input");
  require_rank(kernels, 3, "conv1d kernels");
  const std::size_t cin = x.dim(0), len = x.dim(1);
  const std::size_t cout = kernels.dim(0), ksize = kernels.dim(2);
  if (kernels.dim(1) != cin) {
    throw ShapeError("conv1d: kernels " + shape_str(kernels.shape()) + " do not match input " +
                     shape_str(x.shape()));
  }
  if (bias.numel() != cout) {
    throw ShapeError("conv1d: bias " + shape_str(bias.shape()) + " does not match kernels " +
                     shape_str(kernels.shape()));
  }
  const std::size_t olen = conv1d_output_length(len, ksize, stride, padding);
  // im2col: cols[(c, k), t] = x[c, t * stride + k - padding], zero outside.
  const std::size_t rows = cin * ksize;
  auto cols = std::make_shared<std::vector<T>>(rows * olen, T(0));
  const T* px = x.data().data();
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t k = 0; k < ksize; ++k) {
      T* crow = cols->data() + (c * ksize + k) * olen;
      for (std::size_t t = 0; t < olen; ++t) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(padding);
        if (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) crow[t] = px[c * len + static_cast<std::size_t>(src)];
      }
    }
  }
  Tensor<T> out({cout, olen});
  T* po = out.data().data();
  for (std::size_t o = 0; o < cout; ++o) std::fill(po + o * olen, po + (o + 1) * olen, bias[o]);
  gemm_nn(cout, rows, olen, kernels.data().data(), cols->data(), po);

  if (auto* tape = recording_tape(x, kernels, bias)) {
    out.set_requires_grad(true);
    tape->record([x, kernels, bias, out, cols, cin, len, cout, ksize, olen, stride, padding, rows]() mutable {
      if (!out.has_grad()) return;
      const T* dy = out.grad().data();
      if (bias.requires_grad()) {
        auto db = bias.mutable_grad();
        for (std::size_t o = 0; o < cout; ++o)
          for (std::size_t t = 0; t < olen; ++t) db[o] += dy[o * olen + t];
      }
      if (kernels.requires_grad()) gemm_nt(cout, olen, rows, dy, cols->data(), kernels.mutable_grad().data());
      if (x.requires_grad()) {
        std::vector<T> dcols(rows * olen, T(0));
        gemm_tn(cout, rows, olen, kernels.data().data(), dy, dcols.data());
        T* dx = x.mutable_grad().data();
        for (std::size_t c = 0; c < cin; ++c) {
          for (std::size_t k = 0; k < ksize; ++k) {
            const T* drow = dcols.data() + (c * ksize + k) * olen;
            for (std::size_t t = 0; t < olen; ++t) {
              const std::ptrdiff_t src =
                  static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(padding);
              if (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) dx[c * len + static_cast<std::size_t>(src)] += drow[t];
            }
          }
        }
      }
    });
  }
  return finish(std::move(out), "conv1d");
}

template <typename T>
Tensor<T> glu(const Tensor<T>& x) {
  require_rank(x, 2, "glu");
  if (x.dim(0) % 2 != 0) {
    throw ShapeError("glu: channel count must be even, got " + shape_str(x.shape()));
  }
  const std::size_t half = x.dim(0) / 2, len = x.dim(1);
  const std::size_t n = half * len;
  Tensor<T> out({half, len});
  std::vector<T> gate(n);
  for (std::size_t i = 0; i < n; ++i) {
    gate[i] = sigmoid(x[n + i]);
    out[i] = x[i] * gate[i];
  }
  if (auto* tape = recording_tape(x)) {
    out.set_requires_grad(true);
    tape->record([x, out, gate = std::move(gate), n]() mutable {
      if (!out.has_grad()) return;
      auto dx = x.mutable_grad();
      auto dy = out.grad();
      for (std::size_t i = 0; i < n; ++i) {
        dx[i] += dy[i] * gate[i];
        dx[n + i] += dy[i] * x[i] * gate[i] * (T(1) - gate[i]);
      }
    });
  }
  return finish(std::move(out), "glu");
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool train, std::uint64_t key) {
  if (!(p >= 0.0 && p < 1.0)) throw ContractError("dropout: p must lie in [0, 1)");
  if (!train || p == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  Tensor<T> out(x.shape());
  std::vector<T> mask(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    mask[i] = uniform01(key, i) < p ? T(0) : keep_scale;
    out[i] = x[i] * mask[i];
  }
  if (auto* tape = recording_tape(x)) {
    out.set_requires_grad(true);
    tape->record([x, out, mask = std::move(mask)]() mutable {
      if (!out.has_grad()) return;
      auto dx = x.mutable_grad();
      auto dy = out.grad();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * mask[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int> ids) {
  require_rank(table, 2, "embedding");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  if (ids.empty()) throw ContractError("embedding: empty id sequence");
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError("embedding: id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(vocab));
    }
  }
  Tensor<T> out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(table.data().data() + static_cast<std::size_t>(ids[i]) * d, d,
                out.data().data() + i * d);
  if (auto* tape = recording_tape(table)) {
    out.set_requires_grad(true);
    tape->record([table, out, ids = std::vector<int>(ids.begin(), ids.end()), d]() mutable {
      if (!out.has_grad()) return;
      auto dt = table.mutable_grad();
      auto dy = out.grad();
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < d; ++j)
          dt[static_cast<std::size_t>(ids[i]) * d + j] += dy[i * d + j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t count) {
  require_rank(x, 2, "slice_cols");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (count == 0 || start + count > c) {
    throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of range for " + shape_str(x.shape()));
  }
  Tensor<T> out({r, count});
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(x.data().data() + i * c + start, count, out.data().data() + i * count);
  if (auto* tape = recording_tape(x)) {
    out.set_requires_grad(true);
    tape->record([x, out, r, c, start, count]() mutable {
      if (!out.has_grad()) return;
      auto dx = x.mutable_grad();
      auto dy = out.grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < count; ++j) dx[i * c + start + j] += dy[i * count + j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t r = parts[0].dim(0);
  std::size_t c = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != r) {
      throw ShapeError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    }
    c += p.dim(1);
  }
  Tensor<T> out({r, c});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.dim(1);
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(p.data().data() + i * pc, pc, out.data().data() + i * c + offset);
    offset += pc;
  }
  if (auto* tape = recording_tape(parts)) {
    out.set_requires_grad(true);
    tape->record([parts = std::vector<Tensor<T>>(parts.begin(), parts.end()), out, r, c]() mutable {
      if (!out.has_grad()) return;
      auto dy = out.grad();
      std::size_t offset = 0;
      for (auto& p : parts) {
        const std::size_t pc = p.dim(1);
        if (p.requires_grad()) {
          auto dp = p.mutable_grad();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < pc; ++j) dp[i * pc + j] += dy[i * c + offset + j];
        }
        offset += pc;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) total += x[i];
  Tensor<T> out = Tensor<T>::scalar(total);
  if (auto* tape = recording_tape(x)) {
    out.set_requires_grad(true);
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      const T g = out.grad()[0];
      auto dx = x.mutable_grad();
      for (auto& v : dx) v += g;
    });
  }
  return finish(std::move(out), "sum");
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

#define INTERCONNECT_INSTANTIATE_OPS(T)                                                         \
  template void detail::check_finite<T>(const Tensor<T>&, const char*);                         \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> transpose<T>(const Tensor<T>&);                                            \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                       \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> add_bias<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                             \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                 \
  template Tensor<T> softmax<T>(const Tensor<T>&, bool);                                        \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);    \
  template Tensor<T> conv1d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                               std::size_t, std::size_t);                                       \
  template Tensor<T> glu<T>(const Tensor<T>&);                                                  \
  template Tensor<T> dropout<T>(const Tensor<T>&, double, bool, std::uint64_t);                 \
  template Tensor<T> embedding<T>(const Tensor<T>&, std::span<const int>);                      \
  template Tensor<T> slice_cols<T>(const Tensor<T>&, std::size_t, std::size_t);                 \
  template Tensor<T> concat_cols<T>(std::span<const Tensor<T>>);                                \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                  \
  template Tensor<T> mean<T>(const Tensor<T>&);

INTERCONNECT_INSTANTIATE_OPS(float)
INTERCONNECT_INSTANTIATE_OPS(double)

#undef INTERCONNECT_INSTANTIATE_OPS

}  // namespace interconnect
