#include "essuda/autodiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

namespace essuda::ad {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
void check_finite(std::string_view op, std::span<const T> values) {
  // All-ones exponent bits mark NaN and +-Inf; integer OR keeps the scan vectorizable.
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  constexpr Bits exponent = static_cast<Bits>(sizeof(T) == 4 ? 0x7f800000ull : 0x7ff0000000000000ull);
  Bits bad = 0;
  for (const T v : values) bad |= static_cast<Bits>((std::bit_cast<Bits>(v) & exponent) == exponent);
  if (bad == 0) return;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string(op) + ": non-finite output at flat index " +
                         std::to_string(i));
    }
  }
}

template <typename T>
Tape<T>* tracking_tape(std::initializer_list<const Tensor<T>*> inputs) {
  auto* tape = Tape<T>::active();
  if (tape == nullptr) return nullptr;
  for (const auto* t : inputs) {
    if (t->defined() && t->requires_grad()) return tape;
  }
  return nullptr;
}

template <typename T, typename Fn>
Tensor<T> finish(std::string_view op, Tensor<T> out, std::initializer_list<const Tensor<T>*> inputs,
                 Fn&& backward) {
  check_finite<T>(op, out.data());
  if (auto* tape = tracking_tape<T>(inputs)) {
    out.set_requires_grad(true);
    tape->record(op, [out, fn = std::forward<Fn>(backward)]() mutable {
      if (!out.has_grad()) return;
      fn(out.grad());
    });
  }
  return out;
}

template <typename T, typename F, typename G>
Tensor<T> unary(std::string_view op, const Tensor<T>& x, F&& forward, G&& derivative) {
  std::vector<T> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(xd[i]);
  Tensor<T> result(x.shape(), std::move(out));
  return finish<T>(op, result, {&x},
                   [x, result, d = std::forward<G>(derivative)](std::span<const T> g) mutable {
                     if (!x.requires_grad()) return;
                     auto gx = x.grad();
                     auto xv = x.data();
                     auto yv = result.data();
                     for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * d(xv[i], yv[i]);
                   });
}

Shape broadcast_shape(const Shape& a, const Shape& b, std::string_view op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i + a.size() >= rank ? a[i + a.size() - rank] : 1;
    const std::size_t db = i + b.size() >= rank ? b[i + b.size() - rank] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                       shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `shape` expressed in the index space of `out`, zero on
// broadcast dimensions.
std::vector<std::size_t> broadcast_strides(const Shape& shape, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < shape.size(); ++k) {
    const std::size_t src = shape.size() - 1 - k;
    const std::size_t dst = out.size() - 1 - k;
    strides[dst] = shape[src] == 1 ? 0 : stride;
    stride *= shape[src];
  }
  return strides;
}

// Calls fn(out_index, a_index, b_index) in row-major order of `out`.
template <typename Fn>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, Fn&& fn) {
  const std::size_t n = shape_numel(out);
  const std::size_t rank = out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    fn(i, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

enum class BinOp { kAdd, kSub, kMul, kDiv };

template <typename T>
Tensor<T> binary(BinOp kind, std::string_view op, const Tensor<T>& a, const Tensor<T>& b) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape(), op);
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  const bool same = a.shape() == b.shape();
  std::vector<T> out(shape_numel(out_shape));
  auto av = a.data();
  auto bv = b.data();
  auto apply = [kind](T x, T y) {
    switch (kind) {
      case BinOp::kAdd: return x + y;
      case BinOp::kSub: return x - y;
      case BinOp::kMul: return x * y;
      case BinOp::kDiv: return x / y;
    }
    return T(0);
  };
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(av[i], bv[i]);
  } else {
    for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      out[i] = apply(av[ia], bv[ib]);
    });
  }
  Tensor<T> result(out_shape, std::move(out));
  return finish<T>(op, result, {&a, &b},
                   [a, b, kind, same, out_shape, sa, sb](std::span<const T> g) mutable {
                     const bool need_a = a.requires_grad();
                     const bool need_b = b.requires_grad();
                     auto av = a.data();
                     auto bv = b.data();
                     std::span<T> ga = need_a ? a.grad() : std::span<T>{};
                     std::span<T> gb = need_b ? b.grad() : std::span<T>{};
                     auto step = [&](std::size_t i, std::size_t ia, std::size_t ib) {
                       const T gi = g[i];
                       switch (kind) {
                         case BinOp::kAdd:
                           if (need_a) ga[ia] += gi;
                           if (need_b) gb[ib] += gi;
                           break;
                         case BinOp::kSub:
                           if (need_a) ga[ia] += gi;
                           if (need_b) gb[ib] -= gi;
                           break;
                         case BinOp::kMul:
                           if (need_a) ga[ia] += gi * bv[ib];
                           if (need_b) gb[ib] += gi * av[ia];
                           break;
                         case BinOp::kDiv:
                           if (need_a) ga[ia] += gi / bv[ib];
                           if (need_b) gb[ib] -= gi * av[ia] / (bv[ib] * bv[ib]);
                           break;
                       }
                     };
                     if (same) {
                       for (std::size_t i = 0; i < g.size(); ++i) step(i, i, i);
                     } else {
                       for_each_broadcast(out_shape, sa, sb, step);
                     }
                   });
}

// Bilinear sampling table for one axis: source indices and weights.
struct AxisTaps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> w;
};

AxisTaps axis_taps(std::size_t in, std::size_t out, int factor) {
  AxisTaps taps;
  taps.lo.resize(out);
  taps.hi.resize(out);
  taps.w.resize(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) / factor - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    taps.lo[o] = lo;
    taps.hi[o] = std::min(lo + 1, in - 1);
    taps.w[o] = src - static_cast<double>(lo);
  }
  return taps;
}

// Output positions [lo, hi) whose input position o * stride + tap - pad lies in [0, extent).
std::pair<std::size_t, std::size_t> valid_taps(std::size_t extent, std::size_t out, std::size_t stride,
                                               std::size_t tap, std::size_t pad) {
  const auto off = static_cast<std::ptrdiff_t>(tap) - static_cast<std::ptrdiff_t>(pad);
  const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(extent) - 1 - off;
  if (last < 0) return {0, 0};
  const std::size_t lo = off >= 0 ? 0 : (static_cast<std::size_t>(-off) + stride - 1) / stride;
  const std::size_t hi = std::min(out, static_cast<std::size_t>(last) / stride + 1);
  return {std::min(lo, hi), hi};
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 int stride, int padding) {
  if (input.rank() != 4 || kernel.rank() != 4) {
    throw ShapeError("conv2d: expected NCHW input and OIKhKw kernel, got input " +
                     shape_str(input.shape()) + " and kernel " + shape_str(kernel.shape()));
  }
  if (stride < 1 || padding < 0) {
    throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");
  }
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t o = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != c) {
    throw ShapeError("conv2d: kernel input channels do not match input; input " +
                     shape_str(input.shape()) + ", kernel " + shape_str(kernel.shape()));
  }
  const auto s = static_cast<std::size_t>(stride);
  const auto p = static_cast<std::size_t>(padding);
  if (h + 2 * p < kh || w + 2 * p < kw) {
    throw ShapeError("conv2d: padded input " + shape_str(input.shape()) + " (padding " +
                     std::to_string(padding) + ") is smaller than kernel " +
                     shape_str(kernel.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != o)) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match kernel " +
                     shape_str(kernel.shape()));
  }
  const std::size_t ho = (h + 2 * p - kh) / s + 1;
  const std::size_t wo = (w + 2 * p - kw) / s + 1;
  const std::size_t rows = c * kh * kw;
  const std::size_t plane = ho * wo;
  const std::size_t cols = n * plane;

  auto im2col = [=](std::span<const T> x) {
    RowMat<T> col(rows, cols);
    for (std::size_t ci = 0; ci < c; ++ci) {
      for (std::size_t ki = 0; ki < kh; ++ki) {
        for (std::size_t kj = 0; kj < kw; ++kj) {
          const auto [xlo, xhi] = valid_taps(w, wo, s, kj, p);
          T* dst = col.data() + ((ci * kh + ki) * kw + kj) * cols;
          for (std::size_t ni = 0; ni < n; ++ni) {
            const T* src = x.data() + (ni * c + ci) * h * w;
            for (std::size_t oy = 0; oy < ho; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ki) -
                                        static_cast<std::ptrdiff_t>(p);
              T* row = dst + ni * plane + oy * wo;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                std::fill(row, row + wo, T(0));
                continue;
              }
              const T* in_row = src + static_cast<std::size_t>(iy) * w;
              std::fill(row, row + xlo, T(0));
              std::fill(row + xhi, row + wo, T(0));
              if (s == 1) {
                std::copy(in_row + xlo + kj - p, in_row + xhi + kj - p, row + xlo);
              } else {
                for (std::size_t ox = xlo; ox < xhi; ++ox) row[ox] = in_row[ox * s + kj - p];
              }
            }
          }
        }
      }
    }
    return col;
  };

  const RowMat<T> col = im2col(input.data());
  Eigen::Map<const RowMat<T>> wmat(kernel.data().data(), o, rows);
  RowMat<T> prod(o, cols);
  prod.noalias() = wmat * col;

  std::vector<T> out(n * o * plane);
  for (std::size_t ni = 0; ni < n; ++ni) {
    for (std::size_t oi = 0; oi < o; ++oi) {
      const T b = bias.defined() ? bias.data()[oi] : T(0);
      const T* src = prod.data() + oi * cols + ni * plane;
      T* dst = out.data() + (ni * o + oi) * plane;
      for (std::size_t k = 0; k < plane; ++k) dst[k] = src[k] + b;
    }
  }
  Tensor<T> result(Shape{n, o, ho, wo}, std::move(out));
  return finish<T>(
      "conv2d", result, {&input, &kernel, &bias},
      [=](std::span<const T> g) mutable {
        RowMat<T> gmat(o, cols);
        for (std::size_t ni = 0; ni < n; ++ni) {
          for (std::size_t oi = 0; oi < o; ++oi) {
            const T* src = g.data() + (ni * o + oi) * plane;
            std::copy(src, src + plane, gmat.data() + oi * cols + ni * plane);
          }
        }
        if (bias.defined() && bias.requires_grad()) {
          auto gb = bias.grad();
          for (std::size_t oi = 0; oi < o; ++oi) {
            T acc = T(0);
            const T* row = gmat.data() + oi * cols;
            for (std::size_t k = 0; k < cols; ++k) acc += row[k];
            gb[oi] += acc;
          }
        }
        if (kernel.requires_grad()) {
          const RowMat<T> col_again = im2col(input.data());
          Eigen::Map<RowMat<T>> gw(kernel.grad().data(), o, rows);
          gw.noalias() += gmat * col_again.transpose();
        }
        if (input.requires_grad()) {
          const RowMat<T> wt = Eigen::Map<const RowMat<T>>(kernel.data().data(), o, rows).transpose();
          RowMat<T> gcol(rows, cols);
          gcol.noalias() = wt * gmat;
          auto gx = input.grad();
          for (std::size_t ci = 0; ci < c; ++ci) {
            for (std::size_t ki = 0; ki < kh; ++ki) {
              for (std::size_t kj = 0; kj < kw; ++kj) {
                const auto [xlo, xhi] = valid_taps(w, wo, s, kj, p);
                const T* srcrow = gcol.data() + ((ci * kh + ki) * kw + kj) * cols;
                for (std::size_t ni = 0; ni < n; ++ni) {
                  T* dst = gx.data() + (ni * c + ci) * h * w;
                  for (std::size_t oy = 0; oy < ho; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ki) -
                                              static_cast<std::ptrdiff_t>(p);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    const T* grow = srcrow + ni * plane + oy * wo;
                    T* out_row = dst + static_cast<std::size_t>(iy) * w;
                    for (std::size_t ox = xlo; ox < xhi; ++ox) out_row[ox * s + kj - p] += grow[ox];
                  }
                }
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  if (!(slope >= T(0) && slope < T(1))) {
    throw std::invalid_argument("leaky_relu: slope must lie in [0, 1)");
  }
  return unary<T>(
      "leaky_relu", x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary<T>(
      "sigmoid", x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                     shape_str(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const std::size_t len = x.dim(axis);
  auto xv = x.data();
  std::vector<T> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      T mx = xv[base];
      for (std::size_t a = 1; a < len; ++a) mx = std::max(mx, xv[base + a * inner]);
      T sum = T(0);
      for (std::size_t a = 0; a < len; ++a) {
        const T e = std::exp(xv[base + a * inner] - mx);
        out[base + a * inner] = e;
        sum += e;
      }
      for (std::size_t a = 0; a < len; ++a) out[base + a * inner] /= sum;
    }
  }
  Tensor<T> result(x.shape(), std::move(out));
  return finish<T>("softmax", result, {&x}, [=](std::span<const T> g) mutable {
    if (!x.requires_grad()) return;
    auto gx = x.grad();
    auto y = result.data();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * len * inner + i;
        T dot = T(0);
        for (std::size_t a = 0; a < len; ++a) dot += g[base + a * inner] * y[base + a * inner];
        for (std::size_t a = 0; a < len; ++a) {
          const std::size_t k = base + a * inner;
          gx[k] += y[k] * (g[k] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x, std::string_view site) {
  auto xv = x.data();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (!(xv[i] > T(0))) {
      throw NumericError("log of non-positive value " + std::to_string(xv[i]) + " at " +
                         std::string(site) + " (flat index " + std::to_string(i) + ")");
    }
  }
  return unary<T>(
      "log", x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> clamp_min(const Tensor<T>& x, T floor) {
  return unary<T>(
      "clamp_min", x, [floor](T v) { return v > floor ? v : floor; },
      [floor](T v, T) { return v > floor ? T(1) : T(0); });
}

template <typename T>
Tensor<T> pow(const Tensor<T>& x, T exponent) {
  for (auto v : x.data()) {
    if (v < T(0)) throw NumericError("pow: negative base " + std::to_string(v));
  }
  return unary<T>(
      "pow", x, [exponent](T v) { return std::pow(v, exponent); },
      [exponent](T v, T) {
        if (v == T(0)) return exponent > T(1) ? T(0) : (exponent == T(1) ? T(1) : T(0));
        return exponent * std::pow(v, exponent - T(1));
      });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary<T>(
      "abs", x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(BinOp::kAdd, "add", a, b);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(BinOp::kSub, "sub", a, b);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(BinOp::kMul, "mul", a, b);
}
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(BinOp::kDiv, "div", a, b);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary<T>(
      "scale", x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  return unary<T>(
      "add_scalar", x, [value](T v) { return v + value; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x, const std::vector<std::size_t>& axes, bool keepdims) {
  const std::size_t rank = x.rank();
  std::vector<bool> reduced(rank, axes.empty());
  for (auto a : axes) {
    if (a >= rank) {
      throw ShapeError("reduce_sum: axis " + std::to_string(a) + " invalid for shape " +
                       shape_str(x.shape()));
    }
    reduced[a] = true;
  }
  Shape kept(rank);
  Shape out_shape;
  for (std::size_t d = 0; d < rank; ++d) {
    kept[d] = reduced[d] ? 1 : x.dim(d);
    if (!reduced[d]) out_shape.push_back(x.dim(d));
    else if (keepdims) out_shape.push_back(1);
  }
  // Walk the input in row-major order, mapping each element to its output
  // slot through strides that are zero on reduced axes.
  const auto so = broadcast_strides(kept, x.shape());
  const std::vector<std::size_t> zero(rank, 0);
  std::vector<T> out(shape_numel(kept), T(0));
  auto xv = x.data();
  for_each_broadcast(x.shape(), so, zero,
                     [&](std::size_t i, std::size_t io, std::size_t) { out[io] += xv[i]; });
  Tensor<T> result(out_shape, std::move(out));
  const Shape in_shape = x.shape();
  return finish<T>("reduce_sum", result, {&x}, [=](std::span<const T> g) mutable {
    if (!x.requires_grad()) return;
    auto gx = x.grad();
    for_each_broadcast(in_shape, so, zero,
                       [&](std::size_t i, std::size_t io, std::size_t) { gx[i] += g[io]; });
  });
}

template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& x, const std::vector<std::size_t>& axes, bool keepdims) {
  std::size_t count = 1;
  if (axes.empty()) {
    count = x.numel();
  } else {
    for (auto a : axes) count *= x.shape().at(a);
  }
  if (count == 0) throw ShapeError("reduce_mean over an empty extent");
  return scale(reduce_sum(x, axes, keepdims), T(1) / static_cast<T>(count));
}

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, int factor) {
  if (x.rank() != 4 || factor < 1) {
    throw ShapeError("upsample_bilinear: expected NCHW input and factor >= 1, got " +
                     shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = h * factor, wo = w * factor;
  const AxisTaps ty = axis_taps(h, ho, factor);
  const AxisTaps tx = axis_taps(w, wo, factor);
  auto xv = x.data();
  std::vector<T> out(n * c * ho * wo);
  for (std::size_t m = 0; m < n * c; ++m) {
    const T* src = xv.data() + m * h * w;
    T* dst = out.data() + m * ho * wo;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      const T wy = static_cast<T>(ty.w[oy]);
      const T* r0 = src + ty.lo[oy] * w;
      const T* r1 = src + ty.hi[oy] * w;
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const T wx = static_cast<T>(tx.w[ox]);
        const T top = r0[tx.lo[ox]] * (T(1) - wx) + r0[tx.hi[ox]] * wx;
        const T bot = r1[tx.lo[ox]] * (T(1) - wx) + r1[tx.hi[ox]] * wx;
        dst[oy * wo + ox] = top * (T(1) - wy) + bot * wy;
      }
    }
  }
  Tensor<T> result(Shape{n, c, ho, wo}, std::move(out));
  return finish<T>("upsample_bilinear", result, {&x}, [=](std::span<const T> g) mutable {
    if (!x.requires_grad()) return;
    auto gx = x.grad();
    for (std::size_t m = 0; m < n * c; ++m) {
      const T* gsrc = g.data() + m * ho * wo;
      T* dst = gx.data() + m * h * w;
      for (std::size_t oy = 0; oy < ho; ++oy) {
        const T wy = static_cast<T>(ty.w[oy]);
        T* r0 = dst + ty.lo[oy] * w;
        T* r1 = dst + ty.hi[oy] * w;
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const T wx = static_cast<T>(tx.w[ox]);
          const T gv = gsrc[oy * wo + ox];
          r0[tx.lo[ox]] += gv * (T(1) - wy) * (T(1) - wx);
          r0[tx.hi[ox]] += gv * (T(1) - wy) * wx;
          r1[tx.lo[ox]] += gv * wy * (T(1) - wx);
          r1[tx.hi[ox]] += gv * wy * wx;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor<T> result(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  return finish<T>("reshape", result, {&x}, [x](std::span<const T> g) mutable {
    if (!x.requires_grad()) return;
    auto gx = x.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
  return reshape(x, Shape{x.numel()});
}

#define ESSUDA_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);   \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                          \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                   \
  template Tensor<T> log(const Tensor<T>&, std::string_view);                                  \
  template Tensor<T> clamp_min(const Tensor<T>&, T);                                           \
  template Tensor<T> pow(const Tensor<T>&, T);                                                 \
  template Tensor<T> abs(const Tensor<T>&);                                                    \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                               \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                          \
  template Tensor<T> reduce_sum(const Tensor<T>&, const std::vector<std::size_t>&, bool);      \
  template Tensor<T> reduce_mean(const Tensor<T>&, const std::vector<std::size_t>&, bool);     \
  template Tensor<T> upsample_bilinear(const Tensor<T>&, int);                                 \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
  template Tensor<T> flatten(const Tensor<T>&);

ESSUDA_INSTANTIATE_OPS(float)
ESSUDA_INSTANTIATE_OPS(double)

#undef ESSUDA_INSTANTIATE_OPS

}  // namespace essuda::ad
