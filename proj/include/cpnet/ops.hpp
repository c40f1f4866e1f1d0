#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cpnet/tensor.hpp"

namespace cpnet {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  std::int64_t channels, height, width;  // image side
  std::int64_t kernel, stride, padding;
  std::int64_t out_height, out_width;    // column-grid side
};

// col[(c*K + ky)*K + kx][oy*Wo + ox] = img[c][oy*s - p + ky][ox*s - p + kx], zero outside.
template <class T>
void im2col(const T* img, const ConvGeometry& g, T* col) {
  const std::int64_t K = g.kernel;
  const std::int64_t cols = g.out_height * g.out_width;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    const T* plane = img + c * g.height * g.width;
    for (std::int64_t ky = 0; ky < K; ++ky) {
      for (std::int64_t kx = 0; kx < K; ++kx) {
        T* row = col + ((c * K + ky) * K + kx) * cols;
        for (std::int64_t oy = 0; oy < g.out_height; ++oy) {
          const std::int64_t iy = oy * g.stride - g.padding + ky;
          T* dst = row + oy * g.out_width;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_width, T(0));
            continue;
          }
          const T* src = plane + iy * g.width;
          for (std::int64_t ox = 0; ox < g.out_width; ++ox) {
            const std::int64_t ix = ox * g.stride - g.padding + kx;
            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into the image.
template <class T>
void col2im(const T* col, const ConvGeometry& g, T* img) {
  const std::int64_t K = g.kernel;
  const std::int64_t cols = g.out_height * g.out_width;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    T* plane = img + c * g.height * g.width;
    for (std::int64_t ky = 0; ky < K; ++ky) {
      for (std::int64_t kx = 0; kx < K; ++kx) {
        const T* row = col + ((c * K + ky) * K + kx) * cols;
        for (std::int64_t oy = 0; oy < g.out_height; ++oy) {
          const std::int64_t iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) continue;
          const T* src = row + oy * g.out_width;
          T* dst = plane + iy * g.width;
          for (std::int64_t ox = 0; ox < g.out_width; ++ox) {
            const std::int64_t ix = ox * g.stride - g.padding + kx;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <class T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op, const char* what) {
  if (!t.defined()) fail(ErrorKind::shape, std::string(op) + ": " + what + " is undefined");
  if (t.rank() != rank) {
    fail(ErrorKind::shape, std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                               ", got shape " + shape_str(t.shape()));
  }
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::shape,
         std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <class T>
void check_bias(const Tensor<T>& bias, std::int64_t channels, const char* op) {
  if (!bias.defined()) return;
  if (bias.rank() != 1 || bias.dim(0) != channels) {
    fail(ErrorKind::shape, std::string(op) + ": bias shape " + shape_str(bias.shape()) + " does not match " +
                               std::to_string(channels) + " output channels");
  }
}

template <class T>
void check_conv_params(std::int64_t stride, std::int64_t padding, const char* op) {
  if (stride < 1) fail(ErrorKind::value, std::string(op) + ": stride must be >= 1");
  if (padding < 0) fail(ErrorKind::value, std::string(op) + ": padding must be >= 0");
}

}  // namespace detail

// Cross-correlation. input [B, Cin, H, W], weight [Cout, Cin, K, K] with odd K,
// bias [Cout] or undefined.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, std::int64_t stride,
                 std::int64_t padding) {
  constexpr const char* op = "conv2d";
  detail::require_rank(input, 4, op, "input");
  detail::require_rank(weight, 4, op, "weight");
  detail::check_conv_params<T>(stride, padding, op);
  const std::int64_t B = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::int64_t Cout = weight.dim(0), K = weight.dim(2);
  if (weight.dim(1) != Cin) {
    fail(ErrorKind::shape, "conv2d: weight expects " + std::to_string(weight.dim(1)) +
                               " input channels but input has " + std::to_string(Cin) + " (input " +
                               shape_str(input.shape()) + ", weight " + shape_str(weight.shape()) + ")");
  }
  if (weight.dim(3) != K || K % 2 == 0) {
    fail(ErrorKind::shape, "conv2d: kernel must be square with odd size, got " + shape_str(weight.shape()));
  }
  detail::check_bias(bias, Cout, op);
  const std::int64_t span_h = H + 2 * padding - K, span_w = W + 2 * padding - K;
  if (span_h < 0 || span_w < 0 || span_h % stride != 0 || span_w % stride != 0) {
    fail(ErrorKind::shape, "conv2d: output size is not integral for input " + std::to_string(H) + "x" +
                               std::to_string(W) + ", K=" + std::to_string(K) + ", stride=" +
                               std::to_string(stride) + ", padding=" + std::to_string(padding));
  }
  const detail::ConvGeometry g{Cin, H, W, K, stride, padding, span_h / stride + 1, span_w / stride + 1};
  const std::int64_t cols = g.out_height * g.out_width, rows = Cin * K * K;

  std::vector<T> out(static_cast<std::size_t>(B * Cout * cols));
  std::vector<T> col(static_cast<std::size_t>(rows * cols));
  detail::ConstMatMap<T> wmat(weight.data().data(), Cout, rows);
  detail::MatMap<T> colmat(col.data(), rows, cols);
  for (std::int64_t b = 0; b < B; ++b) {
    detail::im2col(input.data().data() + b * Cin * H * W, g, col.data());
    detail::MatMap<T> o(out.data() + b * Cout * cols, Cout, cols);
    o.noalias() = wmat * colmat;
    if (bias.defined()) {
      for (std::int64_t c = 0; c < Cout; ++c) o.row(c).array() += bias.data()[c];
    }
  }

  auto x = input.impl_ptr();
  auto w = weight.impl_ptr();
  auto bi = bias.defined() ? bias.impl_ptr() : nullptr;
  return record_op<T>(
      op, Shape{B, Cout, g.out_height, g.out_width}, std::move(out), {input, weight, bias},
      [x, w, bi, g, B, Cout, rows, cols](std::span<const T> gout) {
        std::vector<T> col(static_cast<std::size_t>(rows * cols));
        detail::MatMap<T> colmat(col.data(), rows, cols);
        detail::ConstMatMap<T> wmat(w->data.data(), Cout, rows);
        const std::int64_t in_size = g.channels * g.height * g.width;
        for (std::int64_t b = 0; b < B; ++b) {
          detail::ConstMatMap<T> go(gout.data() + b * Cout * cols, Cout, cols);
          if (w->requires_grad) {
            detail::im2col(x->data.data() + b * in_size, g, col.data());
            detail::MatMap<T> gw(detail::grad_buffer(*w).data(), Cout, rows);
            gw.noalias() += go * colmat.transpose();
          }
          if (bi && bi->requires_grad) {
            auto gb = detail::grad_buffer(*bi);
            // Plain loop: Eigen's vectorised sum peels by address, which would make
            // the reduction order depend on where the buffer happens to live.
            for (std::int64_t c = 0; c < Cout; ++c) {
              const T* row = gout.data() + (b * Cout + c) * cols;
              T acc = 0;
              for (std::int64_t i = 0; i < cols; ++i) acc += row[i];
              gb[c] += acc;
            }
          }
          if (x->requires_grad) {
            colmat.noalias() = wmat.transpose() * go;
            detail::col2im(col.data(), g, detail::grad_buffer(*x).data() + b * in_size);
          }
        }
      });
}

// Transposed convolution (adjoint of conv2d). input [B, Cin, H, W], weight
// [Cin, Cout, K, K], output [B, Cout, (H-1)*stride - 2*padding + K, ...].
template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::int64_t stride, std::int64_t padding) {
  constexpr const char* op = "conv_transpose2d";
  detail::require_rank(input, 4, op, "input");
  detail::require_rank(weight, 4, op, "weight");
  detail::check_conv_params<T>(stride, padding, op);
  const std::int64_t B = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::int64_t Cout = weight.dim(1), K = weight.dim(2);
  if (weight.dim(0) != Cin) {
    fail(ErrorKind::shape, "conv_transpose2d: weight expects " + std::to_string(weight.dim(0)) +
                               " input channels but input has " + std::to_string(Cin) + " (input " +
                               shape_str(input.shape()) + ", weight " + shape_str(weight.shape()) + ")");
  }
  if (weight.dim(3) != K) {
    fail(ErrorKind::shape, "conv_transpose2d: kernel must be square, got " + shape_str(weight.shape()));
  }
  detail::check_bias(bias, Cout, op);
  const std::int64_t Ho = (H - 1) * stride - 2 * padding + K, Wo = (W - 1) * stride - 2 * padding + K;
  if (Ho <= 0 || Wo <= 0) {
    fail(ErrorKind::shape, "conv_transpose2d: non-positive output size for input " + shape_str(input.shape()));
  }
  // Image side of the geometry is the (larger) output; the column grid is the input.
  const detail::ConvGeometry g{Cout, Ho, Wo, K, stride, padding, H, W};
  const std::int64_t cols = H * W, rows = Cout * K * K;

  std::vector<T> out(static_cast<std::size_t>(B * Cout * Ho * Wo), T(0));
  std::vector<T> col(static_cast<std::size_t>(rows * cols));
  detail::ConstMatMap<T> wmat(weight.data().data(), Cin, rows);
  detail::MatMap<T> colmat(col.data(), rows, cols);
  for (std::int64_t b = 0; b < B; ++b) {
    detail::ConstMatMap<T> xb(input.data().data() + b * Cin * cols, Cin, cols);
    colmat.noalias() = wmat.transpose() * xb;
    T* ob = out.data() + b * Cout * Ho * Wo;
    detail::col2im(col.data(), g, ob);
    if (bias.defined()) {
      for (std::int64_t c = 0; c < Cout; ++c) {
        const T bv = bias.data()[c];
        for (std::int64_t i = 0; i < Ho * Wo; ++i) ob[c * Ho * Wo + i] += bv;
      }
    }
  }

  auto x = input.impl_ptr();
  auto w = weight.impl_ptr();
  auto bi = bias.defined() ? bias.impl_ptr() : nullptr;
  return record_op<T>(
      op, Shape{B, Cout, Ho, Wo}, std::move(out), {input, weight, bias},
      [x, w, bi, g, B, Cin, Cout, rows, cols](std::span<const T> gout) {
        std::vector<T> col(static_cast<std::size_t>(rows * cols));
        detail::MatMap<T> colmat(col.data(), rows, cols);
        detail::ConstMatMap<T> wmat(w->data.data(), Cin, rows);
        const std::int64_t out_size = Cout * g.height * g.width;
        for (std::int64_t b = 0; b < B; ++b) {
          const T* gob = gout.data() + b * out_size;
          detail::im2col(gob, g, col.data());
          if (w->requires_grad) {
            detail::ConstMatMap<T> xb(x->data.data() + b * Cin * cols, Cin, cols);
            detail::MatMap<T> gw(detail::grad_buffer(*w).data(), Cin, rows);
            gw.noalias() += xb * colmat.transpose();
          }
          if (x->requires_grad) {
            detail::MatMap<T> gx(detail::grad_buffer(*x).data() + b * Cin * cols, Cin, cols);
            gx.noalias() += wmat * colmat;
          }
          if (bi && bi->requires_grad) {
            auto gb = detail::grad_buffer(*bi);
            const std::int64_t plane = g.height * g.width;
            for (std::int64_t c = 0; c < Cout; ++c) {
              T acc = 0;
              for (std::int64_t i = 0; i < plane; ++i) acc += gob[c * plane + i];
              gb[c] += acc;
            }
          }
        }
      });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  auto xi = x.impl_ptr();
  return record_op<T>("relu", x.shape(), std::move(out), {x}, [xi](std::span<const T> g) {
    auto gx = detail::grad_buffer(*xi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xi->data[i] > T(0)) gx[i] += g[i];
    }
  });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = std::tanh(v);
  auto xi = x.impl_ptr();
  // The backward rule needs tanh(x); recompute it rather than keep a copy alive.
  return record_op<T>("tanh", x.shape(), std::move(out), {x}, [xi](std::span<const T> g) {
    auto gx = detail::grad_buffer(*xi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T y = std::tanh(xi->data[i]);
      gx[i] += g[i] * (T(1) - y * y);
    }
  });
}

// Non-overlapping max pooling over window x window blocks. Ties resolve to the
// first element in row-major window order.
template <class T>
Tensor<T> maxpool2d(const Tensor<T>& x, std::int64_t window = 2) {
  detail::require_rank(x, 4, "maxpool2d", "input");
  if (window < 1) fail(ErrorKind::value, "maxpool2d: window must be >= 1");
  const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % window != 0 || W % window != 0) {
    fail(ErrorKind::shape, "maxpool2d: spatial dims " + std::to_string(H) + "x" + std::to_string(W) +
                               " are not divisible by " + std::to_string(window));
  }
  const std::int64_t Ho = H / window, Wo = W / window;
  std::vector<T> out(static_cast<std::size_t>(B * C * Ho * Wo));
  std::vector<std::int64_t> argmax(out.size());
  const T* src = x.data().data();
  for (std::int64_t plane = 0; plane < B * C; ++plane) {
    const T* p = src + plane * H * W;
    for (std::int64_t oy = 0; oy < Ho; ++oy) {
      for (std::int64_t ox = 0; ox < Wo; ++ox) {
        std::int64_t best = (oy * window) * W + ox * window;
        for (std::int64_t dy = 0; dy < window; ++dy) {
          for (std::int64_t dx = 0; dx < window; ++dx) {
            const std::int64_t idx = (oy * window + dy) * W + ox * window + dx;
            if (p[idx] > p[best]) best = idx;
          }
        }
        const auto o = static_cast<std::size_t>((plane * Ho + oy) * Wo + ox);
        out[o] = p[best];
        argmax[o] = plane * H * W + best;
      }
    }
  }
  auto xi = x.impl_ptr();
  return record_op<T>("maxpool2d", Shape{B, C, Ho, Wo}, std::move(out), {x},
                      [xi, argmax = std::move(argmax)](std::span<const T> g) {
                        auto gx = detail::grad_buffer(*xi);
                        for (std::size_t i = 0; i < g.size(); ++i) gx[argmax[i]] += g[i];
                      });
}

// One contiguous channel range copied from a source tensor into the output.
struct ChannelRoute {
  std::size_t source;
  std::int64_t src_begin;
  std::int64_t dst_begin;
  std::int64_t count;
};

// Builds a [B, out_channels, H, W] tensor from channel ranges of the sources;
// channels not covered by any route are zero. All sources share B, H and W.
// Gradients flow back along the same routes.
template <class T>
Tensor<T> route_channels(const std::vector<Tensor<T>>& sources, std::int64_t out_channels,
                         const std::vector<ChannelRoute>& routes) {
  if (sources.empty()) fail(ErrorKind::shape, "route_channels: no sources");
  for (const auto& s : sources) detail::require_rank(s, 4, "route_channels", "source");
  const std::int64_t B = sources[0].dim(0), H = sources[0].dim(2), W = sources[0].dim(3);
  for (const auto& s : sources) {
    if (s.dim(0) != B || s.dim(2) != H || s.dim(3) != W) {
      fail(ErrorKind::shape, "route_channels: sources disagree on batch/spatial dims: " +
                                 shape_str(sources[0].shape()) + " vs " + shape_str(s.shape()));
    }
  }
  if (out_channels <= 0) fail(ErrorKind::shape, "route_channels: output needs at least one channel");
  for (const auto& r : routes) {
    if (r.source >= sources.size() || r.count < 0 || r.src_begin < 0 || r.dst_begin < 0 ||
        r.src_begin + r.count > sources[r.source].dim(1) || r.dst_begin + r.count > out_channels) {
      fail(ErrorKind::shape, "route_channels: channel route out of range");
    }
  }
  const std::int64_t plane = H * W;
  std::vector<T> out(static_cast<std::size_t>(B * out_channels * plane), T(0));
  for (const auto& r : routes) {
    const auto& src = sources[r.source];
    const std::int64_t Cs = src.dim(1);
    for (std::int64_t b = 0; b < B; ++b) {
      const T* from = src.data().data() + (b * Cs + r.src_begin) * plane;
      T* to = out.data() + (b * out_channels + r.dst_begin) * plane;
      std::copy(from, from + r.count * plane, to);
    }
  }
  std::vector<std::shared_ptr<detail::TensorImpl<T>>> impls;
  for (const auto& s : sources) impls.push_back(s.impl_ptr());
  return record_op<T>("route_channels", Shape{B, out_channels, H, W}, std::move(out), sources,
                      [impls, routes, B, out_channels, plane](std::span<const T> g) {
                        for (const auto& r : routes) {
                          auto& src = *impls[r.source];
                          if (!src.requires_grad) continue;
                          const std::int64_t Cs = src.shape[1];
                          auto gs = detail::grad_buffer(src);
                          for (std::int64_t b = 0; b < B; ++b) {
                            const T* from = g.data() + (b * out_channels + r.dst_begin) * plane;
                            T* to = gs.data() + (b * Cs + r.src_begin) * plane;
                            for (std::int64_t i = 0; i < r.count * plane; ++i) to[i] += from[i];
                          }
                        }
                      });
}

template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) fail(ErrorKind::shape, "concat_channels: no inputs");
  std::vector<ChannelRoute> routes;
  std::int64_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    detail::require_rank(parts[i], 4, "concat_channels", "part");
    routes.push_back({i, 0, offset, parts[i].dim(1)});
    offset += parts[i].dim(1);
  }
  return route_channels(parts, offset, routes);
}

template <class T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& x, const std::vector<std::int64_t>& sizes) {
  detail::require_rank(x, 4, "split_channels", "input");
  std::int64_t total = 0;
  for (auto s : sizes) {
    if (s <= 0) fail(ErrorKind::shape, "split_channels: sizes must be positive");
    total += s;
  }
  if (total != x.dim(1)) {
    fail(ErrorKind::shape, "split_channels: sizes sum to " + std::to_string(total) + " but input has " +
                               std::to_string(x.dim(1)) + " channels");
  }
  std::vector<Tensor<T>> parts;
  std::int64_t offset = 0;
  for (auto s : sizes) {
    parts.push_back(route_channels<T>({x}, s, {{0, offset, 0, s}}));
    offset += s;
  }
  return parts;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
  auto ai = a.impl_ptr(), bi = b.impl_ptr();
  return record_op<T>("add", a.shape(), std::move(out), {a, b}, [ai, bi](std::span<const T> g) {
    for (auto* t : {ai.get(), bi.get()}) {
      if (!t->requires_grad) continue;
      auto gt = detail::grad_buffer(*t);
      for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<T> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
  auto ai = a.impl_ptr(), bi = b.impl_ptr();
  return record_op<T>("sub", a.shape(), std::move(out), {a, b}, [ai, bi](std::span<const T> g) {
    if (ai->requires_grad) {
      auto ga = detail::grad_buffer(*ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (bi->requires_grad) {
      auto gb = detail::grad_buffer(*bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
  auto ai = a.impl_ptr(), bi = b.impl_ptr();
  return record_op<T>("mul", a.shape(), std::move(out), {a, b}, [ai, bi](std::span<const T> g) {
    if (ai->requires_grad) {
      auto ga = detail::grad_buffer(*ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bi->data[i];
    }
    if (bi->requires_grad) {
      auto gb = detail::grad_buffer(*bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ai->data[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  auto xi = x.impl_ptr();
  return record_op<T>("scale", x.shape(), std::move(out), {x}, [xi, factor](std::span<const T> g) {
    auto gx = detail::grad_buffer(*xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

// Sum of all elements, accumulated in index order.
template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (auto v : x.data()) acc += v;
  auto xi = x.impl_ptr();
  return record_op<T>("sum", Shape{}, std::vector<T>{acc}, {x}, [xi](std::span<const T> g) {
    auto gx = detail::grad_buffer(*xi);
    for (auto& v : gx) v += g[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

}  // namespace cpnet
