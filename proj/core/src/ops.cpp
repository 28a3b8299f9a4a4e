// Copyright 2026 The rstisp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "rstisp/ops.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "rstisp/errors.hpp"

namespace rstisp::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

template <class F>
Tensor map_values(const Tensor& x, F f) {
  Tensor out(x.shape());
  const double* in = x.data();
  double* o = out.data();
  for (std::int64_t i = 0; i < x.size(); ++i) o[i] = f(in[i]);
  return out;
}

// Unary op with derivative d(out)/d(in) computed from (in, out).
template <class F, class D>
Var unary(const Var& x, F f, D dfdx) {
  Tensor out = map_values(x.value(), f);
  return ag::make_result(std::move(out), {x}, [dfdx](const Tensor& g, const ag::Node& self) {
    const Tensor& in = self.parent_value(0);
    Tensor dx(in.shape());
    for (std::int64_t i = 0; i < in.size(); ++i) dx[i] = g[i] * dfdx(in[i], self.value[i]);
    return std::vector<Tensor>{std::move(dx)};
  });
}

void require_same(const Var& a, const Var& b, const char* op) {
  expect_same_shape(a.value(), b.value(), op);
}

void require_rank4(const Var& x, const char* op) { expect_rank(x.value(), 4, op); }

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out = a.value();
  out.add_(b.value());
  return ag::make_result(std::move(out), {a, b}, [](const Tensor& g, const ag::Node& self) {
    return std::vector<Tensor>{self.parent_requires_grad(0) ? g : Tensor(),
                               self.parent_requires_grad(1) ? g : Tensor()};
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  Tensor out = a.value();
  out.add_scaled_(b.value(), -1.0);
  return ag::make_result(std::move(out), {a, b}, [](const Tensor& g, const ag::Node& self) {
    Tensor gb;
    if (self.parent_requires_grad(1)) {
      gb = g;
      gb.scale_(-1.0);
    }
    return std::vector<Tensor>{self.parent_requires_grad(0) ? g : Tensor(), std::move(gb)};
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return ag::make_result(std::move(out), {a, b}, [](const Tensor& g, const ag::Node& self) {
    Tensor ga, gb;
    const Tensor& av = self.parent_value(0);
    const Tensor& bv = self.parent_value(1);
    if (self.parent_requires_grad(0)) {
      ga = Tensor(av.shape());
      for (std::int64_t i = 0; i < g.size(); ++i) ga[i] = g[i] * bv[i];
    }
    if (self.parent_requires_grad(1)) {
      gb = Tensor(bv.shape());
      for (std::int64_t i = 0; i < g.size(); ++i) gb[i] = g[i] * av[i];
    }
    return std::vector<Tensor>{std::move(ga), std::move(gb)};
  });
}

Var div(const Var& a, const Var& b) {
  require_same(a, b, "div");
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
  return ag::make_result(std::move(out), {a, b}, [](const Tensor& g, const ag::Node& self) {
    Tensor ga, gb;
    const Tensor& bv = self.parent_value(1);
    if (self.parent_requires_grad(0)) {
      ga = Tensor(bv.shape());
      for (std::int64_t i = 0; i < g.size(); ++i) ga[i] = g[i] / bv[i];
    }
    if (self.parent_requires_grad(1)) {
      gb = Tensor(bv.shape());
      for (std::int64_t i = 0; i < g.size(); ++i) gb[i] = -g[i] * self.value[i] / bv[i];
    }
    return std::vector<Tensor>{std::move(ga), std::move(gb)};
  });
}

Var neg(const Var& x) { return mul_scalar(x, -1.0); }

Var add_scalar(const Var& x, double s) {
  return unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var mul_scalar(const Var& x, double s) {
  return unary(x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Var pow_scalar(const Var& x, double p) {
  return unary(
      x, [p](double v) { return std::pow(v, p); },
      // The derivative at 0 is taken as 0 when p < 1 (it would be infinite).
      [p](double v, double) { return v == 0.0 && p < 1.0 ? 0.0 : p * std::pow(v, p - 1.0); });
}

Var square(const Var& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var abs(const Var& x) {
  return unary(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var relu(const Var& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var sigmoid(const Var& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& x) {
  return unary(
      x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return ag::make_result(Tensor::scalar(s), {x}, [](const Tensor& g, const ag::Node& self) {
    return std::vector<Tensor>{Tensor(self.parent_value(0).shape(), g.item())};
  });
}

Var mean(const Var& x) {
  const auto n = x.value().size();
  if (n == 0) throw ContractError("mean of empty tensor");
  return mul_scalar(sum(x), 1.0 / static_cast<double>(n));
}

Var mean_spatial(const Var& x) {
  require_rank4(x, "mean_spatial");
  const auto B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (HW == 0) throw ContractError("mean_spatial: zero spatial extent");
  Tensor out({B, C});
  const double* in = x.value().data();
  for (std::int64_t bc = 0; bc < B * C; ++bc) {
    double s = 0.0;
    for (std::int64_t p = 0; p < HW; ++p) s += in[bc * HW + p];
    out[bc] = s / static_cast<double>(HW);
  }
  return ag::make_result(std::move(out), {x}, [HW](const Tensor& g, const ag::Node& self) {
    Tensor dx(self.parent_value(0).shape());
    const double inv = 1.0 / static_cast<double>(HW);
    for (std::int64_t bc = 0; bc < g.size(); ++bc) {
      for (std::int64_t p = 0; p < HW; ++p) dx[bc * HW + p] = g[bc] * inv;
    }
    return std::vector<Tensor>{std::move(dx)};
  });
}

Var mean_per_sample(const Var& x) {
  const auto B = x.dim(0);
  const auto per = x.value().size() / std::max<std::int64_t>(B, 1);
  if (per == 0) throw ContractError("mean_per_sample: empty samples");
  Tensor out({B});
  for (std::int64_t b = 0; b < B; ++b) {
    double s = 0.0;
    for (std::int64_t i = 0; i < per; ++i) s += x.value()[b * per + i];
    out[b] = s / static_cast<double>(per);
  }
  return ag::make_result(std::move(out), {x}, [per](const Tensor& g, const ag::Node& self) {
    Tensor dx(self.parent_value(0).shape());
    for (std::int64_t b = 0; b < g.size(); ++b) {
      for (std::int64_t i = 0; i < per; ++i) dx[b * per + i] = g[b] / static_cast<double>(per);
    }
    return std::vector<Tensor>{std::move(dx)};
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return ag::make_result(std::move(out), {x}, [](const Tensor& g, const ag::Node& self) {
    return std::vector<Tensor>{g.reshaped(self.parent_value(0).shape())};
  });
}

Var concat_channels(std::span<const Var> xs) {
  if (xs.empty()) throw ContractError("concat_channels: no inputs");
  const auto& s0 = xs[0].shape();
  if (s0.size() != 4) throw ContractError("concat_channels: expected rank 4, got " + shape_to_string(s0));
  const auto B = s0[0], H = s0[2], W = s0[3];
  std::int64_t C = 0;
  std::vector<std::int64_t> widths;
  for (const auto& x : xs) {
    const auto& s = x.shape();
    if (s.size() != 4 || s[0] != B || s[2] != H || s[3] != W) {
      throw ContractError("concat_channels: shape " + shape_to_string(s) + " incompatible with " +
                          shape_to_string(s0));
    }
    widths.push_back(s[1]);
    C += s[1];
  }
  const auto HW = H * W;
  Tensor out({B, C, H, W});
  for (std::int64_t b = 0; b < B; ++b) {
    std::int64_t c0 = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const double* src = xs[k].value().data() + b * widths[k] * HW;
      std::copy(src, src + widths[k] * HW, out.data() + (b * C + c0) * HW);
      c0 += widths[k];
    }
  }
  std::vector<Var> parents(xs.begin(), xs.end());
  return ag::make_result(std::move(out), std::move(parents),
                         [widths, B, C, HW](const Tensor& g, const ag::Node& self) {
                           std::vector<Tensor> grads(widths.size());
                           std::int64_t c0 = 0;
                           for (std::size_t k = 0; k < widths.size(); ++k) {
                             if (self.parent_requires_grad(k)) {
                               Tensor gk(self.parent_value(k).shape());
                               for (std::int64_t b = 0; b < B; ++b) {
                                 const double* src = g.data() + (b * C + c0) * HW;
                                 std::copy(src, src + widths[k] * HW, gk.data() + b * widths[k] * HW);
                               }
                               grads[k] = std::move(gk);
                             }
                             c0 += widths[k];
                           }
                           return grads;
                         });
}

Var slice_channels(const Var& x, std::int64_t start, std::int64_t count) {
  require_rank4(x, "slice_channels");
  const auto B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (start < 0 || count < 0 || start + count > C) {
    throw ContractError("slice_channels: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                        ") outside " + std::to_string(C) + " channels");
  }
  Tensor out({B, count, x.dim(2), x.dim(3)});
  for (std::int64_t b = 0; b < B; ++b) {
    const double* src = x.value().data() + (b * C + start) * HW;
    std::copy(src, src + count * HW, out.data() + b * count * HW);
  }
  return ag::make_result(std::move(out), {x}, [B, C, HW, start, count](const Tensor& g, const ag::Node& self) {
    Tensor dx(self.parent_value(0).shape());
    for (std::int64_t b = 0; b < B; ++b) {
      const double* src = g.data() + b * count * HW;
      std::copy(src, src + count * HW, dx.data() + (b * C + start) * HW);
    }
    return std::vector<Tensor>{std::move(dx)};
  });
}

Var slice_cols(const Var& x, std::int64_t start, std::int64_t count) {
  expect_rank(x.value(), 2, "slice_cols");
  const auto B = x.dim(0), N = x.dim(1);
  if (start < 0 || count < 0 || start + count > N) {
    throw ContractError("slice_cols: range outside " + std::to_string(N) + " columns");
  }
  Tensor out({B, count});
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t j = 0; j < count; ++j) out[b * count + j] = x.value()[b * N + start + j];
  }
  return ag::make_result(std::move(out), {x}, [B, N, start, count](const Tensor& g, const ag::Node& self) {
    Tensor dx(self.parent_value(0).shape());
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t j = 0; j < count; ++j) dx[b * N + start + j] = g[b * count + j];
    }
    return std::vector<Tensor>{std::move(dx)};
  });
}

namespace {

struct ConvGeom {
  std::int64_t cin, h, w, k, stride, pad, hout, wout;
  std::int64_t rows() const { return cin * k * k; }
  std::int64_t cols() const { return hout * wout; }
};

// Columns of one sample land in a row-major rows() x ld block starting at `cols`;
// ld >= cols() lets several samples share one wide matrix.
void im2col(const double* x, const ConvGeom& g, double* cols, std::int64_t ld) {
  for (std::int64_t c = 0; c < g.cin; ++c) {
    for (std::int64_t ki = 0; ki < g.k; ++ki) {
      for (std::int64_t kj = 0; kj < g.k; ++kj) {
        double* row = cols + ((c * g.k + ki) * g.k + kj) * ld;
        // Output columns whose input column is inside the image.
        const std::int64_t lo = std::clamp<std::int64_t>((g.pad - kj + g.stride - 1) / g.stride, 0, g.wout);
        const std::int64_t hi = std::clamp<std::int64_t>((g.w + g.pad - kj + g.stride - 1) / g.stride, lo, g.wout);
        for (std::int64_t oh = 0; oh < g.hout; ++oh) {
          const std::int64_t ih = oh * g.stride - g.pad + ki;
          double* dst = row + oh * g.wout;
          if (ih < 0 || ih >= g.h) {
            std::fill(dst, dst + g.wout, 0.0);
            continue;
          }
          const double* src = x + (c * g.h + ih) * g.w - g.pad + kj;
          std::fill(dst, dst + lo, 0.0);
          if (g.stride == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (std::int64_t ow = lo; ow < hi; ++ow) dst[ow] = src[ow * g.stride];
          }
          std::fill(dst + hi, dst + g.wout, 0.0);
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvGeom& g, double* x, std::int64_t ld) {
  for (std::int64_t c = 0; c < g.cin; ++c) {
    for (std::int64_t ki = 0; ki < g.k; ++ki) {
      for (std::int64_t kj = 0; kj < g.k; ++kj) {
        const double* row = cols + ((c * g.k + ki) * g.k + kj) * ld;
        const std::int64_t lo = std::clamp<std::int64_t>((g.pad - kj + g.stride - 1) / g.stride, 0, g.wout);
        const std::int64_t hi = std::clamp<std::int64_t>((g.w + g.pad - kj + g.stride - 1) / g.stride, lo, g.wout);
        for (std::int64_t oh = 0; oh < g.hout; ++oh) {
          const std::int64_t ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.h) continue;
          double* dst = x + (c * g.h + ih) * g.w - g.pad + kj;
          const double* src = row + oh * g.wout;
          for (std::int64_t ow = lo; ow < hi; ++ow) dst[ow * g.stride] += src[ow];
        }
      }
    }
  }
}

// Samples per GEMM: small feature maps are batched so the product stays wide.
std::int64_t conv_chunk(const ConvGeom& g, std::int64_t B) {
  constexpr std::int64_t kTargetCols = 1024;
  return std::clamp<std::int64_t>(kTargetCols / g.cols(), 1, B);
}

// Reused per thread; large fresh buffers cost more in page faults than the GEMM.
double* workspace(std::size_t slot, std::size_t n) {
  thread_local AlignedVector buffers[2];
  auto& buf = buffers[slot];
  if (buf.size() < n) buf.resize(n);
  return buf.data();
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  require_rank4(x, "conv2d input");
  expect_rank(weight.value(), 4, "conv2d weight");
  const auto B = x.dim(0);
  const auto cout = weight.dim(0);
  ConvGeom geo{x.dim(1), x.dim(2), x.dim(3), weight.dim(2), stride, pad, 0, 0};
  if (weight.dim(1) != geo.cin || weight.dim(3) != geo.k) {
    throw ContractError("conv2d: weight " + shape_to_string(weight.shape()) + " incompatible with input " +
                        shape_to_string(x.shape()));
  }
  if (stride < 1 || pad < 0) throw ContractError("conv2d: invalid stride/pad");
  geo.hout = (geo.h + 2 * pad - geo.k) / stride + 1;
  geo.wout = (geo.w + 2 * pad - geo.k) / stride + 1;
  if (geo.hout <= 0 || geo.wout <= 0) {
    throw ContractError("conv2d: input " + shape_to_string(x.shape()) + " too small for kernel " +
                        std::to_string(geo.k));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.value().size() != cout) throw ContractError("conv2d: bias length mismatch");

  Tensor out({B, cout, geo.hout, geo.wout});
  const auto in_stride = geo.cin * geo.h * geo.w;
  const auto out_stride = cout * geo.cols();
  const auto chunk = conv_chunk(geo, B);
  ConstMatMap wmat(weight.value().data(), cout, geo.rows());
  for (std::int64_t b0 = 0; b0 < B; b0 += chunk) {
    const auto nb = std::min(chunk, B - b0);
    const auto n = nb * geo.cols();
    double* cols = workspace(0, static_cast<std::size_t>(geo.rows() * n));
    for (std::int64_t b = 0; b < nb; ++b) {
      im2col(x.value().data() + (b0 + b) * in_stride, geo, cols + b * geo.cols(), n);
    }
    if (nb == 1) {
      MatMap(out.data() + b0 * out_stride, cout, n).noalias() = wmat * ConstMatMap(cols, geo.rows(), n);
    } else {
      MatMap prod(workspace(1, static_cast<std::size_t>(cout * n)), cout, n);
      prod.noalias() = wmat * ConstMatMap(cols, geo.rows(), n);
      for (std::int64_t b = 0; b < nb; ++b) {
        MatMap(out.data() + (b0 + b) * out_stride, cout, geo.cols()) = prod.middleCols(b * geo.cols(), geo.cols());
      }
    }
  }
  if (has_bias) {
    for (std::int64_t b = 0; b < B; ++b) {
      MatMap omat(out.data() + b * out_stride, cout, geo.cols());
      for (std::int64_t c = 0; c < cout; ++c) omat.row(c).array() += bias.value()[c];
    }
  }

  std::vector<Var> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return ag::make_result(
      std::move(out), std::move(parents),
      [geo, B, cout, in_stride, out_stride, has_bias](const Tensor& g, const ag::Node& self) {
        const Tensor& xv = self.parent_value(0);
        const Tensor& wv = self.parent_value(1);
        const bool need_x = self.parent_requires_grad(0);
        const bool need_w = self.parent_requires_grad(1);
        const bool need_b = has_bias && self.parent_requires_grad(2);
        Tensor dx, dw, db;
        if (need_x) dx = Tensor(xv.shape());
        if (need_w) dw = Tensor(wv.shape());
        if (need_b) db = Tensor({cout});
        if (need_b) {
          for (std::int64_t b = 0; b < B; ++b) {
            ConstMatMap gmat(g.data() + b * out_stride, cout, geo.cols());
            for (std::int64_t c = 0; c < cout; ++c) db[c] += gmat.row(c).sum();
          }
        }
        const auto chunk = conv_chunk(geo, B);
        ConstMatMap wmat(wv.data(), cout, geo.rows());
        for (std::int64_t b0 = 0; b0 < B; b0 += chunk) {
          const auto nb = std::min(chunk, B - b0);
          const auto n = nb * geo.cols();
          const double* gdata = g.data() + b0 * out_stride;
          if (nb > 1) {
            double* gall = workspace(1, static_cast<std::size_t>(cout * n));
            for (std::int64_t b = 0; b < nb; ++b) {
              MatMap(gall, cout, n).middleCols(b * geo.cols(), geo.cols()) =
                  ConstMatMap(g.data() + (b0 + b) * out_stride, cout, geo.cols());
            }
            gdata = gall;
          }
          ConstMatMap gmat(gdata, cout, n);
          double* cols = workspace(0, static_cast<std::size_t>(geo.rows() * n));
          if (need_w) {
            for (std::int64_t b = 0; b < nb; ++b) {
              im2col(xv.data() + (b0 + b) * in_stride, geo, cols + b * geo.cols(), n);
            }
            MatMap(dw.data(), cout, geo.rows()).noalias() += gmat * ConstMatMap(cols, geo.rows(), n).transpose();
          }
          if (need_x) {
            MatMap(cols, geo.rows(), n).noalias() = wmat.transpose() * gmat;
            for (std::int64_t b = 0; b < nb; ++b) {
              col2im(cols + b * geo.cols(), geo, dx.data() + (b0 + b) * in_stride, n);
            }
          }
        }
        std::vector<Tensor> grads{std::move(dx), std::move(dw)};
        if (has_bias) grads.push_back(std::move(db));
        return grads;
      });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  expect_rank(x.value(), 2, "linear input");
  expect_rank(weight.value(), 2, "linear weight");
  const auto B = x.dim(0), din = x.dim(1), dout = weight.dim(0);
  if (weight.dim(1) != din) {
    throw ContractError("linear: weight " + shape_to_string(weight.shape()) + " incompatible with input " +
                        shape_to_string(x.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.value().size() != dout) throw ContractError("linear: bias length mismatch");
  Tensor out({B, dout});
  MatMap omat(out.data(), B, dout);
  omat.noalias() = ConstMatMap(x.value().data(), B, din) * ConstMatMap(weight.value().data(), dout, din).transpose();
  if (has_bias) {
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t j = 0; j < dout; ++j) omat(b, j) += bias.value()[j];
    }
  }
  std::vector<Var> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return ag::make_result(std::move(out), std::move(parents),
                         [B, din, dout, has_bias](const Tensor& g, const ag::Node& self) {
                           ConstMatMap gmat(g.data(), B, dout);
                           Tensor dx, dw, db;
                           if (self.parent_requires_grad(0)) {
                             dx = Tensor({B, din});
                             MatMap(dx.data(), B, din).noalias() =
                                 gmat * ConstMatMap(self.parent_value(1).data(), dout, din);
                           }
                           if (self.parent_requires_grad(1)) {
                             dw = Tensor({dout, din});
                             MatMap(dw.data(), dout, din).noalias() =
                                 gmat.transpose() * ConstMatMap(self.parent_value(0).data(), B, din);
                           }
                           std::vector<Tensor> grads{std::move(dx), std::move(dw)};
                           if (has_bias) {
                             if (self.parent_requires_grad(2)) {
                               db = Tensor({dout});
                               for (std::int64_t j = 0; j < dout; ++j) db[j] = gmat.col(j).sum();
                             }
                             grads.push_back(std::move(db));
                           }
                           return grads;
                         });
}

namespace {

// out[b, c, h r + i, w r + j] = in[b, c r^2 + i r + j, h, w]
void shuffle_forward(const Tensor& in, Tensor& out, std::int64_t r) {
  const auto B = out.dim(0), C = out.dim(1), H = in.dim(2), W = in.dim(3);
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < r; ++j)
          for (std::int64_t h = 0; h < H; ++h)
            for (std::int64_t w = 0; w < W; ++w) out.at(b, c, h * r + i, w * r + j) = in.at(b, c * r * r + i * r + j, h, w);
}

void shuffle_backward(const Tensor& out, Tensor& in, std::int64_t r) {
  const auto B = out.dim(0), C = out.dim(1), H = in.dim(2), W = in.dim(3);
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < r; ++j)
          for (std::int64_t h = 0; h < H; ++h)
            for (std::int64_t w = 0; w < W; ++w) in.at(b, c * r * r + i * r + j, h, w) = out.at(b, c, h * r + i, w * r + j);
}

}  // namespace

Var pixel_shuffle(const Var& x, int r) {
  require_rank4(x, "pixel_shuffle");
  if (r < 1) throw ContractError("pixel_shuffle: upscale factor must be >= 1");
  const auto C = x.dim(1);
  if (C % (r * r) != 0) {
    throw ContractError("pixel_shuffle: channel count C=" + std::to_string(C) + " not divisible by r^2 for r=" +
                        std::to_string(r));
  }
  Tensor out({x.dim(0), C / (r * r), x.dim(2) * r, x.dim(3) * r});
  shuffle_forward(x.value(), out, r);
  return ag::make_result(std::move(out), {x}, [r](const Tensor& g, const ag::Node& self) {
    Tensor dx(self.parent_value(0).shape());
    shuffle_backward(g, dx, r);
    return std::vector<Tensor>{std::move(dx)};
  });
}

Var pixel_unshuffle(const Var& x, int r) {
  require_rank4(x, "pixel_unshuffle");
  if (r < 1) throw ContractError("pixel_unshuffle: factor must be >= 1");
  if (x.dim(2) % r != 0 || x.dim(3) % r != 0) {
    throw ContractError("pixel_unshuffle: spatial dims " + shape_to_string(x.shape()) + " not divisible by r=" +
                        std::to_string(r));
  }
  Tensor out({x.dim(0), x.dim(1) * r * r, x.dim(2) / r, x.dim(3) / r});
  shuffle_backward(x.value(), out, r);
  return ag::make_result(std::move(out), {x}, [r](const Tensor& g, const ag::Node& self) {
    Tensor dx(self.parent_value(0).shape());
    shuffle_forward(g, dx, r);
    return std::vector<Tensor>{std::move(dx)};
  });
}

namespace {

// Block [[a, b], [c, d]] -> LL, LH, HL, HH.
void haar_forward(const Tensor& x, Tensor& out) {
  const auto B = x.dim(0), C = x.dim(1), H2 = out.dim(2), W2 = out.dim(3);
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t h = 0; h < H2; ++h)
        for (std::int64_t w = 0; w < W2; ++w) {
          const double a = x.at(b, c, 2 * h, 2 * w), bb = x.at(b, c, 2 * h, 2 * w + 1);
          const double cc = x.at(b, c, 2 * h + 1, 2 * w), d = x.at(b, c, 2 * h + 1, 2 * w + 1);
          out.at(b, c, h, w) = 0.5 * (a + bb + cc + d);
          out.at(b, C + c, h, w) = 0.5 * (a - bb + cc - d);
          out.at(b, 2 * C + c, h, w) = 0.5 * (a + bb - cc - d);
          out.at(b, 3 * C + c, h, w) = 0.5 * (a - bb - cc + d);
        }
}

void haar_inverse(const Tensor& s, Tensor& x) {
  const auto B = x.dim(0), C = x.dim(1), H2 = s.dim(2), W2 = s.dim(3);
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t h = 0; h < H2; ++h)
        for (std::int64_t w = 0; w < W2; ++w) {
          const double ll = s.at(b, c, h, w), lh = s.at(b, C + c, h, w);
          const double hl = s.at(b, 2 * C + c, h, w), hh = s.at(b, 3 * C + c, h, w);
          x.at(b, c, 2 * h, 2 * w) = 0.5 * (ll + lh + hl + hh);
          x.at(b, c, 2 * h, 2 * w + 1) = 0.5 * (ll - lh + hl - hh);
          x.at(b, c, 2 * h + 1, 2 * w) = 0.5 * (ll + lh - hl - hh);
          x.at(b, c, 2 * h + 1, 2 * w + 1) = 0.5 * (ll - lh - hl + hh);
        }
}

}  // namespace

Var haar_dwt(const Var& x) {
  require_rank4(x, "haar_dwt");
  if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
    throw ContractError("haar_dwt: spatial dims must be even, got " + shape_to_string(x.shape()));
  }
  Tensor out({x.dim(0), 4 * x.dim(1), x.dim(2) / 2, x.dim(3) / 2});
  haar_forward(x.value(), out);
  // Orthonormal: the adjoint is the inverse transform.
  return ag::make_result(std::move(out), {x}, [](const Tensor& g, const ag::Node& self) {
    Tensor dx(self.parent_value(0).shape());
    haar_inverse(g, dx);
    return std::vector<Tensor>{std::move(dx)};
  });
}

Var haar_idwt(const Var& subbands) {
  require_rank4(subbands, "haar_idwt");
  if (subbands.dim(1) % 4 != 0) throw ContractError("haar_idwt: channel count must be a multiple of 4");
  Tensor out({subbands.dim(0), subbands.dim(1) / 4, subbands.dim(2) * 2, subbands.dim(3) * 2});
  haar_inverse(subbands.value(), out);
  return ag::make_result(std::move(out), {subbands}, [](const Tensor& g, const ag::Node& self) {
    Tensor ds(self.parent_value(0).shape());
    haar_forward(g, ds);
    return std::vector<Tensor>{std::move(ds)};
  });
}

Var avg_pool2(const Var& x) {
  require_rank4(x, "avg_pool2");
  const auto B = x.dim(0), C = x.dim(1), H2 = x.dim(2) / 2, W2 = x.dim(3) / 2;
  if (H2 == 0 || W2 == 0) throw ContractError("avg_pool2: input " + shape_to_string(x.shape()) + " too small");
  Tensor out({B, C, H2, W2});
  const Tensor& v = x.value();
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t h = 0; h < H2; ++h)
        for (std::int64_t w = 0; w < W2; ++w)
          out.at(b, c, h, w) = 0.25 * (v.at(b, c, 2 * h, 2 * w) + v.at(b, c, 2 * h, 2 * w + 1) +
                                       v.at(b, c, 2 * h + 1, 2 * w) + v.at(b, c, 2 * h + 1, 2 * w + 1));
  return ag::make_result(std::move(out), {x}, [B, C, H2, W2](const Tensor& g, const ag::Node& self) {
    Tensor dx(self.parent_value(0).shape());
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t h = 0; h < H2; ++h)
          for (std::int64_t w = 0; w < W2; ++w) {
            const double q = 0.25 * g.at(b, c, h, w);
            dx.at(b, c, 2 * h, 2 * w) = q;
            dx.at(b, c, 2 * h, 2 * w + 1) = q;
            dx.at(b, c, 2 * h + 1, 2 * w) = q;
            dx.at(b, c, 2 * h + 1, 2 * w + 1) = q;
          }
    return std::vector<Tensor>{std::move(dx)};
  });
}

namespace {

// Valid correlation along the innermost (step 1) or row (step W) direction.
Var filter_valid(const Var& x, std::span<const double> kernel, bool along_w) {
  require_rank4(x, along_w ? "filter_w_valid" : "filter_h_valid");
  const auto K = static_cast<std::int64_t>(kernel.size());
  const auto B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto Ho = along_w ? H : H - K + 1;
  const auto Wo = along_w ? W - K + 1 : W;
  if (K == 0 || Ho <= 0 || Wo <= 0) {
    throw ContractError("filter_valid: input " + shape_to_string(x.shape()) + " smaller than window " +
                        std::to_string(K));
  }
  const std::int64_t step = along_w ? 1 : W;
  std::vector<double> k(kernel.begin(), kernel.end());
  Tensor out({B, C, Ho, Wo});
  for (std::int64_t bc = 0; bc < B * C; ++bc) {
    const double* src = x.value().data() + bc * H * W;
    double* dst = out.data() + bc * Ho * Wo;
    for (std::int64_t h = 0; h < Ho; ++h)
      for (std::int64_t w = 0; w < Wo; ++w) {
        const double* base = src + h * W + w;
        double s = 0.0;
        for (std::int64_t t = 0; t < K; ++t) s += k[static_cast<std::size_t>(t)] * base[t * step];
        dst[h * Wo + w] = s;
      }
  }
  return ag::make_result(std::move(out), {x}, [k, B, C, H, W, Ho, Wo, step](const Tensor& g, const ag::Node& self) {
    Tensor dx(self.parent_value(0).shape());
    const auto K = static_cast<std::int64_t>(k.size());
    for (std::int64_t bc = 0; bc < B * C; ++bc) {
      double* dst = dx.data() + bc * H * W;
      const double* src = g.data() + bc * Ho * Wo;
      for (std::int64_t h = 0; h < Ho; ++h)
        for (std::int64_t w = 0; w < Wo; ++w) {
          const double gv = src[h * Wo + w];
          double* base = dst + h * W + w;
          for (std::int64_t t = 0; t < K; ++t) base[t * step] += k[static_cast<std::size_t>(t)] * gv;
        }
    }
    return std::vector<Tensor>{std::move(dx)};
  });
}

Var forward_diff(const Var& x, bool along_w) {
  require_rank4(x, along_w ? "diff_w" : "diff_h");
  const auto B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto Ho = along_w ? H : H - 1;
  const auto Wo = along_w ? W - 1 : W;
  if (Ho <= 0 || Wo <= 0) throw ContractError("forward difference on degenerate shape " + shape_to_string(x.shape()));
  const std::int64_t step = along_w ? 1 : W;
  Tensor out({B, C, Ho, Wo});
  for (std::int64_t bc = 0; bc < B * C; ++bc) {
    const double* src = x.value().data() + bc * H * W;
    for (std::int64_t h = 0; h < Ho; ++h)
      for (std::int64_t w = 0; w < Wo; ++w) {
        const double* p = src + h * W + w;
        out[(bc * Ho + h) * Wo + w] = p[step] - p[0];
      }
  }
  return ag::make_result(std::move(out), {x}, [B, C, H, W, Ho, Wo, step](const Tensor& g, const ag::Node& self) {
    Tensor dx(self.parent_value(0).shape());
    for (std::int64_t bc = 0; bc < B * C; ++bc) {
      double* dst = dx.data() + bc * H * W;
      for (std::int64_t h = 0; h < Ho; ++h)
        for (std::int64_t w = 0; w < Wo; ++w) {
          const double gv = g[(bc * Ho + h) * Wo + w];
          double* p = dst + h * W + w;
          p[step] += gv;
          p[0] -= gv;
        }
    }
    return std::vector<Tensor>{std::move(dx)};
  });
}

}  // namespace

Var filter_w_valid(const Var& x, std::span<const double> kernel) { return filter_valid(x, kernel, true); }
Var filter_h_valid(const Var& x, std::span<const double> kernel) { return filter_valid(x, kernel, false); }
Var diff_w(const Var& x) { return forward_diff(x, true); }
Var diff_h(const Var& x) { return forward_diff(x, false); }

Var instance_norm(const Var& x, double eps) {
  require_rank4(x, "instance_norm");
  const auto BC = x.dim(0) * x.dim(1), HW = x.dim(2) * x.dim(3);
  if (HW == 0) throw ContractError("instance_norm: zero spatial extent");
  Tensor out(x.shape());
  std::vector<double> inv_std(static_cast<std::size_t>(BC));
  const double n = static_cast<double>(HW);
  for (std::int64_t bc = 0; bc < BC; ++bc) {
    const double* src = x.value().data() + bc * HW;
    double m = 0.0;
    for (std::int64_t p = 0; p < HW; ++p) m += src[p];
    m /= n;
    double var = 0.0;
    for (std::int64_t p = 0; p < HW; ++p) var += (src[p] - m) * (src[p] - m);
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(bc)] = is;
    double* dst = out.data() + bc * HW;
    for (std::int64_t p = 0; p < HW; ++p) dst[p] = (src[p] - m) * is;
  }
  return ag::make_result(std::move(out), {x}, [inv_std, BC, HW](const Tensor& g, const ag::Node& self) {
    Tensor dx(self.value.shape());
    const double n = static_cast<double>(HW);
    for (std::int64_t bc = 0; bc < BC; ++bc) {
      const double* gy = g.data() + bc * HW;
      const double* y = self.value.data() + bc * HW;
      double mg = 0.0, mgy = 0.0;
      for (std::int64_t p = 0; p < HW; ++p) {
        mg += gy[p];
        mgy += gy[p] * y[p];
      }
      mg /= n;
      mgy /= n;
      const double is = inv_std[static_cast<std::size_t>(bc)];
      double* d = dx.data() + bc * HW;
      for (std::int64_t p = 0; p < HW; ++p) d[p] = is * (gy[p] - mg - y[p] * mgy);
    }
    return std::vector<Tensor>{std::move(dx)};
  });
}

Var channel_affine(const Var& x, const Var& scale, const Var& shift) {
  require_rank4(x, "channel_affine");
  const auto B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const Shape bc{B, C};
  if (scale.shape() != bc || shift.shape() != bc) {
    throw ContractError("channel_affine: expected scale/shift of shape " + shape_to_string(bc) + ", got " +
                        shape_to_string(scale.shape()) + " and " + shape_to_string(shift.shape()));
  }
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < B * C; ++i) {
    const double s = scale.value()[i], t = shift.value()[i];
    const double* src = x.value().data() + i * HW;
    double* dst = out.data() + i * HW;
    for (std::int64_t p = 0; p < HW; ++p) dst[p] = s * src[p] + t;
  }
  return ag::make_result(std::move(out), {x, scale, shift}, [B, C, HW](const Tensor& g, const ag::Node& self) {
    const Tensor& xv = self.parent_value(0);
    const Tensor& sv = self.parent_value(1);
    Tensor dx, ds, dt;
    if (self.parent_requires_grad(0)) dx = Tensor(xv.shape());
    if (self.parent_requires_grad(1)) ds = Tensor({B, C});
    if (self.parent_requires_grad(2)) dt = Tensor({B, C});
    for (std::int64_t i = 0; i < B * C; ++i) {
      const double* gp = g.data() + i * HW;
      const double* xp = xv.data() + i * HW;
      double sg = 0.0, sgx = 0.0;
      for (std::int64_t p = 0; p < HW; ++p) {
        sg += gp[p];
        sgx += gp[p] * xp[p];
      }
      if (dx.size()) {
        double* d = dx.data() + i * HW;
        for (std::int64_t p = 0; p < HW; ++p) d[p] = sv[i] * gp[p];
      }
      if (ds.size()) ds[i] = sgx;
      if (dt.size()) dt[i] = sg;
    }
    return std::vector<Tensor>{std::move(dx), std::move(ds), std::move(dt)};
  });
}

Var gram(const Var& x, double divisor) {
  require_rank4(x, "gram");
  const auto B = x.dim(0), K = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (HW == 0) throw ContractError("gram: zero spatial extent in " + shape_to_string(x.shape()));
  if (!(divisor > 0.0)) throw ContractError("gram: divisor must be positive");
  Tensor out({B, K, K});
  for (std::int64_t b = 0; b < B; ++b) {
    ConstMatMap f(x.value().data() + b * K * HW, K, HW);
    MatMap gm(out.data() + b * K * K, K, K);
    gm.noalias() = f * f.transpose();
    gm /= divisor;
    // Exact symmetry regardless of GEMM blocking.
    for (std::int64_t i = 0; i < K; ++i)
      for (std::int64_t j = i + 1; j < K; ++j) gm(j, i) = gm(i, j);
  }
  return ag::make_result(std::move(out), {x}, [B, K, HW, divisor](const Tensor& g, const ag::Node& self) {
    Tensor dx(self.parent_value(0).shape());
    for (std::int64_t b = 0; b < B; ++b) {
      ConstMatMap gm(g.data() + b * K * K, K, K);
      ConstMatMap f(self.parent_value(0).data() + b * K * HW, K, HW);
      RowMat sym = (gm + gm.transpose()) / divisor;
      MatMap(dx.data() + b * K * HW, K, HW).noalias() = sym * f;
    }
    return std::vector<Tensor>{std::move(dx)};
  });
}

}  // namespace rstisp::ops
