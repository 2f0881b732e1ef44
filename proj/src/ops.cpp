#include "brakenet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "brakenet/errors.hpp"
#include "brakenet/parallel.hpp"

namespace brakenet {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

// Upper bound on im2col scratch per worker, in doubles (16 MiB).
constexpr std::size_t kMaxColumnElements = std::size_t{1} << 21;

struct ConvGeometry {
  std::size_t batch, cin, h, w;
  std::size_t cout, kh, kw;
  std::size_t stride, pad_h, pad_w;
  std::size_t oh, ow;

  std::size_t rows() const { return cin * kh * kw; }
  std::size_t positions() const { return oh * ow; }
  std::size_t in_sample() const { return cin * h * w; }
  std::size_t out_sample() const { return cout * oh * ow; }
  std::size_t chunk() const {
    return std::clamp<std::size_t>(kMaxColumnElements / rows(), 1, positions());
  }
};

// cols[r, p - p0] = padded input value under kernel tap r at output position p.
void im2col(const double* in, const ConvGeometry& g, std::size_t p0, std::size_t p1,
            double* cols) {
  const std::size_t width = p1 - p0;
  const auto h = static_cast<std::ptrdiff_t>(g.h);
  const auto w = static_cast<std::ptrdiff_t>(g.w);
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    const double* plane = in + ci * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* dst = cols + ((ci * g.kh + ki) * g.kw + kj) * width;
        std::size_t oy = p0 / g.ow;
        std::size_t ox = p0 % g.ow;
        for (std::size_t p = 0; p < width; ++p) {
          auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad_h);
          auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad_w);
          dst[p] = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? plane[iy * w + ix] : 0.0;
          if (++ox == g.ow) {
            ox = 0;
            ++oy;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, std::size_t p0, std::size_t p1,
                double* in_grad) {
  const std::size_t width = p1 - p0;
  const auto h = static_cast<std::ptrdiff_t>(g.h);
  const auto w = static_cast<std::ptrdiff_t>(g.w);
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    double* plane = in_grad + ci * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* src = cols + ((ci * g.kh + ki) * g.kw + kj) * width;
        std::size_t oy = p0 / g.ow;
        std::size_t ox = p0 % g.ow;
        for (std::size_t p = 0; p < width; ++p) {
          auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad_h);
          auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad_w);
          if (iy >= 0 && iy < h && ix >= 0 && ix < w) plane[iy * w + ix] += src[p];
          if (++ox == g.ow) {
            ox = 0;
            ++oy;
          }
        }
      }
    }
  }
}

// Stride-1 convolution as one small GEMM per kernel tap. The input is
// zero-padded into a [C_in x (Hp*Wp + kw - 1)] buffer and outputs are computed
// on a Wp-wide grid, so every tap reads a contiguous slice at offset
// ki*Wp + kj. Columns ox >= ow of that grid are discarded.
struct TapLayout {
  std::size_t hp, wp;  // padded input size
  std::size_t ext;     // oh * wp
  std::size_t row;     // padded buffer row length

  explicit TapLayout(const ConvGeometry& g)
      : hp(g.h + 2 * g.pad_h), wp(g.w + 2 * g.pad_w), ext(g.oh * wp), row(hp * wp + g.kw - 1) {}
};

using TapWeightMap = Eigen::Map<const RowMat, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;
using TapGradMap = Eigen::Map<RowMat, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;

void pad_input(const double* x, const ConvGeometry& g, const TapLayout& t, double* xp) {
  std::fill(xp, xp + g.cin * t.row, 0.0);
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    for (std::size_t y = 0; y < g.h; ++y) {
      std::copy_n(x + (ci * g.h + y) * g.w, g.w, xp + ci * t.row + (y + g.pad_h) * t.wp + g.pad_w);
    }
  }
}

void tap_forward(const double* x, const double* w, const ConvGeometry& g, double* y) {
  const TapLayout t(g);
  std::vector<double> xp(g.cin * t.row);
  pad_input(x, g, t, xp.data());
  RowMat acc = RowMat::Zero(static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(t.ext));
  const std::size_t taps = g.kh * g.kw;
  for (std::size_t ki = 0; ki < g.kh; ++ki) {
    for (std::size_t kj = 0; kj < g.kw; ++kj) {
      TapWeightMap wt(w + ki * g.kw + kj, g.cout, g.cin,
                      Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(g.cin * taps, taps));
      ConstStridedMap xs(xp.data() + ki * t.wp + kj, g.cin, t.ext, Eigen::OuterStride<>(t.row));
      acc.noalias() += wt * xs;
    }
  }
  for (std::size_t co = 0; co < g.cout; ++co) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      std::copy_n(acc.data() + co * t.ext + oy * t.wp, g.ow, y + (co * g.oh + oy) * g.ow);
    }
  }
}

void tap_backward(const double* x, const double* w, const double* gy, const ConvGeometry& g,
                  double* gw, double* gx) {
  const TapLayout t(g);
  std::vector<double> xp;
  if (gw) {
    xp.resize(g.cin * t.row);
    pad_input(x, g, t, xp.data());
  }
  RowMat gext = RowMat::Zero(static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(t.ext));
  for (std::size_t co = 0; co < g.cout; ++co) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      std::copy_n(gy + (co * g.oh + oy) * g.ow, g.ow, gext.data() + co * t.ext + oy * t.wp);
    }
  }
  std::vector<double> gxp(gx ? g.cin * t.row : 0, 0.0);
  const std::size_t taps = g.kh * g.kw;
  const Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic> wstride(g.cin * taps, taps);
  for (std::size_t ki = 0; ki < g.kh; ++ki) {
    for (std::size_t kj = 0; kj < g.kw; ++kj) {
      const std::size_t off = ki * t.wp + kj;
      const std::size_t tap = ki * g.kw + kj;
      if (gw) {
        ConstStridedMap xs(xp.data() + off, g.cin, t.ext, Eigen::OuterStride<>(t.row));
        TapGradMap gwt(gw + tap, g.cout, g.cin, wstride);
        gwt.noalias() += gext * xs.transpose();
      }
      if (gx) {
        TapWeightMap wt(w + tap, g.cout, g.cin, wstride);
        StridedMap gxs(gxp.data() + off, g.cin, t.ext, Eigen::OuterStride<>(t.row));
        gxs.noalias() += wt.transpose() * gext;
      }
    }
  }
  if (gx) {
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      for (std::size_t y = 0; y < g.h; ++y) {
        const double* src = gxp.data() + ci * t.row + (y + g.pad_h) * t.wp + g.pad_w;
        double* dst = gx + (ci * g.h + y) * g.w;
        for (std::size_t k = 0; k < g.w; ++k) dst[k] += src[k];
      }
    }
  }
}

void im2col_forward(const double* x, const double* w, const ConvGeometry& g, double* y) {
  Eigen::Map<const RowMat> wmat(w, g.cout, g.rows());
  std::vector<double> cols;
  const std::size_t P = g.positions();
  const std::size_t chunk = g.chunk();
  for (std::size_t p0 = 0; p0 < P; p0 += chunk) {
    const std::size_t p1 = std::min(P, p0 + chunk);
    cols.resize(g.rows() * (p1 - p0));
    im2col(x, g, p0, p1, cols.data());
    Eigen::Map<const RowMat> cmat(cols.data(), g.rows(), p1 - p0);
    StridedMap block(y + p0, g.cout, p1 - p0, Eigen::OuterStride<>(P));
    block.noalias() = wmat * cmat;
  }
}

void im2col_backward(const double* x, const double* w, const double* gy, const ConvGeometry& g,
                     double* gw, double* gx) {
  Eigen::Map<const RowMat> wmat(w, g.cout, g.rows());
  std::vector<double> cols, dcols;
  const std::size_t P = g.positions();
  const std::size_t chunk = g.chunk();
  for (std::size_t p0 = 0; p0 < P; p0 += chunk) {
    const std::size_t p1 = std::min(P, p0 + chunk);
    const std::size_t width = p1 - p0;
    ConstStridedMap gblock(gy + p0, g.cout, width, Eigen::OuterStride<>(P));
    if (gw) {
      cols.resize(g.rows() * width);
      im2col(x, g, p0, p1, cols.data());
      Eigen::Map<const RowMat> cmat(cols.data(), g.rows(), width);
      Eigen::Map<RowMat> wg(gw, g.cout, g.rows());
      wg.noalias() += gblock * cmat.transpose();
    }
    if (gx) {
      dcols.resize(g.rows() * width);
      Eigen::Map<RowMat> dmat(dcols.data(), g.rows(), width);
      dmat.noalias() = wmat.transpose() * gblock;
      col2im_add(dcols.data(), g, p0, p1, gx);
    }
  }
}

Tensor conv_forward(const Tensor& input, const Tensor& weight, const Tensor& bias,
                    ConvGeometry g, Shape out_shape) {
  std::vector<double> out(g.batch * g.out_sample());
  const double* x = input.data().data();
  const double* w = weight.data().data();
  const double* b = bias.data().data();

  parallel_for(g.batch, [&](std::size_t n) {
    double* y = out.data() + n * g.out_sample();
    if (g.stride == 1) {
      tap_forward(x + n * g.in_sample(), w, g, y);
    } else {
      im2col_forward(x + n * g.in_sample(), w, g, y);
    }
    const std::size_t P = g.positions();
    for (std::size_t co = 0; co < g.cout; ++co) {
      double* row = y + co * P;
      for (std::size_t p = 0; p < P; ++p) row[p] += b[co];
    }
  });

  return Tensor::from_op(
      std::move(out_shape), std::move(out), {input, weight, bias},
      [input, weight, bias, g](Tensor::Node& self) {
        const std::size_t P = g.positions();
        const double* gy = self.grad.data();
        const double* x = input.data().data();
        const double* w = weight.data().data();
        const bool need_x = input.requires_grad();
        const bool need_w = weight.requires_grad();
        const bool need_b = bias.requires_grad();
        double* gx = need_x ? input.node()->grad_buffer().data() : nullptr;

        // Per-sample parameter gradients, reduced in sample order so the
        // result does not depend on the worker count.
        const std::size_t wsize = g.cout * g.rows();
        std::vector<double> wpart(need_w ? g.batch * wsize : 0, 0.0);
        std::vector<double> bpart(need_b ? g.batch * g.cout : 0, 0.0);

        parallel_for(g.batch, [&](std::size_t n) {
          const double* gyn = gy + n * g.out_sample();
          double* gwn = need_w ? wpart.data() + n * wsize : nullptr;
          double* gxn = need_x ? gx + n * g.in_sample() : nullptr;
          if (need_w || need_x) {
            if (g.stride == 1) {
              tap_backward(x + n * g.in_sample(), w, gyn, g, gwn, gxn);
            } else {
              im2col_backward(x + n * g.in_sample(), w, gyn, g, gwn, gxn);
            }
          }
          if (need_b) {
            for (std::size_t co = 0; co < g.cout; ++co) {
              const double* row = gyn + co * P;
              double acc = 0.0;
              for (std::size_t p = 0; p < P; ++p) acc += row[p];
              bpart[n * g.cout + co] = acc;
            }
          }
        });

        if (need_w) {
          auto& wg = weight.node()->grad_buffer();
          for (std::size_t n = 0; n < g.batch; ++n) {
            const double* src = wpart.data() + n * wsize;
            for (std::size_t i = 0; i < wsize; ++i) wg[i] += src[i];
          }
        }
        if (need_b) {
          auto& bg = bias.node()->grad_buffer();
          for (std::size_t n = 0; n < g.batch; ++n) {
            for (std::size_t co = 0; co < g.cout; ++co) bg[co] += bpart[n * g.cout + co];
          }
        }
      });
}

void check_conv_params(const Tensor& weight, const Tensor& bias, std::size_t cin,
                       std::size_t stride, const char* op) {
  if (stride == 0) throw DimensionError(std::string(op) + ": stride must be >= 1");
  if (weight.dim(1) != cin) {
    throw DimensionError(std::string(op) + ": weight expects " + std::to_string(weight.dim(1)) +
                         " input channels, input has " + std::to_string(cin));
  }
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) {
    throw DimensionError(std::string(op) + ": bias shape " + to_string(bias.shape()) +
                         " does not match " + std::to_string(weight.dim(0)) + " output channels");
  }
}

struct PoolGeometry {
  std::size_t planes, h, w, kh, kw, sh, sw, oh, ow;
};

Tensor pool_forward(const Tensor& input, PoolGeometry g, Shape out_shape) {
  const double* x = input.data().data();
  std::vector<double> out(g.planes * g.oh * g.ow);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t pl = 0; pl < g.planes; ++pl) {
    const std::size_t base = pl * g.h * g.w;
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        std::size_t best = base + (oy * g.sh) * g.w + ox * g.sw;
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
          for (std::size_t kj = 0; kj < g.kw; ++kj) {
            std::size_t idx = base + (oy * g.sh + ki) * g.w + ox * g.sw + kj;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (pl * g.oh + oy) * g.ow + ox;
        out[o] = x[best];
        (*argmax)[o] = best;
      }
    }
  }
  return Tensor::from_op(std::move(out_shape), std::move(out), {input},
                         [input, argmax](Tensor::Node& self) {
                           auto& gx = input.node()->grad_buffer();
                           for (std::size_t o = 0; o < argmax->size(); ++o) {
                             gx[(*argmax)[o]] += self.grad[o];
                           }
                         });
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

}  // namespace

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
  if (stride == 0) throw DimensionError("stride must be >= 1");
  if (kernel == 0 || kernel > length + 2 * padding) {
    throw DimensionError("kernel " + std::to_string(kernel) + " does not fit length " +
                         std::to_string(length) + " with padding " + std::to_string(padding));
  }
  return (length + 2 * padding - kernel) / stride + 1;
}

std::size_t pool_output_length(std::size_t length, std::size_t kernel, std::size_t stride) {
  if (stride == 0) throw DimensionError("pool stride must be >= 1");
  if (kernel == 0 || kernel > length) {
    throw DimensionError("pool kernel " + std::to_string(kernel) + " exceeds length " +
                         std::to_string(length));
  }
  return (length - kernel) / stride + 1;
}

BatchNormState::BatchNormState(std::size_t channels)
    : gamma(Tensor::full({channels}, 1.0, true)),
      beta(Tensor::full({channels}, 0.0, true)),
      running_mean(channels, 0.0),
      running_var(channels, 1.0) {}

Tensor conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  const bool batched = input.rank() == 3;
  if (!batched && input.rank() != 2) {
    throw DimensionError("conv1d: input must be [C, L] or [N, C, L], got " +
                         to_string(input.shape()));
  }
  if (weight.rank() != 3) {
    throw DimensionError("conv1d: weight must be [C_out, C_in, K], got " +
                         to_string(weight.shape()));
  }
  const std::size_t off = batched ? 1 : 0;
  ConvGeometry g{};
  g.batch = batched ? input.dim(0) : 1;
  g.cin = input.dim(off);
  g.h = 1;
  g.w = input.dim(off + 1);
  check_conv_params(weight, bias, g.cin, stride, "conv1d");
  g.cout = weight.dim(0);
  g.kh = 1;
  g.kw = weight.dim(2);
  g.stride = stride;
  g.pad_h = 0;
  g.pad_w = padding;
  g.oh = 1;
  g.ow = conv_output_length(g.w, g.kw, stride, padding);
  Shape out_shape = batched ? Shape{g.batch, g.cout, g.ow} : Shape{g.cout, g.ow};
  return conv_forward(input, weight, bias, g, std::move(out_shape));
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  const bool batched = input.rank() == 4;
  if (!batched && input.rank() != 3) {
    throw DimensionError("conv2d: input must be [C, H, W] or [N, C, H, W], got " +
                         to_string(input.shape()));
  }
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3)) {
    throw DimensionError("conv2d: weight must be [C_out, C_in, K, K], got " +
                         to_string(weight.shape()));
  }
  const std::size_t off = batched ? 1 : 0;
  ConvGeometry g{};
  g.batch = batched ? input.dim(0) : 1;
  g.cin = input.dim(off);
  g.h = input.dim(off + 1);
  g.w = input.dim(off + 2);
  check_conv_params(weight, bias, g.cin, stride, "conv2d");
  g.cout = weight.dim(0);
  g.kh = g.kw = weight.dim(2);
  g.stride = stride;
  g.pad_h = g.pad_w = padding;
  g.oh = conv_output_length(g.h, g.kh, stride, padding);
  g.ow = conv_output_length(g.w, g.kw, stride, padding);
  Shape out_shape =
      batched ? Shape{g.batch, g.cout, g.oh, g.ow} : Shape{g.cout, g.oh, g.ow};
  return conv_forward(input, weight, bias, g, std::move(out_shape));
}

Tensor batchnorm(const Tensor& input, BatchNormState& state) {
  if (input.rank() < 2) {
    throw DimensionError("batchnorm: input must be [N, C, ...], got " + to_string(input.shape()));
  }
  const std::size_t n = input.dim(0);
  const std::size_t c = input.dim(1);
  if (c != state.channels()) {
    throw DimensionError("batchnorm: input has " + std::to_string(c) + " channels, state has " +
                         std::to_string(state.channels()));
  }
  const bool training = state.mode == Mode::training;
  if (training && n < 2) {
    throw DimensionError("batchnorm: training mode needs a batch of at least 2, got " +
                         std::to_string(n));
  }
  const std::size_t spatial = input.size() / (n * c);
  const double count = static_cast<double>(n * spatial);
  const double* x = input.data().data();

  std::vector<double> mean(c), invstd(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (training) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = x + (i * c + ch) * spatial;
        for (std::size_t k = 0; k < spatial; ++k) s += p[k];
      }
      const double mu = s / count;
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = x + (i * c + ch) * spatial;
        for (std::size_t k = 0; k < spatial; ++k) ss += (p[k] - mu) * (p[k] - mu);
      }
      const double var = ss / count;
      mean[ch] = mu;
      invstd[ch] = 1.0 / std::sqrt(var + state.eps);
      const double m = state.stat_momentum;
      state.running_mean[ch] = (1.0 - m) * state.running_mean[ch] + m * mu;
      state.running_var[ch] = (1.0 - m) * state.running_var[ch] + m * ss / (count - 1.0);
    } else {
      mean[ch] = state.running_mean[ch];
      invstd[ch] = 1.0 / std::sqrt(state.running_var[ch] + state.eps);
    }
  }

  auto xhat = std::make_shared<std::vector<double>>(input.size());
  std::vector<double> out(input.size());
  const double* gamma = state.gamma.data().data();
  const double* beta = state.beta.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (i * c + ch) * spatial;
      for (std::size_t k = 0; k < spatial; ++k) {
        const double v = (x[base + k] - mean[ch]) * invstd[ch];
        (*xhat)[base + k] = v;
        out[base + k] = gamma[ch] * v + beta[ch];
      }
    }
  }

  Tensor gamma_t = state.gamma;
  Tensor beta_t = state.beta;
  return Tensor::from_op(
      input.shape(), std::move(out), {input, gamma_t, beta_t},
      [input, gamma_t, beta_t, xhat, invstd, training, n, c, spatial,
       count](Tensor::Node& self) {
        const double* gy = self.grad.data();
        const double* gamma = gamma_t.data().data();
        std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (i * c + ch) * spatial;
            for (std::size_t k = 0; k < spatial; ++k) {
              sum_dy[ch] += gy[base + k];
              sum_dy_xhat[ch] += gy[base + k] * (*xhat)[base + k];
            }
          }
        }
        if (gamma_t.requires_grad()) {
          auto& gg = gamma_t.node()->grad_buffer();
          for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += sum_dy_xhat[ch];
        }
        if (beta_t.requires_grad()) {
          auto& gb = beta_t.node()->grad_buffer();
          for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += sum_dy[ch];
        }
        if (!input.requires_grad()) return;
        auto& gx = input.node()->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (i * c + ch) * spatial;
            const double scale = gamma[ch] * invstd[ch];
            if (training) {
              const double mean_dy = sum_dy[ch] / count;
              const double mean_dy_xhat = sum_dy_xhat[ch] / count;
              for (std::size_t k = 0; k < spatial; ++k) {
                gx[base + k] +=
                    scale * (gy[base + k] - mean_dy - (*xhat)[base + k] * mean_dy_xhat);
              }
            } else {
              for (std::size_t k = 0; k < spatial; ++k) gx[base + k] += scale * gy[base + k];
            }
          }
        }
      });
}

Tensor relu(const Tensor& input) {
  std::vector<double> out(input.size());
  auto x = input.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return Tensor::from_op(input.shape(), std::move(out), {input}, [input](Tensor::Node& self) {
    auto& gx = input.node()->grad_buffer();
    auto x = input.data();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (x[i] > 0.0) gx[i] += self.grad[i];
    }
  });
}

Tensor maxpool1d(const Tensor& input, std::size_t kernel, std::size_t stride) {
  if (input.rank() < 2) {
    throw DimensionError("maxpool1d: input must be [C, L] or [N, C, L], got " +
                         to_string(input.shape()));
  }
  PoolGeometry g{};
  g.w = input.shape().back();
  g.planes = input.size() / g.w;
  g.h = 1;
  g.kh = 1;
  g.sh = 1;
  g.kw = kernel;
  g.sw = stride;
  g.oh = 1;
  g.ow = pool_output_length(g.w, kernel, stride);
  Shape out_shape = input.shape();
  out_shape.back() = g.ow;
  return pool_forward(input, g, std::move(out_shape));
}

Tensor maxpool2d(const Tensor& input, std::size_t kernel, std::size_t stride) {
  if (input.rank() < 3) {
    throw DimensionError("maxpool2d: input must be [C, H, W] or [N, C, H, W], got " +
                         to_string(input.shape()));
  }
  const std::size_t r = input.rank();
  PoolGeometry g{};
  g.h = input.dim(r - 2);
  g.w = input.dim(r - 1);
  g.planes = input.size() / (g.h * g.w);
  g.kh = g.kw = kernel;
  g.sh = g.sw = stride;
  g.oh = pool_output_length(g.h, kernel, stride);
  g.ow = pool_output_length(g.w, kernel, stride);
  Shape out_shape = input.shape();
  out_shape[r - 2] = g.oh;
  out_shape[r - 1] = g.ow;
  return pool_forward(input, g, std::move(out_shape));
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.rank() != 2 || weight.rank() != 2 || input.dim(1) != weight.dim(1)) {
    throw DimensionError("linear: input " + to_string(input.shape()) + " incompatible with weight " +
                         to_string(weight.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) {
    throw DimensionError("linear: bias " + to_string(bias.shape()) + " does not match weight " +
                         to_string(weight.shape()));
  }
  const std::size_t n = input.dim(0);
  const std::size_t f = input.dim(1);
  const std::size_t o = weight.dim(0);
  Eigen::Map<const RowMat> x(input.data().data(), n, f);
  Eigen::Map<const RowMat> w(weight.data().data(), o, f);
  std::vector<double> out(n * o);
  Eigen::Map<RowMat> y(out.data(), n, o);
  y.noalias() = x * w.transpose();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < o; ++j) y(i, j) += bias[j];
  }
  return Tensor::from_op(
      {n, o}, std::move(out), {input, weight, bias},
      [input, weight, bias, n, f, o](Tensor::Node& self) {
        Eigen::Map<const RowMat> gy(self.grad.data(), n, o);
        if (input.requires_grad()) {
          Eigen::Map<RowMat> gx(input.node()->grad_buffer().data(), n, f);
          Eigen::Map<const RowMat> w(weight.data().data(), o, f);
          gx.noalias() += gy * w;
        }
        if (weight.requires_grad()) {
          Eigen::Map<RowMat> gw(weight.node()->grad_buffer().data(), o, f);
          Eigen::Map<const RowMat> x(input.data().data(), n, f);
          gw.noalias() += gy.transpose() * x;
        }
        if (bias.requires_grad()) {
          auto& gb = bias.node()->grad_buffer();
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < o; ++j) gb[j] += gy(i, j);
          }
        }
      });
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  if (pred.size() != target.size()) {
    throw DimensionError("l1_loss: prediction " + to_string(pred.shape()) + " vs target " +
                         to_string(target.shape()));
  }
  const auto p = pred.data();
  const auto t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - t[i]);
  const double m = static_cast<double>(p.size());
  return Tensor::from_op({1}, {acc / m}, {pred, target}, [pred, target, m](Tensor::Node& self) {
    const double g = self.grad[0] / m;
    const auto p = pred.data();
    const auto t = target.data();
    auto sign = [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); };
    if (pred.requires_grad()) {
      auto& gp = pred.node()->grad_buffer();
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g * sign(p[i] - t[i]);
    }
    if (target.requires_grad()) {
      auto& gt = target.node()->grad_buffer();
      for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= g * sign(p[i] - t[i]);
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [a, b](Tensor::Node& self) {
    for (const Tensor* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto& g = t->node()->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [a, b](Tensor::Node& self) {
    if (a.requires_grad()) {
      auto& g = a.node()->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * b[i];
    }
    if (b.requires_grad()) {
      auto& g = b.node()->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * a[i];
    }
  });
}

Tensor sum(const Tensor& input) {
  double acc = 0.0;
  for (double v : input.data()) acc += v;
  return Tensor::from_op({1}, {acc}, {input}, [input](Tensor::Node& self) {
    auto& g = input.node()->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor reshape(const Tensor& input, Shape shape) {
  if (numel(shape) != input.size()) {
    throw DimensionError("reshape: cannot view " + to_string(input.shape()) + " as " +
                         to_string(shape));
  }
  auto src = input.data();
  return Tensor::from_op(std::move(shape), std::vector<double>(src.begin(), src.end()), {input},
                         [input](Tensor::Node& self) {
                           auto& g = input.node()->grad_buffer();
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                         });
}

Tensor flatten(const Tensor& input) {
  if (input.rank() < 2) return input;
  return reshape(input, {input.dim(0), input.size() / input.dim(0)});
}

}  // namespace brakenet
