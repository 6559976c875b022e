/*
Copyright 2026 The sinpaint Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS-IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#include "sinpaint/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include <Eigen/Dense>
#include <zlib.h>

#include "sinpaint/error.hpp"
#include "sinpaint/rng.hpp"

namespace sinpaint::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<RowMat>;
using CMapR = Eigen::Map<const RowMat>;

struct ConvDims {
  int n, cin, h, w, cout, kh, kw, stride, ho, wo, ph, pw;
  Eigen::Index k() const { return Eigen::Index(cin) * kh * kw; }
  Eigen::Index p() const { return Eigen::Index(ho) * wo; }
};

ConvDims conv_dims(const Shape& x, const Shape& weight, int stride) {
  if (weight.c != x.c) {
    throw ContractViolation("conv2d: weight expects " + std::to_string(weight.c) +
                            " input channels, got " + std::to_string(x.c));
  }
  if (stride < 1) throw ContractViolation("conv2d: stride must be positive");
  ConvDims d{x.n, x.c, x.h, x.w, weight.n, weight.h, weight.w, stride, 0, 0, 0, 0};
  d.ho = same_out(x.h, stride);
  d.wo = same_out(x.w, stride);
  d.ph = same_pad_before(x.h, weight.h, stride);
  d.pw = same_pad_before(x.w, weight.w, stride);
  return d;
}

void im2col(const double* x, const ConvDims& d, double* cols) {
  const Eigen::Index p = d.p();
  for (int c = 0; c < d.cin; ++c) {
    const double* plane = x + static_cast<std::size_t>(c) * d.h * d.w;
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx) {
        double* row = cols + ((Eigen::Index(c) * d.kh + ky) * d.kw + kx) * p;
        for (int oy = 0; oy < d.ho; ++oy) {
          const int iy = oy * d.stride - d.ph + ky;
          double* out = row + Eigen::Index(oy) * d.wo;
          if (iy < 0 || iy >= d.h) {
            std::fill(out, out + d.wo, 0.0);
            continue;
          }
          const double* in = plane + static_cast<std::size_t>(iy) * d.w;
          for (int ox = 0; ox < d.wo; ++ox) {
            const int ix = ox * d.stride - d.pw + kx;
            out[ox] = (ix >= 0 && ix < d.w) ? in[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvDims& d, double* dx) {
  const Eigen::Index p = d.p();
  for (int c = 0; c < d.cin; ++c) {
    double* plane = dx + static_cast<std::size_t>(c) * d.h * d.w;
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx) {
        const double* row = cols + ((Eigen::Index(c) * d.kh + ky) * d.kw + kx) * p;
        for (int oy = 0; oy < d.ho; ++oy) {
          const int iy = oy * d.stride - d.ph + ky;
          if (iy < 0 || iy >= d.h) continue;
          double* out = plane + static_cast<std::size_t>(iy) * d.w;
          const double* in = row + Eigen::Index(oy) * d.wo;
          for (int ox = 0; ox < d.wo; ++ox) {
            const int ix = ox * d.stride - d.pw + kx;
            if (ix >= 0 && ix < d.w) out[ix] += in[ox];
          }
        }
      }
    }
  }
}

void require_same(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw ContractViolation(std::string(what) + ": shape " + to_string(a) + " vs " + to_string(b));
  }
}

// --- checkpoint byte helpers ---------------------------------------------

constexpr char kMagic[8] = {'S', 'I', 'N', 'P', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end, std::string path)
      : buf_(buf), end_(end), path_(std::move(path)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto len = get<std::uint32_t>();
    need(len);
    std::string s = buf_.substr(pos_, len);
    pos_ += len;
    return s;
  }
  void read_doubles(double* dst, std::size_t count) {
    need(count * sizeof(double));
    std::memcpy(dst, buf_.data() + pos_, count * sizeof(double));
    pos_ += count * sizeof(double);
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t bytes) const {
    if (pos_ + bytes > end_) throw ModelError(path_ + ": checkpoint truncated");
  }
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string path_;
};

}  // namespace

std::string to_string(const Shape& s) {
  return "[" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
         std::to_string(s.w) + "]";
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

Tensor stack(std::span<const TfMatrix> items) {
  if (items.empty()) throw ContractViolation("stack: no items");
  const auto rows = static_cast<int>(items[0].rows());
  const auto cols = static_cast<int>(items[0].cols());
  Tensor t(Shape{static_cast<int>(items.size()), 1, rows, cols});
  for (std::size_t n = 0; n < items.size(); ++n) {
    if (items[n].rows() != rows || items[n].cols() != cols) {
      throw ContractViolation("stack: items differ in shape");
    }
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) t.at(static_cast<int>(n), 0, r, c) = items[n](r, c);
    }
  }
  return t;
}

TfMatrix unstack(const Tensor& t, int n) {
  if (t.shape.c != 1) throw ContractViolation("unstack: expected a single channel");
  TfMatrix out(t.shape.h, t.shape.w);
  for (int r = 0; r < t.shape.h; ++r) {
    for (int c = 0; c < t.shape.w; ++c) out(r, c) = t.at(n, 0, r, c);
  }
  return out;
}

Tensor mask_tensor(std::span<const ValidMap> masks) {
  if (masks.empty()) throw ContractViolation("mask_tensor: no masks");
  const auto rows = static_cast<int>(masks[0].rows());
  const auto cols = static_cast<int>(masks[0].cols());
  Tensor t(Shape{static_cast<int>(masks.size()), 1, rows, cols});
  for (std::size_t n = 0; n < masks.size(); ++n) {
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) t.at(static_cast<int>(n), 0, r, c) = masks[n](r, c) ? 1.0 : 0.0;
    }
  }
  return t;
}

int same_out(int in, int stride) { return (in + stride - 1) / stride; }

int same_pad_before(int in, int kernel, int stride) {
  const int total = std::max((same_out(in, stride) - 1) * stride + kernel - in, 0);
  return total / 2;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride) {
  const ConvDims d = conv_dims(x.shape, weight.shape, stride);
  if (bias.size() != static_cast<std::size_t>(d.cout)) {
    throw ContractViolation("conv2d: bias length differs from output channels");
  }
  Tensor y(Shape{d.n, d.cout, d.ho, d.wo});
  Buffer cols(static_cast<std::size_t>(d.k() * d.p()));
  const CMapR wmat(weight.data.data(), d.cout, d.k());
  for (int n = 0; n < d.n; ++n) {
    im2col(x.sample(n).data(), d, cols.data());
    MapR ymat(y.sample(n).data(), d.cout, d.p());
    ymat.noalias() = wmat * CMapR(cols.data(), d.k(), d.p());
    for (int c = 0; c < d.cout; ++c) ymat.row(c).array() += bias.data[c];
  }
  return y;
}

ConvGrads conv2d_backward(const Tensor& x, const Tensor& weight, int stride, const Tensor& dy,
                          bool need_dx) {
  const ConvDims d = conv_dims(x.shape, weight.shape, stride);
  require_same(dy.shape, Shape{d.n, d.cout, d.ho, d.wo}, "conv2d_backward");
  ConvGrads g;
  g.dweight = Tensor(weight.shape);
  g.dbias = Tensor(Shape{1, d.cout, 1, 1});
  if (need_dx) g.dx = Tensor(x.shape);
  Buffer cols(static_cast<std::size_t>(d.k() * d.p()));
  const CMapR wmat(weight.data.data(), d.cout, d.k());
  MapR dw(g.dweight.data.data(), d.cout, d.k());
  for (int n = 0; n < d.n; ++n) {
    const CMapR dymat(dy.sample(n).data(), d.cout, d.p());
    im2col(x.sample(n).data(), d, cols.data());
    dw.noalias() += dymat * CMapR(cols.data(), d.k(), d.p()).transpose();
    for (int c = 0; c < d.cout; ++c) g.dbias.data[c] += dymat.row(c).sum();
    if (need_dx) {
      MapR dcols(cols.data(), d.k(), d.p());
      dcols.noalias() = wmat.transpose() * dymat;
      col2im(cols.data(), d, g.dx.sample(n).data());
    }
  }
  return g;
}

PartialConvOut partial_conv2d(const Tensor& x, const Tensor& mask, const Tensor& weight,
                              const Tensor& bias, int stride) {
  if (mask.shape.n != x.shape.n || mask.shape.c != 1 || mask.shape.h != x.shape.h ||
      mask.shape.w != x.shape.w) {
    throw ContractViolation("partial_conv2d: mask must be [n,1,h,w] matching the input");
  }
  const ConvDims d = conv_dims(x.shape, weight.shape, stride);
  const double window = double(d.kh) * d.kw;

  PartialConvOut out;
  out.mask = Tensor(Shape{d.n, 1, d.ho, d.wo});
  out.scale = Tensor(Shape{d.n, 1, d.ho, d.wo});
  for (int n = 0; n < d.n; ++n) {
    for (int oy = 0; oy < d.ho; ++oy) {
      for (int ox = 0; ox < d.wo; ++ox) {
        double count = 0.0;
        for (int ky = 0; ky < d.kh; ++ky) {
          const int iy = oy * d.stride - d.ph + ky;
          for (int kx = 0; kx < d.kw; ++kx) {
            const int ix = ox * d.stride - d.pw + kx;
            count += (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) ? 1.0 : mask.at(n, 0, iy, ix);
          }
        }
        out.mask.at(n, 0, oy, ox) = count > 0.0 ? 1.0 : 0.0;
        out.scale.at(n, 0, oy, ox) = count > 0.0 ? window / count : 0.0;
      }
    }
  }

  Tensor masked = x;
  const std::size_t plane = x.shape.plane();
  for (int n = 0; n < d.n; ++n) {
    for (int c = 0; c < d.cin; ++c) {
      double* dst = masked.data.data() + (static_cast<std::size_t>(n) * d.cin + c) * plane;
      const double* m = mask.data.data() + static_cast<std::size_t>(n) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] *= m[i];
    }
  }
  out.y = conv2d(masked, weight, Tensor(Shape{1, d.cout, 1, 1}), stride);
  const std::size_t oplane = static_cast<std::size_t>(d.ho) * d.wo;
  for (int n = 0; n < d.n; ++n) {
    const double* s = out.scale.data.data() + static_cast<std::size_t>(n) * oplane;
    const double* m = out.mask.data.data() + static_cast<std::size_t>(n) * oplane;
    for (int c = 0; c < d.cout; ++c) {
      double* y = out.y.data.data() + (static_cast<std::size_t>(n) * d.cout + c) * oplane;
      for (std::size_t i = 0; i < oplane; ++i) y[i] = y[i] * s[i] + bias.data[c] * m[i];
    }
  }
  return out;
}

ConvGrads partial_conv2d_backward(const Tensor& x, const Tensor& mask, const Tensor& weight,
                                  int stride, const PartialConvOut& out, const Tensor& dy,
                                  bool need_dx) {
  require_same(dy.shape, out.y.shape, "partial_conv2d_backward");
  const int n_batch = x.shape.n, cin = x.shape.c, cout = dy.shape.c;
  const std::size_t plane = x.shape.plane(), oplane = dy.shape.plane();

  Tensor masked = x;
  for (int n = 0; n < n_batch; ++n) {
    for (int c = 0; c < cin; ++c) {
      double* dst = masked.data.data() + (static_cast<std::size_t>(n) * cin + c) * plane;
      const double* m = mask.data.data() + static_cast<std::size_t>(n) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] *= m[i];
    }
  }
  Tensor scaled = dy;
  std::vector<double> dbias(static_cast<std::size_t>(cout), 0.0);
  for (int n = 0; n < n_batch; ++n) {
    const double* s = out.scale.data.data() + static_cast<std::size_t>(n) * oplane;
    const double* m = out.mask.data.data() + static_cast<std::size_t>(n) * oplane;
    for (int c = 0; c < cout; ++c) {
      double* g = scaled.data.data() + (static_cast<std::size_t>(n) * cout + c) * oplane;
      for (std::size_t i = 0; i < oplane; ++i) {
        dbias[c] += g[i] * m[i];
        g[i] *= s[i];
      }
    }
  }
  ConvGrads grads = conv2d_backward(masked, weight, stride, scaled, need_dx);
  std::copy(dbias.begin(), dbias.end(), grads.dbias.data.begin());
  if (need_dx) {
    for (int n = 0; n < n_batch; ++n) {
      for (int c = 0; c < cin; ++c) {
        double* dst = grads.dx.data.data() + (static_cast<std::size_t>(n) * cin + c) * plane;
        const double* m = mask.data.data() + static_cast<std::size_t>(n) * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] *= m[i];
      }
    }
  }
  return grads;
}

Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        const BatchNormParams& p, BatchNormCache& cache) {
  const int n_batch = x.shape.n, channels = x.shape.c;
  const std::size_t plane = x.shape.plane();
  const double count = double(n_batch) * double(plane);
  cache.mean.assign(static_cast<std::size_t>(channels), 0.0);
  cache.var.assign(static_cast<std::size_t>(channels), 0.0);
  cache.inv_std.assign(static_cast<std::size_t>(channels), 0.0);
  cache.xhat = Tensor(x.shape);
  Tensor y(x.shape);
  for (int c = 0; c < channels; ++c) {
    double sum = 0.0;
    for (int n = 0; n < n_batch; ++n) {
      const double* src = x.data.data() + (static_cast<std::size_t>(n) * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) sum += src[i];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (int n = 0; n < n_batch; ++n) {
      const double* src = x.data.data() + (static_cast<std::size_t>(n) * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) sq += (src[i] - mean) * (src[i] - mean);
    }
    const double var = sq / count;
    const double inv_std = 1.0 / std::sqrt(var + p.eps);
    cache.mean[c] = mean;
    cache.var[c] = var;
    cache.inv_std[c] = inv_std;
    for (int n = 0; n < n_batch; ++n) {
      const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double xh = (x.data[base + i] - mean) * inv_std;
        cache.xhat.data[base + i] = xh;
        y.data[base + i] = gamma.data[c] * xh + beta.data[c];
      }
    }
  }
  return y;
}

Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const Tensor& running_mean, const Tensor& running_var,
                       const BatchNormParams& p) {
  const int channels = x.shape.c;
  const std::size_t plane = x.shape.plane();
  Tensor y(x.shape);
  for (int n = 0; n < x.shape.n; ++n) {
    for (int c = 0; c < channels; ++c) {
      const double inv_std = 1.0 / std::sqrt(running_var.data[c] + p.eps);
      const double a = gamma.data[c] * inv_std;
      const double b = beta.data[c] - a * running_mean.data[c];
      const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) y.data[base + i] = a * x.data[base + i] + b;
    }
  }
  return y;
}

BatchNormGrads batch_norm_backward(const BatchNormCache& cache, const Tensor& gamma,
                                   const Tensor& dy) {
  const Shape& s = dy.shape;
  const std::size_t plane = s.plane();
  const double count = double(s.n) * double(plane);
  BatchNormGrads g{Tensor(s), Tensor(Shape{1, s.c, 1, 1}), Tensor(Shape{1, s.c, 1, 1})};
  for (int c = 0; c < s.c; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += dy.data[base + i];
        sum_dy_xhat += dy.data[base + i] * cache.xhat.data[base + i];
      }
    }
    g.dbeta.data[c] = sum_dy;
    g.dgamma.data[c] = sum_dy_xhat;
    const double k = gamma.data[c] * cache.inv_std[c] / count;
    for (int n = 0; n < s.n; ++n) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        g.dx.data[base + i] =
            k * (count * dy.data[base + i] - sum_dy - cache.xhat.data[base + i] * sum_dy_xhat);
      }
    }
  }
  return g;
}

void update_running_stats(const BatchNormCache& cache, const BatchNormParams& p,
                          Tensor& running_mean, Tensor& running_var) {
  for (std::size_t c = 0; c < cache.mean.size(); ++c) {
    running_mean.data[c] = p.momentum * running_mean.data[c] + (1.0 - p.momentum) * cache.mean[c];
    running_var.data[c] = p.momentum * running_var.data[c] + (1.0 - p.momentum) * cache.var[c];
  }
}

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor y = x;
  for (double& v : y.data) v = v < 0.0 ? slope * v : v;
  return y;
}

Tensor leaky_relu_backward(const Tensor& x, const Tensor& dy, double slope) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.data.size(); ++i) {
    if (x.data[i] < 0.0) dx.data[i] *= slope;
  }
  return dx;
}

PoolOut max_pool2(const Tensor& x) {
  const Shape& s = x.shape;
  PoolOut out{Tensor(Shape{s.n, s.c, s.h / 2, s.w / 2}), {}};
  out.argmax.resize(out.y.size());
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int oy = 0; oy < s.h / 2; ++oy) {
        for (int ox = 0; ox < s.w / 2; ++ox, ++o) {
          std::size_t best = x.index(n, c, 2 * oy, 2 * ox);
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t i = x.index(n, c, 2 * oy + dy, 2 * ox + dx);
              if (x.data[i] > x.data[best]) best = i;
            }
          }
          out.y.data[o] = x.data[best];
          out.argmax[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return out;
}

Tensor max_pool2_backward(const PoolOut& out, const Shape& input, const Tensor& dy) {
  Tensor dx(input);
  for (std::size_t o = 0; o < dy.data.size(); ++o) dx.data[out.argmax[o]] += dy.data[o];
  return dx;
}

Tensor upsample2(const Tensor& x) {
  const Shape& s = x.shape;
  Tensor y(Shape{s.n, s.c, s.h * 2, s.w * 2});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int yy = 0; yy < s.h * 2; ++yy) {
        for (int xx = 0; xx < s.w * 2; ++xx) y.at(n, c, yy, xx) = x.at(n, c, yy / 2, xx / 2);
      }
    }
  }
  return y;
}

Tensor upsample2_backward(const Tensor& dy) {
  const Shape& s = dy.shape;
  Tensor dx(Shape{s.n, s.c, s.h / 2, s.w / 2});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int yy = 0; yy < s.h; ++yy) {
        for (int xx = 0; xx < s.w; ++xx) dx.at(n, c, yy / 2, xx / 2) += dy.at(n, c, yy, xx);
      }
    }
  }
  return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.shape.n != b.shape.n || a.shape.h != b.shape.h || a.shape.w != b.shape.w) {
    throw ContractViolation("concat_channels: " + to_string(a.shape) + " vs " + to_string(b.shape));
  }
  Tensor y(Shape{a.shape.n, a.shape.c + b.shape.c, a.shape.h, a.shape.w});
  for (int n = 0; n < a.shape.n; ++n) {
    auto dst = y.sample(n);
    auto sa = a.sample(n);
    auto sb = b.sample(n);
    std::copy(sa.begin(), sa.end(), dst.begin());
    std::copy(sb.begin(), sb.end(), dst.begin() + static_cast<std::ptrdiff_t>(sa.size()));
  }
  return y;
}

void split_channels(const Tensor& d, int channels_a, Tensor& da, Tensor& db) {
  const Shape& s = d.shape;
  da = Tensor(Shape{s.n, channels_a, s.h, s.w});
  db = Tensor(Shape{s.n, s.c - channels_a, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    auto src = d.sample(n);
    auto a = da.sample(n);
    auto b = db.sample(n);
    std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(a.size()), a.begin());
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(a.size()), src.end(), b.begin());
  }
}

Tensor mask_union(const Tensor& a, const Tensor& b) {
  require_same(a.shape, b.shape, "mask_union");
  Tensor y(a.shape);
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = std::max(a.data[i], b.data[i]);
  return y;
}

Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const Eigen::Index n = x.shape.n;
  const Eigen::Index f = static_cast<Eigen::Index>(x.size()) / n;
  if (static_cast<Eigen::Index>(weight.shape.c) * weight.shape.h * weight.shape.w != f) {
    throw ContractViolation("dense: input features differ from weight fan-in");
  }
  const Eigen::Index out = weight.shape.n;
  Tensor y(Shape{static_cast<int>(n), static_cast<int>(out), 1, 1});
  MapR ymat(y.data.data(), n, out);
  ymat.noalias() = CMapR(x.data.data(), n, f) * CMapR(weight.data.data(), out, f).transpose();
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index o = 0; o < out; ++o) ymat(r, o) += bias.data[static_cast<std::size_t>(o)];
  }
  return y;
}

ConvGrads dense_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, bool need_dx) {
  const Eigen::Index n = x.shape.n;
  const Eigen::Index f = static_cast<Eigen::Index>(x.size()) / n;
  const Eigen::Index out = weight.shape.n;
  ConvGrads g;
  g.dweight = Tensor(weight.shape);
  g.dbias = Tensor(Shape{1, static_cast<int>(out), 1, 1});
  const CMapR dymat(dy.data.data(), n, out);
  MapR(g.dweight.data.data(), out, f).noalias() = dymat.transpose() * CMapR(x.data.data(), n, f);
  for (Eigen::Index o = 0; o < out; ++o) g.dbias.data[static_cast<std::size_t>(o)] = dymat.col(o).sum();
  if (need_dx) {
    g.dx = Tensor(x.shape);
    MapR(g.dx.data.data(), n, f).noalias() = dymat * CMapR(weight.data.data(), out, f);
  }
  return g;
}

CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const int n = logits.shape.n;
  const int k = static_cast<int>(logits.size()) / std::max(n, 1);
  if (static_cast<int>(labels.size()) != n) {
    throw ContractViolation("softmax_cross_entropy: label count differs from batch");
  }
  CrossEntropy ce;
  ce.dlogits = Tensor(logits.shape);
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= k) throw ContractViolation("label out of range");
    const double* z = logits.data.data() + static_cast<std::size_t>(i) * k;
    double* g = ce.dlogits.data.data() + static_cast<std::size_t>(i) * k;
    const double top = *std::max_element(z, z + k);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(z[j] - top);
    const double log_sum = std::log(sum) + top;
    ce.loss += log_sum - z[labels[i]];
    for (int j = 0; j < k; ++j) {
      g[j] = (std::exp(z[j] - log_sum) - (j == labels[i] ? 1.0 : 0.0)) / n;
    }
  }
  ce.loss /= n;
  return ce;
}

Tensor& ParamStore::add(const std::string& name, Shape shape, bool trainable, double fill) {
  auto [it, inserted] = entries_.emplace(name, Entry{Tensor(shape, fill), trainable});
  if (!inserted) throw ContractViolation("duplicate parameter " + name);
  return it->second.value;
}

Tensor& ParamStore::get(const std::string& name) {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractViolation("unknown parameter " + name);
  return it->second.value;
}

const Tensor& ParamStore::get(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractViolation("unknown parameter " + name);
  return it->second.value;
}

bool ParamStore::trainable(const std::string& name) const {
  const auto it = entries_.find(name);
  return it != entries_.end() && it->second.trainable;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

std::vector<std::string> ParamStore::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    if (v.trainable) out.push_back(k);
  }
  return out;
}

std::size_t ParamStore::trainable_count() const {
  std::size_t total = 0;
  for (const auto& [k, v] : entries_) {
    if (v.trainable) total += v.value.size();
  }
  return total;
}

std::map<std::string, Tensor> ParamStore::tensors() const {
  std::map<std::string, Tensor> out;
  for (const auto& [k, v] : entries_) out.emplace(k, v.value);
  return out;
}

void ParamStore::assign(const std::map<std::string, Tensor>& values) {
  for (const auto& [k, v] : entries_) {
    const auto it = values.find(k);
    if (it == values.end()) throw ModelError("checkpoint lacks tensor " + k);
    if (!(it->second.shape == v.value.shape)) {
      throw ModelError("tensor " + k + " has shape " + to_string(it->second.shape) + ", expected " +
                       to_string(v.value.shape));
    }
  }
  for (auto& [k, v] : entries_) v.value = values.at(k);
}

Grads zero_grads(const ParamStore& params) {
  Grads g;
  for (const auto& name : params.trainable_names()) g.emplace(name, Tensor(params.get(name).shape));
  return g;
}

void init_he_uniform(ParamStore& params, std::uint64_t seed) {
  for (const auto& name : params.trainable_names()) {
    if (!name.ends_with(".weight")) continue;
    Tensor& w = params.get(name);
    const double fan_in = double(w.shape.c) * w.shape.h * w.shape.w;
    const double limit = std::sqrt(6.0 / fan_in);
    Rng rng(derive_seed(seed, hash_string(name)));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& v : w.data) v = dist(rng);
  }
}

void Adam::step(ParamStore& params, const Grads& grads) {
  ++t_;
  const double bias1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double bias2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  const double lr_t = cfg_.lr * std::sqrt(bias2) / bias1;
  for (const auto& [name, g] : grads) {
    Tensor& p = params.get(name);
    auto& m = m_.try_emplace(name, Tensor(p.shape)).first->second;
    auto& v = v_.try_emplace(name, Tensor(p.shape)).first->second;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * g.data[i];
      v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * g.data[i] * g.data[i];
      p.data[i] -= lr_t * m.data[i] / (std::sqrt(v.data[i]) + cfg_.eps);
    }
  }
}

std::map<std::string, Tensor> Adam::state() const {
  std::map<std::string, Tensor> out;
  for (const auto& [k, t] : m_) out.emplace("adam.m." + k, t);
  for (const auto& [k, t] : v_) out.emplace("adam.v." + k, t);
  return out;
}

void Adam::load_state(const std::map<std::string, Tensor>& state, std::int64_t steps) {
  m_.clear();
  v_.clear();
  for (const auto& [k, t] : state) {
    if (k.starts_with("adam.m.")) m_.emplace(k.substr(7), t);
    if (k.starts_with("adam.v.")) v_.emplace(k.substr(7), t);
  }
  t_ = steps;
}

std::uint32_t crc32_of(std::string_view text) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size())));
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  static_assert(std::endian::native == std::endian::little, "checkpoints are little-endian");
  std::string buf(kMagic, sizeof kMagic);
  put<std::uint32_t>(buf, kCheckpointVersion);
  put<std::uint32_t>(buf, ckpt.config_hash);
  put_string(buf, ckpt.kind);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    put_string(buf, k);
    put_string(buf, v);
  }
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put_string(buf, name);
    for (int d : {t.shape.n, t.shape.c, t.shape.h, t.shape.w}) put<std::int32_t>(buf, d);
    buf.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(double));
  }
  put<std::uint32_t>(buf, crc32_of(buf));

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ModelError("cannot write checkpoint " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw ModelError("short write to " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open checkpoint " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof kMagic + 12 || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) {
    throw ModelError(path.string() + " is not a sinpaint checkpoint");
  }
  const std::size_t body = buf.size() - sizeof(std::uint32_t);
  Reader r(buf, body, path.string());
  for (std::size_t i = 0; i < sizeof kMagic; ++i) r.get<char>();
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ModelError(path.string() + ": unsupported checkpoint version " + std::to_string(version) +
                     " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  std::uint32_t stored;
  std::memcpy(&stored, buf.data() + body, sizeof stored);
  if (stored != crc32_of(std::string_view(buf.data(), body))) {
    throw ModelError(path.string() + ": checksum mismatch, file is corrupt");
  }
  Checkpoint ckpt;
  ckpt.config_hash = r.get<std::uint32_t>();
  ckpt.kind = r.get_string();
  const auto n_meta = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.get_string();
    ckpt.meta[k] = r.get_string();
  }
  const auto n_tensors = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.get_string();
    Shape s;
    s.n = r.get<std::int32_t>();
    s.c = r.get<std::int32_t>();
    s.h = r.get<std::int32_t>();
    s.w = r.get<std::int32_t>();
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw ModelError(path.string() + ": bad shape");
    Tensor t(s);
    r.read_doubles(t.data.data(), t.data.size());
    ckpt.tensors.emplace(std::move(name), std::move(t));
  }
  if (r.pos() != body) throw ModelError(path.string() + ": trailing bytes in checkpoint");
  return ckpt;
}

}  // namespace sinpaint::nn
