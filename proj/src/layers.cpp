// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "stnet/layers.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <memory>

#include "stnet/mac_counter.hpp"

namespace stnet {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

struct Window {
  std::size_t channels, in_h, in_w, kh, kw, out_h, out_w;
  ConvGeometry geom;
  std::size_t rows() const { return channels * kh * kw; }
  std::size_t cols() const { return out_h * out_w; }
};

// col[(c*kh + i)*kw + j][oh*out_w + ow] = x[c][oh*s + i - ph][ow*s + j - pw]
template <typename T>
void im2col(const T* x, const Window& g, T* col) {
  const std::size_t s = g.geom.stride;
  const long ph = static_cast<long>(g.geom.pad.h), pw = static_cast<long>(g.geom.pad.w);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = col + ((c * g.kh + i) * g.kw + j) * g.cols();
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * s + i) - ph;
          T* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<long>(g.in_h)) {
            std::fill_n(dst, g.out_w, T(0));
            continue;
          }
          const T* src = x + (c * g.in_h + static_cast<std::size_t>(ih)) * g.in_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * s + j) - pw;
            dst[ow] = (iw < 0 || iw >= static_cast<long>(g.in_w)) ? T(0) : src[iw];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back onto the grid.
template <typename T>
void col2im(const T* col, const Window& g, T* x) {
  const std::size_t s = g.geom.stride;
  const long ph = static_cast<long>(g.geom.pad.h), pw = static_cast<long>(g.geom.pad.w);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = col + ((c * g.kh + i) * g.kw + j) * g.cols();
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * s + i) - ph;
          if (ih < 0 || ih >= static_cast<long>(g.in_h)) continue;
          T* dst = x + (c * g.in_h + static_cast<std::size_t>(ih)) * g.in_w;
          const T* src = row + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * s + j) - pw;
            if (iw >= 0 && iw < static_cast<long>(g.in_w)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

}  // namespace

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  require(stride > 0, "stride must be positive");
  require(in + 2 * pad >= kernel, "input extent " + std::to_string(in) + " smaller than kernel " +
                                      std::to_string(kernel) + " after padding");
  return (in + 2 * pad - kernel) / stride + 1;
}

std::size_t conv_transpose_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  require(stride > 0, "stride must be positive");
  const std::size_t full = (in - 1) * stride + kernel;
  require(full > 2 * pad, "transposed convolution output would be empty");
  return full - 2 * pad;
}

// ---- linear -----------------------------------------------------------------

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  const bool biased = bias.defined();
  require(weight.rank() == 2 && (!biased || (bias.rank() == 1 && bias.dim(0) == weight.dim(0))),
          "linear weight/bias mismatch: " + shape_str(weight.shape()) + (biased ? ", " + shape_str(bias.shape()) : ""));
  const std::size_t in = weight.dim(1), out = weight.dim(0);
  require(x.rank() >= 1 && x.shape().back() == in,
          "linear input " + shape_str(x.shape()) + " vs weight " + shape_str(weight.shape()));
  const std::size_t rows = x.numel() / in;
  std::vector<T> y(rows * out);
  MutMap<T> ym(y.data(), rows, out);
  ym.noalias() = ConstMap<T>(x.values().data(), rows, in) * ConstMap<T>(weight.values().data(), out, in).transpose();
  if (biased) ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.values().data(), out);
  MacCounter::record(static_cast<std::uint64_t>(rows) * in * out);
  Shape shape = x.shape();
  shape.back() = out;
  std::vector<Tensor<T>> inputs = {x, weight};
  if (biased) inputs.push_back(bias);
  return make_result<T>(std::move(shape), std::move(y), inputs, [rows, in, out](detail::Node<T>& self) {
    auto& nx = *self.parents[0];
    auto& nw = *self.parents[1];
    ConstMap<T> dy(self.grad.data(), rows, out);
    if (nx.requires_grad) {
      MutMap<T>(nx.grad_buffer().data(), rows, in).noalias() += dy * ConstMap<T>(nw.value.data(), out, in);
    }
    if (nw.requires_grad) {
      MutMap<T>(nw.grad_buffer().data(), out, in).noalias() += dy.transpose() * ConstMap<T>(nx.value.data(), rows, in);
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(self.parents[2]->grad_buffer().data(), out) += dy.colwise().sum();
    }
  });
}

// ---- conv2d -----------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, const ConvGeometry& geom) {
  require(x.rank() == 4 && weight.rank() == 4, "conv2d expects 4-d input and kernel, got " + shape_str(x.shape()) +
                                                   " and " + shape_str(weight.shape()));
  require(x.dim(1) == weight.dim(1), "conv2d channel mismatch: input " + shape_str(x.shape()) + " vs kernel " +
                                         shape_str(weight.shape()));
  require(bias.rank() == 1 && bias.dim(0) == weight.dim(0), "conv2d bias " + shape_str(bias.shape()) +
                                                                " vs kernel " + shape_str(weight.shape()));
  const std::size_t batch = x.dim(0), out_ch = weight.dim(0);
  Window g{x.dim(1), x.dim(2), x.dim(3), weight.dim(2), weight.dim(3), 0, 0, geom};
  g.out_h = conv_out_extent(g.in_h, g.kh, geom.stride, geom.pad.h);
  g.out_w = conv_out_extent(g.in_w, g.kw, geom.stride, geom.pad.w);
  const std::size_t in_plane = g.channels * g.in_h * g.in_w;
  const std::size_t out_plane = out_ch * g.cols();
  std::vector<T> y(batch * out_plane);
  std::vector<T> col(g.rows() * g.cols());
  ConstMap<T> wm(weight.values().data(), out_ch, g.rows());
  auto bv = bias.values();
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(x.values().data() + b * in_plane, g, col.data());
    MutMap<T> ym(y.data() + b * out_plane, out_ch, g.cols());
    ym.noalias() = wm * ConstMap<T>(col.data(), g.rows(), g.cols());
    for (std::size_t o = 0; o < out_ch; ++o) ym.row(o).array() += bv[o];
  }
  MacCounter::record(static_cast<std::uint64_t>(batch) * out_plane * g.rows());
  Shape shape{batch, out_ch, g.out_h, g.out_w};
  return make_result<T>(std::move(shape), std::move(y), {x, weight, bias},
                        [g, batch, out_ch, in_plane, out_plane](detail::Node<T>& self) {
                          auto& nx = *self.parents[0];
                          auto& nw = *self.parents[1];
                          auto& nb = *self.parents[2];
                          std::vector<T> col(g.rows() * g.cols());
                          ConstMap<T> wm(nw.value.data(), out_ch, g.rows());
                          for (std::size_t b = 0; b < batch; ++b) {
                            ConstMap<T> dy(self.grad.data() + b * out_plane, out_ch, g.cols());
                            if (nw.requires_grad) {
                              im2col(nx.value.data() + b * in_plane, g, col.data());
                              MutMap<T>(nw.grad_buffer().data(), out_ch, g.rows()).noalias() +=
                                  dy * ConstMap<T>(col.data(), g.rows(), g.cols()).transpose();
                            }
                            if (nx.requires_grad) {
                              MutMap<T>(col.data(), g.rows(), g.cols()).noalias() = wm.transpose() * dy;
                              col2im(col.data(), g, nx.grad_buffer().data() + b * in_plane);
                            }
                            if (nb.requires_grad) {
                              auto& gb = nb.grad_buffer();
                              for (std::size_t o = 0; o < out_ch; ++o) gb[o] += dy.row(o).sum();
                            }
                          }
                        });
}

// ---- conv_transpose2d -------------------------------------------------------

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           const ConvGeometry& geom) {
  require(x.rank() == 4 && weight.rank() == 4, "conv_transpose2d expects 4-d input and kernel, got " +
                                                   shape_str(x.shape()) + " and " + shape_str(weight.shape()));
  require(x.dim(1) == weight.dim(0), "conv_transpose2d channel mismatch: input " + shape_str(x.shape()) +
                                         " vs kernel " + shape_str(weight.shape()));
  require(bias.rank() == 1 && bias.dim(0) == weight.dim(1), "conv_transpose2d bias " + shape_str(bias.shape()) +
                                                                " vs kernel " + shape_str(weight.shape()));
  const std::size_t batch = x.dim(0), in_ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t out_ch = weight.dim(1);
  // The output grid plays the role of a conv2d input whose output is x's grid.
  Window g{out_ch, 0, 0, weight.dim(2), weight.dim(3), h, w, geom};
  g.in_h = conv_transpose_out_extent(h, g.kh, geom.stride, geom.pad.h);
  g.in_w = conv_transpose_out_extent(w, g.kw, geom.stride, geom.pad.w);
  const std::size_t in_plane = in_ch * h * w;
  const std::size_t out_plane = out_ch * g.in_h * g.in_w;
  const std::size_t spatial = g.in_h * g.in_w;
  std::vector<T> y(batch * out_plane, T(0));
  std::vector<T> col(g.rows() * g.cols());
  ConstMap<T> wm(weight.values().data(), in_ch, g.rows());
  auto bv = bias.values();
  for (std::size_t b = 0; b < batch; ++b) {
    MutMap<T>(col.data(), g.rows(), g.cols()).noalias() =
        wm.transpose() * ConstMap<T>(x.values().data() + b * in_plane, in_ch, g.cols());
    T* yb = y.data() + b * out_plane;
    col2im(col.data(), g, yb);
    for (std::size_t o = 0; o < out_ch; ++o) {
      for (std::size_t k = 0; k < spatial; ++k) yb[o * spatial + k] += bv[o];
    }
  }
  MacCounter::record(static_cast<std::uint64_t>(batch) * in_plane * g.rows());
  Shape shape{batch, out_ch, g.in_h, g.in_w};
  return make_result<T>(std::move(shape), std::move(y), {x, weight, bias},
                        [g, batch, in_ch, out_ch, in_plane, out_plane, spatial](detail::Node<T>& self) {
                          auto& nx = *self.parents[0];
                          auto& nw = *self.parents[1];
                          auto& nb = *self.parents[2];
                          std::vector<T> col(g.rows() * g.cols());
                          ConstMap<T> wm(nw.value.data(), in_ch, g.rows());
                          for (std::size_t b = 0; b < batch; ++b) {
                            const T* dy = self.grad.data() + b * out_plane;
                            im2col(dy, g, col.data());
                            ConstMap<T> dcol(col.data(), g.rows(), g.cols());
                            if (nx.requires_grad) {
                              MutMap<T>(nx.grad_buffer().data() + b * in_plane, in_ch, g.cols()).noalias() +=
                                  wm * dcol;
                            }
                            if (nw.requires_grad) {
                              MutMap<T>(nw.grad_buffer().data(), in_ch, g.rows()).noalias() +=
                                  ConstMap<T>(nx.value.data() + b * in_plane, in_ch, g.cols()) * dcol.transpose();
                            }
                            if (nb.requires_grad) {
                              auto& gb = nb.grad_buffer();
                              for (std::size_t o = 0; o < out_ch; ++o) {
                                T s = 0;
                                for (std::size_t k = 0; k < spatial; ++k) s += dy[o * spatial + k];
                                gb[o] += s;
                              }
                            }
                          }
                        });
}

// ---- layer norm -------------------------------------------------------------

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double epsilon) {
  require(x.rank() >= 1, "layer_norm on a scalar");
  const std::size_t d = x.shape().back();
  require(gamma.numel() == d && beta.numel() == d,
          "layer_norm affine size mismatch: input " + shape_str(x.shape()) + ", gamma " + shape_str(gamma.shape()));
  const std::size_t rows = x.numel() / d;
  auto normed = std::make_shared<std::vector<T>>(x.numel());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  std::vector<T> y(x.numel());
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * d;
    T mu = 0;
    for (std::size_t k = 0; k < d; ++k) mu += xr[k];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t k = 0; k < d; ++k) var += (xr[k] - mu) * (xr[k] - mu);
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + static_cast<T>(epsilon));
    (*inv_std)[r] = is;
    for (std::size_t k = 0; k < d; ++k) {
      const T n = (xr[k] - mu) * is;
      (*normed)[r * d + k] = n;
      y[r * d + k] = gv[k] * n + bv[k];
    }
  }
  return make_result<T>(x.shape(), std::move(y), {x, gamma, beta},
                        [normed, inv_std, rows, d](detail::Node<T>& self) {
                          auto& nx = *self.parents[0];
                          auto& ng = *self.parents[1];
                          auto& nb = *self.parents[2];
                          std::vector<T> dn(d);
                          for (std::size_t r = 0; r < rows; ++r) {
                            const T* dy = self.grad.data() + r * d;
                            const T* n = normed->data() + r * d;
                            if (ng.requires_grad) {
                              auto& gg = ng.grad_buffer();
                              for (std::size_t k = 0; k < d; ++k) gg[k] += dy[k] * n[k];
                            }
                            if (nb.requires_grad) {
                              auto& gb = nb.grad_buffer();
                              for (std::size_t k = 0; k < d; ++k) gb[k] += dy[k];
                            }
                            if (nx.requires_grad) {
                              T mean_dn = 0, mean_dn_n = 0;
                              for (std::size_t k = 0; k < d; ++k) {
                                dn[k] = dy[k] * ng.value[k];
                                mean_dn += dn[k];
                                mean_dn_n += dn[k] * n[k];
                              }
                              mean_dn /= static_cast<T>(d);
                              mean_dn_n /= static_cast<T>(d);
                              auto& gx = nx.grad_buffer();
                              const T is = (*inv_std)[r];
                              for (std::size_t k = 0; k < d; ++k) {
                                gx[r * d + k] += is * (dn[k] - mean_dn - n[k] * mean_dn_n);
                              }
                            }
                          }
                        });
}

// ---- parameters -------------------------------------------------------------

template <typename T>
Tensor<T> ParamStore<T>::create(const std::string& name, Shape shape, const std::vector<double>& values) {
  for (const auto& t : tensors_) {
    if (t.name() == name) throw std::invalid_argument("duplicate parameter path '" + name + "'");
  }
  std::vector<T> v(values.begin(), values.end());
  auto t = Tensor<T>::parameter(name, std::move(shape), std::move(v));
  tensors_.push_back(t);
  return t;
}

template <typename T>
const Tensor<T>& ParamStore<T>::find(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name() == name) return t;
  }
  throw std::out_of_range("unknown parameter path '" + name + "'");
}

template <typename T>
std::size_t ParamStore<T>::total_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.numel();
  return n;
}

std::vector<double> kaiming_uniform(Rng& rng, std::size_t fan_in, std::size_t count) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> out(count);
  for (auto& v : out) v = dist(rng);
  return out;
}

template <typename T>
Conv2d<T> Conv2d<T>::create(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                            std::size_t kh, std::size_t kw, ConvGeometry geom, Rng& rng) {
  Conv2d c;
  const std::size_t fan_in = in * kh * kw;
  c.weight = store.create(name + ".weight", {out, in, kh, kw}, kaiming_uniform(rng, fan_in, out * fan_in));
  c.bias = store.create(name + ".bias", {out}, std::vector<double>(out, 0.0));
  c.geom = geom;
  return c;
}

template <typename T>
ConvTranspose2d<T> ConvTranspose2d<T>::create(ParamStore<T>& store, const std::string& name, std::size_t in,
                                              std::size_t out, std::size_t kh, std::size_t kw, ConvGeometry geom,
                                              Rng& rng) {
  ConvTranspose2d c;
  const std::size_t fan_in = out * kh * kw;
  c.weight = store.create(name + ".weight", {in, out, kh, kw}, kaiming_uniform(rng, fan_in, in * fan_in));
  c.bias = store.create(name + ".bias", {out}, std::vector<double>(out, 0.0));
  c.geom = geom;
  return c;
}

template <typename T>
Linear<T> Linear<T>::create(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                            Rng& rng, bool bias) {
  Linear l;
  l.weight = store.create(name + ".weight", {out, in}, kaiming_uniform(rng, in, out * in));
  if (bias) l.bias = store.create(name + ".bias", {out}, std::vector<double>(out, 0.0));
  return l;
}

template <typename T>
LayerNorm<T> LayerNorm<T>::create(ParamStore<T>& store, const std::string& name, std::size_t dim) {
  LayerNorm n;
  n.gamma = store.create(name + ".gamma", {dim}, std::vector<double>(dim, 1.0));
  n.beta = store.create(name + ".beta", {dim}, std::vector<double>(dim, 0.0));
  return n;
}

template <typename T>
Mlp<T> Mlp<T>::create(ParamStore<T>& store, const std::string& name, std::size_t dim, std::size_t hidden, Rng& rng) {
  Mlp m;
  m.fc1 = Linear<T>::create(store, name + ".fc1", dim, hidden, rng);
  m.fc2 = Linear<T>::create(store, name + ".fc2", hidden, dim, rng);
  return m;
}

template <typename T>
Tensor<T> Mlp<T>::forward(const Tensor<T>& x) const {
  Tensor<T> h;
  {
    MacLabel label("fc1");
    h = gelu(fc1.forward(x));
  }
  MacLabel label("fc2");
  return fc2.forward(h);
}

// ---- Adam -------------------------------------------------------------------

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), T(0));
    v_.emplace_back(p.numel(), T(0));
  }
}

template <typename T>
void Adam<T>::apply(std::size_t index, std::span<const T> grad) {
  auto p = params_[index].mutable_values();
  auto& m = m_[index];
  auto& v = v_[index];
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double g = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
    const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
    const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double update = config_.lr * (mi / c1) / (std::sqrt(vi / c2) + config_.eps);
    p[i] = static_cast<T>(static_cast<double>(p[i]) - update);
  }
}

template <typename T>
void Adam<T>::step(const Gradients<T>& grads) {
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (grads.contains(params_[i])) {
      apply(i, grads.of(params_[i]).values());
    } else {
      apply(i, {});
    }
  }
}

template <typename T>
void Adam<T>::step(const std::vector<Tensor<T>>& grads) {
  if (grads.size() != params_.size()) {
    throw ShapeError("adam: " + std::to_string(grads.size()) + " gradients for " + std::to_string(params_.size()) +
                     " parameters");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (grads[i].shape() != params_[i].shape()) {
      throw ShapeError("adam: gradient " + shape_str(grads[i].shape()) + " for parameter '" + params_[i].name() +
                       "' of shape " + shape_str(params_[i].shape()));
    }
  }
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i) apply(i, grads[i].values());
}

template <typename T>
void Adam<T>::restore(std::uint64_t t, std::vector<std::vector<T>> m, std::vector<std::vector<T>> v) {
  if (m.size() != params_.size() || v.size() != params_.size()) throw ShapeError("adam state size mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (m[i].size() != params_[i].numel() || v[i].size() != params_[i].numel()) {
      throw ShapeError("adam moment size mismatch for '" + params_[i].name() + "'");
    }
  }
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

#define STNET_INSTANTIATE(T)                                                                              \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const ConvGeometry&); \
  template Tensor<T> conv_transpose2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                                         const ConvGeometry&);                                            \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);         \
  template class ParamStore<T>;                                                                           \
  template struct Conv2d<T>;                                                                              \
  template struct ConvTranspose2d<T>;                                                                     \
  template struct Linear<T>;                                                                              \
  template struct LayerNorm<T>;                                                                           \
  template struct Mlp<T>;                                                                                 \
  template class Adam<T>;

STNET_INSTANTIATE(float)
STNET_INSTANTIATE(double)
STNET_INSTANTIATE(long double)

#undef STNET_INSTANTIATE

}  // namespace stnet
