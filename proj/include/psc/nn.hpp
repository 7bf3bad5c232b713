#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "psc/rng.hpp"
#include "psc/tensor.hpp"

namespace psc::nn {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;
};

template <typename T>
inline T stable_sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

// BCE from logits: max(z,0) - z*c + log(1 + exp(-|z|)); d/dz = sigmoid(z) - c.
template <typename T>
inline T bce_with_logit(T z, T c, T& dz) {
  dz = stable_sigmoid(z) - c;
  const T a = z > T(0) ? z : T(0);
  return a - z * c + std::log(T(1) + std::exp(-std::abs(z)));
}

// 2-d convolution over CHW tensors.
template <typename T>
struct Conv2d {
  int in_c = 0, out_c = 0, k = 3, stride = 1, pad = 1;
  Tensor<T> w;   // [out_c, in_c, k, k]
  Tensor<T> b;   // [out_c]
  Tensor<T> gw;  // grads
  Tensor<T> gb;

  Conv2d() = default;
  Conv2d(int ic, int oc, int kk, int s, int p) : in_c(ic), out_c(oc), k(kk), stride(s), pad(p) {
    w = Tensor<T>({out_c, in_c, k, k});
    b = Tensor<T>({out_c});
    gw = Tensor<T>({out_c, in_c, k, k});
    gb = Tensor<T>({out_c});
  }

  void init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_c) * k * k);
    for (auto& x : w.data) x = static_cast<T>(rng.uniform(-bound, bound));
    for (auto& x : b.data) x = static_cast<T>(rng.uniform(-bound, bound));
  }

  int out_h(int in_h) const { return (in_h + 2 * pad - k) / stride + 1; }
  int out_w(int in_w) const { return (in_w + 2 * pad - k) / stride + 1; }

  Tensor<T> forward(const Tensor<T>& x) const {
    const int ih = x.dim(1), iw = x.dim(2);
    const int oh = out_h(ih), ow = out_w(iw);
    Tensor<T> y({out_c, oh, ow});
    for (int co = 0; co < out_c; ++co) {
      T* yrow0 = y.ptr() + static_cast<int64_t>(co) * oh * ow;
      const T bias = b.data[static_cast<size_t>(co)];
      for (int64_t i = 0; i < static_cast<int64_t>(oh) * ow; ++i) yrow0[i] = bias;
      for (int ci = 0; ci < in_c; ++ci) {
        const T* xin = x.ptr() + static_cast<int64_t>(ci) * ih * iw;
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const T wv = w.data[((static_cast<size_t>(co) * in_c + ci) * k + ky) * k + kx];
            // valid ox range so that ix in [0, iw)
            int ox0 = 0;
            while (ox0 * stride + kx - pad < 0) ++ox0;
            int ox1 = ow;
            while (ox1 > ox0 && (ox1 - 1) * stride + kx - pad >= iw) --ox1;
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= ih) continue;
              T* yr = yrow0 + static_cast<int64_t>(oy) * ow;
              const T* xr = xin + static_cast<int64_t>(iy) * iw;
              const T* xp = xr + (static_cast<int64_t>(ox0) * stride + kx - pad);
              if (stride == 1) {
                for (int ox = ox0; ox < ox1; ++ox) yr[ox] += wv * xp[ox - ox0];
              } else {
                for (int ox = ox0; ox < ox1; ++ox) yr[ox] += wv * xp[static_cast<int64_t>(ox - ox0) * stride];
              }
            }
          }
        }
      }
    }
    return y;
  }

  // Accumulates gw/gb and returns dx.
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy) {
    const int ih = x.dim(1), iw = x.dim(2);
    const int oh = dy.dim(1), ow = dy.dim(2);
    Tensor<T> dx({in_c, ih, iw});
    for (int co = 0; co < out_c; ++co) {
      const T* dyin = dy.ptr() + static_cast<int64_t>(co) * oh * ow;
      T gbacc = T(0);
      for (int64_t i = 0; i < static_cast<int64_t>(oh) * ow; ++i) gbacc += dyin[i];
      gb.data[static_cast<size_t>(co)] += gbacc;
      for (int ci = 0; ci < in_c; ++ci) {
        const T* xin = x.ptr() + static_cast<int64_t>(ci) * ih * iw;
        T* dxin = dx.ptr() + static_cast<int64_t>(ci) * ih * iw;
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const size_t wi = ((static_cast<size_t>(co) * in_c + ci) * k + ky) * k + kx;
            const T wv = w.data[wi];
            T gwacc = T(0);
            int ox0 = 0;
            while (ox0 * stride + kx - pad < 0) ++ox0;
            int ox1 = ow;
            while (ox1 > ox0 && (ox1 - 1) * stride + kx - pad >= iw) --ox1;
            const int64_t base = static_cast<int64_t>(ox0) * stride + kx - pad;
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= ih) continue;
              const T* dyr = dyin + static_cast<int64_t>(oy) * ow;
              const T* xr = xin + static_cast<int64_t>(iy) * iw;
              T* dxr = dxin + static_cast<int64_t>(iy) * iw;
              if (stride == 1) {
                const T* xp = xr + base;
                T* dxp = dxr + base;
                for (int ox = ox0; ox < ox1; ++ox) {
                  const T g = dyr[ox];
                  gwacc += g * xp[ox - ox0];
                  dxp[ox - ox0] += wv * g;
                }
              } else {
                for (int ox = ox0; ox < ox1; ++ox) {
                  const int64_t off = base + static_cast<int64_t>(ox - ox0) * stride;
                  const T g = dyr[ox];
                  gwacc += g * xr[off];
                  dxr[off] += wv * g;
                }
              }
            }
            gw.data[wi] += gwacc;
          }
        }
      }
    }
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".w", &w, &gw});
    out.push_back({prefix + ".b", &b, &gb});
  }
};

template <typename T>
inline void relu_inplace(Tensor<T>& x) {
  for (auto& v : x.data)
    if (v < T(0)) v = T(0);
}

// dx masked by the post-activation values.
template <typename T>
inline Tensor<T> relu_backward(const Tensor<T>& post, const Tensor<T>& dy) {
  Tensor<T> dx(dy.shape);
  for (int64_t i = 0; i < dy.numel(); ++i)
    dx.data[static_cast<size_t>(i)] = post.data[static_cast<size_t>(i)] > T(0) ? dy.data[static_cast<size_t>(i)] : T(0);
  return dx;
}

// Fully connected layer over row batches: Y = X W^T + b.
template <typename T>
struct Linear {
  int in_f = 0, out_f = 0;
  Tensor<T> w;  // [out_f, in_f]
  Tensor<T> b;  // [out_f]
  Tensor<T> gw;
  Tensor<T> gb;

  Linear() = default;
  Linear(int in, int out) : in_f(in), out_f(out) {
    w = Tensor<T>({out_f, in_f});
    b = Tensor<T>({out_f});
    gw = Tensor<T>({out_f, in_f});
    gb = Tensor<T>({out_f});
  }

  void init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_f));
    for (auto& x : w.data) x = static_cast<T>(rng.uniform(-bound, bound));
    for (auto& x : b.data) x = static_cast<T>(rng.uniform(-bound, bound));
  }

  Tensor<T> forward(const Tensor<T>& x) const {  // x: [N, in_f]
    const int n = x.dim(0);
    Tensor<T> y({n, out_f});
    ConstMatMap<T> xm(x.ptr(), n, in_f);
    ConstMatMap<T> wm(w.ptr(), out_f, in_f);
    MatMap<T> ym(y.ptr(), n, out_f);
    ym.noalias() = xm * wm.transpose();
    ConstMatMap<T> bm(b.ptr(), 1, out_f);
    ym.rowwise() += bm.row(0);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy) {
    const int n = x.dim(0);
    Tensor<T> dx({n, in_f});
    ConstMatMap<T> xm(x.ptr(), n, in_f);
    ConstMatMap<T> wm(w.ptr(), out_f, in_f);
    ConstMatMap<T> dym(dy.ptr(), n, out_f);
    MatMap<T> dxm(dx.ptr(), n, in_f);
    MatMap<T> gwm(gw.ptr(), out_f, in_f);
    MatMap<T> gbm(gb.ptr(), 1, out_f);
    dxm.noalias() = dym * wm;
    gwm.noalias() += dym.transpose() * xm;
    gbm.row(0) += dym.colwise().sum();
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".w", &w, &gw});
    out.push_back({prefix + ".b", &b, &gb});
  }
};

// Row-wise L2 normalization with exact backward.
template <typename T>
struct L2NormRows {
  std::vector<T> inv_norm;  // per row, filled by forward

  Tensor<T> forward(const Tensor<T>& x) {
    const int n = x.dim(0), d = x.dim(1);
    Tensor<T> y(x.shape);
    inv_norm.assign(static_cast<size_t>(n), T(0));
    for (int i = 0; i < n; ++i) {
      const T* xr = x.ptr() + static_cast<int64_t>(i) * d;
      T* yr = y.ptr() + static_cast<int64_t>(i) * d;
      T s = T(0);
      for (int j = 0; j < d; ++j) s += xr[j] * xr[j];
      const T in = T(1) / std::sqrt(s + T(1e-12));
      inv_norm[static_cast<size_t>(i)] = in;
      for (int j = 0; j < d; ++j) yr[j] = xr[j] * in;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& y, const Tensor<T>& dy) const {
    const int n = y.dim(0), d = y.dim(1);
    Tensor<T> dx(y.shape);
    for (int i = 0; i < n; ++i) {
      const T* yr = y.ptr() + static_cast<int64_t>(i) * d;
      const T* dyr = dy.ptr() + static_cast<int64_t>(i) * d;
      T* dxr = dx.ptr() + static_cast<int64_t>(i) * d;
      T dot = T(0);
      for (int j = 0; j < d; ++j) dot += yr[j] * dyr[j];
      const T in = inv_norm[static_cast<size_t>(i)];
      for (int j = 0; j < d; ++j) dxr[j] = (dyr[j] - yr[j] * dot) * in;
    }
    return dx;
  }
};

// Adam with classic (coupled) weight decay; state is checkpointable.
template <typename T>
struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  double weight_decay = 1e-5;
  int64_t step_count = 0;
  std::vector<Tensor<T>> m, v;

  void attach(const std::vector<ParamRef<T>>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.value->shape);
      v.emplace_back(p.value->shape);
    }
  }

  void step(const std::vector<ParamRef<T>>& params) {
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& pm = m[i];
      Tensor<T>& pv = v[i];
      Tensor<T>& val = *params[i].value;
      Tensor<T>& grd = *params[i].grad;
      for (int64_t j = 0; j < val.numel(); ++j) {
        const size_t k = static_cast<size_t>(j);
        double g = static_cast<double>(grd.data[k]) + weight_decay * static_cast<double>(val.data[k]);
        double mm = beta1 * static_cast<double>(pm.data[k]) + (1.0 - beta1) * g;
        double vv = beta2 * static_cast<double>(pv.data[k]) + (1.0 - beta2) * g * g;
        pm.data[k] = static_cast<T>(mm);
        pv.data[k] = static_cast<T>(vv);
        const double mhat = mm / bc1;
        const double vhat = vv / bc2;
        val.data[k] = static_cast<T>(static_cast<double>(val.data[k]) - lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }
};

template <typename T>
inline void zero_grads(const std::vector<ParamRef<T>>& params) {
  for (const auto& p : params) p.grad->fill(T(0));
}

template <typename T>
inline int64_t param_count(const std::vector<ParamRef<T>>& params) {
  int64_t n = 0;
  for (const auto& p : params) n += p.value->numel();
  return n;
}

}  // namespace psc::nn
