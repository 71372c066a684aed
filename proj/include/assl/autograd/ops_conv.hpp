#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include <omp.h>

#include "assl/autograd/ops_basic.hpp"
#include "assl/autograd/variable.hpp"
#include "assl/core/blas.hpp"
#include "assl/core/flops.hpp"

namespace assl::ag {

enum class Act { none, relu, swish };

namespace detail {

template <typename T>
inline T act_forward(Act act, T z) {
  switch (act) {
    case Act::relu:
      return z > T(0) ? z : T(0);
    case Act::swish: {
      T s = T(1) / (T(1) + std::exp(-z));
      return z * s;
    }
    default:
      return z;
  }
}

template <typename T>
inline T act_derivative(Act act, T z) {
  switch (act) {
    case Act::relu:
      return z > T(0) ? T(1) : T(0);
    case Act::swish: {
      T s = T(1) / (T(1) + std::exp(-z));
      return s * (T(1) + z * (T(1) - s));
    }
    default:
      return T(1);
  }
}

/// Unfolds one image's group slice into [Cg*kh*kw, Hout*Wout] columns.
template <typename T>
void im2col(const T* x, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, int64_t Hout, int64_t Wout, T* col) {
  for (int64_t c = 0; c < C; ++c) {
    const T* xc = x + c * H * W;
    for (int64_t i = 0; i < kh; ++i) {
      for (int64_t j = 0; j < kw; ++j) {
        T* row = col + ((c * kh + i) * kw + j) * Hout * Wout;
        for (int64_t oh = 0; oh < Hout; ++oh) {
          int64_t ih = oh * stride - pad + i;
          if (ih < 0 || ih >= H) {
            for (int64_t ow = 0; ow < Wout; ++ow) row[oh * Wout + ow] = T(0);
            continue;
          }
          for (int64_t ow = 0; ow < Wout; ++ow) {
            int64_t iw = ow * stride - pad + j;
            row[oh * Wout + ow] =
                (iw >= 0 && iw < W) ? xc[ih * W + iw] : T(0);
          }
        }
      }
    }
  }
}

/// Scatter-adds columns back into the image (adjoint of im2col).
template <typename T>
void col2im(const T* col, int64_t C, int64_t H, int64_t W, int64_t kh,
            int64_t kw, int64_t stride, int64_t pad, int64_t Hout, int64_t Wout,
            T* x) {
  for (int64_t c = 0; c < C; ++c) {
    T* xc = x + c * H * W;
    for (int64_t i = 0; i < kh; ++i) {
      for (int64_t j = 0; j < kw; ++j) {
        const T* row = col + ((c * kh + i) * kw + j) * Hout * Wout;
        for (int64_t oh = 0; oh < Hout; ++oh) {
          int64_t ih = oh * stride - pad + i;
          if (ih < 0 || ih >= H) continue;
          for (int64_t ow = 0; ow < Wout; ++ow) {
            int64_t iw = ow * stride - pad + j;
            if (iw >= 0 && iw < W) xc[ih * W + iw] += row[oh * Wout + ow];
          }
        }
      }
    }
  }
}

template <typename T>
void depthwise_forward(const T* x, const T* w, int64_t N, int64_t C, int64_t H,
                       int64_t W, int64_t kh, int64_t kw, int64_t stride,
                       int64_t pad, int64_t Hout, int64_t Wout, T* y) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const T* xc = x + (n * C + c) * H * W;
      const T* wc = w + c * kh * kw;
      T* yc = y + (n * C + c) * Hout * Wout;
      for (int64_t oh = 0; oh < Hout; ++oh) {
        for (int64_t ow = 0; ow < Wout; ++ow) {
          T acc = T(0);
          for (int64_t i = 0; i < kh; ++i) {
            int64_t ih = oh * stride - pad + i;
            if (ih < 0 || ih >= H) continue;
            for (int64_t j = 0; j < kw; ++j) {
              int64_t iw = ow * stride - pad + j;
              if (iw < 0 || iw >= W) continue;
              acc += xc[ih * W + iw] * wc[i * kw + j];
            }
          }
          yc[oh * Wout + ow] = acc;
        }
      }
    }
  }
}

}  // namespace detail

struct ConvGeom {
  int64_t stride = 1;
  int64_t pad = 0;
  int64_t groups = 1;
};

/// 2-D convolution, NCHW, weight [Cout, Cin/groups, kh, kw], optional bias.
/// 1x1/stride-1 and depthwise cases take direct paths; everything else goes
/// through per-image im2col + GEMM. im2col buffers are rebuilt in backward
/// rather than cached, trading FLOPs for activation memory.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias,
              ConvGeom geom) {
  const auto& xs = x->value.shape();
  const auto& ws = w->value.shape();
  if (xs.size() != 4 || ws.size() != 4)
    throw std::invalid_argument("conv2d: expects NCHW input and OIHW weight");
  const int64_t N = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
  const int64_t Cout = ws[0], Cg = ws[1], kh = ws[2], kw = ws[3];
  const int64_t G = geom.groups, s = geom.stride, p = geom.pad;
  if (Cin != Cg * G) throw std::invalid_argument("conv2d: channel/group mismatch");
  if (Cout % G != 0) throw std::invalid_argument("conv2d: Cout not divisible by groups");
  const int64_t Hout = (H + 2 * p - kh) / s + 1;
  const int64_t Wout = (W + 2 * p - kw) / s + 1;
  if (Hout < 1 || Wout < 1) throw std::invalid_argument("conv2d: output would be empty");
  const int64_t Cog = Cout / G;
  const int64_t HWo = Hout * Wout;
  const bool pointwise = (kh == 1 && kw == 1 && s == 1 && p == 0 && G == 1);
  const bool depthwise = (G == Cin && Cout == Cin && Cg == 1);

  Tensor<T> out({N, Cout, Hout, Wout});
  const T* px = x->value.data();
  const T* pw = w->value.data();
  T* po = out.data();

  if (pointwise) {
#pragma omp parallel for schedule(static)
    for (int64_t n = 0; n < N; ++n)
      gemm(false, false, Cout, HWo, Cin, T(1), pw, Cin, px + n * Cin * H * W,
           HWo, T(0), po + n * Cout * HWo, HWo);
  } else if (depthwise) {
    detail::depthwise_forward(px, pw, N, Cin, H, W, kh, kw, s, p, Hout, Wout,
                              po);
  } else {
    const int64_t K = Cg * kh * kw;
#pragma omp parallel
    {
      std::vector<T> col(static_cast<size_t>(K * HWo));
#pragma omp for schedule(static)
      for (int64_t n = 0; n < N; ++n) {
        for (int64_t g = 0; g < G; ++g) {
          detail::im2col(px + (n * Cin + g * Cg) * H * W, Cg, H, W, kh, kw, s,
                         p, Hout, Wout, col.data());
          gemm(false, false, Cog, HWo, K, T(1), pw + g * Cog * K, K, col.data(),
               HWo, T(0), po + (n * Cout + g * Cog) * HWo, HWo);
        }
      }
    }
  }
  if (bias) {
    const T* pb = bias->value.data();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < Cout; ++c) {
        T* oc = po + (n * Cout + c) * HWo;
        for (int64_t i = 0; i < HWo; ++i) oc[i] += pb[c];
      }
  }
  flops::add(N * Cout * HWo * (Cg * kh * kw) + (bias ? N * Cout * HWo : 0));
  flops::add_macs(N * Cout * HWo * (Cg * kh * kw));

  std::vector<Var<T>> inputs = bias ? std::vector<Var<T>>{x, w, bias}
                                    : std::vector<Var<T>>{x, w};
  return detail::make_op<T>(
      std::move(out), std::move(inputs),
      [=](Node<T>& node) {
        const T* up = node.grad.data();
        const auto& x_in = node.inputs[0];
        const auto& w_in = node.inputs[1];
        const T* xv = x_in->value.data();
        const T* wv = w_in->value.data();

        if (node.inputs.size() == 3 && node.inputs[2]->requires_grad) {
          Tensor<T>& gb = node.inputs[2]->ensure_grad();
          T* pgb = gb.data();
          for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < Cout; ++c) {
              const T* uc = up + (n * Cout + c) * HWo;
              T acc = T(0);
              for (int64_t i = 0; i < HWo; ++i) acc += uc[i];
              pgb[c] += acc;
            }
        }

        if (pointwise) {
          if (x_in->requires_grad) {
            Tensor<T>& gx = x_in->ensure_grad();
#pragma omp parallel for schedule(static)
            for (int64_t n = 0; n < N; ++n)
              gemm(true, false, Cin, HWo, Cout, T(1), wv, Cin,
                   up + n * Cout * HWo, HWo, T(1), gx.data() + n * Cin * HWo,
                   HWo);
          }
          if (w_in->requires_grad) {
            Tensor<T>& gw = w_in->ensure_grad();
            const int64_t wsize = Cout * Cin;
            const int nt = omp_get_max_threads();
            std::vector<std::vector<T>> partial(
                nt, std::vector<T>(static_cast<size_t>(wsize), T(0)));
#pragma omp parallel for schedule(static)
            for (int64_t n = 0; n < N; ++n)
              gemm(false, true, Cout, Cin, HWo, T(1), up + n * Cout * HWo, HWo,
                   xv + n * Cin * HWo, HWo, T(1),
                   partial[omp_get_thread_num()].data(), Cin);
            T* pgw = gw.data();
            for (const auto& part : partial)
              for (int64_t i = 0; i < wsize; ++i) pgw[i] += part[i];
          }
          return;
        }

        if (depthwise) {
          if (x_in->requires_grad) {
            Tensor<T>& gx = x_in->ensure_grad();
            T* pgx = gx.data();
#pragma omp parallel for collapse(2) schedule(static)
            for (int64_t n = 0; n < N; ++n) {
              for (int64_t c = 0; c < Cin; ++c) {
                const T* uc = up + (n * Cin + c) * HWo;
                const T* wc = wv + c * kh * kw;
                T* gxc = pgx + (n * Cin + c) * H * W;
                for (int64_t oh = 0; oh < Hout; ++oh)
                  for (int64_t ow = 0; ow < Wout; ++ow) {
                    T u = uc[oh * Wout + ow];
                    for (int64_t i = 0; i < kh; ++i) {
                      int64_t ih = oh * s - p + i;
                      if (ih < 0 || ih >= H) continue;
                      for (int64_t j = 0; j < kw; ++j) {
                        int64_t iw = ow * s - p + j;
                        if (iw < 0 || iw >= W) continue;
                        gxc[ih * W + iw] += u * wc[i * kw + j];
                      }
                    }
                  }
              }
            }
          }
          if (w_in->requires_grad) {
            Tensor<T>& gw = w_in->ensure_grad();
            T* pgw = gw.data();
#pragma omp parallel for schedule(static)
            for (int64_t c = 0; c < Cin; ++c) {
              for (int64_t n = 0; n < N; ++n) {
                const T* uc = up + (n * Cin + c) * HWo;
                const T* xc = xv + (n * Cin + c) * H * W;
                for (int64_t i = 0; i < kh; ++i)
                  for (int64_t j = 0; j < kw; ++j) {
                    T acc = T(0);
                    for (int64_t oh = 0; oh < Hout; ++oh) {
                      int64_t ih = oh * s - p + i;
                      if (ih < 0 || ih >= H) continue;
                      for (int64_t ow = 0; ow < Wout; ++ow) {
                        int64_t iw = ow * s - p + j;
                        if (iw < 0 || iw >= W) continue;
                        acc += uc[oh * Wout + ow] * xc[ih * W + iw];
                      }
                    }
                    pgw[c * kh * kw + i * kw + j] += acc;
                  }
              }
            }
          }
          return;
        }

        const int64_t K = Cg * kh * kw;
        if (w_in->requires_grad) {
          Tensor<T>& gw = w_in->ensure_grad();
          const int64_t wsize = Cout * K;
          const int nt = omp_get_max_threads();
          std::vector<std::vector<T>> partial(
              nt, std::vector<T>(static_cast<size_t>(wsize), T(0)));
#pragma omp parallel
          {
            std::vector<T> col(static_cast<size_t>(K * HWo));
            T* mine = partial[omp_get_thread_num()].data();
#pragma omp for schedule(static)
            for (int64_t n = 0; n < N; ++n) {
              for (int64_t g = 0; g < G; ++g) {
                detail::im2col(xv + (n * Cin + g * Cg) * H * W, Cg, H, W, kh,
                               kw, s, p, Hout, Wout, col.data());
                gemm(false, true, Cog, K, HWo, T(1),
                     up + (n * Cout + g * Cog) * HWo, HWo, col.data(), HWo,
                     T(1), mine + g * Cog * K, K);
              }
            }
          }
          T* pgw = gw.data();
          for (const auto& part : partial)
            for (int64_t i = 0; i < wsize; ++i) pgw[i] += part[i];
        }
        if (x_in->requires_grad) {
          Tensor<T>& gx = x_in->ensure_grad();
#pragma omp parallel
          {
            std::vector<T> col(static_cast<size_t>(K * HWo));
#pragma omp for schedule(static)
            for (int64_t n = 0; n < N; ++n) {
              for (int64_t g = 0; g < G; ++g) {
                gemm(true, false, K, HWo, Cog, T(1), wv + g * Cog * K, K,
                     up + (n * Cout + g * Cog) * HWo, HWo, T(0), col.data(),
                     HWo);
                detail::col2im(col.data(), Cg, H, W, kh, kw, s, p, Hout, Wout,
                               gx.data() + (n * Cin + g * Cg) * H * W);
              }
            }
          }
        }
      });
}

/// Batch normalization fused with an optional activation. Running statistics
/// are plain tensors updated in place during training-mode forward; they are
/// never part of the graph. The normalized pre-activation is recomputed in
/// backward from the saved per-channel stats instead of being stored.
template <typename T>
Var<T> batch_norm_act(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var,
                      bool training, T momentum, T eps, Act act) {
  const auto& xs = x->value.shape();
  if (xs.size() != 4) throw std::invalid_argument("batch_norm_act: expects NCHW");
  const int64_t N = xs[0], C = xs[1], HW = xs[2] * xs[3];
  const int64_t m = N * HW;

  auto mean = std::make_shared<std::vector<T>>(C);
  auto invstd = std::make_shared<std::vector<T>>(C);
  const T* px = x->value.data();

  if (training) {
#pragma omp parallel for schedule(static)
    for (int64_t c = 0; c < C; ++c) {
      T sum = T(0), sq = T(0);
      for (int64_t n = 0; n < N; ++n) {
        const T* xc = px + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) {
          sum += xc[i];
          sq += xc[i] * xc[i];
        }
      }
      T mu = sum / static_cast<T>(m);
      T var = sq / static_cast<T>(m) - mu * mu;
      if (var < T(0)) var = T(0);
      (*mean)[c] = mu;
      (*invstd)[c] = T(1) / std::sqrt(var + eps);
      running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * mu;
      T unbiased = m > 1 ? var * static_cast<T>(m) / static_cast<T>(m - 1) : var;
      running_var[c] = (T(1) - momentum) * running_var[c] + momentum * unbiased;
    }
  } else {
    for (int64_t c = 0; c < C; ++c) {
      (*mean)[c] = running_mean[c];
      (*invstd)[c] = T(1) / std::sqrt(running_var[c] + eps);
    }
  }

  Tensor<T> out(xs);
  const T* pg = gamma->value.data();
  const T* pb = beta->value.data();
  T* po = out.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const T mu = (*mean)[c], is = (*invstd)[c], g = pg[c], b = pb[c];
      const T* xc = px + (n * C + c) * HW;
      T* oc = po + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i)
        oc[i] = detail::act_forward(act, (xc[i] - mu) * is * g + b);
    }

  flops::add(out.size() * (act == Act::none ? 1 : 2));
  return detail::make_op<T>(
      std::move(out), {x, gamma, beta},
      [mean, invstd, training, act, N, C, HW, m](Node<T>& node) {
        const T* up = node.grad.data();
        const auto& x_in = node.inputs[0];
        const T* xv = x_in->value.data();
        const T* pg = node.inputs[1]->value.data();
        const T* pb = node.inputs[2]->value.data();
        Tensor<T>* gx =
            x_in->requires_grad ? &x_in->ensure_grad() : nullptr;
        Tensor<T>* ggamma = node.inputs[1]->requires_grad
                                ? &node.inputs[1]->ensure_grad()
                                : nullptr;
        Tensor<T>* gbeta = node.inputs[2]->requires_grad
                               ? &node.inputs[2]->ensure_grad()
                               : nullptr;
#pragma omp parallel for schedule(static)
        for (int64_t c = 0; c < C; ++c) {
          const T mu = (*mean)[c], is = (*invstd)[c], g = pg[c], b = pb[c];
          T sum_da = T(0), sum_da_xhat = T(0);
          for (int64_t n = 0; n < N; ++n) {
            const T* xc = xv + (n * C + c) * HW;
            const T* uc = up + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) {
              T xhat = (xc[i] - mu) * is;
              T da = uc[i] * detail::act_derivative(act, xhat * g + b);
              sum_da += da;
              sum_da_xhat += da * xhat;
            }
          }
          if (ggamma) ggamma->data()[c] += sum_da_xhat;
          if (gbeta) gbeta->data()[c] += sum_da;
          if (gx) {
            T* pgx = gx->data();
            const T inv_m = T(1) / static_cast<T>(m);
            for (int64_t n = 0; n < N; ++n) {
              const T* xc = xv + (n * C + c) * HW;
              const T* uc = up + (n * C + c) * HW;
              T* gc = pgx + (n * C + c) * HW;
              for (int64_t i = 0; i < HW; ++i) {
                T xhat = (xc[i] - mu) * is;
                T da = uc[i] * detail::act_derivative(act, xhat * g + b);
                if (training)
                  gc[i] += g * is *
                           (da - sum_da * inv_m - xhat * sum_da_xhat * inv_m);
                else
                  gc[i] += g * is * da;
              }
            }
          }
        }
      });
}

/// Max pooling with saved argmax indices.
template <typename T>
Var<T> max_pool2d(const Var<T>& x, int64_t k, int64_t stride, int64_t pad) {
  const auto& xs = x->value.shape();
  const int64_t N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const int64_t Hout = (H + 2 * pad - k) / stride + 1;
  const int64_t Wout = (W + 2 * pad - k) / stride + 1;
  Tensor<T> out({N, C, Hout, Wout});
  auto argmax = std::make_shared<std::vector<int64_t>>(out.size());
  const T* px = x->value.data();
  T* po = out.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const T* xc = px + (n * C + c) * H * W;
      T* oc = po + (n * C + c) * Hout * Wout;
      int64_t* am = argmax->data() + (n * C + c) * Hout * Wout;
      for (int64_t oh = 0; oh < Hout; ++oh)
        for (int64_t ow = 0; ow < Wout; ++ow) {
          T best = -std::numeric_limits<T>::infinity();
          int64_t best_idx = -1;
          for (int64_t i = 0; i < k; ++i) {
            int64_t ih = oh * stride - pad + i;
            if (ih < 0 || ih >= H) continue;
            for (int64_t j = 0; j < k; ++j) {
              int64_t iw = ow * stride - pad + j;
              if (iw < 0 || iw >= W) continue;
              if (xc[ih * W + iw] > best) {
                best = xc[ih * W + iw];
                best_idx = ih * W + iw;
              }
            }
          }
          oc[oh * Wout + ow] = best;
          am[oh * Wout + ow] = best_idx;
        }
    }
  flops::add(out.size());
  const int64_t plane_in = H * W, plane_out = Hout * Wout;
  return detail::make_op<T>(
      std::move(out), {x}, [argmax, plane_in, plane_out](Node<T>& n) {
        if (!n.inputs[0]->requires_grad) return;
        Tensor<T>& g = n.inputs[0]->ensure_grad();
        const T* up = n.grad.data();
        T* pg = g.data();
        const int64_t planes = n.grad.size() / plane_out;
        for (int64_t pc = 0; pc < planes; ++pc)
          for (int64_t i = 0; i < plane_out; ++i) {
            int64_t idx = (*argmax)[pc * plane_out + i];
            if (idx >= 0) pg[pc * plane_in + idx] += up[pc * plane_out + i];
          }
      });
}

}  // namespace assl::ag
