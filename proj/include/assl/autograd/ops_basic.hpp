#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "assl/autograd/variable.hpp"
#include "assl/core/blas.hpp"
#include "assl/core/flops.hpp"

namespace assl::ag {

namespace detail {

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs,
               std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>(std::move(value));
  if (grad_enabled()) {
    for (const auto& in : inputs)
      if (in->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
      n->inputs = std::move(inputs);
      n->backward_fn = std::move(backward_fn);
    }
  }
  return n;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument("add: shape mismatch " + a->value.shape_str() +
                                " vs " + b->value.shape_str());
  Tensor<T> out(a->value.shape());
  const T* pa = a->value.data();
  const T* pb = b->value.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];
  flops::add(out.size());
  return detail::make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
    if (n.inputs[0]->requires_grad) n.inputs[0]->add_grad(n.grad);
    if (n.inputs[1]->requires_grad) n.inputs[1]->add_grad(n.grad);
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T c) {
  Tensor<T> out(x->value.shape());
  const T* px = x->value.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = px[i] * c;
  flops::add(out.size());
  return detail::make_op<T>(std::move(out), {x}, [c](Node<T>& n) {
    if (!n.inputs[0]->requires_grad) return;
    Tensor<T>& g = n.inputs[0]->ensure_grad();
    const T* up = n.grad.data();
    T* pg = g.data();
    for (int64_t i = 0; i < g.size(); ++i) pg[i] += c * up[i];
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out(x->value.shape());
  const T* px = x->value.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = px[i] > T(0) ? px[i] : T(0);
  flops::add(out.size());
  return detail::make_op<T>(std::move(out), {x}, [](Node<T>& n) {
    if (!n.inputs[0]->requires_grad) return;
    Tensor<T>& g = n.inputs[0]->ensure_grad();
    const T* y = n.value.data();
    const T* up = n.grad.data();
    T* pg = g.data();
    for (int64_t i = 0; i < g.size(); ++i)
      if (y[i] > T(0)) pg[i] += up[i];
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x->value.shape());
  const T* px = x->value.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = T(1) / (T(1) + std::exp(-px[i]));
  flops::add(out.size());
  return detail::make_op<T>(std::move(out), {x}, [](Node<T>& n) {
    if (!n.inputs[0]->requires_grad) return;
    Tensor<T>& g = n.inputs[0]->ensure_grad();
    const T* y = n.value.data();
    const T* up = n.grad.data();
    T* pg = g.data();
    for (int64_t i = 0; i < g.size(); ++i) pg[i] += up[i] * y[i] * (T(1) - y[i]);
  });
}

/// swish(x) = x * sigmoid(x)
template <typename T>
Var<T> swish(const Var<T>& x) {
  Tensor<T> out(x->value.shape());
  const T* px = x->value.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) {
    T s = T(1) / (T(1) + std::exp(-px[i]));
    po[i] = px[i] * s;
  }
  flops::add(out.size());
  return detail::make_op<T>(std::move(out), {x}, [](Node<T>& n) {
    if (!n.inputs[0]->requires_grad) return;
    Tensor<T>& g = n.inputs[0]->ensure_grad();
    const T* xi = n.inputs[0]->value.data();
    const T* up = n.grad.data();
    T* pg = g.data();
    for (int64_t i = 0; i < g.size(); ++i) {
      T s = T(1) / (T(1) + std::exp(-xi[i]));
      pg[i] += up[i] * s * (T(1) + xi[i] * (T(1) - s));
    }
  });
}

/// Elementwise product with limited broadcasting: `gate` is either the full
/// shape of x, [N,C,1,1], or [N,1,H,W].
template <typename T>
Var<T> mul_gate(const Var<T>& x, const Var<T>& gate) {
  const auto& xs = x->value.shape();
  const auto& gs = gate->value.shape();
  if (xs.size() != 4 || gs.size() != 4 || xs[0] != gs[0])
    throw std::invalid_argument("mul_gate: expects NCHW operands");
  const bool channel_gate = (gs[1] == xs[1] && gs[2] == 1 && gs[3] == 1);
  const bool spatial_gate = (gs[1] == 1 && gs[2] == xs[2] && gs[3] == xs[3]);
  const bool full = gate->value.same_shape(x->value);
  if (!channel_gate && !spatial_gate && !full)
    throw std::invalid_argument("mul_gate: unsupported gate shape " +
                                gate->value.shape_str());
  const int64_t N = xs[0], C = xs[1], H = xs[2], W = xs[3], HW = H * W;
  Tensor<T> out(xs);
  const T* px = x->value.data();
  const T* pg = gate->value.data();
  T* po = out.data();
  if (full) {
    for (int64_t i = 0; i < out.size(); ++i) po[i] = px[i] * pg[i];
  } else if (channel_gate) {
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) {
        T g = pg[n * C + c];
        const T* xi = px + (n * C + c) * HW;
        T* oi = po + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) oi[i] = xi[i] * g;
      }
  } else {
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) {
        const T* gi = pg + n * HW;
        const T* xi = px + (n * C + c) * HW;
        T* oi = po + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) oi[i] = xi[i] * gi[i];
      }
  }
  flops::add(out.size());
  return detail::make_op<T>(
      std::move(out), {x, gate},
      [channel_gate, spatial_gate, N, C, HW](Node<T>& n) {
        const T* up = n.grad.data();
        const T* px = n.inputs[0]->value.data();
        const T* pg = n.inputs[1]->value.data();
        if (n.inputs[0]->requires_grad) {
          Tensor<T>& gx = n.inputs[0]->ensure_grad();
          T* d = gx.data();
          if (channel_gate) {
            for (int64_t b = 0; b < N; ++b)
              for (int64_t c = 0; c < C; ++c) {
                T g = pg[b * C + c];
                T* di = d + (b * C + c) * HW;
                const T* ui = up + (b * C + c) * HW;
                for (int64_t i = 0; i < HW; ++i) di[i] += ui[i] * g;
              }
          } else if (spatial_gate) {
            for (int64_t b = 0; b < N; ++b)
              for (int64_t c = 0; c < C; ++c) {
                const T* gi = pg + b * HW;
                T* di = d + (b * C + c) * HW;
                const T* ui = up + (b * C + c) * HW;
                for (int64_t i = 0; i < HW; ++i) di[i] += ui[i] * gi[i];
              }
          } else {
            for (int64_t i = 0; i < gx.size(); ++i) d[i] += up[i] * pg[i];
          }
        }
        if (n.inputs[1]->requires_grad) {
          Tensor<T>& gg = n.inputs[1]->ensure_grad();
          T* d = gg.data();
          if (channel_gate) {
            for (int64_t b = 0; b < N; ++b)
              for (int64_t c = 0; c < C; ++c) {
                const T* xi = px + (b * C + c) * HW;
                const T* ui = up + (b * C + c) * HW;
                T acc = T(0);
                for (int64_t i = 0; i < HW; ++i) acc += ui[i] * xi[i];
                d[b * C + c] += acc;
              }
          } else if (spatial_gate) {
            for (int64_t b = 0; b < N; ++b)
              for (int64_t c = 0; c < C; ++c) {
                const T* xi = px + (b * C + c) * HW;
                const T* ui = up + (b * C + c) * HW;
                T* di = d + b * HW;
                for (int64_t i = 0; i < HW; ++i) di[i] += ui[i] * xi[i];
              }
          } else {
            for (int64_t i = 0; i < gg.size(); ++i) d[i] += up[i] * px[i];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Shape / reductions
// ---------------------------------------------------------------------------

template <typename T>
Var<T> reshape(const Var<T>& x, std::vector<int64_t> shape) {
  Tensor<T> out = x->value.reshape(std::move(shape));
  return detail::make_op<T>(std::move(out), {x}, [](Node<T>& n) {
    if (!n.inputs[0]->requires_grad) return;
    n.inputs[0]->add_grad(n.grad.reshape(n.inputs[0]->value.shape()));
  });
}

/// [N,C,H,W] -> [N,C] mean over the spatial plane.
template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  const auto& s = x->value.shape();
  const int64_t N = s[0], C = s[1], HW = s[2] * s[3];
  Tensor<T> out({N, C});
  const T* px = x->value.data();
  T* po = out.data();
  for (int64_t nc = 0; nc < N * C; ++nc) {
    T acc = T(0);
    const T* xi = px + nc * HW;
    for (int64_t i = 0; i < HW; ++i) acc += xi[i];
    po[nc] = acc / static_cast<T>(HW);
  }
  flops::add(out.size());
  return detail::make_op<T>(std::move(out), {x}, [HW](Node<T>& n) {
    if (!n.inputs[0]->requires_grad) return;
    Tensor<T>& g = n.inputs[0]->ensure_grad();
    const T* up = n.grad.data();
    T* pg = g.data();
    const int64_t NC = n.grad.size();
    for (int64_t nc = 0; nc < NC; ++nc) {
      T v = up[nc] / static_cast<T>(HW);
      T* gi = pg + nc * HW;
      for (int64_t i = 0; i < HW; ++i) gi[i] += v;
    }
  });
}

/// [N,C,H,W] -> [N,C] max over the spatial plane.
template <typename T>
Var<T> global_max_pool(const Var<T>& x) {
  const auto& s = x->value.shape();
  const int64_t N = s[0], C = s[1], HW = s[2] * s[3];
  Tensor<T> out({N, C});
  auto argmax = std::make_shared<std::vector<int64_t>>(N * C);
  const T* px = x->value.data();
  T* po = out.data();
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const T* xi = px + nc * HW;
    int64_t best = 0;
    for (int64_t i = 1; i < HW; ++i)
      if (xi[i] > xi[best]) best = i;
    (*argmax)[nc] = best;
    po[nc] = xi[best];
  }
  flops::add(out.size());
  return detail::make_op<T>(std::move(out), {x}, [argmax, HW](Node<T>& n) {
    if (!n.inputs[0]->requires_grad) return;
    Tensor<T>& g = n.inputs[0]->ensure_grad();
    const T* up = n.grad.data();
    T* pg = g.data();
    for (int64_t nc = 0; nc < n.grad.size(); ++nc)
      pg[nc * HW + (*argmax)[nc]] += up[nc];
  });
}

/// [N,C,H,W] -> [N,1,H,W] mean over channels.
template <typename T>
Var<T> channel_mean(const Var<T>& x) {
  const auto& s = x->value.shape();
  const int64_t N = s[0], C = s[1], HW = s[2] * s[3];
  Tensor<T> out({N, 1, s[2], s[3]});
  const T* px = x->value.data();
  T* po = out.data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t i = 0; i < HW; ++i) {
      T acc = T(0);
      for (int64_t c = 0; c < C; ++c) acc += px[(n * C + c) * HW + i];
      po[n * HW + i] = acc / static_cast<T>(C);
    }
  flops::add(out.size());
  return detail::make_op<T>(std::move(out), {x}, [N, C, HW](Node<T>& n) {
    if (!n.inputs[0]->requires_grad) return;
    Tensor<T>& g = n.inputs[0]->ensure_grad();
    const T* up = n.grad.data();
    T* pg = g.data();
    for (int64_t b = 0; b < N; ++b)
      for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < HW; ++i)
          pg[(b * C + c) * HW + i] += up[b * HW + i] / static_cast<T>(C);
  });
}

/// [N,C,H,W] -> [N,1,H,W] max over channels.
template <typename T>
Var<T> channel_max(const Var<T>& x) {
  const auto& s = x->value.shape();
  const int64_t N = s[0], C = s[1], HW = s[2] * s[3];
  Tensor<T> out({N, 1, s[2], s[3]});
  auto argmax = std::make_shared<std::vector<int64_t>>(N * HW);
  const T* px = x->value.data();
  T* po = out.data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t i = 0; i < HW; ++i) {
      int64_t best = 0;
      T bv = px[(n * C) * HW + i];
      for (int64_t c = 1; c < C; ++c) {
        T v = px[(n * C + c) * HW + i];
        if (v > bv) {
          bv = v;
          best = c;
        }
      }
      (*argmax)[n * HW + i] = best;
      po[n * HW + i] = bv;
    }
  flops::add(out.size());
  return detail::make_op<T>(std::move(out), {x}, [argmax, N, C, HW](Node<T>& n) {
    if (!n.inputs[0]->requires_grad) return;
    Tensor<T>& g = n.inputs[0]->ensure_grad();
    const T* up = n.grad.data();
    T* pg = g.data();
    for (int64_t b = 0; b < N; ++b)
      for (int64_t i = 0; i < HW; ++i)
        pg[(b * C + (*argmax)[b * HW + i]) * HW + i] += up[b * HW + i];
  });
}

/// Concatenate two NCHW tensors along the channel axis.
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const auto& sa = a->value.shape();
  const auto& sb = b->value.shape();
  if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3])
    throw std::invalid_argument("concat_channels: incompatible shapes");
  const int64_t N = sa[0], Ca = sa[1], Cb = sb[1], HW = sa[2] * sa[3];
  Tensor<T> out({N, Ca + Cb, sa[2], sa[3]});
  const T* pa = a->value.data();
  const T* pb = b->value.data();
  T* po = out.data();
  for (int64_t n = 0; n < N; ++n) {
    std::memcpy(po + n * (Ca + Cb) * HW, pa + n * Ca * HW,
                static_cast<size_t>(Ca * HW) * sizeof(T));
    std::memcpy(po + (n * (Ca + Cb) + Ca) * HW, pb + n * Cb * HW,
                static_cast<size_t>(Cb * HW) * sizeof(T));
  }
  return detail::make_op<T>(std::move(out), {a, b}, [N, Ca, Cb, HW](Node<T>& n) {
    const T* up = n.grad.data();
    if (n.inputs[0]->requires_grad) {
      Tensor<T>& g = n.inputs[0]->ensure_grad();
      T* pg = g.data();
      for (int64_t b = 0; b < N; ++b)
        for (int64_t i = 0; i < Ca * HW; ++i)
          pg[b * Ca * HW + i] += up[b * (Ca + Cb) * HW + i];
    }
    if (n.inputs[1]->requires_grad) {
      Tensor<T>& g = n.inputs[1]->ensure_grad();
      T* pg = g.data();
      for (int64_t b = 0; b < N; ++b)
        for (int64_t i = 0; i < Cb * HW; ++i)
          pg[b * Cb * HW + i] += up[(b * (Ca + Cb) + Ca) * HW + i];
    }
  });
}

template <typename T>
Var<T> mean_all(const Var<T>& x) {
  Tensor<T> out({1});
  const T* px = x->value.data();
  T acc = T(0);
  for (int64_t i = 0; i < x->value.size(); ++i) acc += px[i];
  out[0] = acc / static_cast<T>(x->value.size());
  return detail::make_op<T>(std::move(out), {x}, [](Node<T>& n) {
    if (!n.inputs[0]->requires_grad) return;
    Tensor<T>& g = n.inputs[0]->ensure_grad();
    T v = n.grad[0] / static_cast<T>(g.size());
    T* pg = g.data();
    for (int64_t i = 0; i < g.size(); ++i) pg[i] += v;
  });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// y = x W^T + b with torch-style weight [out, in]; b may be null.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const int64_t N = x->value.dim(0), Din = x->value.dim(1);
  const int64_t Dout = w->value.dim(0);
  if (w->value.dim(1) != Din)
    throw std::invalid_argument("linear: weight/input dim mismatch");
  Tensor<T> out({N, Dout});
  gemm(false, true, N, Dout, Din, T(1), x->value.data(), Din, w->value.data(),
       Din, T(0), out.data(), Dout);
  if (b) {
    T* po = out.data();
    const T* pb = b->value.data();
    for (int64_t i = 0; i < N; ++i)
      for (int64_t j = 0; j < Dout; ++j) po[i * Dout + j] += pb[j];
  }
  flops::add(N * Din * Dout + (b ? N * Dout : 0));
  std::vector<Var<T>> inputs = b ? std::vector<Var<T>>{x, w, b}
                                 : std::vector<Var<T>>{x, w};
  return detail::make_op<T>(
      std::move(out), std::move(inputs), [N, Din, Dout](Node<T>& n) {
        const T* up = n.grad.data();
        const auto& x_in = n.inputs[0];
        const auto& w_in = n.inputs[1];
        if (x_in->requires_grad) {
          Tensor<T>& g = x_in->ensure_grad();
          gemm(false, false, N, Din, Dout, T(1), up, Dout, w_in->value.data(),
               Din, T(1), g.data(), Din);
        }
        if (w_in->requires_grad) {
          Tensor<T>& g = w_in->ensure_grad();
          gemm(true, false, Dout, Din, N, T(1), up, Dout, x_in->value.data(),
               Din, T(1), g.data(), Din);
        }
        if (n.inputs.size() == 3 && n.inputs[2]->requires_grad) {
          Tensor<T>& g = n.inputs[2]->ensure_grad();
          T* pg = g.data();
          for (int64_t i = 0; i < N; ++i)
            for (int64_t j = 0; j < Dout; ++j) pg[j] += up[i * Dout + j];
        }
      });
}

/// C = A B^T for [M,K] x [N,K] -> [M,N]. A and B may be the same node.
template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  const int64_t M = a->value.dim(0), K = a->value.dim(1);
  const int64_t N = b->value.dim(0);
  if (b->value.dim(1) != K)
    throw std::invalid_argument("matmul_nt: inner dim mismatch");
  Tensor<T> out({M, N});
  gemm(false, true, M, N, K, T(1), a->value.data(), K, b->value.data(), K,
       T(0), out.data(), N);
  flops::add(M * N * K);
  return detail::make_op<T>(std::move(out), {a, b}, [M, N, K](Node<T>& n) {
    const T* up = n.grad.data();
    if (n.inputs[0]->requires_grad) {
      Tensor<T>& g = n.inputs[0]->ensure_grad();
      gemm(false, false, M, K, N, T(1), up, N, n.inputs[1]->value.data(), K,
           T(1), g.data(), K);
    }
    if (n.inputs[1]->requires_grad) {
      Tensor<T>& g = n.inputs[1]->ensure_grad();
      gemm(true, false, N, K, M, T(1), up, N, n.inputs[0]->value.data(), K,
           T(1), g.data(), K);
    }
  });
}

/// Row-wise L2 normalization with an epsilon floor on the norm.
template <typename T>
Var<T> l2_normalize_rows(const Var<T>& x, T eps = T(1e-12)) {
  const int64_t N = x->value.dim(0), D = x->value.dim(1);
  Tensor<T> out({N, D});
  auto norms = std::make_shared<std::vector<T>>(N);
  const T* px = x->value.data();
  T* po = out.data();
  for (int64_t i = 0; i < N; ++i) {
    T acc = T(0);
    for (int64_t j = 0; j < D; ++j) acc += px[i * D + j] * px[i * D + j];
    T nrm = std::sqrt(acc);
    if (nrm < eps) nrm = eps;
    (*norms)[i] = nrm;
    for (int64_t j = 0; j < D; ++j) po[i * D + j] = px[i * D + j] / nrm;
  }
  flops::add(out.size());
  return detail::make_op<T>(std::move(out), {x}, [norms, N, D](Node<T>& n) {
    if (!n.inputs[0]->requires_grad) return;
    Tensor<T>& g = n.inputs[0]->ensure_grad();
    const T* up = n.grad.data();
    const T* y = n.value.data();
    T* pg = g.data();
    for (int64_t i = 0; i < N; ++i) {
      T dot = T(0);
      for (int64_t j = 0; j < D; ++j) dot += y[i * D + j] * up[i * D + j];
      T inv = T(1) / (*norms)[i];
      for (int64_t j = 0; j < D; ++j)
        pg[i * D + j] += (up[i * D + j] - y[i * D + j] * dot) * inv;
    }
  });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Row-wise log-softmax. With exclude_diag the diagonal entry of a square
/// input is removed from the normalizer and its output slot is set to 0;
/// callers must never read or weight the diagonal.
template <typename T>
Var<T> log_softmax_rows(const Var<T>& x, bool exclude_diag = false) {
  const int64_t N = x->value.dim(0), K = x->value.dim(1);
  if (exclude_diag && N != K)
    throw std::invalid_argument("log_softmax_rows: exclude_diag needs a square input");
  Tensor<T> out({N, K});
  const T* px = x->value.data();
  T* po = out.data();
  for (int64_t i = 0; i < N; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (int64_t j = 0; j < K; ++j) {
      if (exclude_diag && j == i) continue;
      mx = std::max(mx, px[i * K + j]);
    }
    T sum = T(0);
    for (int64_t j = 0; j < K; ++j) {
      if (exclude_diag && j == i) continue;
      sum += std::exp(px[i * K + j] - mx);
    }
    T lse = mx + std::log(sum);
    for (int64_t j = 0; j < K; ++j)
      po[i * K + j] = (exclude_diag && j == i) ? T(0) : px[i * K + j] - lse;
  }
  flops::add(out.size());
  return detail::make_op<T>(
      std::move(out), {x}, [exclude_diag, N, K](Node<T>& n) {
        if (!n.inputs[0]->requires_grad) return;
        Tensor<T>& g = n.inputs[0]->ensure_grad();
        const T* up = n.grad.data();
        const T* y = n.value.data();
        T* pg = g.data();
        for (int64_t i = 0; i < N; ++i) {
          T tot = T(0);
          for (int64_t j = 0; j < K; ++j) {
            if (exclude_diag && j == i) continue;
            tot += up[i * K + j];
          }
          for (int64_t j = 0; j < K; ++j) {
            if (exclude_diag && j == i) continue;
            pg[i * K + j] += up[i * K + j] - std::exp(y[i * K + j]) * tot;
          }
        }
      });
}

/// -mean_i logp[i, idx[i]] over rows of a log-probability matrix.
template <typename T>
Var<T> nll_rows(const Var<T>& logp, const std::vector<int64_t>& idx) {
  const int64_t N = logp->value.dim(0), K = logp->value.dim(1);
  if (static_cast<int64_t>(idx.size()) != N)
    throw std::invalid_argument("nll_rows: index count mismatch");
  Tensor<T> out({1});
  T acc = T(0);
  const T* p = logp->value.data();
  for (int64_t i = 0; i < N; ++i) acc -= p[i * K + idx[i]];
  out[0] = acc / static_cast<T>(N);
  auto ix = std::make_shared<std::vector<int64_t>>(idx);
  return detail::make_op<T>(std::move(out), {logp}, [ix, N, K](Node<T>& n) {
    if (!n.inputs[0]->requires_grad) return;
    Tensor<T>& g = n.inputs[0]->ensure_grad();
    T v = n.grad[0] / static_cast<T>(N);
    T* pg = g.data();
    for (int64_t i = 0; i < N; ++i) pg[i * K + (*ix)[i]] -= v;
  });
}

/// -1/B sum_ij weights[i,j] * logp[i,j]; weights is a plain (non-graph) tensor.
template <typename T>
Var<T> weighted_nll(const Var<T>& logp, const Tensor<T>& weights) {
  if (!logp->value.same_shape(weights))
    throw std::invalid_argument("weighted_nll: shape mismatch");
  const int64_t B = logp->value.dim(0);
  Tensor<T> out({1});
  const T* p = logp->value.data();
  const T* w = weights.data();
  T acc = T(0);
  for (int64_t i = 0; i < logp->value.size(); ++i) acc -= w[i] * p[i];
  out[0] = acc / static_cast<T>(B);
  Tensor<T> wcopy = weights;
  return detail::make_op<T>(std::move(out), {logp}, [wcopy, B](Node<T>& n) {
    if (!n.inputs[0]->requires_grad) return;
    Tensor<T>& g = n.inputs[0]->ensure_grad();
    T v = n.grad[0] / static_cast<T>(B);
    const T* w = wcopy.data();
    T* pg = g.data();
    for (int64_t i = 0; i < g.size(); ++i) pg[i] -= v * w[i];
  });
}

/// Softmax cross-entropy over logits with integer labels, mean reduction.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, const std::vector<int64_t>& labels) {
  auto logp = log_softmax_rows(logits, false);
  return nll_rows(logp, labels);
}

/// Picks one scalar entry out of a 2-D node (used to seed per-logit sweeps).
template <typename T>
Var<T> select_entry(const Var<T>& x, int64_t row, int64_t col) {
  const int64_t K = x->value.dim(1);
  Tensor<T> out({1});
  out[0] = x->value.data()[row * K + col];
  return detail::make_op<T>(std::move(out), {x}, [row, col, K](Node<T>& n) {
    if (!n.inputs[0]->requires_grad) return;
    Tensor<T>& g = n.inputs[0]->ensure_grad();
    g.data()[row * K + col] += n.grad[0];
  });
}

}  // namespace assl::ag
