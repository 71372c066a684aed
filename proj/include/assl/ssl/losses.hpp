#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "assl/autograd/ops_basic.hpp"
#include "assl/nn/module.hpp"

namespace assl::ssl {

enum class Method { simclr, mocov3, swav };

inline Method method_from_string(const std::string& s) {
  if (s == "simclr") return Method::simclr;
  if (s == "mocov3") return Method::mocov3;
  if (s == "swav") return Method::swav;
  throw std::invalid_argument("unknown method '" + s +
                              "' (expected simclr, mocov3 or swav)");
}

inline std::string to_string(Method m) {
  switch (m) {
    case Method::simclr: return "simclr";
    case Method::mocov3: return "mocov3";
    case Method::swav: return "swav";
  }
  throw std::logic_error("unreachable");
}

struct SslConfig {
  Method method = Method::simclr;
  double temperature = 0.1;
  int64_t proj_hidden = 512;
  int64_t proj_out = 128;
  double momentum = 0.99;  // mocov3 key-encoder EMA base, ramped toward 1
  int64_t prototypes = 100;
  int64_t sinkhorn_iterations = 3;
  double sinkhorn_epsilon = 0.05;
  int64_t epochs = 300;
  int64_t batch_size = 256;

  void validate() const {
    if (temperature <= 0)
      throw std::invalid_argument("ssl: temperature must be > 0");
    if (momentum < 0 || momentum > 1)
      throw std::invalid_argument("ssl: momentum must be in [0,1]");
    if (method == Method::swav && prototypes < 2)
      throw std::invalid_argument("ssl: swav needs at least 2 prototypes");
    if (sinkhorn_iterations < 1)
      throw std::invalid_argument("ssl: sinkhorn iterations must be >= 1");
    if (sinkhorn_epsilon <= 0)
      throw std::invalid_argument("ssl: sinkhorn epsilon must be > 0");
    if (proj_hidden < 1 || proj_out < 1)
      throw std::invalid_argument("ssl: projection dims must be >= 1");
  }
};

/// Normalized-temperature cross entropy over in-batch pairs. Rows 2i and
/// 2i+1 of `projections` are the two views of sample i. Rows are cosine
/// normalized internally; with a single pair there are no negatives and the
/// loss is exactly zero.
template <typename T>
ag::Var<T> nt_xent_loss(const ag::Var<T>& projections, double tau) {
  if (tau <= 0) throw std::invalid_argument("nt_xent_loss: tau must be > 0");
  const int64_t rows = projections->value.dim(0);
  if (rows < 2 || rows % 2 != 0)
    throw std::invalid_argument("nt_xent_loss: needs an even row count >= 2");
  auto z = ag::l2_normalize_rows(projections);
  auto sims = ag::scale(ag::matmul_nt(z, z), static_cast<T>(1.0 / tau));
  auto logp = ag::log_softmax_rows(sims, /*exclude_diag=*/true);
  std::vector<int64_t> positive(rows);
  for (int64_t i = 0; i < rows; ++i) positive[i] = i ^ 1;
  return ag::nll_rows(logp, positive);
}

/// Symmetric InfoNCE: queries and keys are row-aligned positives; the loss
/// averages the query->key and key->query cross-entropy directions. Keys are
/// typically detached (momentum branch).
template <typename T>
ag::Var<T> mocov3_loss(const ag::Var<T>& queries, const ag::Var<T>& keys,
                       double tau) {
  if (tau <= 0) throw std::invalid_argument("mocov3_loss: tau must be > 0");
  const int64_t n = queries->value.dim(0);
  if (keys->value.dim(0) != n || keys->value.dim(1) != queries->value.dim(1))
    throw std::invalid_argument("mocov3_loss: query/key shape mismatch");
  auto q = ag::l2_normalize_rows(queries);
  auto k = ag::l2_normalize_rows(keys);
  auto sims = ag::scale(ag::matmul_nt(q, k), static_cast<T>(1.0 / tau));
  std::vector<int64_t> diag(n);
  for (int64_t i = 0; i < n; ++i) diag[i] = i;
  auto forward_term = ag::nll_rows(ag::log_softmax_rows(sims, false), diag);
  auto simsT = ag::scale(ag::matmul_nt(k, q), static_cast<T>(1.0 / tau));
  auto backward_term = ag::nll_rows(ag::log_softmax_rows(simsT, false), diag);
  return ag::scale(ag::add(forward_term, backward_term), T(0.5));
}

/// Balanced soft assignment of B samples onto K prototypes:
/// Q = exp(scores / epsilon) (row max subtracted first), then alternating
/// column (sum 1/K) and row (sum 1/B) renormalization, rows last. The result
/// sums to 1 over all cells.
template <typename T>
Tensor<T> sinkhorn_normalize(const Tensor<T>& scores, int64_t iterations,
                             double epsilon) {
  if (iterations < 1)
    throw std::invalid_argument("sinkhorn_normalize: iterations must be >= 1");
  if (epsilon <= 0)
    throw std::invalid_argument("sinkhorn_normalize: epsilon must be > 0");
  const int64_t B = scores.dim(0), K = scores.dim(1);
  Tensor<T> q({B, K});
  for (int64_t i = 0; i < B; ++i) {
    T mx = scores.at(i, 0);
    for (int64_t j = 1; j < K; ++j) mx = std::max(mx, scores.at(i, j));
    for (int64_t j = 0; j < K; ++j)
      q.at(i, j) = std::exp((scores.at(i, j) - mx) / static_cast<T>(epsilon));
  }
  std::vector<T> colsum(K), rowsum(B);
  for (int64_t it = 0; it < iterations; ++it) {
    std::fill(colsum.begin(), colsum.end(), T(0));
    for (int64_t i = 0; i < B; ++i)
      for (int64_t j = 0; j < K; ++j) colsum[j] += q.at(i, j);
    for (int64_t i = 0; i < B; ++i)
      for (int64_t j = 0; j < K; ++j)
        q.at(i, j) /= colsum[j] * static_cast<T>(K);
    std::fill(rowsum.begin(), rowsum.end(), T(0));
    for (int64_t i = 0; i < B; ++i)
      for (int64_t j = 0; j < K; ++j) rowsum[i] += q.at(i, j);
    for (int64_t i = 0; i < B; ++i)
      for (int64_t j = 0; j < K; ++j)
        q.at(i, j) /= rowsum[i] * static_cast<T>(B);
  }
  return q;
}

/// Swapped-prediction term: cross entropy of the tau-scaled prototype scores
/// of one view against the (gradient-stopped) codes of the other. `codes`
/// carries the sinkhorn output (cells sum to 1); rows are rescaled to
/// per-sample distributions here.
template <typename T>
ag::Var<T> swav_swapped_loss(const ag::Var<T>& scores, const Tensor<T>& codes,
                             double tau) {
  if (tau <= 0) throw std::invalid_argument("swav_swapped_loss: tau must be > 0");
  const int64_t B = scores->value.dim(0);
  Tensor<T> targets = codes.clone();
  T* p = targets.data();
  for (int64_t i = 0; i < targets.size(); ++i) p[i] *= static_cast<T>(B);
  auto logp =
      ag::log_softmax_rows(ag::scale(scores, static_cast<T>(1.0 / tau)), false);
  return ag::weighted_nll(logp, targets);
}

/// EMA of the online parameters into the momentum copy:
/// key <- m*key + (1-m)*query for every aligned array.
template <typename T>
void momentum_update(const nn::ParamStore<T>& query, nn::ParamStore<T>& key,
                     double m) {
  if (m < 0 || m > 1)
    throw std::invalid_argument("momentum_update: m must be in [0,1]");
  const auto& qp = query.params();
  auto& kp = key.params();
  if (qp.size() != kp.size())
    throw std::invalid_argument("momentum_update: parameter count mismatch");
  for (size_t i = 0; i < qp.size(); ++i) {
    if (qp[i].name != kp[i].name)
      throw std::invalid_argument("momentum_update: name mismatch at '" +
                                  qp[i].name + "' vs '" + kp[i].name + "'");
    Tensor<T>& kt = kp[i].var->value;
    const Tensor<T>& qt = qp[i].var->value;
    if (!kt.same_shape(qt))
      throw std::invalid_argument("momentum_update: shape mismatch at '" +
                                  qp[i].name + "'");
    T* kd = kt.data();
    const T* qd = qt.data();
    for (int64_t j = 0; j < kt.size(); ++j)
      kd[j] = static_cast<T>(m * kd[j] + (1.0 - m) * qd[j]);
  }
}

}  // namespace assl::ssl
