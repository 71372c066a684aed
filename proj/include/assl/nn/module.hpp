#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "assl/autograd/variable.hpp"
#include "assl/core/rng.hpp"

namespace assl::nn {

/// Named, ordered registry of trainable parameters and persistent buffers
/// (running statistics). Registration order is fixed by construction, so two
/// builds of the same architecture enumerate identically; that ordering is
/// what the checkpoint format serializes.
template <typename T>
class ParamStore {
public:
  struct Param {
    std::string name;
    ag::Var<T> var;
    bool norm_or_bias = false;  // excluded from LARS adaptation / weight decay
  };
  struct Buffer {
    std::string name;
    Tensor<T> tensor;  // shares storage with the owning layer
  };

  ag::Var<T> add_param(const std::string& name, Tensor<T> init,
                       bool norm_or_bias = false) {
    if (index_.count(name))
      throw std::logic_error("ParamStore: duplicate parameter " + name);
    auto var = ag::make_leaf<T>(std::move(init), true);
    index_[name] = params_.size();
    params_.push_back({name, var, norm_or_bias});
    return var;
  }

  Tensor<T> add_buffer(const std::string& name, Tensor<T> init) {
    if (buffer_index_.count(name))
      throw std::logic_error("ParamStore: duplicate buffer " + name);
    buffer_index_[name] = buffers_.size();
    buffers_.push_back({name, init});
    return buffers_.back().tensor;
  }

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  std::vector<Buffer>& buffers() { return buffers_; }
  const std::vector<Buffer>& buffers() const { return buffers_; }

  ag::Var<T> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw std::out_of_range("ParamStore: no parameter named " + name);
    return params_[it->second].var;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  int64_t total_size() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.var->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.var->zero_grad();
  }

  /// FNV-1a over every parameter and buffer payload, used by freeze checks.
  uint64_t content_hash() const {
    uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const Tensor<T>& t) {
      const unsigned char* bytes =
          reinterpret_cast<const unsigned char*>(t.data());
      size_t nbytes = static_cast<size_t>(t.size()) * sizeof(T);
      for (size_t i = 0; i < nbytes; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
      }
    };
    for (const auto& p : params_) mix(p.var->value);
    for (const auto& b : buffers_) mix(b.tensor);
    return h;
  }

private:
  std::vector<Param> params_;
  std::vector<Buffer> buffers_;
  std::unordered_map<std::string, size_t> index_;
  std::unordered_map<std::string, size_t> buffer_index_;
};

}  // namespace assl::nn
