#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ptznav/common.hpp"
#include "ptznav/diffnum/graph.hpp"
#include "ptznav/diffnum/tensor.hpp"

namespace ptznav::diffnum {

// Named parameter collection with per-parameter gradient accumulators and
// optimizer moments. Parameter order is insertion order and is part of the
// checkpoint byte layout.
class TrainableModel {
 public:
  struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m, v;  // Adam moments, not serialized
  };

  TrainableModel() = default;
  explicit TrainableModel(std::string arch) : arch_(std::move(arch)) {}

  Param& add(const std::string& name, Tensor init);
  bool has(const std::string& name) const;
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  const std::string& arch() const { return arch_; }
  void set_arch(std::string a) { arch_ = std::move(a); }

  int step_count() const { return step_count_; }
  void set_step_count(int t) { step_count_ = t; }
  void bump_step() { ++step_count_; }

  void zero_grad();

  // Binds the named parameter as a graph leaf whose backward accumulates
  // into this model's gradient buffer.
  Graph::NodeId bind(Graph& g, const std::string& name);

  // Checkpoint layout: "NPTZ", u16 LE version, u32 LE arch length + bytes,
  // then per parameter {u32 LE name length, name, u8 dtype tag (0 = f64),
  // u8 rank, u64 LE dims, raw LE f64 scalars} until end of file.
  void save(const std::string& path) const;
  static TrainableModel load(const std::string& path);

  // FNV-1a over the serialized byte image; used by freeze-invariant checks.
  std::uint64_t content_hash() const;

 private:
  std::string arch_;
  std::vector<Param> params_;
  int step_count_ = 0;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(const std::vector<int>& shape, int fan_in, int fan_out,
                      Rng& rng);

struct OptimConfig {
  enum class Algo { sgd, adam };
  Algo algo = Algo::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Applies one update from the accumulated gradients (Adam with bias
// correction, or plain SGD). Throws on non-finite gradients.
void optimizer_step(TrainableModel& model, const OptimConfig& config);

// Central-difference check of every parameter gradient (or a seeded
// subsample of `max_per_param` scalars for large tensors) against the
// backward pass. `loss_fn` must rebuild the same loss deterministically.
// Returns the max relative error |a - b| / max(1e-8, |a| + |b|).
double grad_check(TrainableModel& model,
                  const std::function<Graph::NodeId(Graph&)>& loss_fn,
                  double eps = 1e-3, std::size_t max_per_param = 200,
                  std::uint64_t seed = 1);

}  // namespace ptznav::diffnum
