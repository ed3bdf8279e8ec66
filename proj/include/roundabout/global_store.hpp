#pragma once

#include <cstdint>
#include <shared_mutex>
#include <span>
#include <vector>

#include "roundabout/nn.hpp"

namespace roundabout {

struct RmsPropConfig {
  double lr = 7e-4;
  double decay = 0.99;
  double eps = 1e-5;

  void validate() const;
};

/// m <- decay*m + (1-decay)*g^2;  theta <- theta - lr*g/(sqrt(m)+eps), per scalar.
void apply_rmsprop(std::span<double> params, std::span<double> second_moment, std::span<const double> grads,
                   const RmsPropConfig& cfg);

/// Master parameters with shared RMSProp statistics. Applies are serialized;
/// snapshots never observe a partially applied update.
class GlobalStore {
 public:
  GlobalStore(PolicyValueNet initial, const RmsPropConfig& cfg);

  /// Throws std::invalid_argument if `grads` does not match the master network.
  std::uint64_t apply(const Gradients& grads);
  PolicyValueNet snapshot() const;
  /// Copies the master parameters into `out` (same spec) and returns their version.
  std::uint64_t snapshot_into(PolicyValueNet& out) const;
  std::vector<double> second_moment() const;

  std::uint64_t version() const;
  std::uint64_t update_count() const;
  const RmsPropConfig& config() const { return cfg_; }
  const NetSpec& spec() const { return spec_; }

 private:
  mutable std::shared_mutex mutex_;
  RmsPropConfig cfg_;
  NetSpec spec_;
  PolicyValueNet master_;
  std::vector<double> m_;
  std::uint64_t updates_ = 0;
  std::uint64_t version_ = 0;
};

}  // namespace roundabout
