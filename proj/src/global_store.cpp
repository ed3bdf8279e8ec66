#include "roundabout/global_store.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>

namespace roundabout {

void RmsPropConfig::validate() const {
  if (!(lr >= 0.0)) throw std::invalid_argument("lr must be >= 0");
  if (!(decay >= 0.0 && decay < 1.0)) throw std::invalid_argument("rmsprop_decay must lie in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("rmsprop_eps must be positive");
}

void apply_rmsprop(std::span<double> params, std::span<double> second_moment, std::span<const double> grads,
                   const RmsPropConfig& cfg) {
  if (params.size() != grads.size() || second_moment.size() != grads.size())
    throw std::invalid_argument("apply_rmsprop: size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double m = cfg.decay * second_moment[i] + (1.0 - cfg.decay) * g * g;
    second_moment[i] = m;
    params[i] -= cfg.lr * g / (std::sqrt(m) + cfg.eps);
  }
}

GlobalStore::GlobalStore(PolicyValueNet initial, const RmsPropConfig& cfg)
    : cfg_(cfg), spec_(initial.spec()), master_(std::move(initial)), m_(master_.parameter_count(), 0.0) {
  cfg_.validate();
}

std::uint64_t GlobalStore::apply(const Gradients& grads) {
  if (!grads.congruent_with(master_)) throw std::invalid_argument("GlobalStore::apply: gradient shape mismatch");
  std::unique_lock lock(mutex_);
  apply_rmsprop(master_.mutable_params(), m_, grads.values(), cfg_);
  ++updates_;
  return ++version_;
}

PolicyValueNet GlobalStore::snapshot() const {
  std::shared_lock lock(mutex_);
  return master_;
}

std::uint64_t GlobalStore::snapshot_into(PolicyValueNet& out) const {
  if (!(out.spec() == spec_)) throw std::invalid_argument("GlobalStore::snapshot_into: spec mismatch");
  std::shared_lock lock(mutex_);
  const auto src = master_.params();
  std::copy(src.begin(), src.end(), out.mutable_params().begin());
  return version_;
}

std::vector<double> GlobalStore::second_moment() const {
  std::shared_lock lock(mutex_);
  return m_;
}

std::uint64_t GlobalStore::version() const {
  std::shared_lock lock(mutex_);
  return version_;
}

std::uint64_t GlobalStore::update_count() const {
  std::shared_lock lock(mutex_);
  return updates_;
}

}  // namespace roundabout
