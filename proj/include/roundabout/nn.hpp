#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "roundabout/kernels.hpp"
#include "roundabout/tensor.hpp"

namespace roundabout {

struct ConvLayerSpec {
  std::size_t filters = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  bool operator==(const ConvLayerSpec&) const = default;
};

/// Topology of the two-pipeline policy/value network. The visual pipeline
/// (two convolutions plus one dense layer) and the numeric pipeline (two dense
/// layers) are concatenated and fed through one dense hidden layer, which
/// drives a linear policy head and a linear value head. ReLU follows every
/// hidden transformation.
struct NetSpec {
  bool visual = true;
  std::size_t in_channels = 12;
  std::size_t in_height = 84;
  std::size_t in_width = 84;
  ConvLayerSpec conv1{16, 8, 4};
  ConvLayerSpec conv2{32, 4, 2};
  std::size_t fc_visual = 256;
  std::size_t numeric_in = 4;
  std::size_t numeric_hidden = 64;
  std::size_t merge = 256;
  std::size_t actions = 3;

  bool operator==(const NetSpec&) const = default;

  kernels::ConvShape conv1_shape() const;
  kernels::ConvShape conv2_shape() const;
  std::size_t visual_input_size() const { return visual ? in_channels * in_height * in_width : 0; }
  std::size_t flatten_size() const;
  std::size_t merged_size() const { return (visual ? fc_visual : 0) + numeric_hidden; }
  /// Throws std::invalid_argument on degenerate sizes.
  void validate() const;

  /// Traffic network: 12x84x84 visual stack plus 4 numeric inputs.
  static NetSpec traffic() { return {}; }
};

enum class Param : std::size_t {
  Conv1W, Conv1B, Conv2W, Conv2B, VisualW, VisualB,
  Num1W, Num1B, Num2W, Num2B, MergeW, MergeB,
  PolicyW, PolicyB, ValueW, ValueB,
  Count
};
inline constexpr std::size_t kParamCount = static_cast<std::size_t>(Param::Count);

struct ParamEntry {
  std::string name;
  std::vector<std::size_t> shape;  // empty-size tensors exist when the visual pipeline is off
  std::size_t offset = 0;
  std::size_t size = 0;
  std::size_t fan_in = 0;
  bool bias = false;
};

struct ParamLayout {
  std::array<ParamEntry, kParamCount> entries;
  std::size_t total = 0;

  static ParamLayout build(const NetSpec& spec);
  const ParamEntry& operator[](Param p) const { return entries[static_cast<std::size_t>(p)]; }
};

/// Network parameters in one flat buffer, partitioned by ParamLayout.
class PolicyValueNet {
 public:
  explicit PolicyValueNet(const NetSpec& spec);  // all-zero parameters

  const NetSpec& spec() const { return spec_; }
  const ParamLayout& layout() const { return *layout_; }
  const std::shared_ptr<const ParamLayout>& layout_ptr() const { return layout_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<const double> params() const { return params_; }
  std::span<const double> tensor(Param p) const;
  /// Mutable access invalidates every ForwardCache taken on this network.
  std::span<double> mutable_params();
  std::span<double> mutable_tensor(Param p);
  /// Unique per parameter state; changes on mutation or copy.
  std::uint64_t generation() const { return generation_; }

  PolicyValueNet(const PolicyValueNet& other);
  PolicyValueNet& operator=(const PolicyValueNet& other);
  PolicyValueNet(PolicyValueNet&&) noexcept = default;
  PolicyValueNet& operator=(PolicyValueNet&&) noexcept = default;

 private:
  NetSpec spec_;
  std::shared_ptr<const ParamLayout> layout_;
  std::vector<double> params_;
  std::uint64_t generation_;
};

/// Weights ~ Uniform(+-1/sqrt(fan_in)), biases zero.
PolicyValueNet init_params(const NetSpec& spec, std::uint64_t seed);

/// One accumulator per parameter, congruent with the network it was made for.
class Gradients {
 public:
  explicit Gradients(const PolicyValueNet& net);
  Gradients(const NetSpec& spec, std::shared_ptr<const ParamLayout> layout);

  const NetSpec& spec() const { return spec_; }
  const ParamLayout& layout() const { return *layout_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> tensor(Param p);
  std::span<const double> tensor(Param p) const;
  std::size_t size() const { return values_.size(); }
  void zero();
  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double k);
  bool congruent_with(const PolicyValueNet& net) const { return spec_ == net.spec(); }

 private:
  NetSpec spec_;
  std::shared_ptr<const ParamLayout> layout_;
  std::vector<double> values_;
};

/// Activations retained by forward() for the matching backward().
struct ForwardCache {
  std::uint64_t generation = 0;
  std::vector<double> visual_in;
  std::vector<double> numeric_in;
  std::vector<double> conv1;      // post-ReLU
  std::vector<double> conv2;      // post-ReLU
  std::vector<double> fc_visual;  // post-ReLU
  std::vector<double> num1;       // post-ReLU
  std::vector<double> num2;       // post-ReLU
  std::vector<double> merged;     // concat(fc_visual, num2)
  std::vector<double> hidden;     // post-ReLU
  std::vector<double> logits;
  double value = 0.0;
};

/// Throws std::invalid_argument on input-shape mismatch. `visual` must be
/// empty when the network has no visual pipeline.
ForwardCache forward(const PolicyValueNet& net, std::span<const double> visual, std::span<const double> numeric);

/// Adds the exact gradient of L = dlogits . logits + dvalue * value to `grads`.
/// Throws std::logic_error if the cache predates a parameter change.
void backward(const PolicyValueNet& net, const ForwardCache& cache, std::span<const double> dlogits, double dvalue,
              Gradients& grads);
Gradients backward(const PolicyValueNet& net, const ForwardCache& cache, std::span<const double> dlogits,
                   double dvalue);

std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

// Checkpoint file: see docs/formats.md.
void save_checkpoint(const PolicyValueNet& net, const std::filesystem::path& file);
/// Throws std::runtime_error on a missing, truncated or corrupt file.
PolicyValueNet load_checkpoint(const std::filesystem::path& file);

}  // namespace roundabout
