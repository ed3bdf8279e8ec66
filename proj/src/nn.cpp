#include "roundabout/nn.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <stdexcept>

namespace roundabout {

namespace {

std::atomic<std::uint64_t> g_generation{1};
std::uint64_t next_generation() { return g_generation.fetch_add(1, std::memory_order_relaxed); }

void relu_inplace(std::span<double> v) {
  for (double& x : v) x = x > 0.0 ? x : 0.0;
}

/// Zeroes gradient entries whose post-ReLU activation is not positive.
void relu_mask(std::span<double> grad, std::span<const double> activation) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(activation[i] > 0.0)) grad[i] = 0.0;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

// ---------------------------------------------------------------------------
// NetSpec / layout

kernels::ConvShape NetSpec::conv1_shape() const {
  return {in_channels, in_height, in_width, conv1.filters, conv1.kernel, conv1.stride};
}

kernels::ConvShape NetSpec::conv2_shape() const {
  const auto c1 = conv1_shape();
  return {conv1.filters, c1.out_height(), c1.out_width(), conv2.filters, conv2.kernel, conv2.stride};
}

std::size_t NetSpec::flatten_size() const { return visual ? conv2_shape().output_size() : 0; }

void NetSpec::validate() const {
  auto fail = [](const char* what) { throw std::invalid_argument(std::string("NetSpec: ") + what); };
  if (numeric_in == 0 || numeric_hidden == 0 || merge == 0 || actions == 0) fail("zero-sized dense layer");
  if (!visual) return;
  if (in_channels == 0 || conv1.filters == 0 || conv2.filters == 0 || fc_visual == 0) fail("zero-sized visual layer");
  if (conv1.stride == 0 || conv2.stride == 0) fail("zero stride");
  if (conv1.kernel == 0 || conv1.kernel > in_height || conv1.kernel > in_width) fail("conv1 kernel does not fit");
  const auto c1 = conv1_shape();
  if (conv2.kernel == 0 || conv2.kernel > c1.out_height() || conv2.kernel > c1.out_width())
    fail("conv2 kernel does not fit");
}

ParamLayout ParamLayout::build(const NetSpec& spec) {
  spec.validate();
  ParamLayout layout;
  std::size_t offset = 0;
  auto set = [&](Param p, std::string name, std::vector<std::size_t> shape, std::size_t fan_in, bool bias) {
    ParamEntry& e = layout.entries[static_cast<std::size_t>(p)];
    e.name = std::move(name);
    e.size = Tensor::element_count(shape);
    e.shape = std::move(shape);
    e.offset = offset;
    e.fan_in = fan_in;
    e.bias = bias;
    offset += e.size;
  };
  const std::size_t v = spec.visual ? 1 : 0;
  const auto& c1 = spec.conv1;
  const auto& c2 = spec.conv2;
  set(Param::Conv1W, "conv1.weight", {v * c1.filters, spec.in_channels, c1.kernel, c1.kernel},
      spec.in_channels * c1.kernel * c1.kernel, false);
  set(Param::Conv1B, "conv1.bias", {v * c1.filters}, 0, true);
  set(Param::Conv2W, "conv2.weight", {v * c2.filters, c1.filters, c2.kernel, c2.kernel},
      c1.filters * c2.kernel * c2.kernel, false);
  set(Param::Conv2B, "conv2.bias", {v * c2.filters}, 0, true);
  set(Param::VisualW, "fc_visual.weight", {v * spec.fc_visual, spec.flatten_size()}, spec.flatten_size(), false);
  set(Param::VisualB, "fc_visual.bias", {v * spec.fc_visual}, 0, true);
  set(Param::Num1W, "fc_num1.weight", {spec.numeric_hidden, spec.numeric_in}, spec.numeric_in, false);
  set(Param::Num1B, "fc_num1.bias", {spec.numeric_hidden}, 0, true);
  set(Param::Num2W, "fc_num2.weight", {spec.numeric_hidden, spec.numeric_hidden}, spec.numeric_hidden, false);
  set(Param::Num2B, "fc_num2.bias", {spec.numeric_hidden}, 0, true);
  set(Param::MergeW, "fc_merge.weight", {spec.merge, spec.merged_size()}, spec.merged_size(), false);
  set(Param::MergeB, "fc_merge.bias", {spec.merge}, 0, true);
  set(Param::PolicyW, "policy.weight", {spec.actions, spec.merge}, spec.merge, false);
  set(Param::PolicyB, "policy.bias", {spec.actions}, 0, true);
  set(Param::ValueW, "value.weight", {1, spec.merge}, spec.merge, false);
  set(Param::ValueB, "value.bias", {1}, 0, true);
  layout.total = offset;
  return layout;
}

// ---------------------------------------------------------------------------
// PolicyValueNet / Gradients

PolicyValueNet::PolicyValueNet(const NetSpec& spec)
    : spec_(spec),
      layout_(std::make_shared<const ParamLayout>(ParamLayout::build(spec))),
      params_(layout_->total, 0.0),
      generation_(next_generation()) {}

PolicyValueNet::PolicyValueNet(const PolicyValueNet& other)
    : spec_(other.spec_), layout_(other.layout_), params_(other.params_), generation_(next_generation()) {}

PolicyValueNet& PolicyValueNet::operator=(const PolicyValueNet& other) {
  if (this != &other) {
    spec_ = other.spec_;
    layout_ = other.layout_;
    params_ = other.params_;
    generation_ = next_generation();
  }
  return *this;
}

std::span<const double> PolicyValueNet::tensor(Param p) const {
  const ParamEntry& e = (*layout_)[p];
  return std::span<const double>(params_).subspan(e.offset, e.size);
}

std::span<double> PolicyValueNet::mutable_params() {
  generation_ = next_generation();
  return params_;
}

std::span<double> PolicyValueNet::mutable_tensor(Param p) {
  const ParamEntry& e = (*layout_)[p];
  return mutable_params().subspan(e.offset, e.size);
}

PolicyValueNet init_params(const NetSpec& spec, std::uint64_t seed) {
  PolicyValueNet net(spec);
  std::mt19937_64 rng(seed);
  auto params = net.mutable_params();
  for (const ParamEntry& e : net.layout().entries) {
    if (e.bias || e.size == 0) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(e.fan_in));
    for (std::size_t i = 0; i < e.size; ++i) params[e.offset + i] = (2.0 * uniform01(rng) - 1.0) * bound;
  }
  return net;
}

Gradients::Gradients(const PolicyValueNet& net)
    : spec_(net.spec()), layout_(net.layout_ptr()),
      values_(net.parameter_count(), 0.0) {}

Gradients::Gradients(const NetSpec& spec, std::shared_ptr<const ParamLayout> layout)
    : spec_(spec), layout_(std::move(layout)), values_(layout_->total, 0.0) {}

std::span<double> Gradients::tensor(Param p) {
  const ParamEntry& e = (*layout_)[p];
  return std::span<double>(values_).subspan(e.offset, e.size);
}

std::span<const double> Gradients::tensor(Param p) const {
  const ParamEntry& e = (*layout_)[p];
  return std::span<const double>(values_).subspan(e.offset, e.size);
}

void Gradients::zero() { std::fill(values_.begin(), values_.end(), 0.0); }

Gradients& Gradients::operator+=(const Gradients& other) {
  if (!(spec_ == other.spec_)) throw std::invalid_argument("Gradients: shape mismatch");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Gradients& Gradients::operator*=(double k) {
  for (double& v : values_) v *= k;
  return *this;
}

// ---------------------------------------------------------------------------
// forward / backward

ForwardCache forward(const PolicyValueNet& net, std::span<const double> visual, std::span<const double> numeric) {
  const NetSpec& s = net.spec();
  if (visual.size() != s.visual_input_size())
    throw std::invalid_argument("forward: visual input has " + std::to_string(visual.size()) + " values, expected " +
                                std::to_string(s.visual_input_size()));
  if (numeric.size() != s.numeric_in)
    throw std::invalid_argument("forward: numeric input has " + std::to_string(numeric.size()) + " values, expected " +
                                std::to_string(s.numeric_in));

  ForwardCache c;
  c.generation = net.generation();
  c.visual_in.assign(visual.begin(), visual.end());
  c.numeric_in.assign(numeric.begin(), numeric.end());

  c.merged.resize(s.merged_size());
  std::size_t merge_offset = 0;
  if (s.visual) {
    const auto sh1 = s.conv1_shape();
    const auto sh2 = s.conv2_shape();
    c.conv1.resize(sh1.output_size());
    kernels::conv2d_forward(sh1, c.visual_in, net.tensor(Param::Conv1W), net.tensor(Param::Conv1B), c.conv1);
    relu_inplace(c.conv1);
    c.conv2.resize(sh2.output_size());
    kernels::conv2d_forward(sh2, c.conv1, net.tensor(Param::Conv2W), net.tensor(Param::Conv2B), c.conv2);
    relu_inplace(c.conv2);
    c.fc_visual.resize(s.fc_visual);
    kernels::dense_forward(c.conv2, net.tensor(Param::VisualW), net.tensor(Param::VisualB), c.fc_visual);
    relu_inplace(c.fc_visual);
    std::copy(c.fc_visual.begin(), c.fc_visual.end(), c.merged.begin());
    merge_offset = s.fc_visual;
  }
  c.num1.resize(s.numeric_hidden);
  kernels::dense_forward(c.numeric_in, net.tensor(Param::Num1W), net.tensor(Param::Num1B), c.num1);
  relu_inplace(c.num1);
  c.num2.resize(s.numeric_hidden);
  kernels::dense_forward(c.num1, net.tensor(Param::Num2W), net.tensor(Param::Num2B), c.num2);
  relu_inplace(c.num2);
  std::copy(c.num2.begin(), c.num2.end(), c.merged.begin() + static_cast<std::ptrdiff_t>(merge_offset));

  c.hidden.resize(s.merge);
  kernels::dense_forward(c.merged, net.tensor(Param::MergeW), net.tensor(Param::MergeB), c.hidden);
  relu_inplace(c.hidden);
  c.logits.resize(s.actions);
  kernels::dense_forward(c.hidden, net.tensor(Param::PolicyW), net.tensor(Param::PolicyB), c.logits);
  double value = 0.0;
  kernels::dense_forward(c.hidden, net.tensor(Param::ValueW), net.tensor(Param::ValueB), std::span<double>(&value, 1));
  c.value = value;
  return c;
}

void backward(const PolicyValueNet& net, const ForwardCache& c, std::span<const double> dlogits, double dvalue,
              Gradients& g) {
  const NetSpec& s = net.spec();
  if (c.generation != net.generation()) throw std::logic_error("backward: stale forward cache");
  if (!g.congruent_with(net)) throw std::invalid_argument("backward: gradient buffer shape mismatch");
  if (dlogits.size() != s.actions) throw std::invalid_argument("backward: dlogits size mismatch");

  std::vector<double> d_hidden(s.merge), d_tmp(s.merge);
  kernels::dense_backward(c.hidden, dlogits, net.tensor(Param::PolicyW), g.tensor(Param::PolicyW),
                          g.tensor(Param::PolicyB), d_hidden);
  kernels::dense_backward(c.hidden, std::span<const double>(&dvalue, 1), net.tensor(Param::ValueW),
                          g.tensor(Param::ValueW), g.tensor(Param::ValueB), d_tmp);
  for (std::size_t i = 0; i < d_hidden.size(); ++i) d_hidden[i] += d_tmp[i];
  relu_mask(d_hidden, c.hidden);

  std::vector<double> d_merged(s.merged_size());
  kernels::dense_backward(c.merged, d_hidden, net.tensor(Param::MergeW), g.tensor(Param::MergeW),
                          g.tensor(Param::MergeB), d_merged);
  const std::size_t vis = s.visual ? s.fc_visual : 0;

  std::vector<double> d_num2(d_merged.begin() + static_cast<std::ptrdiff_t>(vis), d_merged.end());
  relu_mask(d_num2, c.num2);
  std::vector<double> d_num1(s.numeric_hidden);
  kernels::dense_backward(c.num1, d_num2, net.tensor(Param::Num2W), g.tensor(Param::Num2W), g.tensor(Param::Num2B),
                          d_num1);
  relu_mask(d_num1, c.num1);
  kernels::dense_backward(c.numeric_in, d_num1, net.tensor(Param::Num1W), g.tensor(Param::Num1W),
                          g.tensor(Param::Num1B), {});

  if (!s.visual) return;
  std::vector<double> d_fc(d_merged.begin(), d_merged.begin() + static_cast<std::ptrdiff_t>(vis));
  relu_mask(d_fc, c.fc_visual);
  std::vector<double> d_conv2(c.conv2.size());
  kernels::dense_backward(c.conv2, d_fc, net.tensor(Param::VisualW), g.tensor(Param::VisualW),
                          g.tensor(Param::VisualB), d_conv2);
  relu_mask(d_conv2, c.conv2);
  std::vector<double> d_conv1(c.conv1.size());
  kernels::conv2d_backward(s.conv2_shape(), c.conv1, d_conv2, net.tensor(Param::Conv2W), g.tensor(Param::Conv2W),
                           g.tensor(Param::Conv2B), d_conv1);
  relu_mask(d_conv1, c.conv1);
  kernels::conv2d_backward(s.conv1_shape(), c.visual_in, d_conv1, net.tensor(Param::Conv1W), g.tensor(Param::Conv1W),
                           g.tensor(Param::Conv1B), {});
}

Gradients backward(const PolicyValueNet& net, const ForwardCache& cache, std::span<const double> dlogits,
                   double dvalue) {
  Gradients g(net);
  backward(net, cache, dlogits, dvalue, g);
  return g;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - m);
  const double lse = m + std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

// ---------------------------------------------------------------------------
// checkpoint

namespace {

constexpr std::array<char, 8> kMagic{'R', 'B', 'P', 'V', 'N', 'E', 'T', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_integral_v<T> || std::is_floating_point_v<T>);
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
    U bits = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
  void raw(const char* p, std::size_t n) { bytes.insert(bytes.end(), p, p + n); }
  std::vector<char> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const char> b) : bytes_(b) {}
  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
    need(sizeof(T));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint truncated");
  }
  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

std::uint64_t fnv1a(std::span<const char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : bytes) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::array<std::uint32_t, 15> spec_fields(const NetSpec& s) {
  auto u = [](std::size_t v) { return static_cast<std::uint32_t>(v); };
  return {s.visual ? 1U : 0U, u(s.in_channels), u(s.in_height), u(s.in_width), u(s.conv1.filters),
          u(s.conv1.kernel), u(s.conv1.stride), u(s.conv2.filters), u(s.conv2.kernel), u(s.conv2.stride),
          u(s.fc_visual), u(s.numeric_in), u(s.numeric_hidden), u(s.merge), u(s.actions)};
}

}  // namespace

void save_checkpoint(const PolicyValueNet& net, const std::filesystem::path& file) {
  Writer w;
  w.raw(kMagic.data(), kMagic.size());
  w.put<std::uint32_t>(kFormatVersion);
  for (std::uint32_t f : spec_fields(net.spec())) w.put(f);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(kParamCount));
  for (const ParamEntry& e : net.layout().entries) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.raw(e.name.data(), e.name.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.shape.size()));
    for (std::size_t d : e.shape) w.put<std::uint64_t>(d);
  }
  for (double v : net.params()) w.put(v);
  w.put<std::uint64_t>(fnv1a(w.bytes));

  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint " + file.string() + " for writing");
  os.write(w.bytes.data(), static_cast<std::streamsize>(w.bytes.size()));
  if (!os) throw std::runtime_error("failed writing checkpoint " + file.string());
}

PolicyValueNet load_checkpoint(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + file.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < kMagic.size() + 12) throw std::runtime_error("checkpoint truncated: " + file.string());
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
    throw std::runtime_error("not a network checkpoint: " + file.string());

  const std::span<const char> body(bytes.data(), bytes.size() - 8);
  Reader tail(std::span<const char>(bytes).subspan(bytes.size() - 8));
  if (tail.get<std::uint64_t>() != fnv1a(body)) throw std::runtime_error("checkpoint checksum mismatch: " + file.string());

  Reader r(body);
  r.str(kMagic.size());
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  std::array<std::uint32_t, 15> f{};
  for (auto& v : f) v = r.get<std::uint32_t>();
  NetSpec spec;
  spec.visual = f[0] != 0;
  spec.in_channels = f[1];
  spec.in_height = f[2];
  spec.in_width = f[3];
  spec.conv1 = {f[4], f[5], f[6]};
  spec.conv2 = {f[7], f[8], f[9]};
  spec.fc_visual = f[10];
  spec.numeric_in = f[11];
  spec.numeric_hidden = f[12];
  spec.merge = f[13];
  spec.actions = f[14];

  PolicyValueNet net = [&] {
    try {
      return PolicyValueNet(spec);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(std::string("checkpoint has invalid topology: ") + e.what());
    }
  }();
  if (r.get<std::uint32_t>() != kParamCount) throw std::runtime_error("checkpoint tensor count mismatch");
  for (const ParamEntry& e : net.layout().entries) {
    const auto name = r.str(r.get<std::uint16_t>());
    const auto rank = r.get<std::uint32_t>();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    if (name != e.name || shape != e.shape) throw std::runtime_error("checkpoint manifest mismatch at " + e.name);
  }
  auto params = net.mutable_params();
  for (double& v : params) v = r.get<double>();
  if (r.pos() != body.size()) throw std::runtime_error("checkpoint has trailing bytes");
  return net;
}

}  // namespace roundabout
