#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fatigue/rng.hpp"
#include "fatigue/topomap.hpp"

namespace fatigue {

/// Dense row-major tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  void fill(double v);
  bool all_finite() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Cross-correlation with (K-1)/2 zero padding. input [H,W,Cin], filters [K,K,Cin,Cout], bias [Cout].
Tensor conv2d_same(const Tensor& input, const Tensor& filters, const Tensor& bias);

/// Accumulates into `d_filters` / `d_bias` (must be pre-shaped) and, when `d_input` is
/// non-null, overwrites it with the input gradient.
void conv2d_same_backward(const Tensor& input, const Tensor& filters, const Tensor& d_output,
                          Tensor& d_filters, Tensor& d_bias, Tensor* d_input);

Tensor relu(const Tensor& x);

struct PoolResult {
  Tensor output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

/// Non-overlapping 2x2 max pooling; odd trailing rows/cols are dropped, ties go to the
/// first element in row-major order.
PoolResult maxpool2(const Tensor& input);
Tensor maxpool2_backward(const Tensor& d_output, std::span<const std::size_t> argmax,
                         const std::vector<std::size_t>& input_shape);

std::vector<double> softmax(std::span<const double> logits);

inline constexpr double kProbabilityFloor = 1e-12;
double loss_crossentropy(std::span<const double> probs, int label);

inline constexpr std::size_t kConv1Filters = 4;
inline constexpr std::size_t kConv2Filters = 8;
inline constexpr std::size_t kConv3Filters = 16;
inline constexpr std::size_t kKernel = 3;
inline constexpr std::size_t kDefaultFcWidth = 128;
inline constexpr std::size_t kOutputs = 3;

/// Conv4 -> pool -> Conv8 -> pool -> Conv16 -> FC -> dropout -> softmax.
/// Also used as the gradient container (same shapes).
struct CnnModel {
  std::size_t in_channels = 0;
  std::size_t height = kCubeSize;
  std::size_t width = kCubeSize;
  std::size_t fc_width = kDefaultFcWidth;

  Tensor conv1_w, conv1_b;
  Tensor conv2_w, conv2_b;
  Tensor conv3_w, conv3_b;
  Tensor fc1_w, fc1_b;
  Tensor out_w, out_b;

  /// Zero-valued parameters; validates the shape pipeline (throws TooSmall).
  static CnnModel zeros(std::size_t in_channels, std::size_t height = kCubeSize,
                        std::size_t width = kCubeSize, std::size_t fc_width = kDefaultFcWidth);
  /// He-normal (fan-in) weights, zero biases.
  static CnnModel he_init(std::size_t in_channels, std::uint64_t seed, std::size_t height = kCubeSize,
                          std::size_t width = kCubeSize, std::size_t fc_width = kDefaultFcWidth);

  std::size_t flatten_dim() const;
  std::size_t parameter_count() const;

  /// Architecture order: conv1 w/b, conv2 w/b, conv3 w/b, fc1 w/b, out w/b.
  std::array<Tensor*, 10> parameters();
  std::array<const Tensor*, 10> parameters() const;

  /// Activation shapes from input to output, e.g. {34,34,C},{34,34,4},{17,17,4},...,{1024},{128},{3}.
  std::vector<std::vector<std::size_t>> shape_trace() const;
};

/// Everything backward() needs from a forward pass.
struct ForwardCache {
  bool valid = false;
  Tensor input;
  Tensor z1, a1;
  PoolResult p1;
  Tensor z2, a2;
  PoolResult p2;
  Tensor z3, a3;
  std::vector<double> fc_pre, fc_act, dropout_scale, fc_drop;
  std::vector<double> logits, probs;
};

Tensor cube_tensor(const EegCube& cube);

/// `rng` is required when training with a non-zero dropout rate.
ForwardCache forward(const CnnModel& model, const Tensor& input, bool training, double dropout_rate,
                     Rng* rng);
/// Forward pass with an explicit per-unit dropout scale (0 or 1/(1-rate)).
ForwardCache forward_with_mask(const CnnModel& model, const Tensor& input,
                               std::span<const double> dropout_scale);
std::vector<double> predict_proba(const CnnModel& model, const Tensor& input);
std::vector<double> forward(const CnnModel& model, const EegCube& cube, bool training,
                            double dropout_rate, Rng* rng);

/// Analytic cross-entropy gradients; reuses the cached dropout mask.
CnnModel backward(const CnnModel& model, const ForwardCache& cache, int label);
void accumulate_gradients(const CnnModel& model, const ForwardCache& cache, int label, CnnModel& grads);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  double dropout_rate = 0.5;
  std::size_t fc_width = kDefaultFcWidth;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
};

struct TrainResult {
  CnnModel model;
  std::vector<EpochStats> history;
};

/// Mini-batch Adam with a seeded shuffle per epoch; deterministic given the seed.
TrainResult train(std::span<const Tensor> inputs, std::span<const int> labels, const TrainConfig& cfg);
TrainResult train(std::span<const EegCube> cubes, std::span<const int> labels, const TrainConfig& cfg);
int predict_class(const CnnModel& model, const Tensor& input);

std::string format_history_csv(std::span<const EpochStats> history);

/// CNNCKPT1 checkpoint (f32 parameters); 34x34 input assumed.
std::vector<std::uint8_t> encode_checkpoint(const CnnModel& model);
CnnModel decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const CnnModel& model, const std::filesystem::path& path);
CnnModel load_checkpoint(const std::filesystem::path& path);

}  // namespace fatigue
