#include "fatigue/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fatigue/binary_io.hpp"
#include "fatigue/error.hpp"
#include "fatigue/signal_io.hpp"

namespace fatigue {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw Error(ErrorCode::NonFiniteValue, std::string("non-finite values in ") + what);
}

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteValue, std::string("non-finite values in ") + what);
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != product(shape_)) {
    throw Error(ErrorCode::ShapeMismatch, "data length " + std::to_string(data_.size()) +
                                              " does not match shape " + shape_string(shape_));
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor conv2d_same(const Tensor& input, const Tensor& filters, const Tensor& bias) {
  if (input.shape().size() != 3 || filters.shape().size() != 4 || bias.shape().size() != 1) {
    throw Error(ErrorCode::ShapeMismatch, "conv2d_same expects [H,W,Cin], [K,K,Cin,Cout], [Cout]");
  }
  const std::size_t h = input.dim(0), w = input.dim(1), cin = input.dim(2);
  const std::size_t k = filters.dim(0), cout = filters.dim(3);
  if (filters.dim(1) != k || k % 2 == 0 || filters.dim(2) != cin || bias.dim(0) != cout) {
    throw Error(ErrorCode::ShapeMismatch, "conv2d_same: input " + shape_string(input.shape()) + ", filters " +
                                              shape_string(filters.shape()) + ", bias " +
                                              shape_string(bias.shape()));
  }
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  Tensor out({h, w, cout});
  const double* in = input.data().data();
  const double* wt = filters.data().data();
  double* o = out.data().data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double* op = o + (y * w + x) * cout;
      for (std::size_t co = 0; co < cout; ++co) op[co] = bias[co];
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - pad;
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) - pad;
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const double* ip = in + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
          const double* wp = wt + (ky * k + kx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double v = ip[ci];
            const double* wr = wp + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) op[co] += v * wr[co];
          }
        }
      }
    }
  }
  return out;
}

void conv2d_same_backward(const Tensor& input, const Tensor& filters, const Tensor& d_output,
                          Tensor& d_filters, Tensor& d_bias, Tensor* d_input) {
  const std::size_t h = input.dim(0), w = input.dim(1), cin = input.dim(2);
  const std::size_t k = filters.dim(0), cout = filters.dim(3);
  if (d_output.shape() != std::vector<std::size_t>{h, w, cout} || d_filters.shape() != filters.shape() ||
      d_bias.size() != cout) {
    throw Error(ErrorCode::ShapeMismatch, "conv2d_same_backward shape mismatch");
  }
  if (d_input) *d_input = Tensor({h, w, cin});
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const double* in = input.data().data();
  const double* wt = filters.data().data();
  const double* dout = d_output.data().data();
  double* dw = d_filters.data().data();
  double* db = d_bias.data().data();
  double* din = d_input ? d_input->data().data() : nullptr;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double* gp = dout + (y * w + x) * cout;
      for (std::size_t co = 0; co < cout; ++co) db[co] += gp[co];
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - pad;
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) - pad;
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const std::size_t in_off = (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
          const double* ip = in + in_off;
          const std::size_t w_off = (ky * k + kx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double v = ip[ci];
            double* dwr = dw + w_off + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) dwr[co] += v * gp[co];
          }
          if (din) {
            double* dip = din + in_off;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const double* wr = wt + w_off + ci * cout;
              double acc = 0.0;
              for (std::size_t co = 0; co < cout; ++co) acc += wr[co] * gp[co];
              dip[ci] += acc;
            }
          }
        }
      }
    }
  }
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data()) v = std::max(0.0, v);
  return y;
}

PoolResult maxpool2(const Tensor& input) {
  if (input.shape().size() != 3) throw Error(ErrorCode::ShapeMismatch, "maxpool2 expects [H,W,C]");
  const std::size_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  if (h < 2 || w < 2) {
    throw Error(ErrorCode::TooSmall, "maxpool2 needs at least 2x2, got " + shape_string(input.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  PoolResult r{Tensor({oh, ow, c}), std::vector<std::size_t>(oh * ow * c)};
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t best = ((2 * y) * w + 2 * x) * c + ch;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = ((2 * y + dy) * w + 2 * x + dx) * c + ch;
            if (input[idx] > input[best]) best = idx;
          }
        }
        const std::size_t o = (y * ow + x) * c + ch;
        r.output[o] = input[best];
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

Tensor maxpool2_backward(const Tensor& d_output, std::span<const std::size_t> argmax,
                         const std::vector<std::size_t>& input_shape) {
  if (argmax.size() != d_output.size()) throw Error(ErrorCode::ShapeMismatch, "argmax size mismatch");
  Tensor d_input(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) d_input[argmax[i]] += d_output[i];
  return d_input;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double loss_crossentropy(std::span<const double> probs, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
    throw Error(ErrorCode::BadLabel, "label " + std::to_string(label) + " out of range");
  }
  return -std::log(std::max(probs[static_cast<std::size_t>(label)], kProbabilityFloor));
}

CnnModel CnnModel::zeros(std::size_t in_channels, std::size_t height, std::size_t width, std::size_t fc_width) {
  if (in_channels == 0 || fc_width == 0) throw Error(ErrorCode::ShapeMismatch, "channel counts must be positive");
  if (height < 4 || width < 4) {
    throw Error(ErrorCode::TooSmall, "input must be at least 4x4 for two 2x2 poolings");
  }
  CnnModel m;
  m.in_channels = in_channels;
  m.height = height;
  m.width = width;
  m.fc_width = fc_width;
  m.conv1_w = Tensor({kKernel, kKernel, in_channels, kConv1Filters});
  m.conv1_b = Tensor({kConv1Filters});
  m.conv2_w = Tensor({kKernel, kKernel, kConv1Filters, kConv2Filters});
  m.conv2_b = Tensor({kConv2Filters});
  m.conv3_w = Tensor({kKernel, kKernel, kConv2Filters, kConv3Filters});
  m.conv3_b = Tensor({kConv3Filters});
  m.fc1_w = Tensor({m.flatten_dim(), fc_width});
  m.fc1_b = Tensor({fc_width});
  m.out_w = Tensor({fc_width, kOutputs});
  m.out_b = Tensor({kOutputs});
  return m;
}

CnnModel CnnModel::he_init(std::size_t in_channels, std::uint64_t seed, std::size_t height, std::size_t width,
                           std::size_t fc_width) {
  CnnModel m = zeros(in_channels, height, width, fc_width);
  Rng rng(seed);
  auto init = [&rng](Tensor& t, std::size_t fan_in) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : t.data()) v = stddev * rng.normal();
  };
  init(m.conv1_w, kKernel * kKernel * in_channels);
  init(m.conv2_w, kKernel * kKernel * kConv1Filters);
  init(m.conv3_w, kKernel * kKernel * kConv2Filters);
  init(m.fc1_w, m.flatten_dim());
  init(m.out_w, fc_width);
  return m;
}

std::size_t CnnModel::flatten_dim() const { return (height / 2 / 2) * (width / 2 / 2) * kConv3Filters; }

std::size_t CnnModel::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : parameters()) n += t->size();
  return n;
}

std::array<Tensor*, 10> CnnModel::parameters() {
  return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &conv3_w, &conv3_b, &fc1_w, &fc1_b, &out_w, &out_b};
}

std::array<const Tensor*, 10> CnnModel::parameters() const {
  return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &conv3_w, &conv3_b, &fc1_w, &fc1_b, &out_w, &out_b};
}

std::vector<std::vector<std::size_t>> CnnModel::shape_trace() const {
  const std::size_t h1 = height / 2, w1 = width / 2;
  const std::size_t h2 = h1 / 2, w2 = w1 / 2;
  return {
      {height, width, in_channels},  {height, width, kConv1Filters}, {h1, w1, kConv1Filters},
      {h1, w1, kConv2Filters},       {h2, w2, kConv2Filters},        {h2, w2, kConv3Filters},
      {flatten_dim()},               {fc_width},                     {kOutputs},
  };
}

Tensor cube_tensor(const EegCube& cube) {
  return Tensor({cube.height, cube.width, cube.channels()}, cube.tensor);
}

namespace {

ForwardCache forward_impl(const CnnModel& model, const Tensor& input, const double* dropout_scale,
                          bool training, double dropout_rate, Rng* rng) {
  if (input.shape() != std::vector<std::size_t>{model.height, model.width, model.in_channels}) {
    throw Error(ErrorCode::ShapeMismatch, "model expects input " +
                                              shape_string({model.height, model.width, model.in_channels}) +
                                              ", got " + shape_string(input.shape()));
  }
  ForwardCache c;
  c.input = input;
  c.z1 = conv2d_same(input, model.conv1_w, model.conv1_b);
  c.a1 = relu(c.z1);
  c.p1 = maxpool2(c.a1);
  c.z2 = conv2d_same(c.p1.output, model.conv2_w, model.conv2_b);
  c.a2 = relu(c.z2);
  c.p2 = maxpool2(c.a2);
  c.z3 = conv2d_same(c.p2.output, model.conv3_w, model.conv3_b);
  c.a3 = relu(c.z3);

  const std::size_t flat = c.a3.size();
  const std::size_t fc = model.fc_width;
  c.fc_pre.assign(model.fc1_b.data().begin(), model.fc1_b.data().end());
  const double* x = c.a3.data().data();
  const double* w1 = model.fc1_w.data().data();
  for (std::size_t i = 0; i < flat; ++i) {
    const double v = x[i];
    if (v == 0.0) continue;
    const double* row = w1 + i * fc;
    for (std::size_t j = 0; j < fc; ++j) c.fc_pre[j] += v * row[j];
  }
  c.fc_act.resize(fc);
  for (std::size_t j = 0; j < fc; ++j) c.fc_act[j] = std::max(0.0, c.fc_pre[j]);

  c.dropout_scale.assign(fc, 1.0);
  if (dropout_scale) {
    std::copy(dropout_scale, dropout_scale + fc, c.dropout_scale.begin());
  } else if (training && dropout_rate > 0.0) {
    if (!rng) throw Error(ErrorCode::InvalidArgument, "training-mode dropout needs an Rng");
    const double keep_scale = 1.0 / (1.0 - dropout_rate);
    for (double& s : c.dropout_scale) s = rng->uniform() < dropout_rate ? 0.0 : keep_scale;
  }
  c.fc_drop.resize(fc);
  for (std::size_t j = 0; j < fc; ++j) c.fc_drop[j] = c.fc_act[j] * c.dropout_scale[j];

  c.logits.assign(model.out_b.data().begin(), model.out_b.data().end());
  const double* wo = model.out_w.data().data();
  for (std::size_t j = 0; j < fc; ++j) {
    for (std::size_t k = 0; k < kOutputs; ++k) c.logits[k] += c.fc_drop[j] * wo[j * kOutputs + k];
  }
  require_finite(c.logits, "logits");
  c.probs = softmax(c.logits);
  c.valid = true;
  return c;
}

}  // namespace

ForwardCache forward(const CnnModel& model, const Tensor& input, bool training, double dropout_rate, Rng* rng) {
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "dropout rate must lie in [0, 1)");
  }
  return forward_impl(model, input, nullptr, training, dropout_rate, rng);
}

ForwardCache forward_with_mask(const CnnModel& model, const Tensor& input, std::span<const double> dropout_scale) {
  if (dropout_scale.size() != model.fc_width) throw Error(ErrorCode::ShapeMismatch, "dropout mask size mismatch");
  return forward_impl(model, input, dropout_scale.data(), true, 0.0, nullptr);
}

std::vector<double> predict_proba(const CnnModel& model, const Tensor& input) {
  return forward_impl(model, input, nullptr, false, 0.0, nullptr).probs;
}

std::vector<double> forward(const CnnModel& model, const EegCube& cube, bool training, double dropout_rate,
                            Rng* rng) {
  return forward(model, cube_tensor(cube), training, dropout_rate, rng).probs;
}

int predict_class(const CnnModel& model, const Tensor& input) {
  const auto p = predict_proba(model, input);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

void accumulate_gradients(const CnnModel& model, const ForwardCache& cache, int label, CnnModel& grads) {
  if (!cache.valid) throw Error(ErrorCode::NoCachedForward, "backward called without a forward pass");
  if (label < 0 || label >= static_cast<int>(kOutputs)) {
    throw Error(ErrorCode::BadLabel, "label " + std::to_string(label) + " out of range");
  }
  const std::size_t fc = model.fc_width;
  const std::size_t flat = cache.a3.size();

  std::array<double, kOutputs> d_logits{};
  for (std::size_t k = 0; k < kOutputs; ++k) {
    d_logits[k] = cache.probs[k] - (static_cast<int>(k) == label ? 1.0 : 0.0);
  }

  std::vector<double> d_fc(fc, 0.0);
  const double* wo = model.out_w.data().data();
  double* dwo = grads.out_w.data().data();
  for (std::size_t j = 0; j < fc; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < kOutputs; ++k) {
      dwo[j * kOutputs + k] += cache.fc_drop[j] * d_logits[k];
      acc += wo[j * kOutputs + k] * d_logits[k];
    }
    // through dropout and ReLU
    d_fc[j] = cache.fc_pre[j] > 0.0 ? acc * cache.dropout_scale[j] : 0.0;
  }
  for (std::size_t k = 0; k < kOutputs; ++k) grads.out_b[k] += d_logits[k];

  Tensor d_a3(cache.a3.shape());
  const double* x = cache.a3.data().data();
  const double* w1 = model.fc1_w.data().data();
  double* dw1 = grads.fc1_w.data().data();
  for (std::size_t j = 0; j < fc; ++j) grads.fc1_b[j] += d_fc[j];
  for (std::size_t i = 0; i < flat; ++i) {
    const double v = x[i];
    const double* row = w1 + i * fc;
    double* drow = dw1 + i * fc;
    double acc = 0.0;
    if (v != 0.0) {
      for (std::size_t j = 0; j < fc; ++j) drow[j] += v * d_fc[j];
    }
    for (std::size_t j = 0; j < fc; ++j) acc += row[j] * d_fc[j];
    d_a3[i] = acc;
  }

  Tensor d_z3 = d_a3;
  for (std::size_t i = 0; i < d_z3.size(); ++i) {
    if (!(cache.z3[i] > 0.0)) d_z3[i] = 0.0;
  }
  Tensor d_p2;
  conv2d_same_backward(cache.p2.output, model.conv3_w, d_z3, grads.conv3_w, grads.conv3_b, &d_p2);
  Tensor d_z2 = maxpool2_backward(d_p2, cache.p2.argmax, cache.a2.shape());
  for (std::size_t i = 0; i < d_z2.size(); ++i) {
    if (!(cache.z2[i] > 0.0)) d_z2[i] = 0.0;
  }
  Tensor d_p1;
  conv2d_same_backward(cache.p1.output, model.conv2_w, d_z2, grads.conv2_w, grads.conv2_b, &d_p1);
  Tensor d_z1 = maxpool2_backward(d_p1, cache.p1.argmax, cache.a1.shape());
  for (std::size_t i = 0; i < d_z1.size(); ++i) {
    if (!(cache.z1[i] > 0.0)) d_z1[i] = 0.0;
  }
  conv2d_same_backward(cache.input, model.conv1_w, d_z1, grads.conv1_w, grads.conv1_b, nullptr);
}

CnnModel backward(const CnnModel& model, const ForwardCache& cache, int label) {
  CnnModel grads = CnnModel::zeros(model.in_channels, model.height, model.width, model.fc_width);
  accumulate_gradients(model, cache, label, grads);
  for (const Tensor* t : grads.parameters()) require_finite(*t, "gradients");
  return grads;
}

TrainResult train(std::span<const Tensor> inputs, std::span<const int> labels, const TrainConfig& cfg) {
  if (inputs.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no training examples");
  if (inputs.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "inputs and labels differ in length");
  if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.learning_rate >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "epochs and batch_size must be >= 1, learning_rate >= 0");
  }
  if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "dropout rate must lie in [0, 1)");
  }
  const auto& shape = inputs.front().shape();
  if (shape.size() != 3) throw Error(ErrorCode::ShapeMismatch, "inputs must be [H,W,C]");
  for (const Tensor& t : inputs) {
    if (t.shape() != shape) throw Error(ErrorCode::MixedCombinations, "training inputs differ in shape");
  }
  for (int y : labels) {
    if (y < 0 || y >= static_cast<int>(kOutputs)) throw Error(ErrorCode::BadLabel, "label out of range");
  }

  TrainResult result;
  result.model = CnnModel::he_init(shape[2], derive_seed(cfg.seed, 0x1417), shape[0], shape[1], cfg.fc_width);
  CnnModel& model = result.model;
  CnnModel m1 = CnnModel::zeros(model.in_channels, model.height, model.width, model.fc_width);
  CnnModel m2 = m1;
  CnnModel grads = m1;

  Rng shuffle_rng(derive_seed(cfg.seed, 0x5AFF));
  Rng dropout_rng(derive_seed(cfg.seed, 0xD50F));
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      for (Tensor* t : grads.parameters()) t->fill(0.0);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        ForwardCache cache = forward(model, inputs[i], true, cfg.dropout_rate, &dropout_rng);
        loss_sum += loss_crossentropy(cache.probs, labels[i]);
        const auto pred = std::max_element(cache.probs.begin(), cache.probs.end()) - cache.probs.begin();
        if (pred == labels[i]) ++correct;
        accumulate_gradients(model, cache, labels[i], grads);
      }
      ++step;
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      auto params = model.parameters();
      auto g = grads.parameters();
      auto mm = m1.parameters();
      auto vv = m2.parameters();
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto pd = params[p]->data();
        auto gd = g[p]->data();
        auto md = mm[p]->data();
        auto vd = vv[p]->data();
        for (std::size_t i = 0; i < pd.size(); ++i) {
          const double gi = gd[i] * inv_batch;
          md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * gi;
          vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * gi * gi;
          pd[i] -= cfg.learning_rate * (md[i] / bc1) / (std::sqrt(vd[i] / bc2) + cfg.epsilon);
        }
      }
    }
    for (const Tensor* t : model.parameters()) require_finite(*t, "parameters");
    const double n = static_cast<double>(inputs.size());
    result.history.push_back({epoch, loss_sum / n, static_cast<double>(correct) / n});
  }
  return result;
}

TrainResult train(std::span<const EegCube> cubes, std::span<const int> labels, const TrainConfig& cfg) {
  if (cubes.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no training cubes");
  std::vector<Tensor> inputs;
  inputs.reserve(cubes.size());
  for (const auto& cube : cubes) {
    if (cube.kinds != cubes.front().kinds) {
      throw Error(ErrorCode::MixedCombinations, "training cubes come from different feature combinations");
    }
    inputs.push_back(cube_tensor(cube));
  }
  return train(inputs, labels, cfg);
}

std::string format_history_csv(std::span<const EpochStats> history) {
  std::string out = "epoch,loss,train_acc\n";
  for (const auto& e : history) {
    out += std::to_string(e.epoch) + "," + format_double(e.loss) + "," + format_double(e.train_acc) + "\n";
  }
  return out;
}

std::vector<std::uint8_t> encode_checkpoint(const CnnModel& model) {
  ByteWriter w;
  w.bytes("CNNC");
  w.u8(0x01);
  w.u16(static_cast<std::uint16_t>(model.in_channels));
  w.u16(static_cast<std::uint16_t>(model.fc_width));
  for (const Tensor* t : model.parameters()) {
    w.u32(static_cast<std::uint32_t>(t->size()));
    for (double v : t->data()) w.f32(static_cast<float>(v));
  }
  return w.take();
}

CnnModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, ErrorCode::BadCheckpoint);
  r.expect("CNNC");
  if (r.u8() != 0x01) r.fail("unsupported checkpoint version");
  const std::uint16_t cin = r.u16();
  const std::uint16_t fc = r.u16();
  CnnModel m = CnnModel::zeros(cin, kCubeSize, kCubeSize, fc);
  for (Tensor* t : m.parameters()) {
    const std::uint32_t count = r.u32();
    if (count != t->size()) {
      r.fail("parameter tensor has " + std::to_string(count) + " values, expected " + std::to_string(t->size()));
    }
    for (double& v : t->data()) v = r.f32();
  }
  if (r.remaining() != 0) r.fail("trailing bytes after checkpoint");
  return m;
}

void save_checkpoint(const CnnModel& model, const std::filesystem::path& path) {
  write_binary_file(path, encode_checkpoint(model));
}

CnnModel load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_binary_file(path)); }

}  // namespace fatigue
