#pragma once

// Reference computations written independently of the library code paths.

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <vector>

#include "fatigue/cnn.hpp"
#include "fatigue/rng.hpp"

namespace oracle {

/// Periodic Hamming window.
inline std::vector<double> hamming(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

/// Direct complex DFT of the Hamming-windowed signal, folded one-sided and scaled so the
/// bins sum to sum((w x)^2) / sum(w^2).
inline std::vector<double> dft_psd(const std::vector<double>& x) {
  const std::size_t n = x.size();
  const auto w = hamming(n);
  double wss = 0.0;
  for (double v : w) wss += v * v;
  std::vector<double> two_sided(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      acc += w[t] * x[t] * std::exp(std::complex<double>(0.0, -2.0 * std::numbers::pi * double(k * t) / double(n)));
    }
    two_sided[k] = std::norm(acc) / (static_cast<double>(n) * wss);
  }
  std::vector<double> one(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    one[k] = two_sided[k];
    if (k != 0 && 2 * k != n) one[k] += two_sided[n - k];
  }
  return one;
}

/// Frequency response magnitude of an FIR filter, evaluated with cos/sin sums.
inline double fir_gain_db(const std::vector<double>& taps, double f, double fs) {
  double re = 0.0, im = 0.0;
  for (std::size_t n = 0; n < taps.size(); ++n) {
    re += taps[n] * std::cos(2.0 * std::numbers::pi * f * double(n) / fs);
    im -= taps[n] * std::sin(2.0 * std::numbers::pi * f * double(n) / fs);
  }
  return 20.0 * std::log10(std::hypot(re, im));
}

/// Naive zero-padded "same" cross-correlation; index functions keep it layout-agnostic.
inline fatigue::Tensor conv_same(const fatigue::Tensor& in, const fatigue::Tensor& w, const fatigue::Tensor& b) {
  const long h = long(in.dim(0)), wd = long(in.dim(1)), ci = long(in.dim(2));
  const long k = long(w.dim(0)), co = long(w.dim(3)), pad = k / 2;
  auto I = [&](long y, long x, long c) { return in[std::size_t((y * wd + x) * ci + c)]; };
  auto W = [&](long ky, long kx, long c, long o) { return w[std::size_t(((ky * k + kx) * ci + c) * co + o)]; };
  fatigue::Tensor out({std::size_t(h), std::size_t(wd), std::size_t(co)});
  for (long o = 0; o < co; ++o) {
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < wd; ++x) {
        double s = b[std::size_t(o)];
        for (long ky = 0; ky < k; ++ky) {
          for (long kx = 0; kx < k; ++kx) {
            const long yy = y + ky - pad, xx = x + kx - pad;
            if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
            for (long c = 0; c < ci; ++c) s += I(yy, xx, c) * W(ky, kx, c, o);
          }
        }
        out[std::size_t((y * wd + x) * co + o)] = s;
      }
    }
  }
  return out;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // entries whose perturbation flipped a ReLU or pooling decision
};

/// Central differences of the cross-entropy loss with a fixed dropout mask.
/// Relative error: |a - n| / max(1e-8, |a| + |n|) unless both are below `abs_floor`.
inline GradCheck finite_difference_check(fatigue::CnnModel model, const fatigue::Tensor& input, int label,
                                         std::span<const double> mask, const fatigue::CnnModel& analytic,
                                         double h = 1e-4, double abs_floor = 1e-9) {
  auto loss_at = [&](const fatigue::CnnModel& m) {
    const auto c = fatigue::forward_with_mask(m, input, mask);
    return fatigue::loss_crossentropy(c.probs, label);
  };
  auto pattern = [&](const fatigue::CnnModel& m) {
    const auto c = fatigue::forward_with_mask(m, input, mask);
    std::vector<std::size_t> sig;
    for (const auto* t : {&c.z1, &c.z2, &c.z3}) {
      for (double v : t->data()) sig.push_back(v > 0.0);
    }
    for (double v : c.fc_pre) sig.push_back(v > 0.0);
    sig.insert(sig.end(), c.p1.argmax.begin(), c.p1.argmax.end());
    sig.insert(sig.end(), c.p2.argmax.begin(), c.p2.argmax.end());
    return sig;
  };
  const auto base_pattern = pattern(model);
  GradCheck out;
  auto params = model.parameters();
  const auto grads = analytic.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p]->size(); ++i) {
      double& v = (*params[p])[i];
      const double orig = v;
      v = orig + h;
      const double lp = loss_at(model);
      const bool flip_p = pattern(model) != base_pattern;
      v = orig - h;
      const double lm = loss_at(model);
      const bool flip_m = pattern(model) != base_pattern;
      v = orig;
      if (flip_p || flip_m) {
        ++out.skipped;
        continue;
      }
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = (*grads[p])[i];
      ++out.checked;
      if (std::abs(a) < abs_floor && std::abs(numeric) < abs_floor) continue;
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      out.max_rel_error = std::max(out.max_rel_error, rel);
    }
  }
  return out;
}

/// Random tensor with standard-normal entries.
inline fatigue::Tensor random_tensor(std::vector<std::size_t> shape, fatigue::Rng& rng, double scale = 1.0) {
  fatigue::Tensor t(std::move(shape));
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

}  // namespace oracle
