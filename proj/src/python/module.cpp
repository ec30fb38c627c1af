#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "fatigue/classifiers.hpp"
#include "fatigue/cnn.hpp"
#include "fatigue/dsp.hpp"
#include "fatigue/error.hpp"
#include "fatigue/eval.hpp"
#include "fatigue/pipeline.hpp"
#include "fatigue/signal_io.hpp"
#include "fatigue/topomap.hpp"

namespace py = pybind11;
using namespace fatigue;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const DoubleArray& a) { return {a.data(), a.data() + a.size()}; }
std::vector<int> to_ints(const IntArray& a) { return {a.data(), a.data() + a.size()}; }

DoubleArray to_array(const std::vector<double>& v, std::vector<py::ssize_t> shape) {
  DoubleArray a(shape);
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

FeatureMatrix to_matrix(const DoubleArray& a) {
  if (a.ndim() != 2) throw Error(ErrorCode::ShapeMismatch, "expected a 2-D array");
  FeatureMatrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data.begin());
  return m;
}

Segment to_segment(const DoubleArray& samples, std::size_t fs) {
  if (samples.ndim() != 2 || samples.shape(1) != static_cast<py::ssize_t>(kNumChannels)) {
    throw Error(ErrorCode::ShapeMismatch, "segment must be [n_samples, 14]");
  }
  Segment s;
  s.sampling_rate = fs;
  s.data = to_vector(samples);
  return s;
}

FeatureSet to_feature_set(const DoubleArray& a) {
  if (a.ndim() != 2 || a.shape(0) != static_cast<py::ssize_t>(kNumChannels) ||
      a.shape(1) != static_cast<py::ssize_t>(kNumFeatureKinds)) {
    throw Error(ErrorCode::ShapeMismatch, "features must be [14, 11]");
  }
  FeatureSet f;
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    for (std::size_t k = 0; k < kNumFeatureKinds; ++k) f.values[c][k] = a.at(c, k);
  }
  return f;
}

FeatureCombination combo_of(const std::string& name) {
  const auto c = parse_combination(name);
  if (!c) throw Error(ErrorCode::InvalidArgument, "unknown feature combination '" + name + "'");
  return *c;
}

Tensor tensor_of(const DoubleArray& a) {
  std::vector<std::size_t> shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), to_vector(a));
}

py::object opt(std::optional<double> v) { return v ? py::object(py::float_(*v)) : py::object(py::none()); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "EEG mental-fatigue pipeline: signal I/O, features, topographic cubes, CNN and baselines";

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
  error_type.call_once_and_store_result([&]() -> py::object {
    return py::exception<Error>(m, "FatigueError", PyExc_RuntimeError);
  });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const py::object& type = error_type.get_stored();
      py::object exc = type(py::str(e.what()));
      exc.attr("code") = py::str(std::string(error_code_name(e.code())));
      PyErr_SetObject(type.ptr(), exc.ptr());
    }
  });

  m.attr("CHANNELS") = std::vector<std::string>(kChannelNames.begin(), kChannelNames.end());
  m.attr("CUBE_SIZE") = kCubeSize;

  m.def(
      "synth_session",
      [](std::size_t n_segments, std::uint64_t seed, double class_effect, double noise_std) {
        SynthConfig cfg;
        cfg.n_segments = n_segments;
        cfg.seed = seed;
        cfg.class_effect = class_effect;
        cfg.noise_std = noise_std;
        const SynthSession s = synth_session(cfg);
        std::vector<int> labels;
        for (auto l : s.labels) labels.push_back(to_int(l));
        return py::make_tuple(
            to_array(s.recording.samples,
                     {static_cast<py::ssize_t>(s.recording.n_samples()), static_cast<py::ssize_t>(kNumChannels)}),
            labels);
      },
      py::arg("n_segments") = 2400, py::arg("seed") = 1, py::arg("class_effect") = 2.0, py::arg("noise_std") = 2.0,
      "Synthetic 14-channel session; returns (samples [n, 14], labels per second).");

  m.def(
      "design_bandpass",
      [](double lo, double hi, double fs, std::size_t taps) { return design_bandpass(lo, hi, fs, taps).taps; },
      py::arg("low_hz") = 4.0, py::arg("high_hz") = 45.0, py::arg("fs") = 128.0, py::arg("taps") = 129);
  m.def(
      "filter_gain",
      [](const DoubleArray& taps, double freq, double fs) {
        FirFilter f;
        f.taps = to_vector(taps);
        f.fs = fs;
        return filter_gain(f, freq);
      },
      py::arg("taps"), py::arg("freq_hz"), py::arg("fs") = 128.0);
  m.def(
      "periodogram",
      [](const DoubleArray& x, double fs) {
        const Psd p = periodogram(to_vector(x), fs);
        return py::make_tuple(p.freqs, p.power);
      },
      py::arg("signal"), py::arg("fs") = 128.0);
  m.def(
      "time_stats",
      [](const DoubleArray& x) {
        const TimeStats t = time_stats(to_vector(x));
        py::dict d;
        d["mean"] = t.mean;
        d["variance"] = t.variance;
        d["zcr"] = t.zcr;
        d["kurtosis"] = t.kurtosis;
        d["skewness"] = t.skewness;
        return d;
      },
      py::arg("signal"));
  m.def(
      "shannon_entropy", [](const DoubleArray& x, std::size_t bins) { return shannon_entropy(to_vector(x), bins); },
      py::arg("signal"), py::arg("bins") = kDefaultEntropyBins);

  m.def(
      "extract_features",
      [](const DoubleArray& samples, std::size_t fs) {
        const FeatureSet f = extract_features(to_segment(samples, fs));
        std::vector<double> flat;
        for (const auto& row : f.values) flat.insert(flat.end(), row.begin(), row.end());
        return to_array(flat, {static_cast<py::ssize_t>(kNumChannels), static_cast<py::ssize_t>(kNumFeatureKinds)});
      },
      py::arg("segment"), py::arg("fs") = 128,
      "Features of one band-limited segment [n_samples, 14]; returns [14, 11].");

  m.def(
      "build_cube",
      [](const DoubleArray& features, const std::string& combo) {
        const EegCube c = CubeBuilder(default_layout()).raw_cube(to_feature_set(features), combo_of(combo));
        return to_array(c.tensor, {static_cast<py::ssize_t>(c.height), static_cast<py::ssize_t>(c.width),
                                   static_cast<py::ssize_t>(c.channels())});
      },
      py::arg("features"), py::arg("combination"), "Unnormalized 34x34xC cube from [14, 11] features.");
  m.def("combination_channels", [](const std::string& c) { return combination_channels(combo_of(c)); });

  m.def(
      "make_split",
      [](const std::string& scheme) {
        const Split s = make_split(parse_scheme(scheme));
        std::vector<int> labels;
        for (auto l : s.labels) labels.push_back(to_int(l));
        return py::make_tuple(s.segments, labels);
      },
      py::arg("scheme"));
  m.def(
      "kfold", [](std::size_t n, std::size_t k, std::uint64_t seed) { return kfold(n, k, seed).assignments; },
      py::arg("n"), py::arg("k") = 10, py::arg("seed") = 1);
  m.def(
      "confusion",
      [](const IntArray& preds, const IntArray& labels) {
        const auto cm = confusion(to_ints(preds), to_ints(labels));
        std::vector<std::vector<std::size_t>> out;
        for (const auto& r : cm.counts) out.emplace_back(r.begin(), r.end());
        return out;
      },
      py::arg("preds"), py::arg("labels"));
  m.def(
      "metrics",
      [](const std::vector<std::vector<std::size_t>>& counts) {
        if (counts.size() != 3) throw Error(ErrorCode::ShapeMismatch, "confusion matrix must be 3x3");
        ConfusionMatrix3 cm;
        for (std::size_t i = 0; i < 3; ++i) {
          if (counts[i].size() != 3) throw Error(ErrorCode::ShapeMismatch, "confusion matrix must be 3x3");
          for (std::size_t j = 0; j < 3; ++j) cm.counts[i][j] = counts[i][j];
        }
        const Metrics mt = metrics(cm);
        py::dict d;
        d["acc"] = opt(mt.acc);
        d["sen"] = opt(mt.sen);
        d["spe"] = opt(mt.spe);
        d["pre"] = opt(mt.pre);
        d["npv"] = opt(mt.npv);
        d["acc3"] = opt(mt.acc3);
        return d;
      },
      py::arg("counts"), "Binarized metrics of a 3x3 matrix, rows predicted and columns true class (low = negative); None marks 0/0.");

  py::class_<CnnModel>(m, "CnnModel")
      .def_static("he_init", &CnnModel::he_init, py::arg("in_channels"), py::arg("seed") = 1,
                  py::arg("height") = kCubeSize, py::arg("width") = kCubeSize, py::arg("fc_width") = kDefaultFcWidth)
      .def_property_readonly("parameter_count", &CnnModel::parameter_count)
      .def_property_readonly("flatten_dim", &CnnModel::flatten_dim)
      .def("shape_trace", &CnnModel::shape_trace)
      .def("predict_proba", [](const CnnModel& model, const DoubleArray& x) { return predict_proba(model, tensor_of(x)); })
      .def("predict", [](const CnnModel& model, const DoubleArray& x) { return predict_class(model, tensor_of(x)); })
      .def("save", [](const CnnModel& model, const std::string& path) { save_checkpoint(model, path); })
      .def_static("load", [](const std::string& path) { return load_checkpoint(path); });

  m.def(
      "train_cnn",
      [](const std::vector<DoubleArray>& inputs, const IntArray& labels, std::size_t epochs, double lr,
         std::uint64_t seed, double dropout, std::size_t batch_size) {
        std::vector<Tensor> xs;
        for (const auto& a : inputs) xs.push_back(tensor_of(a));
        TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.learning_rate = lr;
        cfg.seed = seed;
        cfg.dropout_rate = dropout;
        cfg.batch_size = batch_size;
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(xs, to_ints(labels), cfg);
        }
        py::list history;
        for (const auto& e : r.history) history.append(py::make_tuple(e.epoch, e.loss, e.train_acc));
        return py::make_tuple(std::move(r.model), history);
      },
      py::arg("inputs"), py::arg("labels"), py::arg("epochs") = 100, py::arg("learning_rate") = 1e-3,
      py::arg("seed") = 1, py::arg("dropout_rate") = 0.5, py::arg("batch_size") = 32,
      "Train on [H, W, C] arrays; returns (model, [(epoch, loss, train_acc), ...]).");

  py::class_<FlatClassifier>(m, "FlatClassifier")
      .def_property_readonly("kind", [](const FlatClassifier& c) { return std::string(classifier_name(c.kind)); })
      .def("predict", [](const FlatClassifier& c, const DoubleArray& x) { return c.predict(to_matrix(x)); })
      .def("save", [](const FlatClassifier& c, const std::string& path) { save_model(c, path); })
      .def_static("load", [](const std::string& path) { return load_model(path); });
  m.def(
      "train_flat",
      [](const std::string& kind, const DoubleArray& x, const IntArray& y, std::uint64_t seed) {
        return train_flat(parse_classifier_kind(kind), to_matrix(x), to_ints(y), BaselineConfig{}, seed);
      },
      py::arg("kind"), py::arg("X"), py::arg("y"), py::arg("seed") = 1,
      "Standardize and train LR, LSSVM, SVM, RF, KNN, DT or NB with default hyperparameters.");

  m.def(
      "resolve_config",
      [](const std::string& text, const std::vector<std::string>& overrides) {
        return config_to_json(parse_config(text, overrides));
      },
      py::arg("config_json") = "", py::arg("overrides") = std::vector<std::string>{});
  m.def(
      "run",
      [](const std::string& command, const std::string& text, const std::vector<std::string>& overrides) {
        const PipelineConfig cfg = parse_config(text, overrides);
        py::gil_scoped_release release;
        if (command == "synth") {
          run_synth(cfg);
        } else if (command == "extract") {
          run_extract(cfg);
        } else if (command == "cv") {
          run_cv_grid(cfg);
        } else if (command == "report") {
          run_report(cfg);
        } else if (command == "train") {
          run_train(cfg);
        } else {
          throw Error(ErrorCode::InvalidArgument, "unknown command '" + command + "'");
        }
      },
      py::arg("command"), py::arg("config_json") = "", py::arg("overrides") = std::vector<std::string>{},
      "Run a pipeline stage (synth, extract, train, cv, report).");
}
