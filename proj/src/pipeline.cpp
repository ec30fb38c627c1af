#include "fatigue/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "fatigue/binary_io.hpp"
#include "fatigue/error.hpp"
#include "fatigue/rng.hpp"

namespace fatigue {

using nlohmann::json;

namespace {

json to_json(const PipelineConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["out_dir"] = c.out_dir.string();
  j["sampling_rate"] = c.sampling_rate;
  j["recordings"] = json::array();
  for (const auto& p : c.recordings) j["recordings"].push_back(p.string());
  j["labels"] = json::array();
  for (const auto& p : c.labels) j["labels"].push_back(p.string());
  j["montage"] = c.montage.string();
  j["schemes"] = json::array();
  for (auto s : c.schemes) j["schemes"].push_back(std::string(scheme_name(s)));
  j["combinations"] = json::array();
  for (auto s : c.combinations) j["combinations"].push_back(std::string(combination_name(s)));
  j["classifiers"] = json::array();
  for (auto s : c.classifiers) j["classifiers"].push_back(std::string(classifier_name(s)));
  j["folds"] = c.folds;
  j["stratified"] = c.stratified;
  j["shuffle_labels"] = c.shuffle_labels;
  j["synth"] = {{"subjects", c.synth.subjects},
                {"n_segments", c.synth.n_segments},
                {"class_effect", c.synth.class_effect},
                {"noise_std", c.synth.noise_std}};
  j["filter"] = {{"enabled", c.filter.enabled},
                 {"low_hz", c.filter.low_hz},
                 {"high_hz", c.filter.high_hz},
                 {"taps", c.filter.taps}};
  j["features"] = {{"entropy_bins", c.features.entropy_bins}};
  j["cnn"] = {{"epochs", c.cnn.epochs},         {"batch_size", c.cnn.batch_size},
              {"learning_rate", c.cnn.learning_rate}, {"dropout_rate", c.cnn.dropout_rate},
              {"fc_width", c.cnn.fc_width},     {"beta1", c.cnn.beta1},
              {"beta2", c.cnn.beta2},           {"epsilon", c.cnn.epsilon}};
  const auto& b = c.baseline;
  j["baseline"] = {{"lssvm_gamma", b.lssvm_gamma},   {"svm_c", b.svm_c},
                   {"svm_epochs", b.svm_epochs},     {"lr_lambda", b.lr_lambda},
                   {"lr_tolerance", b.lr_tolerance}, {"lr_max_iterations", b.lr_max_iterations},
                   {"knn_k", b.knn_k},               {"nb_var_floor", b.nb_var_floor},
                   {"dt_max_depth", b.dt_max_depth}, {"dt_min_leaf", b.dt_min_leaf},
                   {"rf_trees", b.rf_trees}};
  return j;
}

[[noreturn]] void config_error(const std::string& key, const std::string& what) {
  throw Error(ErrorCode::ConfigError, key.empty() ? what : "'" + key + "': " + what);
}

std::string type_label(const json& schema) {
  if (schema.is_boolean()) return "a boolean";
  if (schema.is_number_unsigned()) return "a non-negative integer";
  if (schema.is_number()) return "a number";
  if (schema.is_string()) return "a string";
  if (schema.is_array()) return "a list of strings";
  return "an object";
}

/// Coerces `value` to the type of `schema` or throws.
json coerce(const json& schema, const json& value, const std::string& key) {
  if (schema.is_object()) {
    if (!value.is_object()) config_error(key, "expected an object");
    json out = schema;
    for (auto it = value.begin(); it != value.end(); ++it) {
      const std::string sub = key.empty() ? it.key() : key + "." + it.key();
      if (!schema.contains(it.key())) config_error(sub, "unknown key");
      out[it.key()] = coerce(schema[it.key()], it.value(), sub);
    }
    return out;
  }
  if (schema.is_boolean() && value.is_boolean()) return value;
  if (schema.is_number_unsigned()) {
    if (value.is_number_unsigned()) return value;
    if (value.is_number_integer() && value.get<std::int64_t>() >= 0) return value.get<std::uint64_t>();
    config_error(key, "expected " + type_label(schema));
  }
  if (schema.is_number() && value.is_number()) return value.get<double>();
  if (schema.is_string() && value.is_string()) return value;
  if (schema.is_array()) {
    if (value.is_string()) {
      // comma-separated shorthand for --set
      json a = json::array();
      const std::string s = value.get<std::string>();
      std::size_t start = 0;
      while (start <= s.size()) {
        const std::size_t comma = s.find(',', start);
        const std::string item = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!item.empty()) a.push_back(item);
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      return a;
    }
    if (value.is_array()) {
      for (const auto& v : value) {
        if (!v.is_string()) config_error(key, "expected a list of strings");
      }
      return value;
    }
  }
  config_error(key, "expected " + type_label(schema));
}

PipelineConfig from_json(const json& j) {
  PipelineConfig c;
  c.seed = j["seed"].get<std::uint64_t>();
  c.workers = j["workers"].get<std::size_t>();
  c.out_dir = j["out_dir"].get<std::string>();
  c.sampling_rate = j["sampling_rate"].get<std::size_t>();
  for (const auto& p : j["recordings"]) c.recordings.emplace_back(p.get<std::string>());
  for (const auto& p : j["labels"]) c.labels.emplace_back(p.get<std::string>());
  c.montage = j["montage"].get<std::string>();
  c.schemes.clear();
  for (const auto& s : j["schemes"]) c.schemes.push_back(parse_scheme(s.get<std::string>()));
  c.combinations.clear();
  for (const auto& s : j["combinations"]) {
    const auto combo = parse_combination(s.get<std::string>());
    if (!combo) {
      config_error("combinations", "unknown feature combination '" + s.get<std::string>() +
                                       "' (expected Frequency, Time, Entropy, F_Time, F_Entropy, T_Entropy, "
                                       "F_T_Entropy)");
    }
    c.combinations.push_back(*combo);
  }
  c.classifiers.clear();
  for (const auto& s : j["classifiers"]) c.classifiers.push_back(parse_classifier_kind(s.get<std::string>()));
  c.folds = j["folds"].get<std::size_t>();
  c.stratified = j["stratified"].get<bool>();
  c.shuffle_labels = j["shuffle_labels"].get<bool>();
  const auto& sy = j["synth"];
  c.synth.subjects = sy["subjects"].get<std::size_t>();
  c.synth.n_segments = sy["n_segments"].get<std::size_t>();
  c.synth.class_effect = sy["class_effect"].get<double>();
  c.synth.noise_std = sy["noise_std"].get<double>();
  const auto& f = j["filter"];
  c.filter.enabled = f["enabled"].get<bool>();
  c.filter.low_hz = f["low_hz"].get<double>();
  c.filter.high_hz = f["high_hz"].get<double>();
  c.filter.taps = f["taps"].get<std::size_t>();
  c.features.entropy_bins = j["features"]["entropy_bins"].get<std::size_t>();
  const auto& n = j["cnn"];
  c.cnn.epochs = n["epochs"].get<std::size_t>();
  c.cnn.batch_size = n["batch_size"].get<std::size_t>();
  c.cnn.learning_rate = n["learning_rate"].get<double>();
  c.cnn.dropout_rate = n["dropout_rate"].get<double>();
  c.cnn.fc_width = n["fc_width"].get<std::size_t>();
  c.cnn.beta1 = n["beta1"].get<double>();
  c.cnn.beta2 = n["beta2"].get<double>();
  c.cnn.epsilon = n["epsilon"].get<double>();
  c.cnn.seed = c.seed;
  const auto& b = j["baseline"];
  c.baseline.lssvm_gamma = b["lssvm_gamma"].get<double>();
  c.baseline.svm_c = b["svm_c"].get<double>();
  c.baseline.svm_epochs = b["svm_epochs"].get<std::size_t>();
  c.baseline.lr_lambda = b["lr_lambda"].get<double>();
  c.baseline.lr_tolerance = b["lr_tolerance"].get<double>();
  c.baseline.lr_max_iterations = b["lr_max_iterations"].get<std::size_t>();
  c.baseline.knn_k = b["knn_k"].get<std::size_t>();
  c.baseline.nb_var_floor = b["nb_var_floor"].get<double>();
  c.baseline.dt_max_depth = b["dt_max_depth"].get<std::size_t>();
  c.baseline.dt_min_leaf = b["dt_min_leaf"].get<std::size_t>();
  c.baseline.rf_trees = b["rf_trees"].get<std::size_t>();
  return c;
}

void apply_override(json& cfg, const json& schema, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) config_error("", "override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json* node = &cfg;
  const json* sch = &schema;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!sch->is_object() || !sch->contains(part)) config_error(key, "unknown key");
    sch = &(*sch)[part];
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  // a JSON-looking scalar for a string field (e.g. out_dir=123) stays a string
  if (sch->is_string() && !value.is_string()) value = raw;
  *node = coerce(*sch, value, key);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

PipelineConfig parse_config(std::string_view json_text, std::span<const std::string> overrides,
                            std::optional<std::string> env_seed) {
  const json schema = to_json(PipelineConfig{});
  json merged = schema;
  std::string trimmed(json_text);
  if (trimmed.find_first_not_of(" \t\r\n") != std::string::npos) {
    const json user = json::parse(trimmed, nullptr, false);
    if (user.is_discarded()) config_error("", "config is not valid JSON");
    merged = coerce(schema, user, "");
  }
  if (env_seed && !env_seed->empty()) {
    std::uint64_t seed = 0;
    const char* b = env_seed->data();
    const char* e = b + env_seed->size();
    auto [p, ec] = std::from_chars(b, e, seed);
    if (ec != std::errc() || p != e) {
      config_error(std::string(kSeedEnvVar), "must be a non-negative integer, got '" + *env_seed + "'");
    }
    merged["seed"] = seed;
  }
  for (const auto& o : overrides) apply_override(merged, schema, o);
  PipelineConfig cfg = from_json(merged);
  validate_config(cfg);
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides,
                           std::optional<std::string> env_seed) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::IoError, "config file not found: " + path.string());
  return parse_config(read_text_file(path), overrides, std::move(env_seed));
}

std::string config_to_json(const PipelineConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::string config_hash(const PipelineConfig& cfg) { return hex64(fnv1a(to_json(cfg).dump())); }

void validate_config(const PipelineConfig& c) {
  if (c.synth.n_segments == 0) config_error("synth.n_segments", "must be >= 1");
  if (c.synth.subjects == 0) config_error("synth.subjects", "must be >= 1");
  if (!(c.synth.noise_std >= 0.0)) config_error("synth.noise_std", "must be >= 0");
  if (c.sampling_rate < 8) config_error("sampling_rate", "must be >= 8");
  if (c.schemes.empty()) config_error("schemes", "must not be empty");
  if (c.combinations.empty()) config_error("combinations", "must not be empty");
  if (c.classifiers.empty()) config_error("classifiers", "must not be empty");
  if (c.folds < 2) config_error("folds", "must be >= 2");
  if (!c.labels.empty() && c.labels.size() != c.recordings.size()) {
    config_error("labels", "must be empty or list one file per recording");
  }
  if (c.filter.taps < 3 || c.filter.taps % 2 == 0) config_error("filter.taps", "must be odd and >= 3");
  const double nyquist = static_cast<double>(c.sampling_rate) / 2.0;
  if (!(c.filter.low_hz > 0.0 && c.filter.low_hz < c.filter.high_hz && c.filter.high_hz < nyquist)) {
    config_error("filter", "band edges must satisfy 0 < low_hz < high_hz < sampling_rate/2");
  }
  if (c.features.entropy_bins < 2) config_error("features.entropy_bins", "must be >= 2");
  if (c.cnn.epochs == 0) config_error("cnn.epochs", "must be >= 1");
  if (c.cnn.batch_size == 0) config_error("cnn.batch_size", "must be >= 1");
  if (!(c.cnn.learning_rate > 0.0)) config_error("cnn.learning_rate", "must be > 0");
  if (!(c.cnn.dropout_rate >= 0.0 && c.cnn.dropout_rate < 1.0)) config_error("cnn.dropout_rate", "must lie in [0, 1)");
  if (c.cnn.fc_width == 0) config_error("cnn.fc_width", "must be >= 1");
  if (c.baseline.knn_k == 0) config_error("baseline.knn_k", "must be >= 1");
  if (c.baseline.rf_trees == 0) config_error("baseline.rf_trees", "must be >= 1");
  if (c.baseline.dt_min_leaf == 0) config_error("baseline.dt_min_leaf", "must be >= 1");
  if (!(c.baseline.svm_c > 0.0)) config_error("baseline.svm_c", "must be > 0");
  if (!(c.baseline.lssvm_gamma > 0.0)) config_error("baseline.lssvm_gamma", "must be > 0");
}

// ---- paths ------------------------------------------------------------------

std::string subject_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "S%02zu", i + 1);
  return buf;
}

std::vector<SessionPaths> session_paths(const PipelineConfig& cfg) {
  std::vector<SessionPaths> out;
  if (cfg.recordings.empty()) {
    for (std::size_t i = 0; i < cfg.synth.subjects; ++i) {
      const std::string s = subject_name(i);
      out.push_back({s, cfg.out_dir / (s + "_signal.csv"), cfg.out_dir / (s + "_labels.csv")});
    }
    return out;
  }
  for (std::size_t i = 0; i < cfg.recordings.size(); ++i) {
    SessionPaths p{subject_name(i), cfg.recordings[i], std::nullopt};
    if (!cfg.labels.empty()) p.labels = cfg.labels[i];
    out.push_back(std::move(p));
  }
  return out;
}

std::filesystem::path feature_path(const PipelineConfig& cfg, const std::string& subject) {
  return cfg.out_dir / "features" / (subject + "_features.csv");
}

std::filesystem::path cube_path(const PipelineConfig& cfg, const std::string& subject, FeatureCombination combo) {
  return cfg.out_dir / "cubes" / (subject + "_" + std::string(combination_name(combo)) + ".eegcube");
}

namespace {

void ensure_dir(const std::filesystem::path& p) {
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create directory " + p.string() + ": " + ec.message());
}

void require_file(const std::filesystem::path& p, const std::string& hint) {
  if (!std::filesystem::exists(p)) throw Error(ErrorCode::IoError, "missing input " + p.string() + hint);
}

ElectrodeLayout layout_for(const PipelineConfig& cfg) {
  return cfg.montage.empty() ? default_layout() : load_montage(cfg.montage);
}

}  // namespace

// ---- synth / extract ----------------------------------------------------------

std::vector<SessionPaths> run_synth(const PipelineConfig& cfg, const ProgressFn& progress) {
  validate_config(cfg);
  PipelineConfig synth_cfg = cfg;
  synth_cfg.recordings.clear();
  synth_cfg.labels.clear();
  const auto paths = session_paths(synth_cfg);
  ensure_dir(cfg.out_dir);
  for (std::size_t i = 0; i < paths.size(); ++i) {
    SynthConfig sc;
    sc.n_segments = cfg.synth.n_segments;
    sc.seed = derive_seed(cfg.seed, 0x5E55 + i);
    sc.class_effect = cfg.synth.class_effect;
    sc.noise_std = cfg.synth.noise_std;
    sc.sampling_rate = cfg.sampling_rate;
    sc.subject_id = paths[i].subject;
    const SynthSession s = synth_session(sc);
    save_recording(s.recording, paths[i].recording);
    save_labels(s.labels, *paths[i].labels);
    if (progress) progress("synth " + paths[i].subject + " -> " + paths[i].recording.string());
  }
  return paths;
}

FeatureTable extract_session(const EegRecording& rec, std::span<const FatigueLevel> labels,
                             const PipelineConfig& cfg) {
  EegRecording work = rec;
  if (cfg.filter.enabled) {
    const FirFilter filter =
        design_bandpass(cfg.filter.low_hz, cfg.filter.high_hz, static_cast<double>(rec.sampling_rate), cfg.filter.taps);
    work = filter_recording(rec, filter);
  }
  FeatureTable table;
  for (const Segment& seg : segment_recording(work)) {
    table.segment_index.push_back(seg.index);
    std::optional<FatigueLevel> label;
    if (seg.index <= labels.size()) label = labels[seg.index - 1];
    table.labels.push_back(label);
    table.features.push_back(extract_features(seg, cfg.features));
  }
  return table;
}

void run_extract(const PipelineConfig& cfg, const ProgressFn& progress) {
  validate_config(cfg);
  const ElectrodeLayout layout = layout_for(cfg);
  const CubeBuilder builder(layout);
  ensure_dir(cfg.out_dir / "features");
  ensure_dir(cfg.out_dir / "cubes");
  for (const auto& sp : session_paths(cfg)) {
    require_file(sp.recording, cfg.recordings.empty() ? " (run `synth` first or set recordings)" : "");
    EegRecording rec = load_recording(sp.recording, cfg.sampling_rate);
    rec.subject_id = sp.subject;
    std::vector<FatigueLevel> labels;
    if (sp.labels && std::filesystem::exists(*sp.labels)) labels = load_labels(*sp.labels);
    const FeatureTable table = extract_session(rec, labels, cfg);
    write_text_file(feature_path(cfg, sp.subject), format_feature_csv(table));
    for (auto combo : cfg.combinations) {
      std::vector<EegCube> cubes;
      cubes.reserve(table.features.size());
      for (std::size_t i = 0; i < table.features.size(); ++i) {
        EegCube cube = builder.raw_cube(table.features[i], combo);
        cube.label = table.labels[i];
        cubes.push_back(std::move(cube));
      }
      write_cube_archive(cubes, combo, cube_path(cfg, sp.subject, combo));
    }
    if (progress) {
      progress("extract " + sp.subject + ": " + std::to_string(table.features.size()) + " segments, " +
               std::to_string(cfg.combinations.size()) + " cube archive(s)");
    }
  }
}

// ---- cv -----------------------------------------------------------------------

std::vector<CvJob> cv_jobs(const PipelineConfig& cfg) {
  std::vector<CvJob> jobs;
  const auto sessions = session_paths(cfg);
  for (auto s : cfg.schemes) {
    for (auto c : cfg.combinations) {
      for (auto k : cfg.classifiers) {
        for (const auto& sp : sessions) jobs.push_back({s, c, k, sp.subject});
      }
    }
  }
  return jobs;
}

std::uint64_t fold_seed(const PipelineConfig& cfg, SplitScheme scheme, std::size_t subject_index) {
  return derive_seed(derive_seed(derive_seed(cfg.seed, 0xF01D), static_cast<std::uint64_t>(scheme)), subject_index);
}

std::vector<int> split_labels(const PipelineConfig& cfg, SplitScheme scheme, std::size_t subject_index) {
  const Split split = make_split(scheme);
  std::vector<int> y;
  y.reserve(split.labels.size());
  for (auto l : split.labels) y.push_back(to_int(l));
  if (cfg.shuffle_labels) {
    Rng rng(derive_seed(derive_seed(derive_seed(cfg.seed, 0x5A0F), static_cast<std::uint64_t>(scheme)),
                        subject_index));
    rng.shuffle(std::span<int>(y));
  }
  return y;
}

namespace {

std::size_t subject_index(const PipelineConfig& cfg, const std::string& subject) {
  const auto sessions = session_paths(cfg);
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    if (sessions[i].subject == subject) return i;
  }
  throw Error(ErrorCode::ConfigError, "unknown subject " + subject);
}

std::uint64_t classifier_seed(const PipelineConfig& cfg, const std::string& id) {
  return derive_seed(derive_seed(cfg.seed, 0xC1A5), fnv1a(id));
}

/// Row position of every split segment inside the feature table.
std::vector<std::size_t> split_rows(const FeatureTable& table, const Split& split, const std::string& subject) {
  std::map<std::size_t, std::size_t> pos;
  for (std::size_t i = 0; i < table.segment_index.size(); ++i) pos[table.segment_index[i]] = i;
  std::vector<std::size_t> rows;
  rows.reserve(split.segments.size());
  for (std::size_t s : split.segments) {
    auto it = pos.find(s);
    if (it == pos.end()) {
      throw Error(ErrorCode::TooShort, "session " + subject + " has no segment " + std::to_string(s) +
                                           "; the split needs a 2400-second session");
    }
    rows.push_back(it->second);
  }
  return rows;
}

struct JobData {
  std::vector<int> labels;
  FeatureMatrix flat;
  std::vector<EegCube> cubes;
};

JobData load_job_data(const PipelineConfig& cfg, const CvJob& job, std::size_t subj) {
  const auto fpath = feature_path(cfg, job.subject);
  require_file(fpath, " (run `extract` first)");
  const FeatureTable table = parse_feature_csv(read_text_file(fpath));
  const Split split = make_split(job.scheme);
  const auto rows = split_rows(table, split, job.subject);
  JobData d;
  d.labels = split_labels(cfg, job.scheme, subj);
  if (job.classifier == ClassifierKind::Cnn) {
    const auto cpath = cube_path(cfg, job.subject, job.combo);
    require_file(cpath, " (run `extract` with this combination first)");
    std::vector<EegCube> all = read_cube_archive(cpath);
    if (all.size() != table.features.size()) {
      throw Error(ErrorCode::BadCubeArchive, cpath.string() + " holds " + std::to_string(all.size()) +
                                                 " cubes but the feature table has " +
                                                 std::to_string(table.features.size()) + " rows");
    }
    d.cubes.reserve(rows.size());
    for (std::size_t r : rows) d.cubes.push_back(std::move(all[r]));
  } else {
    for (std::size_t r : rows) d.flat.push_row(combination_vector(table.features[r], job.combo));
  }
  return d;
}

}  // namespace

RunRecord run_job(const PipelineConfig& cfg, const CvJob& job) {
  RunRecord rec{job.scheme, job.combo, job.classifier, job.subject, {}};
  const std::size_t subj = subject_index(cfg, job.subject);
  JobData d = load_job_data(cfg, job, subj);
  const FoldPlan plan = kfold(d.labels.size(), cfg.folds, fold_seed(cfg, job.scheme, subj),
                              cfg.stratified ? std::span<const int>(d.labels) : std::span<const int>{});
  const std::uint64_t seed = classifier_seed(cfg, run_id(rec));
  if (job.classifier == ClassifierKind::Cnn) {
    TrainConfig tc = cfg.cnn;
    tc.seed = seed;
    rec.result = run_cv(d.labels, plan, cube_predictor(d.cubes, d.labels, tc));
  } else {
    rec.result = run_cv(d.labels, plan, flat_predictor(d.flat, d.labels, job.classifier, cfg.baseline, seed));
  }
  return rec;
}

std::string run_manifest(const PipelineConfig& cfg, const RunRecord& run) {
  const std::size_t subj = subject_index(cfg, run.subject);
  json m;
  m["tool_version"] = std::string(kToolVersion);
  m["run_id"] = run_id(run);
  m["scheme"] = std::string(scheme_name(run.scheme));
  m["combination"] = std::string(combination_name(run.combo));
  m["channels"] = combination_channels(run.combo);
  m["classifier"] = std::string(classifier_name(run.classifier));
  m["subject"] = run.subject;
  m["seed"] = cfg.seed;
  m["fold_seed"] = fold_seed(cfg, run.scheme, subj);
  m["classifier_seed"] = classifier_seed(cfg, run_id(run));
  m["config_hash"] = config_hash(cfg);
  m["config"] = to_json(cfg);
  json folds = json::array();
  for (const auto& f : run.result.folds) folds.push_back(format_metric(f.accuracy()));
  m["fold_accuracy"] = folds;
  m["mean_accuracy"] = format_metric(run.result.mean_accuracy());
  m["settings"] = {
      {"label_mapping", "block 1 -> low, block 2 -> medium, block 3 -> high"},
      {"fold_assignment", cfg.stratified ? "seeded per-class shuffle, round-robin" : "seeded shuffle, round-robin"},
      {"filter_stage", cfg.filter.enabled ? "zero-phase FIR on the whole recording before segmentation" : "none"},
      {"feature_scaling", "per-column z-score fitted on training folds"},
      {"map_scaling", "per-feature-kind z-score over inside-head cells of training cubes"},
      {"ovo_members", "LR, LSSVM, SVM; pairs {low,medium}, {medium,high}, {low,high}"},
      {"ovo_tie_rule", "largest summed signed margin, then lowest class"},
      {"accuracy", "3-class trace/total per fold, averaged over folds"},
      {"binarized_metrics", "class low = negative, medium/high = positive"},
      {"undefined_metric", "NA"},
      {"cnn", "He-normal init, Adam, inverted dropout after FC1"},
  };
  return m.dump(2) + "\n";
}

std::vector<RunRecord> run_cv_grid(const PipelineConfig& cfg, const ProgressFn& progress) {
  validate_config(cfg);
  const auto jobs = cv_jobs(cfg);
  std::vector<std::optional<RunRecord>> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min(jobs.size(), cfg.workers ? cfg.workers : hw);

  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        results[i] = run_job(cfg, jobs[i]);
        if (progress) {
          std::lock_guard lock(log_mutex);
          progress(run_id(*results[i]) + ": mean accuracy " + format_metric(results[i]->result.mean_accuracy()));
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<RunRecord> runs;
  for (auto& r : results) runs.push_back(std::move(*r));
  for (const auto& r : runs) {
    const auto dir = cfg.out_dir / "runs" / run_id(r);
    ensure_dir(dir);
    write_text_file(dir / "folds.csv", format_fold_csv(r.result));
    write_text_file(dir / "manifest.json", run_manifest(cfg, r));
  }
  write_report(cfg.out_dir, runs);
  return runs;
}

// ---- report -------------------------------------------------------------------

std::vector<RunRecord> load_runs(const std::filesystem::path& out_dir) {
  const auto runs_dir = out_dir / "runs";
  if (!std::filesystem::is_directory(runs_dir)) {
    throw Error(ErrorCode::IoError, "no runs directory at " + runs_dir.string() + " (run `cv` first)");
  }
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(runs_dir)) {
    if (e.is_directory() && std::filesystem::exists(e.path() / "folds.csv")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<RunRecord> runs;
  for (const auto& d : dirs) {
    const json m = json::parse(read_text_file(d / "manifest.json"), nullptr, false);
    if (m.is_discarded() || !m.contains("scheme") || !m.contains("combination") || !m.contains("classifier") ||
        !m.contains("subject")) {
      throw Error(ErrorCode::ConfigError, "unreadable manifest in " + d.string());
    }
    RunRecord r;
    r.scheme = parse_scheme(m["scheme"].get<std::string>());
    const auto combo = parse_combination(m["combination"].get<std::string>());
    if (!combo) throw Error(ErrorCode::ConfigError, "bad combination in " + d.string());
    r.combo = *combo;
    r.classifier = parse_classifier_kind(m["classifier"].get<std::string>());
    r.subject = m["subject"].get<std::string>();
    r.result = parse_fold_csv(read_text_file(d / "folds.csv"));
    runs.push_back(std::move(r));
  }
  if (runs.empty()) throw Error(ErrorCode::EmptyData, "no completed runs under " + runs_dir.string());
  return runs;
}

void write_report(const std::filesystem::path& out_dir, std::span<const RunRecord> runs) {
  std::vector<RunRecord> sorted(runs.begin(), runs.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const RunRecord& a, const RunRecord& b) { return run_id(a) < run_id(b); });
  const ReportTables t = build_report(sorted);
  const auto dir = out_dir / "report";
  ensure_dir(dir);
  write_text_file(dir / "table2.csv", t.table2);
  write_text_file(dir / "table3.csv", t.table3);
  write_text_file(dir / "table4.csv", t.table4);
  write_text_file(dir / "table6.csv", t.table6);
}

ReportTables run_report(const PipelineConfig& cfg) {
  auto runs = load_runs(cfg.out_dir);
  write_report(cfg.out_dir, runs);
  std::sort(runs.begin(), runs.end(), [](const RunRecord& a, const RunRecord& b) { return run_id(a) < run_id(b); });
  return build_report(runs);
}

// ---- train --------------------------------------------------------------------

TrainOutput run_train(const PipelineConfig& cfg, const ProgressFn& progress) {
  validate_config(cfg);
  const CvJob job{cfg.schemes.front(), cfg.combinations.front(), cfg.classifiers.front(),
                  session_paths(cfg).front().subject};
  const RunRecord id_rec{job.scheme, job.combo, job.classifier, job.subject, {}};
  const std::string id = run_id(id_rec);
  JobData d = load_job_data(cfg, job, 0);
  const std::uint64_t seed = classifier_seed(cfg, id);
  const auto dir = cfg.out_dir / "models";
  ensure_dir(dir);
  TrainOutput out;
  std::size_t correct = 0;
  if (job.classifier == ClassifierKind::Cnn) {
    MapNormalizer norm;
    norm.fit(d.cubes);
    std::vector<Tensor> inputs;
    for (const auto& c : d.cubes) inputs.push_back(cube_tensor(norm.apply(c)));
    TrainConfig tc = cfg.cnn;
    tc.seed = seed;
    const TrainResult tr = train(inputs, d.labels, tc);
    for (std::size_t i = 0; i < inputs.size(); ++i) correct += predict_class(tr.model, inputs[i]) == d.labels[i];
    out.model_path = dir / (id + ".cnnckpt");
    save_checkpoint(tr.model, out.model_path);
    out.history_path = dir / (id + "_history.csv");
    write_text_file(*out.history_path, format_history_csv(tr.history));
    json nj = json::object();
    for (auto k : combination_kinds(job.combo)) {
      const auto& s = norm.stats(k);
      if (s) nj[std::string(feature_kind_tag(k))] = {{"mean", s->mean}, {"std", s->std}};
    }
    write_text_file(dir / (id + "_normalizer.json"), nj.dump(2) + "\n");
  } else {
    const FlatClassifier clf = train_flat(job.classifier, d.flat, d.labels, cfg.baseline, seed);
    const auto preds = clf.predict(d.flat);
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == d.labels[i];
    out.model_path = dir / (id + ".mdlpak");
    save_model(clf, out.model_path);
  }
  out.train_accuracy = static_cast<double>(correct) / static_cast<double>(d.labels.size());
  if (progress) progress("train " + id + ": training accuracy " + format_metric(out.train_accuracy));
  return out;
}

}  // namespace fatigue
