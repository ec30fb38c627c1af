#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fatigue/error.hpp"
#include "fatigue/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCompute = 1;
constexpr int kExitUsage = 2;

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::string out_dir;
};

fatigue::PipelineConfig resolve(const Options& o) {
  std::vector<std::string> overrides;
  if (!o.out_dir.empty()) overrides.push_back("out_dir=" + o.out_dir);
  overrides.insert(overrides.end(), o.sets.begin(), o.sets.end());
  std::optional<std::string> env_seed;
  if (const char* s = std::getenv(std::string(fatigue::kSeedEnvVar).c_str())) env_seed = s;
  if (o.config.empty()) return fatigue::parse_config("", overrides, env_seed);
  return fatigue::load_config(o.config, overrides, env_seed);
}

void log_line(std::string_view s) { std::cerr << s << '\n'; }

void print_grid(const std::vector<fatigue::RunRecord>& runs) {
  std::cout << "run,mean_accuracy\n";
  for (const auto& r : runs) {
    std::cout << fatigue::run_id(r) << ',' << fatigue::format_metric(r.result.mean_accuracy()) << '\n';
  }
}

int exit_code_for(const fatigue::Error& e) {
  switch (e.code()) {
    case fatigue::ErrorCode::ConfigError:
    case fatigue::ErrorCode::IoError: return kExitUsage;
    default: return kExitCompute;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG mental-fatigue lab: synthesize, extract features and cubes, train, cross-validate, report"};
  app.require_subcommand(1);
  Options opts;

  auto add_common = [&opts](CLI::App* sub) {
    sub->add_option("-c,--config", opts.config, "JSON config file");
    sub->add_option("-s,--set", opts.sets, "Override a config value, dotted key=value (repeatable)");
    sub->add_option("-o,--out-dir", opts.out_dir, "Output directory (overrides out_dir)");
  };
  auto* synth = app.add_subcommand("synth", "Write synthetic recording and label files");
  auto* extract = app.add_subcommand("extract", "Write the feature CSV and one cube archive per combination");
  auto* train = app.add_subcommand("train", "Train one model on a full split and save it");
  auto* cv = app.add_subcommand("cv", "Run k-fold cross-validation over the configured grid and write reports");
  auto* report = app.add_subcommand("report", "Rebuild report tables from persisted fold results");
  bool print_config = false;
  for (auto* sub : {synth, extract, train, cv, report}) add_common(sub);
  for (auto* sub : {synth, extract, train, cv, report}) {
    sub->add_flag("--print-config", print_config, "Print the resolved config and exit");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    const fatigue::PipelineConfig cfg = resolve(opts);
    if (print_config) {
      std::cout << fatigue::config_to_json(cfg);
      return kExitOk;
    }
    if (synth->parsed()) {
      fatigue::run_synth(cfg, log_line);
    } else if (extract->parsed()) {
      fatigue::run_extract(cfg, log_line);
    } else if (train->parsed()) {
      const auto out = fatigue::run_train(cfg, log_line);
      std::cout << out.model_path.string() << '\n';
    } else if (cv->parsed()) {
      print_grid(fatigue::run_cv_grid(cfg, log_line));
      std::cerr << "report written to " << (cfg.out_dir / "report").string() << '\n';
    } else if (report->parsed()) {
      const auto tables = fatigue::run_report(cfg);
      std::cout << tables.table3;
    }
  } catch (const fatigue::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCompute;
  }
  return kExitOk;
}
