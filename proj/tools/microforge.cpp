#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "microforge/fileio.hpp"
#include "microforge/pipeline.hpp"

namespace fs = std::filesystem;
namespace mp = microforge::pipeline;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitStage = 3;

struct Overrides {
  std::string config_file;
  std::map<std::string, std::string> values;
};

void add_config_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config_file, "key = value config file");
  for (const auto& key : mp::config_keys())
    cmd->add_option(std::string("--") + key.name, o.values[key.name],
                    std::string(key.help) + " [default: " + key.default_value + "]");
}

mp::PipelineConfig resolve(const Overrides& o) {
  mp::ConfigMap merged;
  if (!o.config_file.empty()) merged = mp::load_config_file(o.config_file);
  for (const auto& [k, v] : o.values)
    if (!v.empty()) merged[k] = v;
  return mp::PipelineConfig::from_map(merged);
}

void print_timings(const mp::RunReport& r) {
  for (const auto& t : r.timings)
    std::fprintf(stderr, "%-12s %8.2fs%s\n", t.name.c_str(), t.seconds, t.skipped ? " (up to date)" : "");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"microforge: microstructure synthesis and characterisation"};
  app.set_version_flag("--version", mp::kToolVersion);
  app.require_subcommand(1);

  std::map<std::string, Overrides> stage_overrides;
  std::map<std::string, CLI::App*> stage_cmds;
  const std::map<std::string, std::string> stage_help = {
      {"cut", "write the exemplar, training patches and reference crops"},
      {"train", "train the generator (model.mgck, loss_trace.csv)"},
      {"generate", "sample patches from the trained generator"},
      {"quilt", "stitch generated patches into mosaics"},
      {"postprocess", "binarise mosaics and reference crops"},
      {"stats", "Minkowski statistics, real vs generated"},
      {"homog", "effective elastic constants, real vs generated"},
      {"pipeline", "run every stage and write report.json"},
  };
  for (const auto& [name, help] : stage_help) {
    stage_cmds[name] = app.add_subcommand(name, help + "; earlier stages run when their artifacts are stale");
    add_config_flags(stage_cmds[name], stage_overrides[name]);
  }

  Overrides report_o;
  std::string verify_dir;
  auto* report_cmd = app.add_subcommand("report", "write report.json, or with --dir verify an existing run");
  add_config_flags(report_cmd, report_o);
  report_cmd->add_option("--dir", verify_dir, "run directory to verify against its report");

  Overrides ablation_o;
  std::vector<std::string> modes{"progressive", "single_resolution"};
  auto* ablation_cmd = app.add_subcommand("ablation", "train one model per mode and tabulate the statistics");
  add_config_flags(ablation_cmd, ablation_o);
  ablation_cmd->add_option("--modes", modes, "progressive, single_resolution, resolution_increase")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }

  try {
    for (const auto& [name, cmd] : stage_cmds) {
      if (!cmd->parsed()) continue;
      const auto until = name == "pipeline" ? std::string("report") : name;
      const auto r = mp::run_pipeline(resolve(stage_overrides[name]), until);
      print_timings(r);
      if (!r.report_path.empty()) std::cout << r.report_path.string() << "\n";
      return 0;
    }
    if (report_cmd->parsed()) {
      if (verify_dir.empty()) {
        const auto r = mp::run_pipeline(resolve(report_o), "report");
        print_timings(r);
        std::cout << r.report_path.string() << "\n";
        return 0;
      }
      const auto problems = mp::verify_run(verify_dir);
      for (const auto& p : problems) std::cerr << "mismatch: " << p << "\n";
      if (!problems.empty()) return kExitStage;
      std::cout << "report verified: " << verify_dir << "\n";
      return 0;
    }
    if (ablation_cmd->parsed()) {
      std::vector<mp::AblationMode> parsed;
      for (const auto& m : modes) parsed.push_back(mp::parse_ablation_mode(m));
      const auto config = resolve(ablation_o);
      const auto rep = mp::ablation_compare(config, parsed);
      fs::create_directories(config.output_dir);
      microforge::write_file_atomic(config.output_dir / "ablation.json", rep.to_json());
      microforge::write_file_atomic(config.output_dir / "ablation.csv", rep.to_csv());
      std::cout << rep.to_csv();
      return 0;
    }
  } catch (const mp::StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  } catch (const microforge::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == microforge::Errc::ValidationError ? kExitValidation : kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  }
  return 0;
}
