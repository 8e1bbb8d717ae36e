#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "microforge/error.hpp"
#include "microforge/homog.hpp"
#include "microforge/image.hpp"
#include "microforge/metrology.hpp"
#include "microforge/postproc.hpp"
#include "microforge/train.hpp"

namespace microforge::pipeline {

inline constexpr const char* kToolVersion = "0.1.0";

/// Two-phase exemplar of overlapping pore disks (0) in a solid matrix (255);
/// disks are added until the pore fraction reaches `pore_fraction`.
GrayImage synthetic_exemplar(int size = 256, std::uint64_t seed = 7, double pore_fraction = 0.4);

/// Raised for failures inside a pipeline stage; the message carries the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.code(), "stage '" + stage + "': " + cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct ConfigKey {
  const char* name;
  const char* default_value;
  const char* help;
};
/// Every recognised key with its default; each is also a CLI flag `--<name>`.
const std::vector<ConfigKey>& config_keys();

using ConfigMap = std::map<std::string, std::string>;

/// `key = value` lines, '#' comments; unknown keys are a ValidationError.
ConfigMap parse_config_text(const std::string& text);
ConfigMap load_config_file(const std::filesystem::path& path);
std::string config_to_text(const ConfigMap& map);

struct PipelineConfig {
  ConfigMap values;  // complete map, defaults filled in

  std::uint64_t seed = 1;
  std::filesystem::path output_dir;
  std::filesystem::path exemplar_path;  // empty: synthetic exemplar
  int synthetic_size = 256;
  int patch_size = 16;
  std::size_t patch_count = 2000;
  train::TrainConfig train;
  std::filesystem::path checkpoint;  // optional starting model
  std::uint64_t checkpoint_every = 0;
  int quilt_rows = 4;
  int quilt_cols = 4;
  int quilt_overlap = 2;
  std::size_t samples = 4;
  postproc::Recipe recipe;
  metrology::Phase phase = metrology::Phase::Solid;
  int bins = 10;
  bool homog_enabled = true;
  homog::Material2D material;
  homog::SolverOptions solver;
  std::size_t ablation_samples = 32;

  /// Applies defaults, parses and checks every field; problems raise ValidationError.
  static PipelineConfig from_map(const ConfigMap& overrides);
  /// Checks that referenced files exist and that sizes are mutually consistent.
  void validate() const;
  /// Generator output side in pixels, which is also the quilting patch size.
  int generated_size() const;
  int mosaic_height() const;
  int mosaic_width() const;
};

struct StageTiming {
  std::string name;
  double seconds = 0.0;
  bool skipped = false;
};

struct RunReport {
  std::filesystem::path report_path;
  std::filesystem::path timings_path;
  std::string report_json;
  std::vector<StageTiming> timings;
};

/// Stage names in execution order.
const std::vector<std::string>& stage_names();

/// Runs the stages in order up to and including `until`. Stages whose recorded
/// inputs and outputs still match the manifest are skipped. The report is only
/// written when `until` is "report".
RunReport run_pipeline(const PipelineConfig& config, const std::string& until = "report");

/// Re-hashes every artifact listed in report.json and recomputes the Minkowski
/// comparison from the persisted masks. Returns one message per discrepancy.
std::vector<std::string> verify_run(const std::filesystem::path& dir);

enum class AblationMode { Progressive, SingleResolution, ResolutionIncrease };
AblationMode parse_ablation_mode(const std::string& s);
std::string to_string(AblationMode m);
std::string ablation_label(AblationMode m);

struct AblationRow {
  AblationMode mode;
  std::string label;
  metrology::SampleStats stats;
};

struct AblationReport {
  metrology::SampleStats real;
  std::vector<AblationRow> rows;
  std::string to_json() const;
  /// `label,metric,mean,std,n`.
  std::string to_csv() const;
};

/// Trains one model per mode on shared data and seed, then tabulates the
/// Minkowski statistics of postprocessed samples.
AblationReport ablation_compare(const PipelineConfig& config, const std::vector<AblationMode>& modes);

/// Holds an exclusive lock file inside a run directory.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace microforge::pipeline
