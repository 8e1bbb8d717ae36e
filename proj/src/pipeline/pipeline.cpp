#include "microforge/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <boost/algorithm/string/split.hpp>
#include <boost/algorithm/string/trim.hpp>
#include <json.hpp>

#include "microforge/fileio.hpp"
#include "microforge/parallel.hpp"
#include "microforge/quilt.hpp"

namespace microforge::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ------------------------------------------------------------------ exemplar

GrayImage synthetic_exemplar(int size, std::uint64_t seed, double pore_fraction) {
  if (size < 8) fail(Errc::ConfigInvalid, "synthetic exemplar must be at least 8 pixels");
  if (!(pore_fraction > 0.0 && pore_fraction < 1.0)) fail(Errc::ConfigInvalid, "pore fraction must lie in (0, 1)");
  GrayImage img(size, size, 255);
  CounterRng rng = CounterRng(seed).split("synthetic-exemplar");
  const int r_min = std::max(2, size / 40), r_max = std::max(r_min + 1, size / 16);
  const std::size_t goal = static_cast<std::size_t>(std::ceil(pore_fraction * img.size()));
  std::size_t pores = 0;
  while (pores < goal) {
    const int cy = static_cast<int>(rng.below(size)), cx = static_cast<int>(rng.below(size));
    const int rad = r_min + static_cast<int>(rng.below(r_max - r_min + 1));
    for (int y = std::max(0, cy - rad); y <= std::min(size - 1, cy + rad); ++y)
      for (int x = std::max(0, cx - rad); x <= std::min(size - 1, cx + rad); ++x)
        if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= rad * rad && img.at(y, x) != 0) {
          img.at(y, x) = 0;
          ++pores;
        }
  }
  return img;
}

// -------------------------------------------------------------------- config

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "1", "global seed for every stochastic stage"},
      {"output.dir", "microforge-run", "run directory"},
      {"exemplar.path", "", "8-bit PNG/PGM exemplar; empty uses the synthetic disk exemplar"},
      {"exemplar.synthetic_size", "256", "side of the synthetic exemplar"},
      {"patches.size", "16", "training patch side (generator output side)"},
      {"patches.count", "2000", "number of training patches"},
      {"train.loss", "wgan_gp", "classic | wgan_gp"},
      {"train.lr", "0.001", "Adam learning rate"},
      {"train.lr_high", "0.0015", "learning rate from train.lr_high_from upward"},
      {"train.lr_high_from", "128", "phase resolution where train.lr_high starts"},
      {"train.beta1", "0", "Adam beta1"},
      {"train.beta2", "0.99", "Adam beta2"},
      {"train.batch", "16", "minibatch size"},
      {"train.k_d", "1", "critic updates per iteration"},
      {"train.k_g", "1", "generator updates per iteration"},
      {"train.lambda_gp", "10", "gradient penalty weight"},
      {"train.iterations", "200", "outer iterations per phase"},
      {"train.fade_in_images", "1600", "images over which a new block fades in"},
      {"train.progressive", "true", "grow resolution from 8"},
      {"train.variant", "standard", "standard | resolution_increase"},
      {"train.latent_dim", "64", "latent and style width"},
      {"train.mapping_depth", "4", "dense layers in the mapping network"},
      {"train.channels", "8:128,16:128,32:64,64:32,128:16,256:16", "resolution:channels list"},
      {"train.checkpoint", "", "start from this checkpoint"},
      {"train.checkpoint_every", "0", "write model.mgck every N iterations (0: only at the end)"},
      {"quilt.rows", "4", "patch rows per mosaic"},
      {"quilt.cols", "4", "patch columns per mosaic"},
      {"quilt.overlap", "0", "overlap width; 0 uses patch side / 8"},
      {"quilt.samples", "4", "mosaics (and reference crops) per run"},
      {"postproc.recipe", "alporas", "alporas | digitalrock | recipe file"},
      {"metrology.phase", "solid", "solid | pore"},
      {"metrology.bins", "10", "histogram bins"},
      {"homog.enabled", "true", "compute effective elastic constants"},
      {"homog.e_solid", "1.0", "solid Young's modulus"},
      {"homog.nu_solid", "0.3", "solid Poisson ratio"},
      {"homog.contrast", "1e-6", "void-to-solid stiffness ratio"},
      {"homog.tol", "1e-8", "CG relative residual"},
      {"homog.preconditioner", "cholesky", "CG preconditioner: cholesky | jacobi"},
      {"homog.plane_strain", "false", "plane strain instead of plane stress"},
      {"ablation.samples", "32", "generated patches per ablation mode"},
  };
  return keys;
}

namespace {

[[noreturn]] void invalid(const std::string& msg) { fail(Errc::ValidationError, msg); }

bool known_key(const std::string& k) {
  const auto& keys = config_keys();
  return std::any_of(keys.begin(), keys.end(), [&](const ConfigKey& c) { return k == c.name; });
}

template <class T>
T parse_number(const ConfigMap& m, const std::string& key) {
  const std::string& s = m.at(key);
  std::istringstream in(s);
  T v{};
  in >> v;
  if (s.empty() || in.fail() || !in.eof()) invalid(key + ": cannot parse '" + s + "'");
  return v;
}

bool parse_bool(const ConfigMap& m, const std::string& key) {
  const std::string& s = m.at(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  invalid(key + ": expected true or false, got '" + s + "'");
}

std::map<int, int> parse_channels(const std::string& s) {
  std::map<int, int> out;
  std::vector<std::string> parts;
  boost::algorithm::split(parts, s, [](char c) { return c == ','; });
  for (auto p : parts) {
    boost::algorithm::trim(p);
    if (p.empty()) continue;
    int r = 0, c = 0;
    char colon = 0;
    std::istringstream in(p);
    in >> r >> colon >> c;
    if (in.fail() || colon != ':' || !in.eof() || r < 1 || c < 1) invalid("train.channels: bad entry '" + p + "'");
    out[r] = c;
  }
  return out;
}

// Translates errors raised while interpreting the config into validation errors.
template <class F>
auto as_validation(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == Errc::ValidationError) throw;
    invalid(what + ": " + e.what());
  }
}

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    boost::algorithm::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) invalid("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    boost::algorithm::trim(key);
    boost::algorithm::trim(value);
    if (!known_key(key)) invalid("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    out[key] = value;
  }
  return out;
}

ConfigMap load_config_file(const fs::path& path) {
  if (!fs::exists(path)) invalid("config file " + path.string() + " does not exist");
  const auto bytes = read_file(path);
  return parse_config_text(std::string(bytes.begin(), bytes.end()));
}

std::string config_to_text(const ConfigMap& map) {
  std::string out;
  for (const auto& [k, v] : map) out += k + " = " + v + "\n";
  return out;
}

PipelineConfig PipelineConfig::from_map(const ConfigMap& overrides) {
  PipelineConfig c;
  for (const auto& k : config_keys()) c.values[k.name] = k.default_value;
  for (const auto& [k, v] : overrides) {
    if (!known_key(k)) invalid("unknown config key '" + k + "'");
    c.values[k] = v;
  }
  const ConfigMap& m = c.values;

  c.seed = parse_number<std::uint64_t>(m, "seed");
  c.output_dir = m.at("output.dir");
  if (c.output_dir.empty()) invalid("output.dir must not be empty");
  c.exemplar_path = m.at("exemplar.path");
  c.synthetic_size = parse_number<int>(m, "exemplar.synthetic_size");
  c.patch_size = parse_number<int>(m, "patches.size");
  c.patch_count = parse_number<std::size_t>(m, "patches.count");
  if (c.patch_count < 1) invalid("patches.count must be >= 1");

  auto& t = c.train;
  t.loss = as_validation("train.loss", [&] { return train::parse_loss_kind(m.at("train.loss")); });
  t.adam.lr = parse_number<double>(m, "train.lr");
  t.lr_high = parse_number<double>(m, "train.lr_high");
  t.lr_high_from_resolution = parse_number<int>(m, "train.lr_high_from");
  t.adam.beta1 = parse_number<double>(m, "train.beta1");
  t.adam.beta2 = parse_number<double>(m, "train.beta2");
  t.batch = parse_number<int>(m, "train.batch");
  t.k_d = parse_number<int>(m, "train.k_d");
  t.k_g = parse_number<int>(m, "train.k_g");
  t.lambda_gp = parse_number<double>(m, "train.lambda_gp");
  t.iterations_per_phase = parse_number<std::uint64_t>(m, "train.iterations");
  t.fade_in_images = parse_number<std::uint64_t>(m, "train.fade_in_images");
  t.progressive = parse_bool(m, "train.progressive");
  t.seed = c.seed;
  t.net.variant = as_validation("train.variant", [&] { return stylenet::parse_variant(m.at("train.variant")); });
  t.net.latent_dim = parse_number<int>(m, "train.latent_dim");
  t.net.mapping_depth = parse_number<int>(m, "train.mapping_depth");
  t.net.channels = parse_channels(m.at("train.channels"));
  const bool doubled = t.net.variant == stylenet::Variant::ResolutionIncrease;
  t.net.target_resolution = doubled ? c.patch_size / 2 : c.patch_size;
  as_validation("train", [&] {
    t.validate();
    return 0;
  });
  c.checkpoint = m.at("train.checkpoint");
  c.checkpoint_every = parse_number<std::uint64_t>(m, "train.checkpoint_every");

  c.quilt_rows = parse_number<int>(m, "quilt.rows");
  c.quilt_cols = parse_number<int>(m, "quilt.cols");
  c.quilt_overlap = parse_number<int>(m, "quilt.overlap");
  if (c.quilt_overlap == 0) c.quilt_overlap = std::max(1, c.generated_size() / 8);
  c.samples = parse_number<std::size_t>(m, "quilt.samples");
  if (c.quilt_rows < 1 || c.quilt_cols < 1) invalid("quilt.rows and quilt.cols must be >= 1");
  if (c.quilt_overlap < 1 || c.quilt_overlap >= c.generated_size())
    invalid("quilt.overlap must lie in [1, " + std::to_string(c.generated_size() - 1) + "]");
  if (c.samples < 1) invalid("quilt.samples must be >= 1");

  c.recipe = as_validation("postproc.recipe", [&] { return postproc::load_recipe(m.at("postproc.recipe")); });
  c.phase = as_validation("metrology.phase", [&] { return metrology::parse_phase(m.at("metrology.phase")); });
  c.bins = parse_number<int>(m, "metrology.bins");
  if (c.bins < 1) invalid("metrology.bins must be >= 1");

  c.homog_enabled = parse_bool(m, "homog.enabled");
  c.material.e_solid = parse_number<double>(m, "homog.e_solid");
  c.material.nu_solid = parse_number<double>(m, "homog.nu_solid");
  c.material.contrast = parse_number<double>(m, "homog.contrast");
  c.material.plane_strain = parse_bool(m, "homog.plane_strain");
  c.solver.tol = parse_number<double>(m, "homog.tol");
  c.solver.preconditioner =
      as_validation("homog.preconditioner", [&] { return homog::parse_preconditioner(m.at("homog.preconditioner")); });
  as_validation("homog", [&] {
    c.material.validate();
    return 0;
  });
  if (!(c.solver.tol > 0.0 && c.solver.tol <= 1e-3)) invalid("homog.tol must lie in (0, 1e-3]");
  c.ablation_samples = parse_number<std::size_t>(m, "ablation.samples");
  if (c.ablation_samples < 1) invalid("ablation.samples must be >= 1");
  return c;
}

int PipelineConfig::generated_size() const { return patch_size; }
int PipelineConfig::mosaic_height() const { return quilt::grid_extent(quilt_rows, generated_size(), quilt_overlap); }
int PipelineConfig::mosaic_width() const { return quilt::grid_extent(quilt_cols, generated_size(), quilt_overlap); }

void PipelineConfig::validate() const {
  int w = synthetic_size, h = synthetic_size;
  if (!exemplar_path.empty()) {
    if (!fs::exists(exemplar_path)) invalid("exemplar " + exemplar_path.string() + " does not exist");
    const GrayImage img = as_validation("exemplar.path", [&] { return load_image(exemplar_path); });
    w = img.width();
    h = img.height();
  } else if (synthetic_size < 8) {
    invalid("exemplar.synthetic_size must be >= 8");
  }
  if (patch_size > std::min(w, h)) invalid("patches.size exceeds the exemplar");
  if (mosaic_width() > w || mosaic_height() > h)
    invalid("mosaic " + std::to_string(mosaic_height()) + "x" + std::to_string(mosaic_width()) +
            " does not fit in the exemplar, so no reference crops can be taken");
  if (!checkpoint.empty()) {
    if (!fs::exists(checkpoint)) invalid("checkpoint " + checkpoint.string() + " does not exist");
    const auto ck = as_validation("train.checkpoint", [&] { return train::load_checkpoint(checkpoint); });
    const auto net = as_validation("train.checkpoint", [&] { return train::decode_net_config(ck.get("config.arch")); });
    if (net.target_resolution != train.net.target_resolution || net.variant != train.net.variant)
      invalid("checkpoint architecture does not match patches.size / train.variant");
  }
}

// ---------------------------------------------------------------- manifest

namespace {

std::string sha_text(const std::string& s) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

std::string numbered(const std::string& stem, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%03zu.png", i);
  return stem + buf;
}

BinaryMask mask_from_gray(const GrayImage& g) {
  BinaryMask m(g.width(), g.height());
  for (int r = 0; r < g.height(); ++r)
    for (int c = 0; c < g.width(); ++c) m.set(r, c, g.at(r, c) >= 128);
  return m;
}

class Manifest {
 public:
  explicit Manifest(fs::path dir) : dir_(std::move(dir)), path_(dir_ / "manifest.json") {
    if (fs::exists(path_)) {
      try {
        const auto bytes = read_file(path_);
        doc_ = json::parse(bytes.begin(), bytes.end());
      } catch (const std::exception&) {
        doc_ = json::object();
      }
    }
    if (!doc_.is_object() || !doc_.contains("stages")) doc_ = json{{"stages", json::object()}};
  }

  bool up_to_date(const std::string& stage, const std::string& key) const {
    const auto& st = doc_["stages"];
    if (!st.contains(stage) || st[stage].value("key", "") != key) return false;
    for (const auto& [rel, sha] : st[stage]["outputs"].items()) {
      const fs::path p = dir_ / rel;
      if (!fs::exists(p) || sha256_file(p) != sha.get<std::string>()) return false;
    }
    return true;
  }

  void record(const std::string& stage, const std::string& key, const std::vector<std::string>& outputs) {
    json out = json::object();
    for (const auto& rel : outputs) out[rel] = sha256_file(dir_ / rel);
    doc_["stages"][stage] = {{"key", key}, {"outputs", out}};
    write_file_atomic(path_, doc_.dump(2) + "\n");
  }

  std::vector<std::string> outputs(const std::string& stage) const {
    std::vector<std::string> out;
    if (doc_["stages"].contains(stage))
      for (const auto& [rel, sha] : doc_["stages"][stage]["outputs"].items()) out.push_back(rel);
    return out;
  }

  std::string output_digest(const std::string& stage) const {
    return doc_["stages"].contains(stage) ? doc_["stages"][stage]["outputs"].dump() : "";
  }

  json all_outputs() const {
    std::map<std::string, std::string> flat;
    for (const auto& [stage, rec] : doc_["stages"].items())
      for (const auto& [rel, sha] : rec["outputs"].items()) flat[rel] = sha.get<std::string>();
    json out = json::object();
    for (const auto& [k, v] : flat) out[k] = v;
    return out;
  }

 private:
  fs::path dir_;
  fs::path path_;
  json doc_;
};

using Clock = std::chrono::steady_clock;

struct StageRunner {
  fs::path dir;
  Manifest manifest;
  std::string chain;
  std::string until;
  std::vector<StageTiming> timings;
  bool stopped = false;

  template <class F>
  void run(const std::string& stage, F&& body) {
    if (stopped) return;
    if (stage == until) stopped = true;
    const std::string key = sha_text(chain + "|" + stage);
    const auto t0 = Clock::now();
    StageTiming timing{stage, 0.0, false};
    if (manifest.up_to_date(stage, key)) {
      timing.skipped = true;
    } else {
      std::vector<std::string> outputs;
      try {
        outputs = body();
      } catch (const StageError&) {
        throw;
      } catch (const Error& e) {
        throw StageError(stage, e);
      } catch (const std::exception& e) {
        throw StageError(stage, Error(Errc::IoError, e.what()));
      }
      manifest.record(stage, key, outputs);
    }
    timing.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    timings.push_back(timing);
    chain = sha_text(key + manifest.output_digest(stage));
  }
};

std::vector<GrayImage> load_series(const fs::path& dir, const std::string& stem, std::size_t n) {
  std::vector<GrayImage> out(n);
  parallel_for(n, [&](std::size_t i) { out[i] = load_image(dir / numbered(stem, i)); });
  return out;
}

std::vector<metrology::MinkowskiTriple> minkowski_all(const std::vector<BinaryMask>& masks, metrology::Phase ph) {
  std::vector<metrology::MinkowskiTriple> out(masks.size());
  parallel_for(masks.size(), [&](std::size_t i) { out[i] = metrology::minkowski(masks[i], ph); });
  return out;
}

std::vector<BinaryMask> postprocess_all(const std::vector<GrayImage>& imgs, const postproc::Recipe& recipe,
                                        std::vector<std::vector<int>>* thresholds = nullptr) {
  std::vector<BinaryMask> out(imgs.size());
  std::vector<std::vector<int>> th(imgs.size());
  parallel_for(imgs.size(), [&](std::size_t i) {
    auto r = postproc::apply(recipe, imgs[i]);
    out[i] = std::move(r.mask);
    th[i] = std::move(r.thresholds);
  });
  if (thresholds) *thresholds = std::move(th);
  return out;
}

std::uint64_t derived_seed(std::uint64_t seed, const char* tag) { return CounterRng(seed).split(tag).next_u64(); }

GrayImage exemplar_for(const PipelineConfig& c) {
  return c.exemplar_path.empty() ? synthetic_exemplar(c.synthetic_size, derived_seed(c.seed, "exemplar"))
                                 : load_image(c.exemplar_path);
}

std::string elastic_csv(const std::vector<homog::EffectiveElasticity>& v) {
  std::ostringstream os;
  os.precision(10);
  os << "id,E,nu,C11,C22,C33,anisotropy,iterations\n";
  for (std::size_t i = 0; i < v.size(); ++i)
    os << i << ',' << v[i].e << ',' << v[i].nu << ',' << v[i].c_eff[0] << ',' << v[i].c_eff[4] << ','
       << v[i].c_eff[8] << ',' << v[i].anisotropy << ',' << v[i].iterations << '\n';
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------- pipeline

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".microforge.lock") {
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f) invalid("run directory " + dir.string() + " is locked by another run (" + path_.string() + ")");
  std::fclose(f);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"cut",   "train", "generate", "quilt",
                                                 "postprocess", "stats", "homog", "report"};
  return names;
}

namespace {

json comparison_json(const std::vector<BinaryMask>& real, const std::vector<BinaryMask>& gen, metrology::Phase phase,
                     int bins, std::string* csv = nullptr, std::string* hist = nullptr) {
  const auto rep = metrology::compare_report(metrology::aggregate(minkowski_all(real, phase)),
                                             metrology::aggregate(minkowski_all(gen, phase)), bins);
  if (csv) *csv = rep.to_csv();
  if (hist) *hist = rep.histogram_csv();
  return json::parse(rep.to_json());
}

std::vector<homog::EffectiveElasticity> homogenize_all(const std::vector<BinaryMask>& masks, const PipelineConfig& c) {
  std::vector<homog::EffectiveElasticity> v(masks.size());
  parallel_for(masks.size(), [&](std::size_t i) { v[i] = homog::homogenize(masks[i], c.material, c.solver); });
  return v;
}

json elastic_json(const std::vector<homog::EffectiveElasticity>& real,
                  const std::vector<homog::EffectiveElasticity>& gen, int bins) {
  auto stats = [](const std::vector<homog::EffectiveElasticity>& v) {
    std::map<std::string, std::vector<double>> m;
    for (const auto& e : v) {
      m["E"].push_back(e.e);
      m["nu"].push_back(e.nu);
    }
    return metrology::aggregate(m);
  };
  return json::parse(metrology::compare_report(stats(real), stats(gen), bins).to_json());
}

std::vector<BinaryMask> load_masks(const fs::path& dir, const std::string& set, std::size_t n) {
  const auto imgs = load_series(dir / "masks", set, n);
  std::vector<BinaryMask> out;
  for (const auto& g : imgs) out.push_back(mask_from_gray(g));
  return out;
}

}  // namespace

RunReport run_pipeline(const PipelineConfig& c, const std::string& until) {
  const auto& names = stage_names();
  if (std::find(names.begin(), names.end(), until) == names.end()) invalid("unknown stage '" + until + "'");
  c.validate();
  const fs::path dir = c.output_dir;
  fs::create_directories(dir);
  DirectoryLock lock(dir);

  ConfigMap echo = c.values;
  echo.erase("output.dir");  // location does not affect results
  StageRunner runner{dir, Manifest(dir), sha_text(config_to_text(echo)), until, {}};
  const std::size_t per_mosaic = static_cast<std::size_t>(c.quilt_rows) * c.quilt_cols;

  runner.run("cut", [&] {
    const GrayImage ex = exemplar_for(c);
    save_image(ex, dir / "exemplar.png");
    save_patchset(extract_patches(ex, c.patch_size, c.patch_count, derived_seed(c.seed, "patches")),
                  dir / "patches.mgpt");
    fs::create_directories(dir / "real");
    std::vector<std::string> outs{"exemplar.png", "patches.mgpt"};
    CounterRng rng = CounterRng(c.seed).split("reference-crops");
    for (std::size_t i = 0; i < c.samples; ++i) {
      const int r = static_cast<int>(rng.below(ex.height() - c.mosaic_height() + 1));
      const int col = static_cast<int>(rng.below(ex.width() - c.mosaic_width() + 1));
      const std::string rel = "real/" + numbered("crop", i);
      save_image(ex.crop(r, col, c.mosaic_height(), c.mosaic_width()), dir / rel);
      outs.push_back(rel);
    }
    return outs;
  });

  runner.run("train", [&] {
    const PatchSet patches = load_patchset(dir / "patches.mgpt");
    std::vector<train::LossRow> rows;
    if (!c.checkpoint.empty() && c.train.iterations_per_phase == 0) {
      train::save_checkpoint(train::load_checkpoint(c.checkpoint), dir / "model.mgck");
    } else {
      std::unique_ptr<train::Trainer> trainer =
          c.checkpoint.empty() ? std::make_unique<train::Trainer>(c.train, patches)
                               : std::make_unique<train::Trainer>(c.train, patches, train::load_checkpoint(c.checkpoint));
      while (trainer->step())
        if (c.checkpoint_every > 0 && trainer->iteration() % c.checkpoint_every == 0)
          train::save_checkpoint(trainer->checkpoint(), dir / "model.mgck");
      train::save_checkpoint(trainer->checkpoint(), dir / "model.mgck");
      rows = trainer->trace();
    }
    write_file_atomic(dir / "loss_trace.csv", train::loss_trace_csv(rows));
    return std::vector<std::string>{"model.mgck", "loss_trace.csv"};
  });

  runner.run("generate", [&] {
    const auto ck = train::load_checkpoint(dir / "model.mgck");
    const auto g = train::load_generator(ck);
    const int critic_res = g.config().target_resolution;
    const auto imgs =
        stylenet::sample_images(g, c.samples * per_mosaic, derived_seed(c.seed, "generate"), critic_res);
    const int side = imgs.front().width();
    if (side != c.generated_size()) fail(Errc::ResolutionMismatch, "generator emits " + std::to_string(side) + " pixels");
    std::vector<std::uint8_t> store;
    for (const auto& im : imgs) store.insert(store.end(), im.pixels().begin(), im.pixels().end());
    save_patchset(PatchSet(side, derived_seed(c.seed, "generate"), std::move(store)), dir / "generated.mgpt");
    return std::vector<std::string>{"generated.mgpt"};
  });

  runner.run("quilt", [&] {
    const PatchSet gen = load_patchset(dir / "generated.mgpt");
    fs::create_directories(dir / "quilted");
    std::vector<std::string> outs;
    for (std::size_t s = 0; s < c.samples; ++s) {
      const auto src = [&](std::size_t k) { return gen.patch(s * per_mosaic + k); };
      const std::string rel = "quilted/" + numbered("sample", s);
      save_image(quilt::assemble_grid(src, c.quilt_rows, c.quilt_cols, c.quilt_overlap), dir / rel);
      outs.push_back(rel);
    }
    return outs;
  });

  runner.run("postprocess", [&] {
    fs::create_directories(dir / "masks");
    std::vector<std::string> outs;
    std::ostringstream th_csv;
    th_csv << "set,id,thresholds\n";
    for (const auto& [set, src_dir, stem] : {std::tuple{"generated", "quilted", "sample"},
                                            std::tuple{"real", "real", "crop"}}) {
      std::vector<std::vector<int>> th;
      const auto masks = postprocess_all(load_series(dir / src_dir, stem, c.samples), c.recipe, &th);
      for (std::size_t i = 0; i < masks.size(); ++i) {
        const std::string rel = "masks/" + numbered(set, i);
        save_image(masks[i].to_gray(), dir / rel);
        outs.push_back(rel);
        th_csv << set << ',' << i << ',';
        for (std::size_t k = 0; k < th[i].size(); ++k) th_csv << (k ? ";" : "") << th[i][k];
        th_csv << '\n';
      }
    }
    write_file_atomic(dir / "thresholds.csv", th_csv.str());
    write_file_atomic(dir / "recipe.txt", c.recipe.to_text());
    outs.push_back("thresholds.csv");
    outs.push_back("recipe.txt");
    return outs;
  });

  runner.run("stats", [&] {
    const auto gen = load_masks(dir, "generated", c.samples);
    const auto real = load_masks(dir, "real", c.samples);
    write_file_atomic(dir / "minkowski_generated.csv", metrology::samples_csv(minkowski_all(gen, c.phase)));
    write_file_atomic(dir / "minkowski_real.csv", metrology::samples_csv(minkowski_all(real, c.phase)));
    std::string csv, hist;
    const json cmp = comparison_json(real, gen, c.phase, c.bins, &csv, &hist);
    write_file_atomic(dir / "comparison.csv", csv);
    write_file_atomic(dir / "comparison.json", cmp.dump(2) + "\n");
    write_file_atomic(dir / "histogram.csv", hist);
    return std::vector<std::string>{"minkowski_generated.csv", "minkowski_real.csv", "comparison.csv",
                                    "comparison.json", "histogram.csv"};
  });

  if (c.homog_enabled) {
    runner.run("homog", [&] {
      const auto gen = homogenize_all(load_masks(dir, "generated", c.samples), c);
      const auto real = homogenize_all(load_masks(dir, "real", c.samples), c);
      write_file_atomic(dir / "elastic_generated.csv", elastic_csv(gen));
      write_file_atomic(dir / "elastic_real.csv", elastic_csv(real));
      write_file_atomic(dir / "elastic.json", elastic_json(real, gen, c.bins).dump(2) + "\n");
      return std::vector<std::string>{"elastic_generated.csv", "elastic_real.csv", "elastic.json"};
    });
  } else if (until == "homog") {
    runner.stopped = true;
  }

  if (runner.stopped) {
    RunReport partial;
    partial.timings = runner.timings;
    return partial;
  }

  // Report: everything below is derived from persisted artifacts.
  const auto t0 = Clock::now();
  json report;
  report["tool"] = {{"name", "microforge"}, {"version", kToolVersion}};
  report["threads"] = thread_count();
  json cfg = json::object();
  for (const auto& [k, v] : echo) cfg[k] = v;
  report["config"] = cfg;
  report["recipe"] = c.recipe.to_text();
  {
    const auto bytes = read_file(dir / "loss_trace.csv");
    const std::string text(bytes.begin(), bytes.end());
    const auto rows = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) - 1;
    report["loss_trace"] = {{"path", "loss_trace.csv"}, {"rows", rows}};
  }
  {
    const auto ck = train::load_checkpoint(dir / "model.mgck");
    report["model"] = {{"path", "model.mgck"}, {"iteration", ck.iteration}, {"phase", ck.phase}};
  }
  {
    const auto bytes = read_file(dir / "comparison.json");
    report["minkowski"] = {{"phase", metrology::to_string(c.phase)},
                           {"comparison", json::parse(bytes.begin(), bytes.end())}};
  }
  if (c.homog_enabled) {
    const auto bytes = read_file(dir / "elastic.json");
    report["elastic"] = json::parse(bytes.begin(), bytes.end());
  } else {
    report["elastic"] = nullptr;
  }
  report["artifacts"] = runner.manifest.all_outputs();

  RunReport out;
  out.report_json = report.dump(2) + "\n";
  out.report_path = dir / "report.json";
  out.timings_path = dir / "timings.json";
  write_file_atomic(out.report_path, out.report_json);
  runner.timings.push_back({"report", std::chrono::duration<double>(Clock::now() - t0).count(), false});
  out.timings = runner.timings;
  json tj = json::array();
  for (const auto& t : out.timings) tj.push_back({{"stage", t.name}, {"seconds", t.seconds}, {"skipped", t.skipped}});
  write_file_atomic(out.timings_path, json{{"stages", tj}}.dump(2) + "\n");
  return out;
}

std::vector<std::string> verify_run(const fs::path& dir) {
  std::vector<std::string> problems;
  if (!fs::exists(dir / "report.json")) invalid("no report.json in " + dir.string());
  const auto bytes = read_file(dir / "report.json");
  json report;
  try {
    report = json::parse(bytes.begin(), bytes.end());
  } catch (const std::exception& e) {
    fail(Errc::CorruptFile, std::string("report.json: ") + e.what());
  }
  for (const auto& [rel, sha] : report["artifacts"].items()) {
    const fs::path p = dir / rel;
    if (!fs::exists(p))
      problems.push_back("missing artifact " + rel);
    else if (sha256_file(p) != sha.get<std::string>())
      problems.push_back("hash mismatch for " + rel);
  }
  ConfigMap values;
  for (const auto& [k, v] : report["config"].items()) values[k] = v.get<std::string>();
  const PipelineConfig c = PipelineConfig::from_map(values);
  const auto real = load_masks(dir, "real", c.samples);
  const auto gen = load_masks(dir, "generated", c.samples);
  if (comparison_json(real, gen, c.phase, c.bins) != report["minkowski"]["comparison"])
    problems.push_back("Minkowski comparison does not match the persisted masks");
  if (c.homog_enabled &&
      elastic_json(homogenize_all(real, c), homogenize_all(gen, c), c.bins) != report["elastic"])
    problems.push_back("elastic comparison does not match the persisted masks");
  return problems;
}

// ---------------------------------------------------------------- ablation

AblationMode parse_ablation_mode(const std::string& s) {
  if (s == "progressive") return AblationMode::Progressive;
  if (s == "single_resolution") return AblationMode::SingleResolution;
  if (s == "resolution_increase") return AblationMode::ResolutionIncrease;
  invalid("unknown ablation mode '" + s + "'");
}

std::string to_string(AblationMode m) {
  switch (m) {
    case AblationMode::Progressive: return "progressive";
    case AblationMode::SingleResolution: return "single_resolution";
    case AblationMode::ResolutionIncrease: return "resolution_increase";
  }
  return "?";
}

std::string ablation_label(AblationMode m) {
  switch (m) {
    case AblationMode::Progressive: return "With progressive growing";
    case AblationMode::SingleResolution: return "Without progressive growing";
    case AblationMode::ResolutionIncrease: return "Resolution increase";
  }
  return "?";
}

AblationReport ablation_compare(const PipelineConfig& c, const std::vector<AblationMode>& modes) {
  if (modes.size() < 2) invalid("an ablation needs at least two modes");
  c.validate();
  const GrayImage ex = exemplar_for(c);
  const PatchSet patches = extract_patches(ex, c.patch_size, c.patch_count, derived_seed(c.seed, "patches"));

  AblationReport rep;
  std::vector<GrayImage> real;
  for (std::size_t i = 0; i < std::min(c.ablation_samples, patches.count()); ++i) real.push_back(patches.patch(i));
  rep.real = metrology::aggregate(minkowski_all(postprocess_all(real, c.recipe), c.phase));

  for (const auto mode : modes) {
    train::TrainConfig t = c.train;
    t.net.variant = stylenet::Variant::Standard;
    t.progressive = mode != AblationMode::SingleResolution;
    if (mode == AblationMode::ResolutionIncrease) t.net.variant = stylenet::Variant::ResolutionIncrease;
    t.net.target_resolution =
        t.net.variant == stylenet::Variant::ResolutionIncrease ? c.patch_size / 2 : c.patch_size;
    std::vector<GrayImage> gen;
    try {
      t.validate();
      train::Trainer trainer(t, patches);
      trainer.run();
      gen = stylenet::sample_images(trainer.generator(), c.ablation_samples, derived_seed(c.seed, "ablation"),
                                    t.net.target_resolution);
    } catch (const Error& e) {
      throw StageError("ablation:" + to_string(mode), e);
    }
    rep.rows.push_back({mode, ablation_label(mode), metrology::aggregate(minkowski_all(postprocess_all(gen, c.recipe), c.phase))});
  }
  return rep;
}

std::string AblationReport::to_json() const {
  auto block = [](const metrology::SampleStats& s) {
    json j = json::object();
    for (const auto& [name, m] : s.metrics) j[name] = {{"mean", m.mean}, {"std", m.std}, {"n", m.n}};
    return j;
  };
  json rows_j = json::array();
  for (const auto& r : rows) rows_j.push_back({{"mode", to_string(r.mode)}, {"label", r.label}, {"metrics", block(r.stats)}});
  return json{{"real", block(real)}, {"modes", rows_j}}.dump(2) + "\n";
}

std::string AblationReport::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "label,metric,mean,std,n\n";
  auto emit = [&](const std::string& label, const metrology::SampleStats& s) {
    for (const auto& [name, m] : s.metrics) os << label << ',' << name << ',' << m.mean << ',' << m.std << ',' << m.n << '\n';
  };
  emit("Original", real);
  for (const auto& r : rows) emit(r.label, r.stats);
  return os.str();
}

}  // namespace microforge::pipeline
