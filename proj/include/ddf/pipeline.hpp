#pragma once

#include <Eigen/Core>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ddf/metrics.hpp"
#include "ddf/mlp.hpp"
#include "ddf/neural_field.hpp"
#include "ddf/reconstruction.hpp"
#include "ddf/render.hpp"
#include "ddf/sampler.hpp"
#include "ddf/shapes.hpp"

namespace ddf {

inline constexpr const char* kVersion = "1.0.0";

/// Ordered key-value run record written next to every artifact.
class Manifest {
public:
  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_) {
      if (k == key) {
        v = value;
        return;
      }
    }
    entries_.emplace_back(key, value);
  }
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }
  void set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }
  template <typename T>
    requires std::is_arithmetic_v<T>
  void set(const std::string& key, T value) {
    char buf[64];
    // shortest text that parses back to the same value
    const auto r = std::to_chars(buf, buf + sizeof(buf), value);
    set(key, std::string(buf, r.ptr));
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string get(const std::string& key) const {
    for (const auto& [k, v] : entries_) {
      if (k == key) return v;
    }
    throw Error("manifest has no key '" + key + "'");
  }

  void write(std::ostream& out) const {
    for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
  }
  void write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest '" + path.string() + "'");
    write(out);
  }

  /// Library and toolchain versions.
  void add_versions() {
    set("ddf_version", kVersion);
    set("eigen_version", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                             std::to_string(EIGEN_MINOR_VERSION));
#if defined(__clang__)
    set("compiler", std::string("clang ") + __clang_version__);
#elif defined(__GNUC__)
    set("compiler", std::string("gcc ") + __VERSION__);
#endif
    set("threads", num_threads());
  }

private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

inline void record(Manifest& m, const SamplerConfig& c) {
  m.set("sampler.strategy", to_string(c.strategy));
  m.set("sampler.s_fc", c.s_fc);
  m.set("sampler.s_dr", c.s_dr);
  m.set("sampler.s_p", c.s_p);
  m.set("sampler.step", c.step);
  m.set("sampler.n_random", c.n_random);
  m.set("sampler.pov_cameras", std::to_string(c.pov_azimuth) + "x" + std::to_string(c.pov_polar));
  m.set("sampler.pov_film", c.pov_film);
  m.set("sampler.pov_radius", c.pov_radius);
  m.set("sampler.pov_fov", c.pov_fov);
  m.set("sampler.inside_test", c.inside_test);
  m.set("sampler.seed", c.seed);
}

inline void record(Manifest& m, const TrainConfig& c) {
  m.set("train.hidden_layers", c.hidden_layers);
  m.set("train.width", c.width);
  m.set("train.dropout", c.dropout);
  m.set("train.delta", c.delta);
  m.set("train.lr", c.lr);
  m.set("train.lr_final", c.lr_final);
  m.set("train.band_fraction", c.band_fraction);
  m.set("train.restore_band", c.restore_band);
  m.set("train.batch_size", c.batch_size);
  m.set("train.iterations", c.iterations);
  m.set("train.seed", c.seed);
}

/// Mesh from a procedural name ("icosphere", "icosphere:N", "sphere",
/// "cube", "blob", "plane") or an OBJ path, normalized unless
/// `normalize_files` is false.
inline TriangleMesh resolve_mesh(const std::string& spec, bool normalize_files = true) {
  if (spec == "sphere" || spec == "icosphere") return shapes::icosphere(4);
  if (spec.rfind("icosphere:", 0) == 0) {
    int n = 0;
    try {
      n = std::stoi(spec.substr(10));
    } catch (const std::exception&) {
      throw Error("bad icosphere subdivision in '" + spec + "'");
    }
    if (n < 0 || n > 7) throw Error("icosphere subdivision must be in [0, 7]");
    return shapes::icosphere(n);
  }
  if (spec == "cube") return shapes::cube();
  if (spec == "blob" || spec == "bunny") return shapes::blob();
  if (spec == "plane") return shapes::plane();
  return normalize_files ? normalize(load_mesh(spec)) : load_mesh(spec);
}

/// Deterministic subset of exactly `budget` samples (order preserved).
inline std::vector<FieldSample> subsample(const std::vector<FieldSample>& all, std::size_t budget, std::uint64_t seed) {
  if (budget >= all.size()) return all;
  std::vector<std::size_t> idx(all.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng = make_rng(seed, {0x5B5E7ull});
  for (std::size_t i = 0; i < budget; ++i) std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
  idx.resize(budget);
  std::sort(idx.begin(), idx.end());
  std::vector<FieldSample> out;
  out.reserve(budget);
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

/// Dataset with exactly `budget` samples (0 = no cap). Strategies are
/// sized to reach the budget: random draws it directly, pov enlarges the
/// film, ours picks the points per face from a probe build (doubling if
/// still short).
inline Dataset build_dataset_budget(const OracleField& field, SamplerConfig cfg, std::size_t budget) {
  if (budget == 0) return build_dataset(field, cfg);
  switch (cfg.strategy) {
    case Strategy::random: cfg.n_random = budget; break;
    case Strategy::pov: {
      const double cams = static_cast<double>(cfg.pov_azimuth * cfg.pov_polar);
      cfg.pov_film = std::max<std::size_t>(cfg.pov_film, static_cast<std::size_t>(std::ceil(std::sqrt(budget / cams))));
      break;
    }
    case Strategy::ours: {
      // yield is roughly linear in s_fc; size it from a one-point-per-face probe
      SamplerConfig probe = cfg;
      probe.s_fc = 1;
      const std::size_t per = std::max<std::size_t>(1, build_dataset(field, probe).samples.size());
      cfg.s_fc = std::max<std::size_t>(1, (budget * 5 / 4 + per - 1) / per);
      break;
    }
  }
  Dataset ds = build_dataset(field, cfg);
  while (cfg.strategy == Strategy::ours && ds.samples.size() < budget) {
    if (cfg.s_fc > (std::size_t{1} << 20)) throw DataError("cannot reach the sample budget on this mesh");
    cfg.s_fc *= 2;
    ds = build_dataset(field, cfg);
  }
  ds.samples = subsample(ds.samples, budget, cfg.seed);
  return ds;
}

struct PipelineConfig {
  std::string mesh = "sphere";
  SamplerConfig sampler;
  std::size_t budget = 0;
  TrainConfig train;
  UdfGridOptions recon{32, 128, 64, 16, 0.1};
  double iso = 0.0;  // <= 0 selects default_iso
  bool project = false;  // snap extracted vertices onto the learned surface
  EvalConfig eval;
  int image_size = 64;
  bool write_files = true;
};

inline void record(Manifest& m, const PipelineConfig& c) {
  m.set("mesh", c.mesh);
  record(m, c.sampler);
  m.set("sampler.budget", c.budget);
  record(m, c.train);
  m.set("recon.resolution", c.recon.resolution);
  m.set("recon.n_dirs", c.recon.n_dirs);
  m.set("recon.prefilter", c.recon.prefilter);
  m.set("recon.margin", c.recon.margin);
  m.set("recon.iso", c.iso);
  m.set("recon.project", c.project);
  m.set("eval.points", c.eval.n_points);
  m.set("eval.seed", c.eval.seed);
  m.set("eval.tau", c.eval.tau);
  m.set("render.size", c.image_size);
}

struct PipelineResult {
  SampleCounts counts;
  std::size_t dataset_size = 0;
  std::vector<double> loss_history;
  std::size_t recon_faces = 0;
  std::vector<MetricRow> metrics;

  double chamfer_x1e3() const { return metric_value(metrics, "chamfer_x1e3"); }
};

/// sample -> train -> reconstruct -> eval (plus preview renders). With
/// `write_files`, every artifact and a manifest land in `out_dir`.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir = {},
                                   std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  if (cfg.write_files) fs::create_directories(out_dir);
  const OracleField oracle(resolve_mesh(cfg.mesh));
  PipelineResult res;

  const Dataset ds = build_dataset_budget(oracle, cfg.sampler, cfg.budget);
  res.counts = ds.counts;
  res.dataset_size = ds.samples.size();
  if (log) *log << "dataset: " << ds.samples.size() << " samples\n";

  TrainResult tr = train(std::span<const FieldSample>(ds.samples), cfg.train, log);
  res.loss_history = tr.loss_history;
  const NeuralField neural(tr.model, ds.bounds);

  const ScalarGrid grid = udf_grid(neural, cfg.recon);
  const double iso = cfg.iso > 0.0 ? cfg.iso : default_iso(grid);
  TriangleMesh recon = marching_cubes(grid, iso);
  if (cfg.project && !recon.empty()) recon = project_to_surface(recon, neural, cfg.recon.n_dirs);
  res.recon_faces = recon.num_faces();
  if (log) *log << "reconstruction: " << recon.num_faces() << " faces\n";
  res.metrics = evaluate_meshes(recon, oracle.mesh(), cfg.eval);

  if (cfg.write_files) {
    write_dataset((out_dir / "dataset.ddf").string(), ds);
    save_model((out_dir / "model.ddfn").string(), tr.model);
    {
      std::ofstream loss(out_dir / "loss.csv");
      loss << "iteration,loss\n" << std::setprecision(17);
      for (std::size_t i = 0; i < tr.loss_history.size(); ++i) loss << i << ',' << tr.loss_history[i] << '\n';
    }
    save_mesh((out_dir / "recon.obj").string(), recon);
    {
      std::ofstream m(out_dir / "metrics.csv");
      write_metrics_csv(m, res.metrics);
    }
    const Camera cam = orbit_camera({0, 0, 0}, 3.0, 0.6, 1.1, 0.8, cfg.image_size, cfg.image_size);
    RenderConfig rc;
    rc.mode = RenderMode::depth;
    save_image((out_dir / "depth.pfm").string(), render(neural, cam, rc));
    save_image((out_dir / "depth.ppm").string(), render(neural, cam, rc));
    rc.mode = RenderMode::normal;
    save_image((out_dir / "normal.ppm").string(), render(neural, cam, rc));
    rc.mode = RenderMode::depth;
    save_image((out_dir / "depth_oracle.ppm").string(), render(oracle, cam, rc));

    Manifest man;
    man.set("command", "pipeline");
    record(man, cfg);
    man.set("iso_resolved", iso);
    man.set("dataset.samples", res.dataset_size);
    man.set("dataset.finite", ds.counts.finite);
    man.set("dataset.miss", ds.counts.miss);
    man.set("dataset.perpendicular", ds.counts.perpendicular);
    man.set("recon.faces", res.recon_faces);
    man.add_versions();
    man.write(out_dir / "manifest.txt");
  }
  return res;
}

}  // namespace ddf
