// Command-line front end: sample -> train -> render / reconstruct -> eval,
// plus bench and a chained pipeline. Exit codes: 0 ok, 1 usage, 2 data,
// 3 numeric.

#include <CLI11.hpp>

#include <array>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ddf/ddf.hpp"

namespace fs = std::filesystem;
using namespace ddf;

namespace {

struct Common {
  unsigned threads = 0;
  std::string out_dir = "out";
};

struct BackendOpts {
  std::string backend = "oracle";
  std::string mesh;
  std::string model;
};

void add_backend_opts(CLI::App* cmd, BackendOpts& o) {
  cmd->add_option("--backend", o.backend, "Field backend")
      ->check(CLI::IsMember({"oracle", "neural", "brute"}))
      ->capture_default_str();
  cmd->add_option("--mesh", o.mesh, "Mesh: OBJ path or procedural name (sphere, icosphere:N, cube, blob, plane)");
  cmd->add_option("--model", o.model, "Checkpoint for the neural backend");
}

Aabb default_bounds() { return {{-1.1, -1.1, -1.1}, {1.1, 1.1, 1.1}}; }

/// Calls f with the backend selected by the options.
template <typename F>
void with_backend(const BackendOpts& o, F&& f) {
  if (o.backend == "neural") {
    if (o.model.empty()) throw Error("--backend neural needs --model");
    const Aabb bounds = o.mesh.empty() ? default_bounds() : field_bounds(resolve_mesh(o.mesh));
    f(NeuralField(load_model(o.model), bounds));
    return;
  }
  if (o.mesh.empty()) throw Error("--backend " + o.backend + " needs --mesh");
  if (o.backend == "brute") {
    f(BruteForceField(resolve_mesh(o.mesh)));
  } else {
    f(OracleField(resolve_mesh(o.mesh)));
  }
}

void add_sampler_opts(CLI::App* cmd, SamplerConfig& s, std::string& strategy, std::size_t& budget) {
  cmd->add_option("--strategy", strategy, "ours | random | pov")->capture_default_str();
  cmd->add_option("--sfc", s.s_fc, "Surface points per face")->capture_default_str();
  cmd->add_option("--sdr", s.s_dr, "Directions per face")->capture_default_str();
  cmd->add_option("--sp", s.s_p, "Marching samples per ray")->capture_default_str();
  cmd->add_option("--step", s.step, "March step (0 = automatic)")->capture_default_str();
  cmd->add_option("--n", s.n_random, "Sample count for the random strategy")->capture_default_str();
  cmd->add_option("--pov-film", s.pov_film, "Film size per pov camera")->capture_default_str();
  cmd->add_option("--budget", budget, "Subsample to exactly this many samples (0 = all)")->capture_default_str();
  cmd->add_option("--seed", s.seed, "Sampler seed")->capture_default_str();
  cmd->add_flag("!--no-inside-test", s.inside_test, "Skip the inside-mesh rejection test");
}

void add_train_opts(CLI::App* cmd, TrainConfig& t, const std::string& seed_flag) {
  cmd->add_option("--layers", t.hidden_layers, "Hidden layers")->capture_default_str();
  cmd->add_option("--width", t.width, "Hidden width")->capture_default_str();
  cmd->add_option("--dropout", t.dropout, "Dropout probability")->capture_default_str();
  cmd->add_option("--delta", t.delta, "Clamp band delta")->capture_default_str();
  cmd->add_option("--lr", t.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--batch", t.batch_size, "Batch size")->capture_default_str();
  cmd->add_option("--iterations", t.iterations, "Training iterations")->capture_default_str();
  cmd->add_option(seed_flag, t.seed, "Training seed")->capture_default_str();
  cmd->add_option("--log-every", t.log_every, "Print the loss every N iterations (0 = never)")->capture_default_str();
  cmd->add_option("--lr-final", t.lr_final, "Cosine-decay target learning rate (< 0 = constant lr)")->capture_default_str();
  cmd->add_option("--band-fraction", t.band_fraction, "Share of each batch drawn from targets below delta")
      ->capture_default_str();
  cmd->add_flag("!--no-restore-band", t.restore_band, "Disable the band-restoring hinge terms");
}

struct CameraOpts {
  int width = 256, height = 256;
  double distance = 3.0, azimuth = 0.0, polar = kPi / 2, fov = 0.8;
  bool z_up = false;
};

void add_camera_opts(CLI::App* cmd, CameraOpts& c) {
  cmd->add_option("--width", c.width, "Image width")->capture_default_str();
  cmd->add_option("--height", c.height, "Image height")->capture_default_str();
  cmd->add_option("--distance", c.distance, "Camera distance from the origin")->capture_default_str();
  cmd->add_option("--azimuth", c.azimuth, "Camera azimuth (radians)")->capture_default_str();
  cmd->add_option("--polar", c.polar, "Camera polar angle from the up axis (radians)")->capture_default_str();
  cmd->add_option("--fov", c.fov, "Vertical field of view (radians)")->capture_default_str();
  cmd->add_flag("--z-up", c.z_up, "Use a Z-up camera convention");
}

Camera make_camera(const CameraOpts& c) {
  return orbit_camera({0, 0, 0}, c.distance, c.azimuth, c.polar, c.fov, c.width, c.height, c.z_up);
}

fs::path prepare(const Common& c) {
  if (c.threads > 0) set_threads(c.threads);
  fs::path dir(c.out_dir);
  fs::create_directories(dir);
  return dir;
}

Manifest base_manifest(const std::string& command) {
  Manifest m;
  m.set("command", command);
  return m;
}

void finish(Manifest& m, const fs::path& dir, const std::string& command) {
  m.add_versions();
  m.write(dir / ("manifest_" + command + ".txt"));
}

void write_loss_csv(const fs::path& path, const std::vector<double>& loss) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "iteration,loss\n" << std::setprecision(17);
  for (std::size_t i = 0; i < loss.size(); ++i) out << i << ',' << loss[i] << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Directed distance field toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--threads", common.threads, "Worker threads (0 = DDF_THREADS or hardware)");
  app.add_option("--out-dir", common.out_dir, "Output directory")->capture_default_str();

  // generate
  std::string gen_shape, gen_out;
  auto* generate = app.add_subcommand("generate", "Write a procedural mesh as OBJ");
  generate->add_option("--shape", gen_shape, "sphere | icosphere:N | cube | blob | plane")->required();
  generate->add_option("--out", gen_out, "Output OBJ (default <out-dir>/<shape>.obj)");

  // sample
  SamplerConfig samp;
  std::string samp_strategy = "ours", samp_mesh;
  std::size_t samp_budget = 0;
  auto* sample = app.add_subcommand("sample", "Build a training dataset from a mesh");
  sample->add_option("--mesh", samp_mesh, "Mesh: OBJ path or procedural name")->required();
  add_sampler_opts(sample, samp, samp_strategy, samp_budget);

  // train
  TrainConfig tcfg;
  std::string train_data;
  auto* trn = app.add_subcommand("train", "Fit a network to a dataset");
  trn->add_option("--data", train_data, "Dataset file")->required();
  add_train_opts(trn, tcfg, "--seed");

  // render
  BackendOpts rback;
  CameraOpts rcam;
  RenderConfig rcfg;
  std::string rmode = "depth", rout;
  std::array<double, 3> light{0.3, 0.8, 0.5};
  bool compare_bvh = false;
  auto* rnd = app.add_subcommand("render", "Render depth, normal, shaded or path-traced images");
  add_backend_opts(rnd, rback);
  add_camera_opts(rnd, rcam);
  rnd->add_option("--mode", rmode, "depth | normal | shaded | path")->capture_default_str();
  rnd->add_option("--spp", rcfg.spp, "Samples per pixel (path)")->capture_default_str();
  rnd->add_option("--bounces", rcfg.bounces, "Bounce count (path)")->capture_default_str();
  rnd->add_option("--albedo", rcfg.albedo, "Diffuse albedo")->capture_default_str();
  rnd->add_option("--environment", rcfg.environment, "Environment radiance (path)")->capture_default_str();
  rnd->add_option("--ambient", rcfg.ambient, "Ambient term (shaded)")->capture_default_str();
  rnd->add_option("--light", light, "Light direction x y z (shaded)")->expected(3);
  rnd->add_option("--ray-offset", rcfg.ray_offset, "Secondary ray offset along the normal")->capture_default_str();
  rnd->add_option("--seed", rcfg.seed, "Render seed")->capture_default_str();
  rnd->add_option("--out", rout, "Image file name inside <out-dir> (.ppm or .pfm)");
  rnd->add_flag("--compare-bvh", compare_bvh, "Also render depth by direct BVH intersection and report the difference");

  // reconstruct
  BackendOpts cback;
  UdfGridOptions copt{64, 512, 64};
  double c_iso = 0.0;
  std::string c_out = "recon.obj";
  auto* rec = app.add_subcommand("reconstruct", "Extract a mesh via a UDF grid and marching cubes");
  add_backend_opts(rec, cback);
  rec->add_option("--resolution", copt.resolution, "Grid vertices per axis")->capture_default_str();
  rec->add_option("--n-dirs", copt.n_dirs, "Directions per UDF evaluation (sampled backends)")->capture_default_str();
  rec->add_option("--prefilter", copt.prefilter, "Skip vertices whose first k directions all miss (0 = off)")
      ->capture_default_str();
  rec->add_option("--iso", c_iso, "Iso level (0 = max(0.5 voxel, 0.01))")->capture_default_str();
  rec->add_option("--margin", copt.margin, "Grow the grid box by this fraction of the field bounds")->capture_default_str();
  bool c_project = false;
  rec->add_flag("--project", c_project, "Move vertices onto the first hit along their nearest-hit direction");
  rec->add_option("--out", c_out, "Output OBJ name inside <out-dir>")->capture_default_str();

  // eval
  std::string e_pred, e_gt, e_out = "metrics.csv";
  EvalConfig ecfg;
  auto* evl = app.add_subcommand("eval", "Chamfer distance and f-score between two meshes");
  evl->add_option("--pred", e_pred, "Predicted mesh")->required();
  evl->add_option("--gt", e_gt, "Ground-truth mesh")->required();
  evl->add_option("--points", ecfg.n_points, "Points sampled per mesh")->capture_default_str();
  evl->add_option("--seed", ecfg.seed, "Sampling seed")->capture_default_str();
  evl->add_option("--tau", ecfg.tau, "f-score distance threshold")->capture_default_str();
  evl->add_option("--out", e_out, "CSV name inside <out-dir>")->capture_default_str();

  // bench
  std::string b_mesh, b_model, b_mode = "depth", b_out = "timing.csv";
  std::vector<std::string> b_backends;
  int b_frames = 10;
  CameraOpts bcam;
  bcam.width = bcam.height = 128;
  auto* bench = app.add_subcommand("bench", "Per-frame render timings per backend");
  bench->add_option("--mesh", b_mesh, "Mesh for the oracle / brute backends")->required();
  bench->add_option("--model", b_model, "Checkpoint for the neural backend");
  bench->add_option("--backends", b_backends, "Backends to time (default: oracle, plus neural with --model)")
      ->check(CLI::IsMember({"oracle", "neural", "brute"}));
  bench->add_option("--frames", b_frames, "Frames per backend (>= 2)")->capture_default_str();
  bench->add_option("--mode", b_mode, "Render mode")->capture_default_str();
  bench->add_option("--out", b_out, "CSV name inside <out-dir>")->capture_default_str();
  add_camera_opts(bench, bcam);

  // pipeline
  PipelineConfig pcfg;
  std::string p_strategy = "ours";
  auto* pipe = app.add_subcommand("pipeline", "sample -> train -> reconstruct -> eval in one run");
  pipe->add_option("--mesh", pcfg.mesh, "Mesh: OBJ path or procedural name")->capture_default_str();
  add_sampler_opts(pipe, pcfg.sampler, p_strategy, pcfg.budget);
  add_train_opts(pipe, pcfg.train, "--train-seed");
  pipe->add_option("--resolution", pcfg.recon.resolution, "Reconstruction grid size")->capture_default_str();
  pipe->add_option("--n-dirs", pcfg.recon.n_dirs, "Directions per UDF evaluation")->capture_default_str();
  pipe->add_option("--prefilter", pcfg.recon.prefilter, "Skip vertices whose first k directions all miss")
      ->capture_default_str();
  pipe->add_option("--iso", pcfg.iso, "Iso level (0 = default)")->capture_default_str();
  pipe->add_option("--margin", pcfg.recon.margin, "Grow the grid box by this fraction of the field bounds")
      ->capture_default_str();
  pipe->add_flag("--project", pcfg.project, "Move vertices onto the learned surface");
  pipe->add_option("--points", pcfg.eval.n_points, "Evaluation points per mesh")->capture_default_str();
  pipe->add_option("--tau", pcfg.eval.tau, "f-score threshold")->capture_default_str();
  pipe->add_option("--image-size", pcfg.image_size, "Preview render size")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*generate) {
      const fs::path dir = prepare(common);
      const TriangleMesh mesh = resolve_mesh(gen_shape);
      std::string name = gen_shape;
      std::replace(name.begin(), name.end(), ':', '_');
      const fs::path out = gen_out.empty() ? dir / (name + ".obj") : fs::path(gen_out);
      save_mesh(out.string(), mesh);
      std::cout << "wrote " << out.string() << " (" << mesh.num_vertices() << " vertices, " << mesh.num_faces()
                << " faces)\n";
    } else if (*sample) {
      const fs::path dir = prepare(common);
      samp.strategy = parse_strategy(samp_strategy);
      const OracleField field(resolve_mesh(samp_mesh));
      const Dataset ds = build_dataset_budget(field, samp, samp_budget);
      write_dataset((dir / "dataset.ddf").string(), ds);
      std::cout << "samples " << ds.samples.size() << "\nfinite " << ds.counts.finite << "\nmiss " << ds.counts.miss
                << "\nperpendicular " << ds.counts.perpendicular << "\nrejected_rays " << ds.counts.rejected_rays
                << '\n';
      Manifest m = base_manifest("sample");
      m.set("mesh", samp_mesh);
      record(m, samp);
      m.set("sampler.budget", samp_budget);
      m.set("output", "dataset.ddf");
      m.set("samples", ds.samples.size());
      m.set("finite", ds.counts.finite);
      m.set("miss", ds.counts.miss);
      m.set("perpendicular", ds.counts.perpendicular);
      finish(m, dir, "sample");
    } else if (*trn) {
      const fs::path dir = prepare(common);
      const Dataset ds = read_dataset(train_data);
      const TrainResult r = train(std::span<const FieldSample>(ds.samples), tcfg, &std::cout);
      save_model((dir / "model.ddfn").string(), r.model);
      write_loss_csv(dir / "loss.csv", r.loss_history);
      std::cout << "final loss " << (r.loss_history.empty() ? 0.0 : r.loss_history.back()) << '\n';
      Manifest m = base_manifest("train");
      m.set("data", train_data);
      m.set("data.samples", ds.samples.size());
      record(m, tcfg);
      m.set("output", "model.ddfn");
      finish(m, dir, "train");
    } else if (*rnd) {
      const fs::path dir = prepare(common);
      rcfg.mode = parse_render_mode(rmode);
      rcfg.light_dir = normalized(Vec3{light[0], light[1], light[2]});
      const Camera cam = make_camera(rcam);
      const std::string name = rout.empty() ? rmode + "_" + rback.backend + ".ppm" : rout;
      with_backend(rback, [&](const auto& backend) {
        const auto t0 = std::chrono::steady_clock::now();
        const Framebuffer fb = render(backend, cam, rcfg);
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        save_image((dir / name).string(), fb);
        if (rcfg.mode == RenderMode::depth) save_image((dir / (fs::path(name).stem().string() + ".pfm")).string(), fb);
        std::cout << "rendered " << name << " in " << ms << " ms\n";
        if (compare_bvh && rcfg.mode == RenderMode::depth && !rback.mesh.empty()) {
          const TriangleMesh mesh = resolve_mesh(rback.mesh);
          const Bvh bvh(mesh);
          double max_diff = 0.0;
          std::size_t mismatched = 0;
          for (int y = 0; y < cam.height(); ++y) {
            for (int x = 0; x < cam.width(); ++x) {
              const OrientedPoint op = primary_ray(cam, x, y);
              const auto h = bvh.intersect({op.position, dir_to_vec(op.direction)}, 0.0, kInf);
              const bool hit = fb.hit[fb.index(x, y)] != 0;
              if (hit != h.has_value()) {
                ++mismatched;
                continue;
              }
              if (h) max_diff = std::max(max_diff, std::abs(h->t - fb.at(x, y)));
            }
          }
          std::cout << "bvh reference: max |dt| " << max_diff << ", hit mismatches " << mismatched << '\n';
        }
      });
      Manifest m = base_manifest("render");
      m.set("backend", rback.backend);
      m.set("mesh", rback.mesh);
      m.set("model", rback.model);
      m.set("mode", rmode);
      m.set("width", rcam.width);
      m.set("height", rcam.height);
      m.set("camera.distance", rcam.distance);
      m.set("camera.azimuth", rcam.azimuth);
      m.set("camera.polar", rcam.polar);
      m.set("camera.fov", rcam.fov);
      m.set("camera.z_up", rcam.z_up);
      m.set("spp", rcfg.spp);
      m.set("bounces", rcfg.bounces);
      m.set("albedo", rcfg.albedo);
      m.set("environment", rcfg.environment);
      m.set("seed", rcfg.seed);
      m.set("output", name);
      finish(m, dir, "render");
    } else if (*rec) {
      const fs::path dir = prepare(common);
      double iso_used = 0.0;
      std::size_t faces = 0;
      with_backend(cback, [&](const auto& backend) {
        const ScalarGrid g = udf_grid(backend, copt);
        iso_used = c_iso > 0.0 ? c_iso : default_iso(g);
        TriangleMesh mesh = marching_cubes(g, iso_used);
        if (c_project && !mesh.empty()) mesh = project_to_surface(mesh, backend, copt.n_dirs);
        faces = mesh.num_faces();
        save_mesh((dir / c_out).string(), mesh);
      });
      std::cout << "wrote " << (dir / c_out).string() << " (" << faces << " faces, iso " << iso_used << ")\n";
      Manifest m = base_manifest("reconstruct");
      m.set("backend", cback.backend);
      m.set("mesh", cback.mesh);
      m.set("model", cback.model);
      m.set("resolution", copt.resolution);
      m.set("n_dirs", copt.n_dirs);
      m.set("prefilter", copt.prefilter);
      m.set("margin", copt.margin);
      m.set("project", c_project);
      m.set("iso", iso_used);
      m.set("output", c_out);
      finish(m, dir, "reconstruct");
    } else if (*evl) {
      const fs::path dir = prepare(common);
      const TriangleMesh pred = resolve_mesh(e_pred, false);
      const TriangleMesh gt = resolve_mesh(e_gt, false);
      const auto rows = evaluate_meshes(pred, gt, ecfg);
      {
        std::ofstream out(dir / e_out);
        if (!out) throw DataError("cannot write '" + (dir / e_out).string() + "'");
        write_metrics_csv(out, rows);
      }
      std::cout << "chamfer (x1e3) " << metric_value(rows, "chamfer_x1e3") << "\nf_score (tau " << ecfg.tau << ") "
                << metric_value(rows, "f_score") << '\n';
      Manifest m = base_manifest("eval");
      m.set("pred", e_pred);
      m.set("gt", e_gt);
      m.set("points", ecfg.n_points);
      m.set("seed", ecfg.seed);
      m.set("tau", ecfg.tau);
      m.set("chamfer_units", "x1e3, squared distances");
      m.set("output", e_out);
      finish(m, dir, "eval");
    } else if (*bench) {
      const fs::path dir = prepare(common);
      if (b_backends.empty()) {
        b_backends.push_back("oracle");
        if (!b_model.empty()) b_backends.push_back("neural");
      }
      RenderConfig cfg;
      cfg.mode = parse_render_mode(b_mode);
      const Camera cam = make_camera(bcam);
      std::vector<TimingRow> rows;
      for (const auto& name : b_backends) {
        BackendOpts o{name, b_mesh, b_model};
        with_backend(o, [&](const auto& backend) {
          auto r = bench_backend(name, backend, cam, cfg, b_frames);
          rows.insert(rows.end(), r.begin(), r.end());
        });
      }
      {
        std::ofstream out(dir / b_out);
        if (!out) throw DataError("cannot write '" + (dir / b_out).string() + "'");
        write_timing_csv(out, rows);
      }
      for (const auto& name : b_backends) {
        double first = 0.0, rest = 0.0;
        int n = 0;
        for (const auto& r : rows) {
          if (r.backend != name) continue;
          if (r.warmup) {
            first = r.milliseconds;
          } else {
            rest += r.milliseconds;
            ++n;
          }
        }
        std::cout << name << ": first frame " << first << " ms, mean of remaining " << (n ? rest / n : 0.0) << " ms\n";
      }
      Manifest m = base_manifest("bench");
      m.set("mesh", b_mesh);
      m.set("model", b_model);
      m.set("frames", b_frames);
      m.set("mode", b_mode);
      m.set("width", bcam.width);
      m.set("height", bcam.height);
      m.set("output", b_out);
      finish(m, dir, "bench");
    } else if (*pipe) {
      const fs::path dir = prepare(common);
      pcfg.sampler.strategy = parse_strategy(p_strategy);
      const PipelineResult r = run_pipeline(pcfg, dir, &std::cout);
      std::cout << "chamfer (x1e3) " << r.chamfer_x1e3() << "\nf_score " << metric_value(r.metrics, "f_score") << '\n';
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
