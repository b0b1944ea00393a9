// Acceptance run: one PASS/FAIL line per criterion, details indented below.
// Usage: ddf_acceptance [criterion ids...]   (no arguments = all)

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "ddf/ddf.hpp"
#include "oracles.hpp"

using namespace ddf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::vector<std::string> details;

  template <typename... Args>
  void note(Args&&... args) {
    std::ostringstream s;
    s.precision(6);
    (s << ... << args);
    details.push_back(s.str());
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const std::vector<std::pair<std::string, TriangleMesh>>& test_meshes() {
  static const std::vector<std::pair<std::string, TriangleMesh>> m = {
      {"icosphere-4", shapes::icosphere(4)}, {"cube", shapes::cube()}, {"blob", shapes::blob()}};
  return m;
}

OrientedPoint random_probe(std::mt19937_64& eng, double extent) {
  std::uniform_real_distribution<double> u(-extent, extent);
  return make_oriented({u(eng), u(eng), u(eng)}, oracle::random_unit(eng));
}

double angle_deg(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(dot(normalized(a), normalized(b)), -1.0, 1.0)) * 180.0 / kPi;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(DDF_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// ---------------------------------------------------------------------------
// Training experiments shared by several criteria
// ---------------------------------------------------------------------------

constexpr std::size_t kBudget = 200000;
constexpr std::size_t kOursSp = 30;

struct RunKey {
  std::string mesh;
  Strategy strategy;
  std::size_t s_p;
  std::uint64_t seed;
  auto operator<=>(const RunKey&) const = default;
};

struct RunOut {
  double chamfer = kInf;
  double fscore = 0.0;
  std::size_t faces = 0;
  double seconds = 0.0;
  fs::path dir;
};

fs::path runs_root() { return fs::current_path() / "acceptance_runs"; }

const RunOut& experiment(const RunKey& k) {
  static std::map<RunKey, RunOut> cache;
  if (auto it = cache.find(k); it != cache.end()) return it->second;
  PipelineConfig cfg;
  cfg.mesh = k.mesh;
  cfg.budget = kBudget;
  cfg.sampler.strategy = k.strategy;
  cfg.sampler.s_p = k.s_p;
  cfg.sampler.seed = k.seed;
  cfg.train.seed = k.seed;
  RunOut out;
  out.dir = runs_root() / (k.mesh + "_" + to_string(k.strategy) + "_sp" + std::to_string(k.s_p) + "_seed" +
                           std::to_string(k.seed));
  const auto t0 = std::chrono::steady_clock::now();
  const PipelineResult r = run_pipeline(cfg, out.dir);
  out.seconds = seconds_since(t0);
  out.chamfer = r.chamfer_x1e3();
  out.fscore = metric_value(r.metrics, "f_score");
  out.faces = r.recon_faces;
  std::cerr << "  [run] " << out.dir.filename().string() << ": chamfer " << out.chamfer << " ("
            << out.seconds << " s)\n";
  return cache.emplace(k, out).first->second;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string list(const std::vector<double>& v) {
  std::ostringstream s;
  s.precision(4);
  for (std::size_t i = 0; i < v.size(); ++i) s << (i ? ", " : "") << v[i];
  return s.str();
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

Outcome c1_oracle_equivalence() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  for (const auto& [name, mesh] : test_meshes()) {
    const OracleField fast(mesh);
    const BruteForceField slow(mesh);
    std::mt19937_64 eng(101);
    std::size_t hits = 0, hit_mismatch = 0;
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const auto p = random_probe(eng, 1.6);
      const DdfValue a = fast.query(p), b = slow.query(p);
      if (a.hit() != b.hit()) {
        ++hit_mismatch;
        continue;
      }
      if (a.hit()) {
        ++hits;
        worst = std::max(worst, std::abs(a.t() - b.t()));
      }
    }
    ok = ok && hit_mismatch == 0 && worst <= 1e-9;
    o.note(name, " (", mesh.num_faces(), " faces): 10000 probes, ", hits, " hits, hit/miss mismatches ", hit_mismatch,
           ", max |dt| ", worst);
  }
  const double s = seconds_since(t0);
  o.note("runtime ", s, " s (limit 10 s)");
  o.pass = ok && s < 10.0;
  return o;
}

Outcome c2_eikonal() {
  Outcome o;
  bool ok = true;
  for (const auto& [name, mesh] : test_meshes()) {
    const OracleField f(mesh);
    std::mt19937_64 eng(202);
    std::uniform_real_distribution<double> frac(0.0, 1.0);
    double worst = 0.0;
    int n = 0;
    while (n < 1000) {
      const auto p = random_probe(eng, 1.6);
      const DdfValue v = f.query(p);
      if (!v.hit() || v.t() <= 0.0) continue;
      const double t = frac(eng) * v.t();
      worst = std::max(worst, check_eikonal(f, p, t));
      ++n;
    }
    ok = ok && worst <= 1e-9;
    o.note(name, ": 1000 visible (p, t) pairs, max residual ", worst);
  }
  o.pass = ok;
  return o;
}

template <typename B>
std::size_t facing_violations(const B& backend, const Camera& cam, std::size_t& hits) {
  const auto fb = render_normal(backend, cam, {});
  std::size_t bad = 0;
  for (int y = 0; y < cam.height(); ++y) {
    for (int x = 0; x < cam.width(); ++x) {
      if (!fb.hit[fb.index(x, y)]) continue;
      ++hits;
      if (!(dot(decode_normal(fb, x, y), cam.ray_direction(x, y)) < 0.0)) ++bad;
    }
  }
  return bad;
}

Outcome c3_normals() {
  Outcome o;
  bool ok = true;
  std::size_t hits = 0, bad = 0;
  for (const auto& [name, mesh] : test_meshes()) {
    const OracleField f(mesh);
    for (int v = 0; v < 6; ++v) {
      const Camera cam = orbit_camera({0, 0, 0}, 3.0, 1.1 * v, 0.4 + 0.45 * v, 0.8, 96, 96);
      bad += facing_violations(f, cam, hits);
    }
    // Path tracing asserts the same rule on every bounce and throws on violation.
    try {
      RenderConfig rc;
      rc.mode = RenderMode::path;
      rc.spp = 2;
      (void)render(f, orbit_camera({0, 0, 0}, 3.0, 0.3, 1.0, 0.8, 48, 48), rc);
    } catch (const Error& e) {
      ok = false;
      o.note(name, ": path render raised: ", e.what());
    }
  }
  const fs::path model = runs_root() / "sphere_ours_sp30_seed1" / "model.ddfn";
  if (fs::exists(model)) {
    const NeuralField nf(load_model(model.string()), field_bounds(shapes::icosphere(4)));
    std::size_t nh = 0;
    const std::size_t nb = facing_violations(nf, orbit_camera({0, 0, 0}, 3.0, 0.6, 1.1, 0.8, 64, 64), nh);
    hits += nh;
    bad += nb;
    o.note("trained sphere network: ", nh, " normal-map hits, ", nb, " violations");
  }
  o.note("normal maps: ", hits, " hit pixels, ", bad, " with n . theta >= 0");
  ok = ok && bad == 0;

  const OracleField sphere(shapes::icosphere(4));
  std::mt19937_64 eng(303);
  std::size_t total = 0, within = 0;
  double worst = 0.0;
  while (total < 10000) {
    const auto p = random_probe(eng, 2.0);
    const auto h = sphere.trace(p);
    if (!h || sphere.origin_inside(p)) continue;
    ++total;
    const double a = angle_deg(h->normal, advance(p, h->t));
    worst = std::max(worst, a);
    within += a <= 5.0 ? 1 : 0;
  }
  const double share = static_cast<double>(within) / static_cast<double>(total);
  o.note("icosphere-4 radial check: ", total, " hits, ", 100.0 * share, "% within 5 deg (max ", worst, " deg)");
  o.pass = ok && share >= 0.99;
  return o;
}

// Loop-based pre-activations; false when any lies within `margin` of a ReLU kink.
bool away_from_kinks(const MlpModel& m, const Vec3& x, const Direction2& d, double margin) {
  std::vector<double> a = {x.x, x.y, x.z, d.theta0 / kPi - 1.0, 2.0 * d.theta1 / kPi - 1.0};
  for (std::size_t l = 0; l + 1 < m.num_layers(); ++l) {
    const auto V = m.v(l);
    std::vector<double> z(static_cast<std::size_t>(V.rows()));
    for (Eigen::Index i = 0; i < V.rows(); ++i) {
      double nv = 0.0, acc = 0.0;
      for (Eigen::Index j = 0; j < V.cols(); ++j) {
        nv += V(i, j) * V(i, j);
        acc += V(i, j) * a[j];
      }
      z[i] = m.g(l)(i) * acc / std::sqrt(nv) + m.b(l)(i);
      if (std::abs(z[i]) < margin) return false;
      z[i] = std::max(0.0, z[i]);
    }
    a = std::move(z);
  }
  return true;
}

Outcome c4_autodiff() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  auto m = MlpModel::with_hidden(2, 8, 0.0, 0.1);
  m.initialize(7);
  m.g(2) *= 5.0;
  std::mt19937_64 eng(404);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double h = 1e-6, tol = 1e-4, margin = 1e-3;
  auto rel = [](double a, double b) {
    const double s = std::max(std::abs(a), std::abs(b));
    return s < 1e-8 ? 0.0 : std::abs(a - b) / s;
  };
  int probes = 0, rejected = 0;
  double worst_in = 0.0, worst_w = 0.0;
  while (probes < 100) {
    const Vec3 x{2 * u(eng) - 1, 2 * u(eng) - 1, 2 * u(eng) - 1};
    const Direction2 d{2 * kPi * (0.02 + 0.96 * u(eng)), kPi * (0.02 + 0.96 * u(eng))};
    const double pred = forward(m, x, d);
    if (!away_from_kinks(m, x, d, margin) || std::abs(pred) > 0.07) {
      ++rejected;
      continue;
    }
    ++probes;
    const auto g = input_gradient(m, x, d);
    for (int c = 0; c < kInputDim; ++c) {
      auto f = [&](double s) {
        Vec3 xx = x;
        Direction2 dd = d;
        if (c < 3) xx[c] += s; else if (c == 3) dd.theta0 += s; else dd.theta1 += s;
        return forward(m, xx, dd);
      };
      worst_in = std::max(worst_in, rel(g[c], (f(h) - f(-h)) / (2 * h)));
    }
    const std::vector<FieldSample> batch{{x, d, DdfValue::at(std::max(0.0, pred) + 0.02)}};
    const auto lg = loss_and_gradient(m, batch, 0.1);
    for (Eigen::Index k = 0; k < m.params().size(); ++k) {
      MlpModel p = m, q = m;
      p.params()(k) += h;
      q.params()(k) -= h;
      const double fd = (loss_and_gradient(p, batch, 0.1).loss - loss_and_gradient(q, batch, 0.1).loss) / (2 * h);
      worst_w = std::max(worst_w, rel(lg.grad(k), fd));
    }
  }
  const double s = seconds_since(t0);
  o.note("2x8 network (", m.params().size(), " parameters), 100 probes (", rejected, " rejected near kinks)");
  o.note("max relative error: input gradient ", worst_in, ", weight gradient ", worst_w, " (tolerance 1e-4)");
  o.note("runtime ", s, " s (limit 5 s)");
  o.pass = worst_in <= tol && worst_w <= tol && s < 5.0;
  return o;
}

Outcome c5_render_equivalence() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  for (const auto& [name, mesh] : test_meshes()) {
    const OracleField f(mesh);
    const Camera cam = orbit_camera({0, 0, 0}, 3.0, 0.7, 1.2, 0.8, 256, 256);
    const auto fb = render_depth(f, cam, {});
    const Bvh bvh(mesh);
    std::size_t mismatch = 0, hits = 0;
    double worst = 0.0;
    for (int y = 0; y < 256; ++y) {
      for (int x = 0; x < 256; ++x) {
        const auto op = primary_ray(cam, x, y);
        const auto h = bvh.intersect({op.position, op.direction_vec()}, 0.0, kInf);
        if (bool(h) != bool(fb.hit[fb.index(x, y)])) {
          ++mismatch;
          continue;
        }
        if (h) {
          ++hits;
          worst = std::max(worst, std::abs(h->t - fb.at(x, y)));
        }
      }
    }
    ok = ok && mismatch == 0 && worst <= 1e-9;
    o.note(name, ": 256x256, ", hits, " hit pixels, mask mismatches ", mismatch, ", max |dt| ", worst);
  }
  const double s = seconds_since(t0);
  o.note("runtime ", s, " s (limit 30 s)");
  o.pass = ok && s < 30.0;
  return o;
}

Outcome c6_replay() {
  Outcome o;
  const OracleField f(shapes::icosphere(4));
  SamplerConfig cfg;
  cfg.strategy = Strategy::ours;
  cfg.s_fc = cfg.s_dr = cfg.s_p = 10;
  const Dataset ds = build_dataset(f, cfg);
  std::size_t finite = 0, finite_bad = 0, miss = 0, miss_bad = 0, inside = 0;
  double worst = 0.0;
  for (const auto& s : ds.samples) {
    const OrientedPoint p{s.position, s.direction};
    if (is_inside(f.bvh(), s.position)) ++inside;
    const DdfValue v = f.query(p);
    if (s.target.hit()) {
      ++finite;
      const double e = v.hit() ? std::abs(v.t() - s.target.t()) : kInf;
      worst = std::max(worst, e);
      finite_bad += e <= 1e-6 ? 0 : 1;
    } else {
      ++miss;
      miss_bad += v.hit() ? 1 : 0;
    }
  }
  o.note("sphere, s_fc = s_dr = s_p = 10: ", ds.samples.size(), " samples (", finite, " finite, ", miss, " miss)");
  o.note("finite targets replaying within 1e-6: ", finite - finite_bad, " / ", finite, " (max error ", worst, ")");
  o.note("miss targets replaying as misses: ", miss - miss_bad, " / ", miss);
  o.note("samples inside the mesh: ", inside);
  o.pass = finite > 0 && finite_bad == 0 && inside == 0;
  return o;
}

Outcome c7_strategy_trend() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  for (const std::string mesh : {"sphere", "cube"}) {
    std::vector<double> ours, random;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      ours.push_back(experiment({mesh, Strategy::ours, kOursSp, seed}).chamfer);
      random.push_back(experiment({mesh, Strategy::random, kOursSp, seed}).chamfer);
    }
    const double mo = mean_of(ours), mr = mean_of(random);
    ok = ok && mo < mr;
    o.note(mesh, ": chamfer x1e3 ours [", list(ours), "] mean ", mo, " vs random [", list(random), "] mean ", mr,
           mo < mr ? "  (ours lower)" : "  (ours NOT lower)");
  }
  const double s = seconds_since(t0);
  o.note("budget ", kBudget, " samples, 4x128, 2000 iterations, ours s_p = ", kOursSp, ", grid 32^3");
  o.note("runtime ", s / 60.0, " min (target 30 min)");
  o.pass = ok;
  return o;
}

Outcome c8_sp_trend() {
  Outcome o;
  std::vector<double> means;
  for (std::size_t sp : {10, 20, 30}) {
    std::vector<double> v;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) v.push_back(experiment({"sphere", Strategy::ours, sp, seed}).chamfer);
    means.push_back(mean_of(v));
    o.note("s_p = ", sp, ": chamfer x1e3 [", list(v), "] mean ", means.back());
  }
  o.pass = means[1] <= means[0] && means[2] <= means[1];
  o.note("means ", list(means), o.pass ? " are non-increasing" : " are NOT non-increasing");
  return o;
}

Outcome c9_reconstruction() {
  Outcome o;
  const double r = 0.8;
  const Aabb box{{-1, -1, -1}, {1, 1, 1}};
  auto udf = [r](const Vec3& p) { return std::abs(norm(p) - r); };
  const auto gt = shapes::icosphere(6, r);
  double cd[2] = {0, 0};
  double mean_r = 0.0;
  int i = 0;
  for (int res : {32, 64}) {
    const auto g = sample_grid(res, box, udf);
    const auto m = marching_cubes(g, default_iso(g));
    cd[i++] = metric_value(evaluate_meshes(m, gt, {}), "chamfer_x1e3");
    if (res == 64) {
      for (const Vec3& v : m.vertices()) mean_r += norm(v);
      mean_r /= static_cast<double>(m.num_vertices());
      o.note("64^3: ", m.num_faces(), " faces at iso ", default_iso(g), ", mean vertex radius ", mean_r, " (true ", r,
             ", error ", 100.0 * std::abs(mean_r - r) / r, "%)");
    }
  }
  o.note("chamfer x1e3: 32^3 ", cd[0], ", 64^3 ", cd[1]);
  o.pass = std::abs(mean_r - r) <= 0.02 * r && cd[0] >= cd[1];
  return o;
}

Outcome c10_metrics() {
  Outcome o;
  std::mt19937_64 eng(1010);
  std::uniform_int_distribution<int> size(1, 1000);
  int exact = 0;
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const auto a = oracle::random_points(size(eng), -1.0, 1.0, 2 * k + 1);
    const auto b = oracle::random_points(size(eng), -0.7, 1.3, 2 * k + 2);
    const double lib = chamfer(PointCloud{a}, PointCloud{b});
    const double ref = oracle::chamfer(a, b, 1.0, 1.0);
    bool same = lib == ref;
    const auto prof = sided_profile(PointCloud{a}, PointCloud{b});
    for (std::size_t i = 0; i < a.size(); ++i) same = same && prof[i] == oracle::nearest_sq(a[i], b);
    exact += same ? 1 : 0;
    worst = std::max(worst, std::abs(lib - ref));
  }
  const auto c = oracle::random_points(500, -1.0, 1.0, 99);
  const double self = chamfer(PointCloud{c}, PointCloud{c});
  const double two = chamfer(PointCloud{{{0, 0, 0}}}, PointCloud{{{1, 0, 0}}});
  o.note("20 random pairs: ", exact, " exactly equal to brute force (max |diff| ", worst, ")");
  o.note("identical clouds: ", self, "; (0,0,0) vs (1,0,0): ", two);
  o.pass = exact == 20 && self == 0.0 && two == 2.0;
  return o;
}

Outcome c11_bench() {
  Outcome o;
  const RunOut& run = experiment({"blob", Strategy::ours, kOursSp, 1});
  o.note("blob network trained (chamfer x1e3 ", run.chamfer, ")");
  const fs::path dir = runs_root() / "bench";
  fs::create_directories(dir);
  const std::string args = "--threads 1 --out-dir " + dir.string() + " bench --mesh blob --model " +
                           (run.dir / "model.ddfn").string() + " --frames 10 --width 96 --height 96";
  const int rc = run_cli(args, dir / "log.txt");
  if (rc != 0) {
    o.note("bench exited with ", rc, ": ", slurp(dir / "log.txt"));
    return o;
  }
  std::istringstream csv(slurp(dir / "timing.csv"));
  std::string line;
  std::getline(csv, line);
  std::map<std::string, std::vector<std::pair<double, bool>>> rows;
  while (std::getline(csv, line)) {
    std::istringstream ls(line);
    std::string backend, frame, ms, warm;
    std::getline(ls, backend, ',');
    std::getline(ls, frame, ',');
    std::getline(ls, ms, ',');
    std::getline(ls, warm, ',');
    rows[backend].push_back({std::stod(ms), warm == "1"});
  }
  bool ok = rows.size() == 2 && rows.count("oracle") && rows.count("neural");
  for (const auto& [name, r] : rows) {
    double rest = 0.0;
    bool flags = !r.empty() && r[0].second;
    for (std::size_t i = 1; i < r.size(); ++i) {
      rest += r[i].first;
      flags = flags && !r[i].second;
    }
    ok = ok && flags && r.size() == 10;
    o.note(name, ": ", r.size(), " frames, first (flagged warm-up) ", r[0].first, " ms, mean of rest ",
           rest / static_cast<double>(r.size() - 1), " ms");
  }
  o.note("96x96 depth frames on one core; speed ordering reported only");
  o.pass = ok;
  return o;
}

Outcome c12_determinism() {
  Outcome o;
  const std::string args =
      " pipeline --mesh sphere --budget 20000 --sp 20 --iterations 150 --batch 256 --resolution 16 --n-dirs 32 "
      "--points 2000 --image-size 32";
  const fs::path a = runs_root() / "determinism_a", b = runs_root() / "determinism_b";
  for (const auto& d : {a, b}) {
    fs::remove_all(d);
    fs::create_directories(d);
    const int rc = run_cli("--threads 1 --out-dir " + d.string() + args, d.parent_path() / (d.filename().string() + ".log"));
    if (rc != 0) {
      o.note("pipeline exited with ", rc);
      return o;
    }
  }
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(a)) names.insert(e.path().filename().string());
  for (const auto& e : fs::directory_iterator(b)) names.insert(e.path().filename().string());
  std::size_t same = 0;
  std::vector<std::string> differ;
  for (const auto& n : names) {
    if (fs::exists(a / n) && fs::exists(b / n) && slurp(a / n) == slurp(b / n)) {
      ++same;
    } else {
      differ.push_back(n);
    }
  }
  std::string all;
  for (const auto& n : names) all += (all.empty() ? "" : " ") + n;
  o.note("files compared: ", all);
  o.note(same, " / ", names.size(), " byte-identical");
  for (const auto& n : differ) o.note("differs: ", n);
  for (const char* need : {"dataset.ddf", "model.ddfn", "depth.pfm", "normal.ppm", "metrics.csv", "recon.obj"}) {
    if (!names.count(need)) o.note("missing artifact: ", need);
  }
  o.pass = differ.empty() && names.count("dataset.ddf") && names.count("model.ddfn") && names.count("metrics.csv") &&
           names.count("depth.pfm");
  return o;
}

// Measurements on the trained sphere network; logged, not part of any verdict.
void trained_sphere_diagnostics() {
  const fs::path model = runs_root() / "sphere_ours_sp30_seed1" / "model.ddfn";
  if (!fs::exists(model)) return;
  std::cout << "diagnostics (trained sphere, ours, seed 1)\n";
  const auto mesh = shapes::icosphere(4);
  const OracleField oracle_f(mesh);
  const NeuralField nf(load_model(model.string()), field_bounds(mesh));

  std::mt19937_64 eng(777);
  std::vector<double> eik, grad;
  std::uniform_real_distribution<double> frac(0.1, 0.9);
  int guard = 0;
  while (eik.size() < 1000 && ++guard < 200000) {
    auto p = random_probe(eng, 1.5);
    if (oracle_f.origin_inside(p)) continue;
    const DdfValue v = nf.query(p);
    if (!v.hit() || v.t() <= 0.0) continue;
    eik.push_back(check_eikonal(nf, p, frac(eng) * v.t()));
    if (grad.size() < 100) {
      const Vec3 w = oracle::random_unit(eng) * 1e-3;
      grad.push_back(check_gradient_consistency(nf, p, w));
    }
  }
  if (!eik.empty()) {
    const double med = percentile(eik, 50);
    std::cout << "    eikonal residual over " << eik.size() << " probes: median " << med << " (reference bound 0.05: "
              << (med < 0.05 ? "met" : "not met") << "), p90 " << percentile(eik, 90) << '\n';
  }
  if (!grad.empty()) {
    std::cout << "    gradient-consistency residual over " << grad.size() << " probes: median " << percentile(grad, 50)
              << ", p90 " << percentile(grad, 90) << '\n';
  }

  const Camera cam = orbit_camera({0, 0, 0}, 3.0, 0.6, 1.1, 0.8, 64, 64);
  const auto n_o = render_normal(oracle_f, cam, {});
  const auto n_n = render_normal(nf, cam, {});
  double sum = 0.0;
  std::size_t both = 0, only_o = 0, only_n = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      const bool a = n_o.hit[n_o.index(x, y)], b = n_n.hit[n_n.index(x, y)];
      if (a && b) {
        sum += angle_deg(decode_normal(n_o, x, y), decode_normal(n_n, x, y));
        ++both;
      }
      only_o += a && !b;
      only_n += b && !a;
    }
  }
  if (both) {
    const double mean = sum / static_cast<double>(both);
    std::cout << "    normal map vs oracle: mean angular error " << mean << " deg over " << both
              << " shared pixels (reference bound 10 deg: " << (mean < 10.0 ? "met" : "not met") << "), oracle-only "
              << only_o << ", network-only " << only_n << '\n';
  }

  RenderConfig rc;
  const auto s_o = render_shaded(oracle_f, cam, rc);
  const auto s_n = render_shaded(nf, cam, rc);
  std::array<std::size_t, 5> hist{};
  const double edges[4] = {0.01, 0.05, 0.1, 0.2};
  for (std::size_t i = 0; i < s_o.hit.size(); ++i) {
    const double d = std::abs(s_o.data[3 * i] - s_n.data[3 * i]);
    std::size_t b = 0;
    while (b < 4 && d >= edges[b]) ++b;
    ++hist[b];
  }
  std::cout << "    shaded |oracle - network| histogram [<0.01, <0.05, <0.1, <0.2, >=0.2]: " << hist[0] << ' '
            << hist[1] << ' ' << hist[2] << ' ' << hist[3] << ' ' << hist[4] << '\n';

  std::vector<double> fs_seeds;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    fs_seeds.push_back(experiment({"sphere", Strategy::ours, kOursSp, seed}).fscore);
  }
  const double spread = *std::max_element(fs_seeds.begin(), fs_seeds.end()) -
                        *std::min_element(fs_seeds.begin(), fs_seeds.end());
  std::cout << "    f-score (tau 0.01) across seeds: " << list(fs_seeds) << ", spread " << spread
            << " (reference bound 0.02: " << (spread <= 0.02 ? "met" : "not met") << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"oracle equivalence (BVH vs linear scan)", c1_oracle_equivalence},
      {"directed eikonal identity on the oracle", c2_eikonal},
      {"normals face the viewer; icosphere normals radial", c3_normals},
      {"input and weight gradients vs finite differences", c4_autodiff},
      {"oracle depth render equals direct BVH image", c5_render_equivalence},
      {"dataset replay on the oracle", c6_replay},
      {"sampling strategy trend: ours below random", c7_strategy_trend},
      {"s_p trend: chamfer non-increasing in s_p", c8_sp_trend},
      {"reconstruction fidelity on the analytic sphere", c9_reconstruction},
      {"metric index equals brute force", c10_metrics},
      {"bench harness timings", c11_bench},
      {"pipeline determinism with one thread", c12_determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  fs::create_directories(runs_root());

  // Criterion 3 also checks the trained network, so training runs go first.
  std::vector<int> order = {7, 8, 1, 2, 3, 4, 5, 6, 9, 10, 11, 12};
  std::map<int, Outcome> results;
  int failed = 0;
  for (int id : order) {
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[id - 1].second();
    } catch (const std::exception& e) {
      out.pass = false;
      out.note("exception: ", e.what());
    }
    out.note("elapsed ", seconds_since(t0), " s");
    std::cerr << "  [done] criterion " << id << (out.pass ? " PASS" : " FAIL") << '\n';
    results[id] = std::move(out);
  }
  for (const auto& [id, out] : results) {
    std::cout << (out.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[id - 1].first << '\n';
    for (const auto& d : out.details) std::cout << "      " << d << '\n';
    failed += out.pass ? 0 : 1;
  }
  if (only.empty() || only.count(7)) trained_sphere_diagnostics();
  std::cout << (results.size() - failed) << " / " << results.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
