#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "ddf/field.hpp"
#include "ddf/parallel.hpp"
#include "ddf/rng.hpp"

namespace ddf {

struct FieldSample {
  Vec3 position;
  Direction2 direction;
  DdfValue target = DdfValue::miss();
  friend bool operator==(const FieldSample&, const FieldSample&) = default;
};

enum class Strategy { ours, random, pov };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::ours: return "ours";
    case Strategy::random: return "random";
    case Strategy::pov: return "pov";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "ours") return Strategy::ours;
  if (s == "random") return Strategy::random;
  if (s == "pov") return Strategy::pov;
  throw Error("unknown sampling strategy '" + s + "'");
}

struct SamplerConfig {
  Strategy strategy = Strategy::ours;
  std::size_t s_fc = 10;   // points per face
  std::size_t s_dr = 10;   // directions per face
  std::size_t s_p = 10;    // marching samples per ray
  double step = 0.0;       // march step; <= 0 selects the default
  std::size_t n_random = 100000;
  std::size_t pov_azimuth = 10;
  std::size_t pov_polar = 5;
  std::size_t pov_film = 64;
  double pov_radius = 2.5;
  double pov_fov = 0.9;    // vertical field of view, radians
  std::uint64_t seed = 1;
  bool inside_test = true;

  void validate() const {
    if (s_fc < 1 || s_dr < 1 || s_p < 1) throw Error("sampler counts must be >= 1");
    if (pov_azimuth < 1 || pov_polar < 1 || pov_film < 1) throw Error("pov camera counts must be >= 1");
  }

  /// Default step: rays probe up to a tenth of twice the bbox diagonal.
  double resolved_step(const Aabb& box) const {
    return step > 0.0 ? step : 2.0 * box.diagonal() / (static_cast<double>(s_p) * 10.0);
  }
};

/// (1 - a - b) p0 + a p1 + b p2.
inline Vec3 barycentric_point(const std::array<Vec3, 3>& tri, double a, double b) {
  return tri[0] * (1.0 - a - b) + tri[1] * a + tri[2] * b;
}

/// Uniform points on a face; draws with a + b > 1 are folded back by
/// (a, b) -> (1 - a, 1 - b). Zero-area faces yield no points.
inline std::vector<Vec3> sample_face_points(const TriangleMesh& mesh, std::size_t face, std::size_t s_fc, Rng& rng) {
  std::vector<Vec3> out;
  if (mesh.face_area(face) <= 0.0) {
    std::cerr << "warning: skipping zero-area face " << face << '\n';
    return out;
  }
  const auto tri = mesh.triangle(face);
  out.reserve(s_fc);
  for (std::size_t i = 0; i < s_fc; ++i) {
    double a = uniform01(rng), b = uniform01(rng);
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    out.push_back(barycentric_point(tri, a, b));
  }
  return out;
}

/// Directions uniform in angle: azimuth 2 pi b, polar pi a with a, b ~ U[0, 1).
/// This is not uniform on the sphere; poles are over-represented.
inline std::vector<Direction2> sample_directions(std::size_t s_dr, Rng& rng) {
  std::vector<Direction2> out;
  out.reserve(s_dr);
  for (std::size_t i = 0; i < s_dr; ++i) {
    const double a = uniform01(rng), b = uniform01(rng);
    out.push_back({kTwoPi * b, kPi * a});
  }
  return out;
}

/// Per-kind sample counts for reporting.
struct SampleCounts {
  std::size_t finite = 0;
  std::size_t miss = 0;
  std::size_t perpendicular = 0;
  std::size_t rejected_rays = 0;

  SampleCounts& operator+=(const SampleCounts& o) {
    finite += o.finite;
    miss += o.miss;
    perpendicular += o.perpendicular;
    rejected_rays += o.rejected_rays;
    return *this;
  }
  std::size_t total() const { return finite + miss + perpendicular; }
};

/// Start offset used when casting from a point that lies on the surface.
inline constexpr double kSurfaceEps = 1e-9;

/// Marches from surface point q along theta and collects training samples.
///
/// At p_k = q + k step theta (k = 1..s_p) the back-pointing oriented point
/// (p_k, -theta) sees the surface at distance k step. The ray is dropped
/// entirely when some p_k lies inside the mesh, and marching stops where
/// the forward ray crosses another face. When the
/// forward ray escapes, (p_k, theta) is recorded as a miss, and so are the
/// two perpendicular directions theta +/- pi/2 (in the plane of theta and
/// its first frame axis) when both of them miss from p_k.
inline std::vector<FieldSample> march_and_collect(const OracleField& field, const Vec3& q, const Direction2& theta,
                                                  std::size_t s_p, double step, bool inside_test = true,
                                                  SampleCounts* counts = nullptr) {
  std::vector<FieldSample> out;
  const Vec3 v = dir_to_vec(theta);
  const Direction2 back = vec_to_dir(-v);
  const auto forward = field.bvh().intersect({q, v}, kSurfaceEps, kInf);
  const InsideTester inside(field.bvh());
  const auto [u, w] = orthonormal_frame(v);
  (void)w;
  const Direction2 perp_a = vec_to_dir(u);
  const Direction2 perp_b = vec_to_dir(-u);

  SampleCounts local;
  for (std::size_t k = 1; k <= s_p; ++k) {
    const double t = static_cast<double>(k) * step;
    if (forward && t >= forward->t) break;
    const Vec3 p = q + v * t;
    if (inside_test && inside(p)) {
      if (counts) ++counts->rejected_rays;
      return {};
    }
    out.push_back({p, back, DdfValue::at(t)});
    ++local.finite;
    if (!forward) {
      out.push_back({p, theta, DdfValue::miss()});
      ++local.miss;
      const bool a_miss = !field.bvh().intersect({p, u}, 0.0, kInf);
      const bool b_miss = a_miss && !field.bvh().intersect({p, -u}, 0.0, kInf);
      if (a_miss && b_miss) {
        out.push_back({p, perp_a, DdfValue::miss()});
        out.push_back({p, perp_b, DdfValue::miss()});
        local.perpendicular += 2;
      }
    }
  }
  if (counts) *counts += local;
  return out;
}

/// Camera ring used by the point-of-view strategy: `azimuth` x `polar`
/// positions on a sphere of `radius`, polar angles at bin centers.
inline std::vector<Vec3> pov_camera_positions(const SamplerConfig& cfg, const Vec3& center) {
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < cfg.pov_polar; ++i) {
    const double polar = kPi * (static_cast<double>(i) + 0.5) / static_cast<double>(cfg.pov_polar);
    for (std::size_t j = 0; j < cfg.pov_azimuth; ++j) {
      const double az = kTwoPi * static_cast<double>(j) / static_cast<double>(cfg.pov_azimuth);
      out.push_back(center + dir_to_vec({az, polar}) * cfg.pov_radius);
    }
  }
  return out;
}

/// Pinhole ray direction through film pixel (px, py) for a camera at `eye`
/// looking at `target` (square film).
inline Vec3 pov_pixel_direction(const Vec3& eye, const Vec3& target, std::size_t px, std::size_t py, std::size_t film,
                                double fov) {
  const Vec3 fwd = normalized(target - eye);
  Vec3 up_hint{0, 1, 0};
  if (std::abs(dot(up_hint, fwd)) > 0.99) up_hint = {0, 0, 1};
  const Vec3 right = normalized(cross(fwd, up_hint));
  const Vec3 up = cross(right, fwd);
  const double half = std::tan(0.5 * fov);
  const double sx = ((static_cast<double>(px) + 0.5) / static_cast<double>(film) * 2.0 - 1.0) * half;
  const double sy = (1.0 - (static_cast<double>(py) + 0.5) / static_cast<double>(film) * 2.0) * half;
  return normalized(fwd + right * sx + up * sy);
}

struct Dataset {
  std::vector<FieldSample> samples;
  Aabb bounds;
  SampleCounts counts;
};

/// Builds a training set from a (normalized) mesh. Deterministic for a
/// given config; per-face and per-sample RNG streams make the result
/// independent of the worker count.
inline Dataset build_dataset(const OracleField& field, const SamplerConfig& cfg) {
  cfg.validate();
  const TriangleMesh& mesh = field.mesh();
  if (mesh.empty()) throw DataError("cannot sample an empty mesh");
  Dataset ds;
  ds.bounds = field.bounds();

  switch (cfg.strategy) {
    case Strategy::ours: {
      const double step = cfg.resolved_step(mesh.bbox());
      std::vector<std::vector<FieldSample>> per_face(mesh.num_faces());
      std::vector<SampleCounts> per_counts(mesh.num_faces());
      parallel_for(0, mesh.num_faces(), [&](std::size_t f) {
        Rng rng = make_rng(cfg.seed, {0x0FACEull, f});
        const auto points = sample_face_points(mesh, f, cfg.s_fc, rng);
        const auto dirs = sample_directions(cfg.s_dr, rng);
        for (const auto& q : points) {
          for (const auto& d : dirs) {
            auto s = march_and_collect(field, q, d, cfg.s_p, step, cfg.inside_test, &per_counts[f]);
            per_face[f].insert(per_face[f].end(), s.begin(), s.end());
          }
        }
      }, 16);
      for (std::size_t f = 0; f < per_face.size(); ++f) {
        ds.samples.insert(ds.samples.end(), per_face[f].begin(), per_face[f].end());
        ds.counts += per_counts[f];
      }
      break;
    }
    case Strategy::random: {
      ds.samples.resize(cfg.n_random);
      parallel_for(0, cfg.n_random, [&](std::size_t i) {
        Rng rng = make_rng(cfg.seed, {0x12A4D0ull, i});
        const Vec3 p{uniform(rng, ds.bounds.lo.x, ds.bounds.hi.x), uniform(rng, ds.bounds.lo.y, ds.bounds.hi.y),
                     uniform(rng, ds.bounds.lo.z, ds.bounds.hi.z)};
        const Direction2 d = sample_directions(1, rng).front();
        ds.samples[i] = {p, d, field.query({p, d})};
      }, 256);
      for (const auto& s : ds.samples) (s.target.hit() ? ds.counts.finite : ds.counts.miss)++;
      break;
    }
    case Strategy::pov: {
      const Vec3 center = mesh.bbox().center();
      const auto cams = pov_camera_positions(cfg, center);
      const std::size_t per_cam = cfg.pov_film * cfg.pov_film;
      ds.samples.resize(cams.size() * per_cam);
      parallel_for(0, ds.samples.size(), [&](std::size_t i) {
        const std::size_t c = i / per_cam, pix = i % per_cam;
        const Vec3 dir = pov_pixel_direction(cams[c], center, pix % cfg.pov_film, pix / cfg.pov_film, cfg.pov_film,
                                             cfg.pov_fov);
        const OrientedPoint op = make_oriented(cams[c], dir);
        ds.samples[i] = {op.position, op.direction, field.query(op)};
      }, 256);
      for (const auto& s : ds.samples) (s.target.hit() ? ds.counts.finite : ds.counts.miss)++;
      break;
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset file: little-endian binary.
//   magic "DDF1" | count u64 | bbox lo.xyz hi.xyz (6 x f64)
//   record: x y z f64 | theta0 theta1 f64 | flags u8 (bit0 = miss) | t f64
// ---------------------------------------------------------------------------

namespace binio {

static_assert(std::endian::native == std::endian::little, "binary I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError(std::string("truncated file while reading ") + what);
  return v;
}

}  // namespace binio

inline constexpr std::size_t kDatasetRecordBytes = 5 * 8 + 1 + 8;

inline void write_dataset(std::ostream& out, const std::vector<FieldSample>& samples, const Aabb& bounds) {
  out.write("DDF1", 4);
  binio::put<std::uint64_t>(out, samples.size());
  for (double v : {bounds.lo.x, bounds.lo.y, bounds.lo.z, bounds.hi.x, bounds.hi.y, bounds.hi.z}) binio::put(out, v);
  for (const auto& s : samples) {
    binio::put(out, s.position.x);
    binio::put(out, s.position.y);
    binio::put(out, s.position.z);
    binio::put(out, s.direction.theta0);
    binio::put(out, s.direction.theta1);
    binio::put<std::uint8_t>(out, s.target.hit() ? 0 : 1);
    binio::put(out, s.target.hit() ? s.target.t() : 0.0);
  }
}

inline void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset '" + path + "'");
  write_dataset(out, ds.samples, ds.bounds);
  if (!out) throw DataError("write failed for dataset '" + path + "'");
}

inline Dataset read_dataset(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4)) throw DataError("truncated dataset header");
  if (std::memcmp(magic, "DDF", 3) != 0) throw DataError("not a dataset file (bad magic)");
  if (magic[3] != '1') throw DataError(std::string("unsupported dataset version '") + magic[3] + "'");
  const auto count = binio::get<std::uint64_t>(in, "record count");
  Dataset ds;
  ds.bounds.lo = {binio::get<double>(in, "bbox"), binio::get<double>(in, "bbox"), binio::get<double>(in, "bbox")};
  ds.bounds.hi = {binio::get<double>(in, "bbox"), binio::get<double>(in, "bbox"), binio::get<double>(in, "bbox")};
  // Read everything before materializing so a short file leaves no partial result.
  const auto here = in.tellg();
  if (here >= 0) {
    in.seekg(0, std::ios::end);
    const auto end = in.tellg();
    in.seekg(here);
    if (static_cast<std::uint64_t>(end - here) < count * kDatasetRecordBytes) {
      throw DataError("truncated dataset: expected " + std::to_string(count) + " records");
    }
  }
  std::vector<char> buf(count * kDatasetRecordBytes);
  if (count > 0 && !in.read(buf.data(), static_cast<std::streamsize>(buf.size()))) {
    throw DataError("truncated dataset: expected " + std::to_string(count) + " records");
  }
  ds.samples.resize(count);
  const char* p = buf.data();
  auto take = [&p](auto& v) {
    std::memcpy(&v, p, sizeof(v));
    p += sizeof(v);
  };
  for (auto& s : ds.samples) {
    double x, y, z, t0, t1, t;
    std::uint8_t flags;
    take(x); take(y); take(z); take(t0); take(t1); take(flags); take(t);
    s.position = {x, y, z};
    s.direction = {t0, t1};
    s.target = (flags & 1u) ? DdfValue::miss() : DdfValue::at(t);
    (s.target.hit() ? ds.counts.finite : ds.counts.miss)++;
  }
  return ds;
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  return read_dataset(in);
}

}  // namespace ddf
