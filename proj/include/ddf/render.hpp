#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ddf/field.hpp"
#include "ddf/parallel.hpp"
#include "ddf/rng.hpp"

namespace ddf {

/// Pinhole camera, right-handed, up hint +Y by default.
class Camera {
public:
  Camera(const Vec3& position, const Vec3& target, const Vec3& up, double fov, int width, int height)
      : position_(position), target_(target), up_hint_(up), fov_(fov), width_(width), height_(height) {
    if (!(fov > 0.0 && fov < kPi)) throw Error("camera field of view must be in (0, pi)");
    if (width < 1 || height < 1) throw Error("camera film must be at least 1x1");
    forward_ = normalized(target - position);
    right_ = cross(forward_, up);
    if (norm(right_) < 1e-12) throw Error("camera up hint is parallel to the view direction");
    right_ = normalized(right_);
    up_ = cross(right_, forward_);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  const Vec3& position() const { return position_; }
  const Vec3& forward() const { return forward_; }
  const Vec3& right() const { return right_; }
  const Vec3& up() const { return up_; }
  double fov() const { return fov_; }

  /// Unit direction through pixel (px, py) offset by `jitter` in pixel units
  /// from the pixel center; py = 0 is the top row.
  Vec3 ray_direction(double px, double py, double jx = 0.0, double jy = 0.0) const {
    const double half = std::tan(0.5 * fov_);
    const double aspect = static_cast<double>(width_) / static_cast<double>(height_);
    const double sx = ((px + 0.5 + jx) / width_ * 2.0 - 1.0) * half * aspect;
    const double sy = (1.0 - (py + 0.5 + jy) / height_ * 2.0) * half;
    return normalized(forward_ + right_ * sx + up_ * sy);
  }

private:
  Vec3 position_, target_, up_hint_;
  double fov_;
  int width_, height_;
  Vec3 forward_, right_, up_;
};

inline OrientedPoint primary_ray(const Camera& cam, int px, int py, double jx = 0.0, double jy = 0.0) {
  if (px < 0 || py < 0 || px >= cam.width() || py >= cam.height()) throw Error("pixel outside the film");
  return make_oriented(cam.position(), cam.ray_direction(px, py, jx, jy));
}

/// Camera at distance `radius` from `target` along spherical angles
/// (azimuth, polar), measured about the up axis.
inline Camera orbit_camera(const Vec3& target, double radius, double azimuth, double polar, double fov, int width,
                           int height, bool z_up = false) {
  Vec3 offset;
  if (z_up) {
    offset = dir_to_vec({azimuth, polar});
  } else {
    const Vec3 d = dir_to_vec({azimuth, polar});
    offset = {d.y, d.z, d.x};  // polar measured from +Y
  }
  const Vec3 up = z_up ? Vec3{0, 0, 1} : Vec3{0, 1, 0};
  Vec3 pos = target + offset * radius;
  if (norm(cross(normalized(target - pos), up)) < 1e-6) pos += Vec3{1e-3, 0, 1e-3};
  return Camera(pos, target, up, fov, width, height);
}

struct Framebuffer {
  int width = 0, height = 0, channels = 1;
  std::vector<double> data;      // row-major, `channels` values per pixel
  std::vector<std::uint8_t> hit;  // 1 where the primary ray saw the surface

  Framebuffer() = default;
  Framebuffer(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill),
        hit(static_cast<std::size_t>(w) * h, 0) {}

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  double& at(int x, int y, int c = 0) { return data[index(x, y) * channels + c]; }
  double at(int x, int y, int c = 0) const { return data[index(x, y) * channels + c]; }
  Vec3 rgb(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
  void set_rgb(int x, int y, const Vec3& c) {
    at(x, y, 0) = c.x;
    at(x, y, 1) = c.y;
    at(x, y, 2) = c.z;
  }
  friend bool operator==(const Framebuffer&, const Framebuffer&) = default;
};

enum class RenderMode { depth, normal, shaded, path };

inline RenderMode parse_render_mode(const std::string& s) {
  if (s == "depth") return RenderMode::depth;
  if (s == "normal") return RenderMode::normal;
  if (s == "shaded") return RenderMode::shaded;
  if (s == "path") return RenderMode::path;
  throw Error("unknown render mode '" + s + "'");
}

struct RenderConfig {
  RenderMode mode = RenderMode::depth;
  int spp = 16;
  int bounces = 3;
  Vec3 background{0, 0, 0};
  double depth_background = -1.0;  // value stored for depth-mode misses
  Vec3 light_dir{0.3, 0.8, 0.5};   // toward the light
  double light_intensity = 1.0;
  double ambient = 0.0;
  double albedo = 0.8;
  double environment = 1.0;        // constant environment radiance for path mode
  double ray_offset = 1e-6;        // secondary-ray origin offset along the normal
  std::uint64_t seed = 1;

  void validate() const {
    if (spp < 1) throw Error("samples per pixel must be >= 1");
    if (bounces < 0) throw Error("bounce count must be >= 0");
  }
};

namespace detail {

template <DdfBackend B>
void trace_many(const B& backend, std::span<const OrientedPoint> pts, std::span<std::optional<SurfaceHit>> out) {
  if constexpr (BatchDdfBackend<B>) {
    backend.trace_batch(pts, out);
  } else {
    for (std::size_t i = 0; i < pts.size(); ++i) out[i] = backend.trace(pts[i]);
  }
}

inline void check_facing(const SurfaceHit& h, const OrientedPoint& p) {
  if (!(dot(h.normal, p.direction_vec()) < 0.0)) throw Error("normal does not face the viewer (n . theta >= 0)");
}

template <DdfBackend B>
std::vector<std::optional<SurfaceHit>> trace_row(const B& backend, const Camera& cam, int py) {
  std::vector<OrientedPoint> rays(static_cast<std::size_t>(cam.width()));
  for (int px = 0; px < cam.width(); ++px) rays[px] = primary_ray(cam, px, py);
  std::vector<std::optional<SurfaceHit>> hits(rays.size());
  trace_many(backend, std::span<const OrientedPoint>(rays), std::span<std::optional<SurfaceHit>>(hits));
  for (std::size_t i = 0; i < hits.size(); ++i) {
    if (hits[i]) check_facing(*hits[i], rays[i]);
  }
  return hits;
}

}  // namespace detail

/// Scalar image of t-values; misses store `depth_background`.
template <DdfBackend B>
Framebuffer render_depth(const B& backend, const Camera& cam, const RenderConfig& cfg) {
  Framebuffer fb(cam.width(), cam.height(), 1, cfg.depth_background);
  parallel_for(0, static_cast<std::size_t>(cam.height()), [&](std::size_t row) {
    const int py = static_cast<int>(row);
    std::vector<OrientedPoint> rays(static_cast<std::size_t>(cam.width()));
    for (int px = 0; px < cam.width(); ++px) rays[px] = primary_ray(cam, px, py);
    std::vector<DdfValue> vals(rays.size(), DdfValue::miss());
    detail::query_many(backend, std::span<const OrientedPoint>(rays), std::span<DdfValue>(vals));
    for (int px = 0; px < cam.width(); ++px) {
      if (!vals[px].hit()) continue;
      fb.at(px, py) = vals[px].t();
      fb.hit[fb.index(px, py)] = 1;
    }
  });
  return fb;
}

/// RGB normal map, (n + 1) / 2 per channel.
template <DdfBackend B>
Framebuffer render_normal(const B& backend, const Camera& cam, const RenderConfig& cfg) {
  Framebuffer fb(cam.width(), cam.height(), 3);
  parallel_for(0, static_cast<std::size_t>(cam.height()), [&](std::size_t row) {
    const int py = static_cast<int>(row);
    const auto hits = detail::trace_row(backend, cam, py);
    for (int px = 0; px < cam.width(); ++px) {
      if (!hits[px]) {
        fb.set_rgb(px, py, cfg.background);
        continue;
      }
      fb.set_rgb(px, py, (hits[px]->normal + Vec3{1, 1, 1}) * 0.5);
      fb.hit[fb.index(px, py)] = 1;
    }
  });
  return fb;
}

/// Decodes a normal-map pixel back to a unit vector.
inline Vec3 decode_normal(const Framebuffer& fb, int x, int y) { return normalized(fb.rgb(x, y) * 2.0 - Vec3{1, 1, 1}); }

/// Lambertian shading: albedo * (intensity * max(0, n . l) + ambient).
template <DdfBackend B>
Framebuffer render_shaded(const B& backend, const Camera& cam, const RenderConfig& cfg) {
  const Vec3 l = normalized(cfg.light_dir);
  Framebuffer fb(cam.width(), cam.height(), 3);
  parallel_for(0, static_cast<std::size_t>(cam.height()), [&](std::size_t row) {
    const int py = static_cast<int>(row);
    const auto hits = detail::trace_row(backend, cam, py);
    for (int px = 0; px < cam.width(); ++px) {
      if (!hits[px]) {
        fb.set_rgb(px, py, cfg.background);
        continue;
      }
      const double v = cfg.albedo * (cfg.light_intensity * std::max(0.0, dot(hits[px]->normal, l)) + cfg.ambient);
      fb.set_rgb(px, py, {v, v, v});
      fb.hit[fb.index(px, py)] = 1;
    }
  });
  return fb;
}

/// Cosine-weighted direction about `n`.
inline Vec3 sample_cosine_hemisphere(const Vec3& n, Rng& rng) {
  const double u1 = uniform01(rng), u2 = uniform01(rng);
  const double r = std::sqrt(u1);
  const double phi = kTwoPi * u2;
  const auto [a, b] = orthonormal_frame(n);
  return normalized(a * (r * std::cos(phi)) + b * (r * std::sin(phi)) + n * std::sqrt(std::max(0.0, 1.0 - u1)));
}

/// Diffuse path tracer over field queries. Each surface interaction moves
/// to x + phi theta, takes the field normal, and continues along a
/// cosine-weighted direction with throughput *= albedo (BRDF * cos / pdf).
/// Escaping rays collect the constant environment radiance; paths that
/// reach `bounces` surface interactions end without emission. Paths of one
/// row advance together so batch-capable backends are queried in bulk.
template <DdfBackend B>
Framebuffer render_path(const B& backend, const Camera& cam, const RenderConfig& cfg) {
  cfg.validate();
  Framebuffer fb(cam.width(), cam.height(), 3);
  parallel_for(0, static_cast<std::size_t>(cam.height()), [&](std::size_t row) {
    const int py = static_cast<int>(row);
    const std::size_t n_paths = static_cast<std::size_t>(cam.width()) * cfg.spp;
    std::vector<Rng> rngs;
    rngs.reserve(n_paths);
    std::vector<OrientedPoint> rays(n_paths);
    std::vector<double> throughput(n_paths, 1.0), radiance(n_paths, 0.0);
    std::vector<std::size_t> active(n_paths);
    for (int px = 0; px < cam.width(); ++px) {
      for (int s = 0; s < cfg.spp; ++s) {
        const std::size_t i = static_cast<std::size_t>(px) * cfg.spp + s;
        rngs.push_back(make_rng(cfg.seed, {static_cast<std::uint64_t>(px), static_cast<std::uint64_t>(py),
                                           static_cast<std::uint64_t>(s)}));
        const double jx = uniform01(rngs[i]) - 0.5, jy = uniform01(rngs[i]) - 0.5;
        rays[i] = make_oriented(cam.position(), cam.ray_direction(px, py, jx, jy));
        active[i] = i;
      }
    }
    std::vector<std::uint8_t> primary_hit(n_paths, 0);
    for (int depth = 0; !active.empty(); ++depth) {
      std::vector<OrientedPoint> batch(active.size());
      for (std::size_t k = 0; k < active.size(); ++k) batch[k] = rays[active[k]];
      std::vector<std::optional<SurfaceHit>> hits(batch.size());
      detail::trace_many(backend, std::span<const OrientedPoint>(batch), std::span<std::optional<SurfaceHit>>(hits));
      std::vector<std::size_t> next;
      for (std::size_t k = 0; k < active.size(); ++k) {
        const std::size_t i = active[k];
        if (!hits[k]) {
          radiance[i] += throughput[i] * cfg.environment;
          continue;
        }
        detail::check_facing(*hits[k], batch[k]);
        if (depth == 0) primary_hit[i] = 1;
        if (depth >= cfg.bounces) continue;
        throughput[i] *= cfg.albedo;
        if (throughput[i] == 0.0) continue;
        const Vec3 q = advance(batch[k], hits[k]->t);
        const Vec3 dir = sample_cosine_hemisphere(hits[k]->normal, rngs[i]);
        rays[i] = make_oriented(q + hits[k]->normal * cfg.ray_offset, dir);
        next.push_back(i);
      }
      active = std::move(next);
    }
    for (int px = 0; px < cam.width(); ++px) {
      double sum = 0.0;
      bool any_hit = false;
      for (int s = 0; s < cfg.spp; ++s) {
        const std::size_t i = static_cast<std::size_t>(px) * cfg.spp + s;
        sum += radiance[i];
        any_hit = any_hit || primary_hit[i];
      }
      const double v = sum / cfg.spp;
      fb.set_rgb(px, py, {v, v, v});
      fb.hit[fb.index(px, py)] = any_hit ? 1 : 0;
    }
  });
  return fb;
}

template <DdfBackend B>
Framebuffer render(const B& backend, const Camera& cam, const RenderConfig& cfg) {
  cfg.validate();
  switch (cfg.mode) {
    case RenderMode::depth: return render_depth(backend, cam, cfg);
    case RenderMode::normal: return render_normal(backend, cam, cfg);
    case RenderMode::shaded: return render_shaded(backend, cam, cfg);
    case RenderMode::path: return render_path(backend, cam, cfg);
  }
  return {};
}

// ---------------------------------------------------------------------------
// Timing harness
// ---------------------------------------------------------------------------

struct TimingRow {
  std::string backend;
  int frame = 0;
  double milliseconds = 0.0;
  bool warmup = false;
};

/// Renders `frames` frames with one backend and records wall-clock time per
/// frame; the first frame is flagged as warm-up.
template <DdfBackend B>
std::vector<TimingRow> bench_backend(const std::string& name, const B& backend, const Camera& cam,
                                     const RenderConfig& cfg, int frames) {
  if (frames < 2) throw Error("bench needs at least 2 frames");
  std::vector<TimingRow> rows;
  for (int f = 0; f < frames; ++f) {
    const auto t0 = std::chrono::steady_clock::now();
    const Framebuffer fb = render(backend, cam, cfg);
    const auto t1 = std::chrono::steady_clock::now();
    (void)fb;
    rows.push_back({name, f, std::chrono::duration<double, std::milli>(t1 - t0).count(), f == 0});
  }
  return rows;
}

inline void write_timing_csv(std::ostream& out, const std::vector<TimingRow>& rows) {
  out << "backend,frame,milliseconds,warmup\n";
  for (const auto& r : rows) out << r.backend << ',' << r.frame << ',' << r.milliseconds << ',' << (r.warmup ? 1 : 0) << '\n';
}

// ---------------------------------------------------------------------------
// Image output
// ---------------------------------------------------------------------------

/// Binary PPM (P6). RGB buffers are clamped to [0, 1] and gamma encoded
/// (2.2); scalar buffers map t linearly to gray with black at 0 and the
/// largest hit value at white, misses drawn white.
inline void write_ppm(std::ostream& out, const Framebuffer& fb) {
  out << "P6\n" << fb.width << ' ' << fb.height << "\n255\n";
  double max_t = 0.0;
  if (fb.channels == 1) {
    for (std::size_t i = 0; i < fb.hit.size(); ++i) {
      if (fb.hit[i]) max_t = std::max(max_t, fb.data[i]);
    }
  }
  auto to_byte = [](double v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  };
  for (int y = 0; y < fb.height; ++y) {
    for (int x = 0; x < fb.width; ++x) {
      unsigned char px[3];
      if (fb.channels == 1) {
        const double g = fb.hit[fb.index(x, y)] ? (max_t > 0.0 ? fb.at(x, y) / max_t : 0.0) : 1.0;
        px[0] = px[1] = px[2] = to_byte(g);
      } else {
        for (int c = 0; c < 3; ++c) px[c] = to_byte(std::pow(std::clamp(fb.at(x, y, c), 0.0, 1.0), 1.0 / 2.2));
      }
      out.write(reinterpret_cast<const char*>(px), 3);
    }
  }
}

/// Portable float map: "Pf" (1 channel) or "PF" (3 channels), little-endian
/// (negative scale), rows stored bottom-to-top.
inline void write_pfm(std::ostream& out, const Framebuffer& fb) {
  out << (fb.channels == 1 ? "Pf" : "PF") << '\n' << fb.width << ' ' << fb.height << "\n-1.0\n";
  for (int y = fb.height - 1; y >= 0; --y) {
    for (int x = 0; x < fb.width; ++x) {
      for (int c = 0; c < fb.channels; ++c) {
        const float v = static_cast<float>(fb.at(x, y, c));
        out.write(reinterpret_cast<const char*>(&v), sizeof(float));
      }
    }
  }
}

inline void save_image(const std::string& path, const Framebuffer& fb) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image '" + path + "'");
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".pfm") {
    write_pfm(out, fb);
  } else {
    write_ppm(out, fb);
  }
}

}  // namespace ddf
