#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "ddf/field.hpp"
#include "ddf/mlp.hpp"

namespace ddf {

/// DDF backend over a trained network.
///
/// The network is supervised only within delta of the surface, so a
/// prediction at or above 0.98 delta means "nothing within reach". With
/// marching enabled, rays are clipped to the field bounds and advanced in
/// steps of 0.9 delta until a prediction falls below that threshold or the
/// ray leaves the bounds; without marching only the origin is probed.
class NeuralField {
public:
  static constexpr double kMissFraction = 0.98;
  static constexpr double kStepFraction = 0.9;

  NeuralField(MlpModel model, const Aabb& bounds, bool march = true)
      : model_(std::make_shared<const MlpModel>(std::move(model))),
        weights_(std::make_shared<const std::vector<RowMatrix>>(effective_weights(*model_))),
        bounds_(bounds),
        march_(march) {}

  /// Same network, different marching mode (shares parameters).
  NeuralField with_march(bool march) const {
    NeuralField f = *this;
    f.march_ = march;
    return f;
  }

  const MlpModel& model() const { return *model_; }
  Aabb bounds() const { return bounds_; }
  double delta() const { return model_->delta(); }
  double miss_threshold() const { return kMissFraction * delta(); }
  bool marching() const { return march_; }

  /// Raw network output at an oriented point.
  double predict(const OrientedPoint& p) const {
    const auto e = encode_input(p.position, p.direction);
    Matrix in(kInputDim, 1);
    for (int k = 0; k < kInputDim; ++k) in(k, 0) = e[k];
    return forward_encoded(*model_, in, Mode::eval, nullptr, nullptr, weights_.get())(0);
  }

  void query_batch(std::span<const OrientedPoint> pts, std::span<DdfValue> out) const {
    std::vector<double> probe(pts.size());
    march_batch(pts, out, probe);
  }

  DdfValue query(const OrientedPoint& p) const {
    DdfValue v = DdfValue::miss();
    query_batch(std::span<const OrientedPoint>(&p, 1), std::span<DdfValue>(&v, 1));
    return v;
  }

  /// Distances plus normals n = kappa * grad_x / |grad_x|, with the
  /// gradient taken at the probe position that detected the surface.
  void trace_batch(std::span<const OrientedPoint> pts, std::span<std::optional<SurfaceHit>> out) const {
    std::vector<DdfValue> vals(pts.size(), DdfValue::miss());
    std::vector<double> probe(pts.size());
    march_batch(pts, vals, probe);
    std::vector<OrientedPoint> at;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      out[i].reset();
      if (!vals[i].hit()) continue;
      at.push_back({advance(pts[i], probe[i]), pts[i].direction});
      idx.push_back(i);
    }
    if (at.empty()) return;
    const auto [pred, grad] = input_gradient_batch(*model_, at, weights_.get());
    (void)pred;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const std::size_t i = idx[k];
      const Vec3 gx{grad(0, static_cast<Eigen::Index>(k)), grad(1, static_cast<Eigen::Index>(k)),
                    grad(2, static_cast<Eigen::Index>(k))};
      const double gn = norm(gx);
      const Vec3 view = pts[i].direction_vec();
      SurfaceHit h;
      h.t = vals[i].t();
      if (gn < 1e-12) {
        h.normal = -view;
        h.degenerate_normal = true;
      } else {
        h.normal = face_against(gx / gn, view);
      }
      out[i] = h;
    }
  }

  std::optional<SurfaceHit> trace(const OrientedPoint& p) const {
    std::optional<SurfaceHit> h;
    trace_batch(std::span<const OrientedPoint>(&p, 1), std::span<std::optional<SurfaceHit>>(&h, 1));
    return h;
  }

  Vec3 normal(const OrientedPoint& p) const {
    const auto h = trace(p);
    if (!h) throw Error("no surface in direction");
    if (h->degenerate_normal) throw NumericError("degenerate gradient");
    return h->normal;
  }

private:
  void march_batch(std::span<const OrientedPoint> pts, std::span<DdfValue> out, std::vector<double>& s) const {
    const double thr = miss_threshold();
    const double step = kStepFraction * delta();
    std::vector<double> exit(pts.size());
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      out[i] = DdfValue::miss();
      if (!march_) {
        s[i] = 0.0;
        exit[i] = 0.0;
        active.push_back(i);
        continue;
      }
      const Vec3 v = pts[i].direction_vec();
      const Vec3 inv{1.0 / v.x, 1.0 / v.y, 1.0 / v.z};
      double t0, t1;
      if (!bounds_.ray_interval(pts[i].position, inv, 0.0, kInf, t0, t1)) continue;
      s[i] = t0;
      exit[i] = t1;
      active.push_back(i);
    }
    while (!active.empty()) {
      Matrix in(kInputDim, static_cast<Eigen::Index>(active.size()));
      for (std::size_t k = 0; k < active.size(); ++k) {
        const std::size_t i = active[k];
        const auto e = encode_input(advance(pts[i], s[i]), pts[i].direction);
        for (int c = 0; c < kInputDim; ++c) in(c, static_cast<Eigen::Index>(k)) = e[c];
      }
      const Eigen::RowVectorXd pred = forward_encoded(*model_, in, Mode::eval, nullptr, nullptr, weights_.get());
      std::vector<std::size_t> next;
      for (std::size_t k = 0; k < active.size(); ++k) {
        const std::size_t i = active[k];
        const double y = pred(static_cast<Eigen::Index>(k));
        if (y < thr) {
          out[i] = DdfValue::at(s[i] + std::max(0.0, y));
          continue;
        }
        s[i] += step;
        if (march_ && s[i] <= exit[i]) next.push_back(i);
      }
      active = std::move(next);
    }
  }

  std::shared_ptr<const MlpModel> model_;
  std::shared_ptr<const std::vector<RowMatrix>> weights_;
  Aabb bounds_;
  bool march_ = true;
};

static_assert(BatchDdfBackend<NeuralField>);
static_assert(DdfBackend<OracleField>);
static_assert(DdfBackend<BruteForceField>);

/// Residual of the gradient-consistency identity on the network itself:
/// the angular input gradient applied to the angle change of a small
/// rotation theta' = theta + omega x theta, against
/// phi * (grad_x phi . (theta' - theta)). Diagnostic only.
inline double check_gradient_consistency(const NeuralField& field, const OrientedPoint& p, const Vec3& omega) {
  const Vec3 v = p.direction_vec();
  const Vec3 v2 = normalized(v + cross(omega, v));
  const Direction2 d2 = vec_to_dir(v2);
  double d0 = d2.theta0 - p.direction.theta0;
  if (d0 > kPi) d0 -= kTwoPi;
  if (d0 < -kPi) d0 += kTwoPi;
  const double d1 = d2.theta1 - p.direction.theta1;
  const auto g = input_gradient(field.model(), p.position, p.direction);
  const double phi = std::max(0.0, field.predict(p));
  const double lhs = g[3] * d0 + g[4] * d1;
  const double rhs = phi * dot(Vec3{g[0], g[1], g[2]}, v2 - v);
  return std::abs(lhs - rhs);
}

}  // namespace ddf
