#pragma once

// Fully connected network over oriented points with weight normalization,
// ReLU hidden activations, inverted dropout, reverse-mode gradients with
// respect to both parameters and inputs, and an Adam optimizer.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ddf/field.hpp"
#include "ddf/rng.hpp"
#include "ddf/sampler.hpp"

namespace ddf {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr int kInputDim = 5;

/// Network input for an oriented point: position as-is (already in the
/// normalized box), azimuth mapped [0, 2pi) -> [-1, 1), polar [0, pi] -> [-1, 1].
inline std::array<double, kInputDim> encode_input(const Vec3& x, const Direction2& d) {
  return {x.x, x.y, x.z, d.theta0 / kPi - 1.0, 2.0 * d.theta1 / kPi - 1.0};
}

/// d(encoded)/d(raw) for each input component.
inline constexpr std::array<double, kInputDim> kEncodeScale = {1.0, 1.0, 1.0, 1.0 / kPi, 2.0 / kPi};

/// clamp(x, delta) = min(delta, max(-delta, x)); +inf maps to delta.
inline double clamp_delta(double x, double delta) { return std::min(delta, std::max(-delta, x)); }

enum class Mode { train, eval };

/// Weight-normalized MLP. Layer l maps width[l] -> width[l+1] with
/// W = diag(g) * V / ||V||_row. All parameters live in one flat vector laid
/// out layer-major as (V row-major, g, b).
class MlpModel {
public:
  MlpModel() = default;

  /// `widths` includes the input (5) and output (1) sizes.
  MlpModel(std::vector<int> widths, double dropout, double delta) : widths_(std::move(widths)), dropout_(dropout), delta_(delta) {
    if (widths_.size() < 2 || widths_.front() != kInputDim || widths_.back() != 1) {
      throw Error("network widths must start at 5 and end at 1");
    }
    for (int w : widths_) {
      if (w < 1) throw Error("layer widths must be positive");
    }
    if (dropout_ < 0.0 || dropout_ >= 1.0) throw Error("dropout probability must be in [0, 1)");
    if (!(delta_ > 0.0)) throw Error("clamp parameter delta must be positive");
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      offsets_.push_back(off);
      off += static_cast<std::size_t>(widths_[l + 1]) * (widths_[l] + 2);
    }
    params_ = Vector::Zero(static_cast<Eigen::Index>(off));
  }

  /// Hidden layers of equal width.
  static MlpModel with_hidden(int layers, int width, double dropout, double delta) {
    std::vector<int> w{kInputDim};
    for (int i = 0; i < layers; ++i) w.push_back(width);
    w.push_back(1);
    return MlpModel(std::move(w), dropout, delta);
  }

  /// V, b ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); g = ||V row|| so W starts
  /// equal to V. The output layer starts with zero bias and a small gain so
  /// initial predictions sit inside the clamp band, where the loss has a
  /// gradient.
  static constexpr double kOutputGain = 0.1;

  void initialize(std::uint64_t seed) {
    Rng rng = make_rng(seed, {0x1417ull});
    for (std::size_t l = 0; l < num_layers(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
      auto V = v(l);
      for (Eigen::Index i = 0; i < V.rows(); ++i) {
        for (Eigen::Index j = 0; j < V.cols(); ++j) V(i, j) = uniform(rng, -bound, bound);
      }
      g(l) = V.rowwise().norm();
      auto B = b(l);
      for (Eigen::Index i = 0; i < B.size(); ++i) B(i) = uniform(rng, -bound, bound);
      if (l + 1 == num_layers()) {
        g(l) *= kOutputGain;
        B.setZero();
      }
    }
  }

  std::size_t num_layers() const { return widths_.size() - 1; }
  const std::vector<int>& widths() const { return widths_; }
  double dropout() const { return dropout_; }
  double delta() const { return delta_; }
  void set_dropout(double p) { dropout_ = p; }

  Vector& params() { return params_; }
  const Vector& params() const { return params_; }

  Eigen::Map<RowMatrix> v(std::size_t l) { return {params_.data() + offsets_[l], widths_[l + 1], widths_[l]}; }
  Eigen::Map<const RowMatrix> v(std::size_t l) const { return {params_.data() + offsets_[l], widths_[l + 1], widths_[l]}; }
  Eigen::Map<Vector> g(std::size_t l) { return {params_.data() + g_offset(l), widths_[l + 1]}; }
  Eigen::Map<const Vector> g(std::size_t l) const { return {params_.data() + g_offset(l), widths_[l + 1]}; }
  Eigen::Map<Vector> b(std::size_t l) { return {params_.data() + g_offset(l) + widths_[l + 1], widths_[l + 1]}; }
  Eigen::Map<const Vector> b(std::size_t l) const {
    return {params_.data() + g_offset(l) + widths_[l + 1], widths_[l + 1]};
  }

  std::size_t offset(std::size_t l) const { return offsets_[l]; }
  std::size_t g_offset(std::size_t l) const {
    return offsets_[l] + static_cast<std::size_t>(widths_[l + 1]) * widths_[l];
  }

  /// Effective weights g * V / ||V||, row-wise.
  RowMatrix weight(std::size_t l) const {
    const auto V = v(l);
    const Vector scale = g(l).array() / V.rowwise().norm().array();
    return scale.asDiagonal() * V;
  }

private:
  std::vector<int> widths_;
  std::vector<std::size_t> offsets_;
  double dropout_ = 0.0;
  double delta_ = 0.1;
  Vector params_;
};

/// Activations and masks kept for the backward pass.
struct ForwardTape {
  std::vector<RowMatrix> weights;        // effective W per layer
  std::vector<Matrix> activations;       // a_0 = input, a_l = post-activation of layer l
  std::vector<Matrix> pre;               // z_l per layer
  std::vector<Matrix> masks;             // scaled dropout masks per hidden layer (empty in eval)
};

inline std::vector<RowMatrix> effective_weights(const MlpModel& m) {
  std::vector<RowMatrix> w;
  for (std::size_t l = 0; l < m.num_layers(); ++l) w.push_back(m.weight(l));
  return w;
}

/// Batched forward over columns of `inputs` (5 x N, already encoded).
/// Train mode applies inverted dropout drawn from `rng`. `cached` may hold
/// precomputed effective weights to skip the normalization.
inline Eigen::RowVectorXd forward_encoded(const MlpModel& m, const Matrix& inputs, Mode mode = Mode::eval,
                                          Rng* rng = nullptr, ForwardTape* tape = nullptr,
                                          const std::vector<RowMatrix>* cached = nullptr) {
  const bool drop = mode == Mode::train && m.dropout() > 0.0;
  if (drop && rng == nullptr) throw Error("train-mode forward with dropout needs an RNG");
  Matrix a = inputs;
  if (tape) {
    tape->weights.clear();
    tape->activations.clear();
    tape->pre.clear();
    tape->masks.clear();
    tape->activations.push_back(a);
  }
  const std::size_t L = m.num_layers();
  for (std::size_t l = 0; l < L; ++l) {
    RowMatrix computed;
    if (!cached) computed = m.weight(l);
    const RowMatrix& W = cached ? (*cached)[l] : computed;
    Matrix z = W * a;
    z.colwise() += m.b(l);
    if (tape) {
      tape->weights.push_back(W);
      tape->pre.push_back(z);
    }
    if (l + 1 == L) {
      a = std::move(z);
      break;
    }
    a = z.cwiseMax(0.0);
    if (drop) {
      const double keep = 1.0 - m.dropout();
      Matrix mask(a.rows(), a.cols());
      for (Eigen::Index j = 0; j < mask.cols(); ++j) {
        for (Eigen::Index i = 0; i < mask.rows(); ++i) mask(i, j) = uniform01(*rng) < keep ? 1.0 / keep : 0.0;
      }
      a = a.cwiseProduct(mask);
      if (tape) tape->masks.push_back(std::move(mask));
    }
    if (tape) tape->activations.push_back(a);
  }
  return a.row(0);
}

inline Matrix encode_batch(std::span<const OrientedPoint> pts) {
  Matrix in(kInputDim, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto e = encode_input(pts[i].position, pts[i].direction);
    for (int k = 0; k < kInputDim; ++k) in(k, static_cast<Eigen::Index>(i)) = e[k];
  }
  return in;
}

/// Scalar prediction for one oriented point.
inline double forward(const MlpModel& m, const Vec3& x, const Direction2& d, Mode mode = Mode::eval,
                      Rng* rng = nullptr) {
  const auto e = encode_input(x, d);
  Matrix in(kInputDim, 1);
  for (int k = 0; k < kInputDim; ++k) in(k, 0) = e[k];
  return forward_encoded(m, in, mode, rng)(0);
}

/// Backward pass from per-column output gradients `dout` (1 x N).
/// Accumulates parameter gradients into `grad` (same layout as params)
/// when non-null and returns d(sum of dout * out)/d(inputs) (5 x N).
inline Matrix backward(const MlpModel& m, const ForwardTape& tape, const Eigen::RowVectorXd& dout, Vector* grad) {
  const std::size_t L = m.num_layers();
  Matrix delta = dout;  // dL/dz for the current layer
  for (std::size_t li = L; li-- > 0;) {
    const Matrix& a_in = tape.activations[li];
    if (grad) {
      const Matrix dW = delta * a_in.transpose();  // out x in
      const Vector db = delta.rowwise().sum();
      const auto V = m.v(li);
      const Vector vnorm = V.rowwise().norm();
      const auto gvec = m.g(li);
      // W = g v / |v|:  dg = dW . v / |v|,  dv = (g / |v|) (dW - dg v / |v|)
      Vector dg(V.rows());
      RowMatrix dV(V.rows(), V.cols());
      for (Eigen::Index r = 0; r < V.rows(); ++r) {
        const double inv = 1.0 / vnorm(r);
        dg(r) = dW.row(r).dot(V.row(r)) * inv;
        dV.row(r) = (gvec(r) * inv) * (dW.row(r) - dg(r) * inv * V.row(r));
      }
      Eigen::Map<RowMatrix>(grad->data() + m.offset(li), V.rows(), V.cols()) += dV;
      grad->segment(static_cast<Eigen::Index>(m.g_offset(li)), V.rows()) += dg;
      grad->segment(static_cast<Eigen::Index>(m.g_offset(li)) + V.rows(), V.rows()) += db;
    }
    Matrix da = tape.weights[li].transpose() * delta;  // d/d a_{li}
    if (li == 0) return da;
    if (!tape.masks.empty()) da = da.cwiseProduct(tape.masks[li - 1]);
    delta = da.cwiseProduct((tape.pre[li - 1].array() > 0.0).cast<double>().matrix());
  }
  return {};
}

/// Gradient of the eval-mode output w.r.t. the raw inputs
/// (x, y, z, theta0, theta1).
inline std::array<double, kInputDim> input_gradient(const MlpModel& m, const Vec3& x, const Direction2& d) {
  const auto e = encode_input(x, d);
  Matrix in(kInputDim, 1);
  for (int k = 0; k < kInputDim; ++k) in(k, 0) = e[k];
  ForwardTape tape;
  forward_encoded(m, in, Mode::eval, nullptr, &tape);
  const Matrix gin = backward(m, tape, Eigen::RowVectorXd::Ones(1), nullptr);
  std::array<double, kInputDim> out{};
  for (int k = 0; k < kInputDim; ++k) out[k] = gin(k, 0) * kEncodeScale[k];
  return out;
}

/// Batched eval-mode input gradients; returns outputs and a 5 x N gradient
/// matrix w.r.t. raw inputs.
inline std::pair<Eigen::RowVectorXd, Matrix> input_gradient_batch(const MlpModel& m, std::span<const OrientedPoint> pts,
                                                                  const std::vector<RowMatrix>* cached = nullptr) {
  ForwardTape tape;
  Eigen::RowVectorXd out = forward_encoded(m, encode_batch(pts), Mode::eval, nullptr, &tape, cached);
  Matrix gin = backward(m, tape, Eigen::RowVectorXd::Ones(static_cast<Eigen::Index>(pts.size())), nullptr);
  for (int k = 0; k < kInputDim; ++k) gin.row(k) *= kEncodeScale[k];
  return {std::move(out), std::move(gin)};
}

// ---------------------------------------------------------------------------
// Loss: mean |clamp(y, delta) - clamp(y_pred, delta)|, miss targets y = +inf.
// ---------------------------------------------------------------------------

struct LossResult {
  double loss = 0.0;
  Vector grad;  // d loss / d params
};

/// With `restore_band`, predictions that left the band while their target
/// lies inside it are pulled back by hinge terms max(0, pred - delta) and
/// max(0, -delta - pred); the plain clamp loss has no gradient there, so a
/// region that overshoots past delta would otherwise never recover.
inline LossResult loss_and_gradient(const MlpModel& m, std::span<const FieldSample> batch, double delta,
                                    Mode mode = Mode::eval, Rng* rng = nullptr, bool restore_band = false) {
  if (batch.empty()) throw Error("loss needs a non-empty batch");
  const auto n = static_cast<Eigen::Index>(batch.size());
  Matrix in(kInputDim, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto e = encode_input(batch[i].position, batch[i].direction);
    for (int k = 0; k < kInputDim; ++k) in(k, i) = e[k];
  }
  ForwardTape tape;
  const Eigen::RowVectorXd pred = forward_encoded(m, in, mode, rng, &tape);
  Eigen::RowVectorXd dout(n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = clamp_delta(batch[i].target.t(), delta);
    const double yp = clamp_delta(pred(i), delta);
    const double diff = yp - y;
    total += std::abs(diff);
    // d|c(yp) - c(y)|/d pred: sign(diff) inside the band, 0 outside or at a kink.
    const bool inside = pred(i) > -delta && pred(i) < delta;
    double d = (inside && diff != 0.0) ? (diff > 0.0 ? 1.0 : -1.0) : 0.0;
    if (restore_band) {
      if (y < delta && pred(i) > delta) {
        total += pred(i) - delta;
        d = 1.0;
      } else if (pred(i) < -delta) {
        total += -delta - pred(i);
        d = -1.0;
      }
    }
    dout(i) = d / static_cast<double>(n);
  }
  LossResult r;
  r.loss = total / static_cast<double>(n);
  r.grad = Vector::Zero(m.params().size());
  backward(m, tape, dout, &r.grad);
  return r;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  Vector m1, m2;

  explicit AdamState(std::size_t n = 0, double lr_ = 1e-4) : lr(lr_), m1(Vector::Zero(static_cast<Eigen::Index>(n))), m2(Vector::Zero(static_cast<Eigen::Index>(n))) {}
};

/// One bias-corrected Adam update in place.
inline void adam_step(Eigen::Ref<Vector> params, const Vector& grads, AdamState& st) {
  if (grads.size() != params.size() || st.m1.size() != params.size() || st.m2.size() != params.size()) {
    throw Error("adam_step: shape mismatch between parameters, gradients, and optimizer state");
  }
  ++st.step;
  st.m1 = st.beta1 * st.m1 + (1.0 - st.beta1) * grads;
  st.m2 = st.beta2 * st.m2 + (1.0 - st.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  params.array() -= st.lr * (st.m1.array() / c1) / ((st.m2.array() / c2).sqrt() + st.eps);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  int hidden_layers = 4;
  int width = 128;
  double dropout = 0.0;
  double delta = 0.1;
  double lr = 3e-3;
  std::size_t batch_size = 1024;
  std::size_t iterations = 2000;
  std::uint64_t seed = 1;
  std::size_t log_every = 0;  // 0 = silent
  bool restore_band = true;   // hinge terms that revive predictions stuck outside the band
  double lr_final = 1e-5;     // >= 0: cosine decay from lr to lr_final; < 0: constant lr
  double band_fraction = 0.25; // share of each batch drawn from targets below delta (0 = uniform)

  double lr_at(std::size_t it) const {
    if (lr_final < 0.0 || iterations <= 1) return lr;
    const double f = static_cast<double>(it) / static_cast<double>(iterations - 1);
    return lr_final + 0.5 * (lr - lr_final) * (1.0 + std::cos(kPi * f));
  }

  void validate() const {
    if (!(delta > 0.0)) throw Error("delta must be positive");
    if (batch_size < 1) throw Error("batch size must be >= 1");
    if (hidden_layers < 0 || width < 1) throw Error("bad network shape");
    if (lr < 0.0) throw Error("learning rate must be non-negative");
    if (!(band_fraction >= 0.0 && band_fraction <= 1.0)) throw Error("band fraction must be in [0, 1]");
  }
};

struct TrainResult {
  MlpModel model;
  std::vector<double> loss_history;  // one entry per iteration
};

/// Mini-batch Adam on the clamp loss. Batches are drawn from a seeded
/// per-epoch shuffle; the run is fully deterministic for a given seed.
inline TrainResult train(std::span<const FieldSample> data, const TrainConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  if (data.empty()) throw DataError("cannot train on an empty dataset");
  TrainResult r{MlpModel::with_hidden(cfg.hidden_layers, cfg.width, cfg.dropout, cfg.delta), {}};
  r.model.initialize(cfg.seed);
  AdamState opt(static_cast<std::size_t>(r.model.params().size()), cfg.lr);
  Rng rng = make_rng(cfg.seed, {0x7A41Eull});
  // Two shuffled streams: in-band targets and everything else.
  struct Stream {
    std::vector<std::size_t> perm;
    std::size_t cursor = 0;
  };
  std::array<Stream, 2> streams;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool band = cfg.band_fraction > 0.0 && data[i].target.hit() && data[i].target.t() < cfg.delta;
    streams[band ? 1 : 0].perm.push_back(i);
  }
  for (auto& st : streams) st.cursor = st.perm.size();
  if (streams[1].perm.empty() || streams[0].perm.empty()) {
    for (std::size_t i : streams[1].perm) streams[0].perm.push_back(i);
    std::sort(streams[0].perm.begin(), streams[0].perm.end());
    streams[1].perm.clear();
    streams[0].cursor = streams[0].perm.size();
  }
  auto draw = [&](Stream& st) {
    if (st.cursor == st.perm.size()) {
      for (std::size_t i = st.perm.size(); i > 1; --i) std::swap(st.perm[i - 1], st.perm[uniform_index(rng, i)]);
      st.cursor = 0;
    }
    return st.perm[st.cursor++];
  };
  const std::size_t bsize = std::min(cfg.batch_size, data.size());
  const std::size_t n_band =
      streams[1].perm.empty() ? 0 : static_cast<std::size_t>(std::llround(cfg.band_fraction * static_cast<double>(bsize)));
  std::vector<FieldSample> batch;
  r.loss_history.reserve(cfg.iterations);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    batch.clear();
    for (std::size_t k = 0; k < bsize; ++k) batch.push_back(data[draw(streams[k < n_band ? 1 : 0])]);
    LossResult lr = loss_and_gradient(r.model, batch, cfg.delta, Mode::train, &rng, cfg.restore_band);
    if (!std::isfinite(lr.loss) || !lr.grad.allFinite()) {
      double lo = kInf, hi = -kInf;
      std::size_t misses = 0;
      for (const auto& s : batch) {
        if (!s.target.hit()) {
          ++misses;
          continue;
        }
        lo = std::min(lo, s.target.t());
        hi = std::max(hi, s.target.t());
      }
      throw NumericError("non-finite loss at iteration " + std::to_string(it) + " (batch of " +
                         std::to_string(batch.size()) + ", " + std::to_string(misses) + " misses, finite targets in [" +
                         std::to_string(lo) + ", " + std::to_string(hi) + "])");
    }
    r.loss_history.push_back(lr.loss);
    opt.lr = cfg.lr_at(it);
    adam_step(r.model.params(), lr.grad, opt);
    if (log && cfg.log_every > 0 && (it + 1) % cfg.log_every == 0) {
      *log << "iter " << (it + 1) << " loss " << lr.loss << '\n';
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoint: "DDFN" | version u32 | count u32 | widths u32[count] | delta f64
//             | dropout f64 | params f64[...] (V, g, b per layer, layer-major)
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_model(std::ostream& out, const MlpModel& m) {
  out.write("DDFN", 4);
  binio::put<std::uint32_t>(out, kCheckpointVersion);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.widths().size()));
  for (int w : m.widths()) binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(w));
  binio::put(out, m.delta());
  binio::put(out, m.dropout());
  out.write(reinterpret_cast<const char*>(m.params().data()), static_cast<std::streamsize>(m.params().size() * sizeof(double)));
}

inline void save_model(const std::string& path, const MlpModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  save_model(out, m);
  if (!out) throw DataError("write failed for checkpoint '" + path + "'");
}

inline MlpModel load_model(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4)) throw DataError("truncated checkpoint header");
  if (std::string_view(magic, 4) != "DDFN") throw DataError("not a checkpoint file (bad magic)");
  const auto version = binio::get<std::uint32_t>(in, "checkpoint version");
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto count = binio::get<std::uint32_t>(in, "layer count");
  if (count < 2 || count > 1024) throw DataError("implausible layer count " + std::to_string(count));
  std::vector<int> widths;
  for (std::uint32_t i = 0; i < count; ++i) widths.push_back(static_cast<int>(binio::get<std::uint32_t>(in, "widths")));
  const double delta = binio::get<double>(in, "delta");
  const double dropout = binio::get<double>(in, "dropout");
  MlpModel m;
  try {
    m = MlpModel(widths, dropout, delta);
  } catch (const Error& e) {
    throw DataError(std::string("checkpoint dimension mismatch: ") + e.what());
  }
  const auto bytes = static_cast<std::streamsize>(m.params().size() * sizeof(double));
  if (!in.read(reinterpret_cast<char*>(m.params().data()), bytes)) throw DataError("truncated checkpoint parameters");
  return m;
}

inline MlpModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  return load_model(in);
}

}  // namespace ddf
