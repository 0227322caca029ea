#include "sonotrack/learn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sonotrack/error.hpp"
#include "sonotrack/scandata.hpp"

namespace sonotrack {

using nn::Matrix;
using nn::Vector;

namespace {

double sign(double v) { return (v > 0.0) - (v < 0.0); }

void check_finite(const LossReport& r, const std::string& where) {
  if (!std::isfinite(r.total)) throw Error(ErrorCode::kDivergence, "non-finite loss " + where);
}

}  // namespace

double pearson_loss(const Matrix& x, const Matrix& y, Matrix* grad_x) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "pearson_loss inputs differ in shape");
  }
  if (x.cols() < 3) throw Error(ErrorCode::kTooShort, "pearson_loss needs at least 3 samples");
  const Eigen::Index dims = x.rows();
  const double root_n = std::sqrt(static_cast<double>(x.cols()));
  if (grad_x) grad_x->setZero(dims, x.cols());

  double loss = 0.0;
  for (Eigen::Index d = 0; d < dims; ++d) {
    const Vector xc = (x.row(d).array() - x.row(d).mean()).transpose();
    const Vector yc = (y.row(d).array() - y.row(d).mean()).transpose();
    const double sx = xc.norm(), sy = yc.norm();
    const double scale_x = x.row(d).cwiseAbs().maxCoeff();
    const double scale_y = y.row(d).cwiseAbs().maxCoeff();
    if (sx / root_n <= 1e-8 * scale_x || sy / root_n <= 1e-8 * scale_y) {
      loss += 1.0;
      continue;
    }
    const double r = xc.dot(yc) / (sx * sy);
    loss += 1.0 - r;
    if (grad_x) {
      grad_x->row(d) = (-(yc / (sx * sy) - r * xc / (sx * sx)) / static_cast<double>(dims)).transpose();
    }
  }
  return loss / static_cast<double>(dims);
}

LossReport offline_loss(const Matrix& theta_hat, const Matrix& theta, Matrix* grad) {
  if (theta_hat.rows() != 6 || theta.rows() != 6 || theta_hat.cols() != theta.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "offline_loss expects two 6 x (N-1) matrices");
  }
  Matrix pearson_grad;
  LossReport r;
  r.pearson = pearson_loss(theta_hat, theta, grad ? &pearson_grad : nullptr);

  const double count = static_cast<double>(theta.size());
  double sum = 0.0;
  if (grad) grad->resize(6, theta.cols());
  for (Eigen::Index j = 0; j < theta.cols(); ++j) {
    for (int k = 0; k < 6; ++k) {
      double e = theta_hat(k, j) - theta(k, j);
      if (k >= 3) e = wrap_degrees(e);
      sum += std::abs(e);
      if (grad) (*grad)(k, j) = sign(e) / count;
    }
  }
  r.mae = sum / count;
  r.total = r.mae + r.pearson;
  if (grad) *grad += pearson_grad;
  return r;
}

Matrix estimated_acceleration(const Matrix& theta_hat, bool unit_variance) {
  if (theta_hat.rows() != 6) throw Error(ErrorCode::kShapeMismatch, "theta must have 6 rows");
  if (theta_hat.cols() < 3) throw Error(ErrorCode::kTooShort, "need at least 3 steps");
  const Eigen::Index m = theta_hat.cols() - 1;
  Matrix a(3, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Mat3 r = euler_to_matrix(EulerAngles(Vec3(theta_hat.col(k).tail<3>())));
    const Vec3 back = -(r.transpose() * Vec3(theta_hat.col(k).head<3>()));
    a.col(k) = back + theta_hat.col(k + 1).head<3>();
  }
  a.colwise() -= a.rowwise().mean();
  if (unit_variance) {
    for (int d = 0; d < 3; ++d) {
      const double sd = std::sqrt(a.row(d).squaredNorm() / static_cast<double>(m));
      if (sd > 0.0) a.row(d) /= sd;
    }
  }
  return a;
}

Matrix estimated_acceleration_backward(const Matrix& theta_hat, const Matrix& upstream) {
  const Eigen::Index m = theta_hat.cols() - 1;
  Matrix db = upstream;
  db.colwise() -= upstream.rowwise().mean();
  Matrix grad = Matrix::Zero(6, theta_hat.cols());
  for (Eigen::Index k = 0; k < m; ++k) {
    const EulerAngles phi(Vec3(theta_hat.col(k).tail<3>()));
    const Mat3 r = euler_to_matrix(phi);
    const auto jac = euler_to_matrix_jacobian(phi);
    const Vec3 t = theta_hat.col(k).head<3>();
    const Vec3 g = db.col(k);
    grad.col(k).head<3>() -= r * g;
    for (int a = 0; a < 3; ++a) grad(3 + a, k) -= t.dot(jac[a] * g);
    grad.col(k + 1).head<3>() += g;
  }
  return grad;
}

LossReport online_loss(const Matrix& theta_hat, const Matrix& accel_imu, const Matrix& euler_imu,
                       Matrix* grad, bool unit_variance) {
  if (theta_hat.rows() != 6 || euler_imu.rows() != 3 || accel_imu.rows() != 3 ||
      euler_imu.cols() != theta_hat.cols() || accel_imu.cols() != theta_hat.cols() - 1) {
    throw Error(ErrorCode::kShapeMismatch,
                "online_loss expects theta 6 x T, IMU acceleration 3 x (T-1), IMU Euler 3 x T");
  }
  LossReport r;
  Matrix da;
  r.accel_pearson = pearson_loss(estimated_acceleration(theta_hat, unit_variance), accel_imu);
  // Pearson is invariant to the positive per-axis scaling of unit_variance, so
  // the gradient is taken at the unnormalized estimate where the chain rule applies.
  if (grad) pearson_loss(estimated_acceleration(theta_hat, false), accel_imu, &da);

  const double count = static_cast<double>(euler_imu.size());
  double sum = 0.0;
  Matrix deuler(3, theta_hat.cols());
  for (Eigen::Index j = 0; j < theta_hat.cols(); ++j) {
    for (int k = 0; k < 3; ++k) {
      const double e = wrap_degrees(theta_hat(3 + k, j) - euler_imu(k, j));
      sum += std::abs(e);
      deuler(k, j) = sign(e) / count;
    }
  }
  r.euler_mae = sum / count;
  r.total = r.accel_pearson + r.euler_mae;
  if (grad) {
    *grad = estimated_acceleration_backward(theta_hat, da);
    grad->bottomRows(3) += deuler;
  }
  return r;
}

Adam::Adam(std::size_t size, double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon),
      m_(Vector::Zero(static_cast<Eigen::Index>(size))),
      v_(Vector::Zero(static_cast<Eigen::Index>(size))) {}

void Adam::step(Vector& params, const Vector& grad, double learning_rate) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  params.array() -= learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + epsilon_);
}

void TrainConfig::check() const {
  if (epochs <= 0 || batch_size <= 0 || !(learning_rate > 0.0) || lr_halving_period <= 0 ||
      augmentations_per_scan < 0 || min_length < 4 || max_stride < 2) {
    throw Error(ErrorCode::kBadConfig, "train config values must be positive");
  }
}

void OnlineConfig::check() const {
  if (iterations < 0 || !(learning_rate > 0.0)) {
    throw Error(ErrorCode::kBadConfig, "online config needs iterations >= 0 and learning_rate > 0");
  }
}

double learning_rate_at(const TrainConfig& cfg, int epoch) {
  return cfg.learning_rate * std::pow(0.5, epoch / cfg.lr_halving_period);
}

ScanSequence random_augmentation(const ScanSequence& scan, const TrainConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ScanSequence out = scan;
  AugmentParams params;
  params.min_length = std::min(cfg.min_length, scan.size());
  if (u(rng) < cfg.p_interval) {
    const int stride = std::uniform_int_distribution<int>(2, cfg.max_stride)(rng);
    if ((out.size() - 1) / stride + 1 >= params.min_length) {
      params.stride = stride;
      out = augment(out, AugmentKind::kInterval, params, rng());
      params.stride.reset();
    }
  }
  if (u(rng) < cfg.p_subsequence) out = augment(out, AugmentKind::kSubsequence, params, rng());
  if (u(rng) < cfg.p_inversion && out.gt) out = augment(out, AugmentKind::kInversion, params, rng());
  return out;
}

std::vector<EpochRecord> train(MotionEstimator& model, const std::vector<ScanSequence>& scans,
                               const TrainConfig& cfg,
                               const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.check();
  if (scans.empty()) throw Error(ErrorCode::kNoGroundTruth, "no training scans");
  for (std::size_t i = 0; i < scans.size(); ++i) {
    if (!scans[i].gt) {
      throw Error(ErrorCode::kNoGroundTruth, "training scan " + std::to_string(i) + " has no ground truth");
    }
  }

  std::mt19937_64 rng(cfg.seed);
  Adam adam(model.params().size());
  Vector last_good = model.params().values;
  std::vector<EpochRecord> history;
  const int per_scan = std::max(cfg.augmentations_per_scan, 1);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate_at(cfg, epoch);
    std::vector<std::pair<std::size_t, std::uint64_t>> plan;
    for (std::size_t s = 0; s < scans.size(); ++s) {
      for (int a = 0; a < per_scan; ++a) plan.emplace_back(s, rng());
    }
    std::shuffle(plan.begin(), plan.end(), rng);

    EpochRecord record;
    record.epoch = epoch;
    record.learning_rate = lr;
    Vector accumulated = Vector::Zero(static_cast<Eigen::Index>(model.params().size()));
    int in_batch = 0;
    for (std::size_t p = 0; p < plan.size(); ++p) {
      const auto& [scan_index, aug_seed] = plan[p];
      const ScanSequence seq = cfg.augmentations_per_scan == 0
                                   ? scans[scan_index]
                                   : random_augmentation(scans[scan_index], cfg, aug_seed);
      const ScanInputs inputs = make_inputs(seq);
      const Matrix target = to_matrix(seq.gt->relative());
      const Tape tape = model.forward(inputs);
      Matrix dtheta;
      const LossReport loss = offline_loss(tape.state.theta, target, &dtheta);
      if (!std::isfinite(loss.total)) {
        model.set_parameters(last_good);
        throw Error(ErrorCode::kDivergence, "non-finite training loss at epoch " + std::to_string(epoch));
      }
      record.loss.total += loss.total;
      record.loss.mae += loss.mae;
      record.loss.pearson += loss.pearson;
      accumulated += model.backward(tape, dtheta).values;
      if (++in_batch == cfg.batch_size || p + 1 == plan.size()) {
        adam.step(model.mutable_params().values, accumulated / in_batch, lr);
        accumulated.setZero();
        in_batch = 0;
      }
    }
    const double n = static_cast<double>(plan.size());
    record.loss.total /= n;
    record.loss.mae /= n;
    record.loss.pearson /= n;
    if (!model.params().values.allFinite()) {
      model.set_parameters(last_good);
      throw Error(ErrorCode::kDivergence, "non-finite parameters after epoch " + std::to_string(epoch));
    }
    last_good = model.params().values;
    history.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  return history;
}

std::vector<LossReport> adapt_online(MotionEstimator& model, const ScanSequence& scan,
                                     const OnlineConfig& cfg,
                                     const std::function<void(int, const MotionEstimator&)>& on_iteration) {
  cfg.check();
  const ScanInputs inputs = make_inputs(scan);
  const Vector start = model.params().values;
  const std::vector<std::string> frozen =
      cfg.policy == OnlineConfig::Policy::kFreezeEncoder ? std::vector<std::string>{"encoder"}
                                                         : std::vector<std::string>{};
  Adam adam(model.params().size());
  std::vector<LossReport> history;
  for (int it = 0; it <= cfg.iterations; ++it) {
    const Tape tape = model.forward(inputs);
    Matrix dtheta;
    const LossReport loss = online_loss(tape.state.theta, inputs.accel, inputs.euler, &dtheta,
                                        cfg.unit_variance);
    history.push_back(loss);
    if (on_iteration) on_iteration(it, model);
    try {
      check_finite(loss, "at online iteration " + std::to_string(it));
    } catch (const Error&) {
      model.set_parameters(start);
      throw;
    }
    if (it == cfg.iterations) break;
    const nn::ParamVector grad = model.backward(tape, dtheta, frozen);
    adam.step(model.mutable_params().values, grad.values, cfg.learning_rate);
  }
  return history;
}

}  // namespace sonotrack
