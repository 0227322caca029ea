#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sonotrack/estimator.hpp"
#include "sonotrack/scan.hpp"

namespace sonotrack {

/// Offline terms (mae, pearson) or online terms (accel_pearson, euler_mae);
/// total is always the sum of the terms that apply.
struct LossReport {
  double total = 0.0;
  double mae = 0.0;
  double pearson = 0.0;
  double accel_pearson = 0.0;
  double euler_mae = 0.0;
};

/// Mean over rows of (1 - r), where r is the Pearson correlation of row d of
/// x with row d of y across columns. A row whose standard deviation is at most
/// 1e-8 times its largest magnitude counts as uncorrelated (contributes 1, no
/// gradient). Throws kShapeMismatch or kTooShort (< 3 columns).
double pearson_loss(const nn::Matrix& x, const nn::Matrix& y, nn::Matrix* grad_x = nullptr);

/// Mean absolute error over all 6(N-1) entries (angle residuals wrapped)
/// plus pearson_loss(theta_hat, theta).
LossReport offline_loss(const nn::Matrix& theta_hat, const nn::Matrix& theta,
                        nn::Matrix* grad = nullptr);

/// Centroid acceleration implied by consecutive steps, up to the dt^2 factor:
/// column k is t(inverse(step k)) + t(step k+1), mean-removed per axis.
/// With unit_variance each axis is also scaled to unit standard deviation.
/// Throws kTooShort for fewer than 3 steps.
nn::Matrix estimated_acceleration(const nn::Matrix& theta_hat, bool unit_variance = false);

/// Gradient of a loss through estimated_acceleration (without normalization).
nn::Matrix estimated_acceleration_backward(const nn::Matrix& theta_hat, const nn::Matrix& upstream);

/// pearson_loss(estimated_acceleration(theta_hat), accel_imu) plus the mean
/// absolute wrapped difference between the predicted and IMU Euler angles.
LossReport online_loss(const nn::Matrix& theta_hat, const nn::Matrix& accel_imu,
                       const nn::Matrix& euler_imu, nn::Matrix* grad = nullptr,
                       bool unit_variance = false);

class Adam {
 public:
  explicit Adam(std::size_t size, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);
  void step(nn::Vector& params, const nn::Vector& grad, double learning_rate);
  int steps_taken() const { return t_; }

 private:
  double beta1_, beta2_, epsilon_;
  nn::Vector m_, v_;
  int t_ = 0;
};

struct TrainConfig {
  int epochs = 200;
  int batch_size = 1;
  double learning_rate = 1e-4;
  int lr_halving_period = 30;
  int augmentations_per_scan = 40;  // 0 trains on the raw scans
  std::uint64_t seed = 0;
  // augmentation policy for each generated sequence
  int min_length = 8;
  double p_subsequence = 0.8;
  double p_interval = 0.3;
  double p_inversion = 0.3;
  int max_stride = 2;

  void check() const;
};

struct EpochRecord {
  int epoch = 0;
  double learning_rate = 0.0;
  LossReport loss;  // mean over the epoch's sequences
};

double learning_rate_at(const TrainConfig& cfg, int epoch);

/// One randomly augmented copy of a scan, following the config's policy.
ScanSequence random_augmentation(const ScanSequence& scan, const TrainConfig& cfg, std::uint64_t seed);

/// Trains in place. Throws kNoGroundTruth if any scan lacks ground truth and
/// kDivergence (after restoring the last good parameters) on a non-finite loss.
std::vector<EpochRecord> train(MotionEstimator& model, const std::vector<ScanSequence>& scans,
                               const TrainConfig& cfg,
                               const std::function<void(const EpochRecord&)>& on_epoch = {});

struct OnlineConfig {
  enum class Policy { kAll, kFreezeEncoder };
  int iterations = 60;
  double learning_rate = 2e-6;
  Policy policy = Policy::kAll;
  bool unit_variance = false;

  void check() const;
};

/// Self-supervised refinement on one scan using only its frames and IMU.
/// Returns iterations + 1 reports: entry k is the loss before update k, the
/// last entry the loss after the final update. Throws kDivergence (after
/// restoring the starting parameters) on a non-finite loss. on_iteration, if
/// set, sees the model before each update and after the last one.
std::vector<LossReport> adapt_online(
    MotionEstimator& model, const ScanSequence& scan, const OnlineConfig& cfg,
    const std::function<void(int, const MotionEstimator&)>& on_iteration = {});

}  // namespace sonotrack
