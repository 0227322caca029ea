#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sonotrack/nn.hpp"
#include "sonotrack/scan.hpp"

namespace sonotrack {

/// Architecture of the motion estimator. The acceleration branch always ends
/// at the flattened size of the image feature f, so the two can be summed.
struct ModelConfig {
  int image_height = 64;
  int image_width = 64;
  std::vector<int> channels{16, 32, 64};  // one stride-2 residual stage each
  int feature_height = 4;
  int feature_width = 4;
  int hidden = 128;
  std::vector<int> accel_widths{64};  // hidden widths before the final 3 -> ... -> |f| layer
  std::vector<int> euler_widths{32};
  bool literal_velocity_sum = true;  // f^v_i = f_{i-1} + f^a_i, else f_i + f^a_i
  double accel_scale = 100.0;  // mm/s^2 per network input unit
  double euler_scale = 1.0;    // degrees per network input unit
  double pixel_centre = 0.5;   // subtracted from every pixel
  double pixel_scale = 0.15;   // pixel units per network input unit
  bool product_channel = true; // third encoder input: product of the two normalized frames
  std::uint64_t seed = 1;

  int input_channels() const { return product_channel ? 3 : 2; }
  int feature_channels() const { return channels.back(); }
  int feature_size() const { return channels.back() * feature_height * feature_width; }
  int euler_features() const { return euler_widths.empty() ? 3 : euler_widths.back(); }
  int pool_factor() const;

  /// Throws kBadSpec when the dims are inconsistent.
  void check() const;
};

/// Per-scan network inputs. Acceleration covers frames 2..N-1 (N-2 columns),
/// relative Euler angles cover steps 1..N-1 (N-1 columns).
struct ScanInputs {
  FrameStack frames;
  nn::Matrix accel;  // (3, N-2), preprocessed, mm/s^2
  nn::Matrix euler;  // (3, N-1), degrees

  int steps() const { return frames.count - 1; }
};

/// Builds inputs from frames and IMU only; ground truth is never read.
/// Throws kInvalidScan when the observations fail validation.
ScanInputs make_inputs(const ScanSequence& scan);

struct ForwardOptions {
  bool zero_accel_branch = false;  // drop f^a (image + orientation backbone)
  bool zero_euler_input = false;   // feed zeros to the Euler branch
};

/// Rows: tx, ty, tz (mm), phi_x, phi_y, phi_z (deg); one column per step.
nn::Matrix to_matrix(const std::vector<MotionParams>& steps);
std::vector<MotionParams> from_matrix(const nn::Matrix& theta);

/// Intermediate values of one forward pass.
struct FeatureState {
  // encoder
  nn::FeatureMap input;
  struct Stage {
    nn::Conv3x3::Cache down, same;
    nn::Matrix down_pre, same_pre;
  };
  std::vector<Stage> stages;
  nn::FeatureMap pool_input;
  nn::Matrix f;  // (|f|, T)
  // acceleration branch
  std::vector<nn::Matrix> accel_acts;  // inputs to each layer
  std::vector<nn::Matrix> accel_pre;   // pre-activations of hidden layers
  nn::Matrix fa;                       // (|f|, T-1)
  nn::Matrix fv;                       // (|f|, T)
  nn::Lstm::Cache velocity;
  nn::Matrix velocity_out;  // projected velocity-branch output (|f|, T)
  nn::Matrix merged;        // f + velocity_out
  std::vector<nn::Matrix> euler_acts, euler_pre;
  nn::Matrix euler_feat;
  nn::Lstm::Cache main;
  nn::Matrix theta;  // (6, T)
};

struct Tape {
  FeatureState state;
  ForwardOptions options;
  const void* owner = nullptr;
  std::uint64_t params_version = 0;
};

class MotionEstimator {
 public:
  explicit MotionEstimator(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const nn::ParamVector& params() const { return params_; }
  /// Replaces all parameter values; the layout must match.
  void set_parameters(const nn::Vector& values);
  /// Mutable access; invalidates outstanding tapes.
  nn::ParamVector& mutable_params();
  std::uint64_t params_version() const { return version_; }

  /// f for every adjacent pair (one column per pair).
  nn::Matrix encode_pairs(const FrameStack& frames, FeatureState* state = nullptr) const;
  /// Accumulates encoder parameter gradients from dLoss/df.
  void encode_backward(const FeatureState& state, const nn::Matrix& df, nn::ParamVector& grad) const;

  /// f^a for a (3, M) block of preprocessed accelerations.
  nn::Matrix accel_branch(const nn::Matrix& accel, FeatureState* state = nullptr) const;
  void accel_backward(const FeatureState& state, const nn::Matrix& dfa, nn::ParamVector& grad) const;

  /// f^v from f (|f|, T) and f^a (|f|, T-1); see ModelConfig::literal_velocity_sum.
  static nn::Matrix fuse_velocity(const nn::Matrix& f, const nn::Matrix& fa, bool literal_velocity_sum);

  Tape forward(const ScanInputs& inputs, const ForwardOptions& options = {}) const;
  std::vector<MotionParams> predict(const ScanInputs& inputs, const ForwardOptions& options = {}) const;

  /// Exact gradient of a loss whose derivative with respect to theta-hat is
  /// dtheta. Slots whose group is in frozen_groups come back zero. Throws
  /// kStateMismatch when the tape is not from this model's current parameters.
  nn::ParamVector backward(const Tape& tape, const nn::Matrix& dtheta,
                           const std::vector<std::string>& frozen_groups = {}) const;

 private:
  void initialize();

  ModelConfig config_;
  nn::ParamVector params_;
  std::uint64_t version_ = 0;

  struct StageLayers {
    nn::Conv3x3 down, same;
  };
  std::vector<StageLayers> stages_;
  std::vector<nn::Linear> accel_layers_;
  nn::Lstm velocity_lstm_;
  nn::Linear velocity_proj_;
  std::vector<nn::Linear> euler_layers_;
  nn::Lstm main_lstm_;
  nn::Linear head_;
};

inline constexpr int kCheckpointVersion = 1;

/// Layout: "STCK" magic, u32 version, u32 config length, config JSON,
/// u64 parameter count, little-endian float64 parameters, u32 CRC32 of all
/// preceding bytes.
void save_checkpoint(const MotionEstimator& model, const std::filesystem::path& path);
/// Throws kIo, kFormatVersionMismatch or kChecksumMismatch.
MotionEstimator load_checkpoint(const std::filesystem::path& path);

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& text);

}  // namespace sonotrack
