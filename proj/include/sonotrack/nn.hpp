#pragma once

// Minimal layer set for the motion estimator: 3x3 convolutions, average
// pooling, fully connected layers and a gated recurrent cell. Every layer has
// an explicit backward pass; nothing here allocates parameters itself.

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace sonotrack::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

struct ParamSlot {
  std::string name;
  std::string group;
  std::size_t offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
};

/// Flat parameter (or gradient) vector with named matrix views.
class ParamVector {
 public:
  std::size_t add(const std::string& name, const std::string& group, Eigen::Index rows,
                  Eigen::Index cols);

  /// Same layout, all values zero.
  ParamVector zeros_like() const;

  MatrixMap view(std::size_t slot) {
    const auto& s = slots_[slot];
    return MatrixMap(values.data() + s.offset, s.rows, s.cols);
  }
  ConstMatrixMap view(std::size_t slot) const {
    const auto& s = slots_[slot];
    return ConstMatrixMap(values.data() + s.offset, s.rows, s.cols);
  }

  const std::vector<ParamSlot>& slots() const { return slots_; }
  std::size_t find(const std::string& name) const;
  std::size_t size() const { return static_cast<std::size_t>(values.size()); }

  /// Zeroes every slot whose group is listed.
  void zero_groups(const std::vector<std::string>& groups);

  Vector values;

 private:
  std::vector<ParamSlot> slots_;
};

/// Batch of feature maps: data is (channels, batch * height * width), one
/// column per pixel, pixels ordered batch-major then row-major.
struct FeatureMap {
  int batch = 0;
  int height = 0;
  int width = 0;
  Matrix data;

  int channels() const { return static_cast<int>(data.rows()); }
};

Matrix relu(const Matrix& x);
/// Gradient of relu given its pre-activation input.
Matrix relu_backward(const Matrix& pre, const Matrix& upstream);

/// 3x3 convolution, zero padding 1.
class Conv3x3 {
 public:
  Conv3x3() = default;
  Conv3x3(ParamVector& params, const std::string& name, const std::string& group, int in_ch,
          int out_ch, int stride);

  struct Cache {
    Matrix columns;
    int in_batch = 0, in_height = 0, in_width = 0;
  };

  FeatureMap forward(const ParamVector& params, const FeatureMap& x, Cache* cache) const;
  FeatureMap backward(const ParamVector& params, const Cache& cache, const FeatureMap& upstream,
                      ParamVector& grad) const;

  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }
  int stride() const { return stride_; }
  std::size_t weight_slot() const { return w_; }
  std::size_t bias_slot() const { return b_; }

 private:
  int in_ch_ = 0, out_ch_ = 0, stride_ = 1;
  std::size_t w_ = 0, b_ = 0;
};

FeatureMap average_pool(const FeatureMap& x, int factor);
FeatureMap average_pool_backward(const FeatureMap& upstream, int factor);

class Linear {
 public:
  Linear() = default;
  Linear(ParamVector& params, const std::string& name, const std::string& group, int in, int out);

  /// x is (in, batch).
  Matrix forward(const ParamVector& params, const Matrix& x) const;
  /// Accumulates weight gradients; returns the input gradient.
  Matrix backward(const ParamVector& params, const Matrix& x, const Matrix& upstream,
                  ParamVector& grad) const;

  int in_features() const { return in_; }
  int out_features() const { return out_; }
  std::size_t weight_slot() const { return w_; }
  std::size_t bias_slot() const { return b_; }

 private:
  int in_ = 0, out_ = 0;
  std::size_t w_ = 0, b_ = 0;
};

/// Single-layer LSTM cell (input, forget, candidate, output gate order).
class Lstm {
 public:
  Lstm() = default;
  Lstm(ParamVector& params, const std::string& name, const std::string& group, int in, int hidden);

  struct Cache {
    Matrix input;   // (in, T)
    Matrix gates;   // (4H, T), post-activation
    Matrix cell;    // (H, T)
    Matrix hidden;  // (H, T)
  };

  /// Runs over the columns of x from a zero state; returns hidden states (H, T).
  Matrix forward(const ParamVector& params, const Matrix& x, Cache* cache) const;
  /// Full backpropagation through time. upstream is dLoss/dHidden (H, T).
  Matrix backward(const ParamVector& params, const Cache& cache, const Matrix& upstream,
                  ParamVector& grad) const;

  int hidden_size() const { return hidden_; }
  int in_features() const { return in_; }
  std::size_t input_weight_slot() const { return wx_; }
  std::size_t recurrent_weight_slot() const { return wh_; }
  std::size_t bias_slot() const { return b_; }

 private:
  int in_ = 0, hidden_ = 0;
  std::size_t wx_ = 0, wh_ = 0, b_ = 0;
};

/// Uniform(-sqrt(6/fan_in), sqrt(6/fan_in)).
void kaiming_uniform(MatrixMap w, int fan_in, std::mt19937_64& rng);
/// Uniform(-bound, bound).
void uniform_init(MatrixMap w, double bound, std::mt19937_64& rng);
/// Orthogonal square blocks stacked vertically (rows must be a multiple of cols).
void orthogonal_blocks(MatrixMap w, std::mt19937_64& rng);

}  // namespace sonotrack::nn
