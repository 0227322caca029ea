#include "sonotrack/nn.hpp"

#include <Eigen/QR>
#include <cmath>
#include <cstring>

#include "sonotrack/error.hpp"

namespace sonotrack::nn {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::size_t ParamVector::add(const std::string& name, const std::string& group, Eigen::Index rows,
                             Eigen::Index cols) {
  ParamSlot slot{name, group, static_cast<std::size_t>(values.size()), rows, cols};
  const Eigen::Index old = values.size();
  values.conservativeResize(old + rows * cols);
  values.segment(old, rows * cols).setZero();
  slots_.push_back(slot);
  return slots_.size() - 1;
}

ParamVector ParamVector::zeros_like() const {
  ParamVector out = *this;
  out.values.setZero();
  return out;
}

std::size_t ParamVector::find(const std::string& name) const {
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    if (slots_[i].name == name) return i;
  }
  throw Error(ErrorCode::kShapeMismatch, "no parameter named " + name);
}

void ParamVector::zero_groups(const std::vector<std::string>& groups) {
  for (const auto& s : slots_) {
    for (const auto& g : groups) {
      if (s.group == g) {
        values.segment(static_cast<Eigen::Index>(s.offset), static_cast<Eigen::Index>(s.size()))
            .setZero();
      }
    }
  }
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix relu_backward(const Matrix& pre, const Matrix& upstream) {
  return (pre.array() > 0.0).select(upstream, 0.0);
}

Conv3x3::Conv3x3(ParamVector& params, const std::string& name, const std::string& group, int in_ch,
                 int out_ch, int stride)
    : in_ch_(in_ch), out_ch_(out_ch), stride_(stride) {
  w_ = params.add(name + ".weight", group, out_ch, 9 * in_ch);
  b_ = params.add(name + ".bias", group, out_ch, 1);
}

FeatureMap Conv3x3::forward(const ParamVector& params, const FeatureMap& x, Cache* cache) const {
  if (x.channels() != in_ch_) {
    throw Error(ErrorCode::kShapeMismatch, "conv input has " + std::to_string(x.channels()) +
                                               " channels, expected " + std::to_string(in_ch_));
  }
  const int ho = (x.height - 1) / stride_ + 1;
  const int wo = (x.width - 1) / stride_ + 1;
  const Eigen::Index out_cols = static_cast<Eigen::Index>(x.batch) * ho * wo;
  Matrix columns = Matrix::Zero(9 * in_ch_, out_cols);

  const double* src = x.data.data();
  double* dst = columns.data();
  const std::size_t block = static_cast<std::size_t>(in_ch_);
  for (int b = 0; b < x.batch; ++b) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        const std::size_t j = (static_cast<std::size_t>(b) * ho + oy) * wo + ox;
        double* col = dst + j * 9 * block;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * stride_ + ky - 1;
          if (iy < 0 || iy >= x.height) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * stride_ + kx - 1;
            if (ix < 0 || ix >= x.width) continue;
            const std::size_t pix = (static_cast<std::size_t>(b) * x.height + iy) * x.width + ix;
            std::memcpy(col + (ky * 3 + kx) * block, src + pix * block, block * sizeof(double));
          }
        }
      }
    }
  }

  FeatureMap out;
  out.batch = x.batch;
  out.height = ho;
  out.width = wo;
  out.data.noalias() = params.view(w_) * columns;
  out.data.colwise() += params.view(b_).col(0);
  if (cache) {
    cache->columns = std::move(columns);
    cache->in_batch = x.batch;
    cache->in_height = x.height;
    cache->in_width = x.width;
  }
  return out;
}

FeatureMap Conv3x3::backward(const ParamVector& params, const Cache& cache,
                             const FeatureMap& upstream, ParamVector& grad) const {
  grad.view(w_).noalias() += upstream.data * cache.columns.transpose();
  grad.view(b_).col(0) += upstream.data.rowwise().sum();
  const Matrix dcols = params.view(w_).transpose() * upstream.data;

  FeatureMap dx;
  dx.batch = cache.in_batch;
  dx.height = cache.in_height;
  dx.width = cache.in_width;
  dx.data = Matrix::Zero(in_ch_, static_cast<Eigen::Index>(dx.batch) * dx.height * dx.width);
  const int ho = upstream.height, wo = upstream.width;
  const std::size_t block = static_cast<std::size_t>(in_ch_);
  const double* src = dcols.data();
  double* dst = dx.data.data();
  for (int b = 0; b < dx.batch; ++b) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        const std::size_t j = (static_cast<std::size_t>(b) * ho + oy) * wo + ox;
        const double* col = src + j * 9 * block;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * stride_ + ky - 1;
          if (iy < 0 || iy >= dx.height) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * stride_ + kx - 1;
            if (ix < 0 || ix >= dx.width) continue;
            const std::size_t pix = (static_cast<std::size_t>(b) * dx.height + iy) * dx.width + ix;
            const double* g = col + (ky * 3 + kx) * block;
            double* d = dst + pix * block;
            for (std::size_t c = 0; c < block; ++c) d[c] += g[c];
          }
        }
      }
    }
  }
  return dx;
}

FeatureMap average_pool(const FeatureMap& x, int factor) {
  if (factor == 1) return x;
  if (x.height % factor != 0 || x.width % factor != 0) {
    throw Error(ErrorCode::kShapeMismatch, "pool factor does not divide the feature map");
  }
  FeatureMap out;
  out.batch = x.batch;
  out.height = x.height / factor;
  out.width = x.width / factor;
  out.data = Matrix::Zero(x.data.rows(), static_cast<Eigen::Index>(out.batch) * out.height * out.width);
  const double scale = 1.0 / (factor * factor);
  for (int b = 0; b < x.batch; ++b) {
    for (int y = 0; y < x.height; ++y) {
      for (int xx = 0; xx < x.width; ++xx) {
        const Eigen::Index src = (static_cast<Eigen::Index>(b) * x.height + y) * x.width + xx;
        const Eigen::Index dst =
            (static_cast<Eigen::Index>(b) * out.height + y / factor) * out.width + xx / factor;
        out.data.col(dst) += scale * x.data.col(src);
      }
    }
  }
  return out;
}

FeatureMap average_pool_backward(const FeatureMap& upstream, int factor) {
  if (factor == 1) return upstream;
  FeatureMap dx;
  dx.batch = upstream.batch;
  dx.height = upstream.height * factor;
  dx.width = upstream.width * factor;
  dx.data.resize(upstream.data.rows(), static_cast<Eigen::Index>(dx.batch) * dx.height * dx.width);
  const double scale = 1.0 / (factor * factor);
  for (int b = 0; b < dx.batch; ++b) {
    for (int y = 0; y < dx.height; ++y) {
      for (int xx = 0; xx < dx.width; ++xx) {
        const Eigen::Index dst = (static_cast<Eigen::Index>(b) * dx.height + y) * dx.width + xx;
        const Eigen::Index src =
            (static_cast<Eigen::Index>(b) * upstream.height + y / factor) * upstream.width + xx / factor;
        dx.data.col(dst) = scale * upstream.data.col(src);
      }
    }
  }
  return dx;
}

Linear::Linear(ParamVector& params, const std::string& name, const std::string& group, int in,
               int out)
    : in_(in), out_(out) {
  w_ = params.add(name + ".weight", group, out, in);
  b_ = params.add(name + ".bias", group, out, 1);
}

Matrix Linear::forward(const ParamVector& params, const Matrix& x) const {
  if (x.rows() != in_) {
    throw Error(ErrorCode::kShapeMismatch, "linear input has " + std::to_string(x.rows()) +
                                               " features, expected " + std::to_string(in_));
  }
  Matrix y = params.view(w_) * x;
  y.colwise() += params.view(b_).col(0);
  return y;
}

Matrix Linear::backward(const ParamVector& params, const Matrix& x, const Matrix& upstream,
                        ParamVector& grad) const {
  grad.view(w_).noalias() += upstream * x.transpose();
  grad.view(b_).col(0) += upstream.rowwise().sum();
  return params.view(w_).transpose() * upstream;
}

Lstm::Lstm(ParamVector& params, const std::string& name, const std::string& group, int in,
           int hidden)
    : in_(in), hidden_(hidden) {
  wx_ = params.add(name + ".input_weight", group, 4 * hidden, in);
  wh_ = params.add(name + ".recurrent_weight", group, 4 * hidden, hidden);
  b_ = params.add(name + ".bias", group, 4 * hidden, 1);
}

Matrix Lstm::forward(const ParamVector& params, const Matrix& x, Cache* cache) const {
  if (x.rows() != in_) {
    throw Error(ErrorCode::kShapeMismatch, "lstm input has " + std::to_string(x.rows()) +
                                               " features, expected " + std::to_string(in_));
  }
  const Eigen::Index h = hidden_, steps = x.cols();
  Matrix z = params.view(wx_) * x;
  z.colwise() += params.view(b_).col(0);
  const auto wh = params.view(wh_);

  Matrix gates(4 * h, steps), cell(h, steps), hidden(h, steps);
  Vector h_prev = Vector::Zero(h), c_prev = Vector::Zero(h);
  for (Eigen::Index t = 0; t < steps; ++t) {
    Vector a = z.col(t);
    a.noalias() += wh * h_prev;
    for (Eigen::Index k = 0; k < h; ++k) {
      const double i = sigmoid(a(k));
      const double f = sigmoid(a(h + k));
      const double g = std::tanh(a(2 * h + k));
      const double o = sigmoid(a(3 * h + k));
      const double c = f * c_prev(k) + i * g;
      gates(k, t) = i;
      gates(h + k, t) = f;
      gates(2 * h + k, t) = g;
      gates(3 * h + k, t) = o;
      cell(k, t) = c;
      hidden(k, t) = o * std::tanh(c);
    }
    h_prev = hidden.col(t);
    c_prev = cell.col(t);
  }
  if (cache) {
    cache->input = x;
    cache->gates = gates;
    cache->cell = cell;
    cache->hidden = hidden;
  }
  return hidden;
}

Matrix Lstm::backward(const ParamVector& params, const Cache& cache, const Matrix& upstream,
                      ParamVector& grad) const {
  const Eigen::Index h = hidden_, steps = cache.input.cols();
  const auto wh = params.view(wh_);
  Matrix dz(4 * h, steps);
  Vector dh_next = Vector::Zero(h), dc_next = Vector::Zero(h);
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    for (Eigen::Index k = 0; k < h; ++k) {
      const double i = cache.gates(k, t);
      const double f = cache.gates(h + k, t);
      const double g = cache.gates(2 * h + k, t);
      const double o = cache.gates(3 * h + k, t);
      const double c = cache.cell(k, t);
      const double c_prev = t > 0 ? cache.cell(k, t - 1) : 0.0;
      const double tc = std::tanh(c);
      const double dh = upstream(k, t) + dh_next(k);
      const double dc = dh * o * (1.0 - tc * tc) + dc_next(k);
      dz(k, t) = dc * g * i * (1.0 - i);
      dz(h + k, t) = dc * c_prev * f * (1.0 - f);
      dz(2 * h + k, t) = dc * i * (1.0 - g * g);
      dz(3 * h + k, t) = dh * tc * o * (1.0 - o);
      dc_next(k) = dc * f;
    }
    dh_next.noalias() = wh.transpose() * dz.col(t);
  }
  if (steps > 1) {
    grad.view(wh_).noalias() +=
        dz.rightCols(steps - 1) * cache.hidden.leftCols(steps - 1).transpose();
  }
  grad.view(wx_).noalias() += dz * cache.input.transpose();
  grad.view(b_).col(0) += dz.rowwise().sum();
  return params.view(wx_).transpose() * dz;
}

void kaiming_uniform(MatrixMap w, int fan_in, std::mt19937_64& rng) {
  uniform_init(w, std::sqrt(6.0 / std::max(fan_in, 1)), rng);
}

void uniform_init(MatrixMap w, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = u(rng);
  }
}

void orthogonal_blocks(MatrixMap w, std::mt19937_64& rng) {
  const Eigen::Index n = w.cols();
  std::normal_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index block = 0; block + n <= w.rows(); block += n) {
    Matrix a(n, n);
    for (Eigen::Index c = 0; c < n; ++c) {
      for (Eigen::Index r = 0; r < n; ++r) a(r, c) = unit(rng);
    }
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix q = qr.householderQ() * Matrix::Identity(n, n);
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index k = 0; k < n; ++k) {
      if (r(k, k) < 0.0) q.col(k) *= -1.0;
    }
    w.middleRows(block, n) = q;
  }
}

}  // namespace sonotrack::nn
