#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "sonotrack/error.hpp"
#include "sonotrack/nn.hpp"

using namespace sonotrack;
using namespace sonotrack::nn;
using sonotrack::testing::max_gradient_error;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = n(rng);
  }
  return m;
}

FeatureMap random_map(int ch, int batch, int h, int w, std::mt19937_64& rng) {
  FeatureMap x;
  x.batch = batch;
  x.height = h;
  x.width = w;
  x.data = random_matrix(ch, static_cast<Eigen::Index>(batch) * h * w, rng);
  return x;
}

void randomize(ParamVector& p, std::mt19937_64& rng, double scale = 0.3) {
  p.values = random_matrix(p.values.size(), 1, rng, scale);
}

}  // namespace

TEST_CASE("conv3x3 matches a direct convolution") {
  std::mt19937_64 rng(1);
  for (int stride : {1, 2}) {
    ParamVector p;
    Conv3x3 conv(p, "c", "g", 3, 4, stride);
    randomize(p, rng);
    const FeatureMap x = random_map(3, 2, 7, 6, rng);
    const FeatureMap y = conv.forward(p, x, nullptr);
    const int ho = (7 - 1) / stride + 1, wo = (6 - 1) / stride + 1;
    REQUIRE(y.height == ho);
    REQUIRE(y.width == wo);
    const auto w = p.view(conv.weight_slot());
    const auto b = p.view(conv.bias_slot());
    for (int n = 0; n < 2; ++n) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          for (int o = 0; o < 4; ++o) {
            double acc = b(o, 0);
            for (int ky = 0; ky < 3; ++ky) {
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = oy * stride + ky - 1, ix = ox * stride + kx - 1;
                if (iy < 0 || iy >= 7 || ix < 0 || ix >= 6) continue;
                for (int c = 0; c < 3; ++c) {
                  acc += w(o, (ky * 3 + kx) * 3 + c) * x.data(c, (n * 7 + iy) * 6 + ix);
                }
              }
            }
            CHECK(y.data(o, (n * ho + oy) * wo + ox) == doctest::Approx(acc).epsilon(1e-12));
          }
        }
      }
    }
  }
}

TEST_CASE("conv3x3 gradients") {
  std::mt19937_64 rng(2);
  for (int stride : {1, 2}) {
    ParamVector p;
    Conv3x3 conv(p, "c", "g", 2, 3, stride);
    randomize(p, rng);
    FeatureMap x = random_map(2, 2, 5, 6, rng);
    const Matrix weights = random_matrix(3, static_cast<Eigen::Index>(2) * ((5 - 1) / stride + 1) * ((6 - 1) / stride + 1), rng);
    auto loss = [&] { return conv.forward(p, x, nullptr).data.cwiseProduct(weights).sum(); };

    Conv3x3::Cache cache;
    const FeatureMap y = conv.forward(p, x, &cache);
    FeatureMap up = y;
    up.data = weights;
    ParamVector grad = p.zeros_like();
    const FeatureMap dx = conv.backward(p, cache, up, grad);
    CHECK(max_gradient_error(p.values, grad.values, loss) < 1e-6);
    Eigen::Map<Vector> xv(x.data.data(), x.data.size());
    Vector dxv = Eigen::Map<const Vector>(dx.data.data(), dx.data.size());
    Vector xcopy = xv;
    CHECK(max_gradient_error(xcopy, dxv, [&] {
            xv = xcopy;
            return loss();
          }) < 1e-6);
  }
}

TEST_CASE("average pool and its gradient") {
  std::mt19937_64 rng(3);
  FeatureMap x = random_map(2, 2, 4, 6, rng);
  const FeatureMap y = average_pool(x, 2);
  REQUIRE(y.height == 2);
  REQUIRE(y.width == 3);
  CHECK(y.data(1, 1 * 6 + 1 * 3 + 2) ==
        doctest::Approx((x.data(1, 24 + 2 * 6 + 4) + x.data(1, 24 + 2 * 6 + 5) + x.data(1, 24 + 3 * 6 + 4) +
                         x.data(1, 24 + 3 * 6 + 5)) / 4.0));
  FeatureMap up = y;
  up.data = random_matrix(2, 12, rng);
  const FeatureMap dx = average_pool_backward(up, 2);
  Vector xv = Eigen::Map<const Vector>(x.data.data(), x.data.size());
  const Vector dxv = Eigen::Map<const Vector>(dx.data.data(), dx.data.size());
  CHECK(max_gradient_error(xv, dxv, [&] {
          FeatureMap xx = x;
          xx.data = Eigen::Map<const Matrix>(xv.data(), 2, x.data.cols());
          return average_pool(xx, 2).data.cwiseProduct(up.data).sum();
        }) < 1e-7);
}

TEST_CASE("linear gradients") {
  std::mt19937_64 rng(4);
  ParamVector p;
  Linear fc(p, "fc", "g", 5, 3);
  randomize(p, rng);
  Matrix x = random_matrix(5, 4, rng);
  const Matrix up = random_matrix(3, 4, rng);
  ParamVector grad = p.zeros_like();
  const Matrix dx = fc.backward(p, x, up, grad);
  auto loss = [&] { return fc.forward(p, x).cwiseProduct(up).sum(); };
  CHECK(max_gradient_error(p.values, grad.values, loss) < 1e-7);
  Vector xv = Eigen::Map<const Vector>(x.data(), x.size());
  CHECK(max_gradient_error(xv, Eigen::Map<const Vector>(dx.data(), dx.size()), [&] {
          x = Eigen::Map<const Matrix>(xv.data(), 5, 4);
          return loss();
        }) < 1e-7);
}

TEST_CASE("lstm gradients through time") {
  std::mt19937_64 rng(5);
  ParamVector p;
  Lstm cell(p, "lstm", "g", 3, 4);
  randomize(p, rng, 0.5);
  Matrix x = random_matrix(3, 6, rng);
  const Matrix up = random_matrix(4, 6, rng);
  Lstm::Cache cache;
  const Matrix h = cell.forward(p, x, &cache);
  REQUIRE(h.rows() == 4);
  REQUIRE(h.cols() == 6);
  ParamVector grad = p.zeros_like();
  const Matrix dx = cell.backward(p, cache, up, grad);
  auto loss = [&] { return cell.forward(p, x, nullptr).cwiseProduct(up).sum(); };
  CHECK(max_gradient_error(p.values, grad.values, loss) < 1e-6);
  Vector xv = Eigen::Map<const Vector>(x.data(), x.size());
  CHECK(max_gradient_error(xv, Eigen::Map<const Vector>(dx.data(), dx.size()), [&] {
          x = Eigen::Map<const Matrix>(xv.data(), 3, 6);
          return loss();
        }) < 1e-6);
}

TEST_CASE("lstm state starts at zero and depends on order") {
  std::mt19937_64 rng(6);
  ParamVector p;
  Lstm cell(p, "lstm", "g", 2, 3);
  randomize(p, rng, 0.5);
  const Matrix x = random_matrix(2, 5, rng);
  const Matrix a = cell.forward(p, x, nullptr);
  CHECK(a == cell.forward(p, x, nullptr));
  // first step from a zero state only sees the first column
  CHECK(cell.forward(p, x.leftCols(1), nullptr).col(0) == a.col(0));
  Matrix reversed = x.rowwise().reverse();
  CHECK((cell.forward(p, reversed, nullptr).rowwise().reverse() - a).norm() > 1e-6);
}

TEST_CASE("initializers") {
  std::mt19937_64 rng(7);
  ParamVector p;
  const auto slot = p.add("w", "g", 12, 3);
  orthogonal_blocks(p.view(slot), rng);
  for (int b = 0; b < 4; ++b) {
    const Matrix q = p.view(slot).middleRows(3 * b, 3);
    CHECK((q.transpose() * q - Matrix::Identity(3, 3)).norm() < 1e-12);
  }
  const auto k = p.add("k", "g", 50, 50);
  kaiming_uniform(p.view(k), 24, rng);
  CHECK(p.view(k).cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 24));
}

TEST_CASE("param vector groups") {
  ParamVector p;
  p.add("a", "one", 2, 2);
  p.add("b", "two", 3, 1);
  p.values.setOnes();
  p.zero_groups({"one"});
  CHECK(p.view(p.find("a")).sum() == 0.0);
  CHECK(p.view(p.find("b")).sum() == 3.0);
  CHECK_THROWS_AS(p.find("missing"), Error);
}
