#include <filesystem>

#include "doctest.h"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "sonotrack/error.hpp"
#include "sonotrack/estimator.hpp"
#include "sonotrack/learn.hpp"
#include "sonotrack/scandata.hpp"

using namespace sonotrack;
using namespace sonotrack::testing;
using nn::Matrix;
using nn::Vector;

namespace {

// Checks every parameter of `model` for the scalar loss built from theta.
double model_gradient_error(MotionEstimator& model, const ScanInputs& in, const ForwardOptions& opt,
                            const std::function<double(const Matrix&, Matrix*)>& loss) {
  const Tape tape = model.forward(in, opt);
  Matrix dtheta;
  loss(tape.state.theta, &dtheta);
  const Vector analytic = model.backward(tape, dtheta).values;
  Vector values = model.params().values;
  const double err = max_gradient_error(values, analytic, [&] {
    model.set_parameters(values);
    return loss(model.forward(in, opt).state.theta, nullptr);
  });
  model.set_parameters(values);
  return err;
}

}  // namespace

TEST_CASE("default config shapes") {
  const ModelConfig c;
  CHECK(c.feature_size() == 1024);
  CHECK(c.pool_factor() == 2);
  ModelConfig bad = c;
  bad.image_height = 60;
  CHECK_THROWS_AS(bad.check(), Error);
}

TEST_CASE("encoder injectivity and batching") {
  MotionEstimator model(tiny_config());
  perturb(model, 1);
  const ScanSequence scan = tiny_scan(ScanStyle::kLinear, 6);

  FrameStack same(2, 8, 8), different(2, 8, 8);
  std::copy(scan.frames.frame(0).begin(), scan.frames.frame(0).end(), same.frame(0).begin());
  std::copy(scan.frames.frame(0).begin(), scan.frames.frame(0).end(), same.frame(1).begin());
  std::copy(scan.frames.frame(0).begin(), scan.frames.frame(0).end(), different.frame(0).begin());
  std::copy(scan.frames.frame(5).begin(), scan.frames.frame(5).end(), different.frame(1).begin());
  CHECK((model.encode_pairs(same) - model.encode_pairs(different)).norm() > 1e-9);

  // 5 frames -> 4 pairs in one call, equal to 4 separate calls
  FrameStack five(5, 8, 8);
  std::copy(scan.frames.pixels.begin(), scan.frames.pixels.begin() + 5 * 64, five.pixels.begin());
  const Matrix batched = model.encode_pairs(five);
  REQUIRE(batched.cols() == 4);
  for (int p = 0; p < 4; ++p) {
    FrameStack pair(2, 8, 8);
    std::copy(five.frame(p).begin(), five.frame(p).end(), pair.frame(0).begin());
    std::copy(five.frame(p + 1).begin(), five.frame(p + 1).end(), pair.frame(1).begin());
    CHECK((model.encode_pairs(pair).col(0) - batched.col(p)).cwiseAbs().maxCoeff() < 1e-12);
  }

  FrameStack wrong(3, 16, 16);
  CHECK_THROWS_AS(model.encode_pairs(wrong), Error);
}

TEST_CASE("encoder gradient of sum(f)") {
  MotionEstimator model(tiny_config());
  perturb(model, 2);
  const ScanSequence scan = tiny_scan();
  FeatureState st;
  const Matrix f = model.encode_pairs(scan.frames, &st);
  nn::ParamVector grad = model.params().zeros_like();
  model.encode_backward(st, Matrix::Ones(f.rows(), f.cols()), grad);
  Vector values = model.params().values;
  const double err = max_gradient_error(values, grad.values, [&] {
    model.set_parameters(values);
    return model.encode_pairs(scan.frames).sum();
  });
  CHECK(err < 1e-4);
}

TEST_CASE("acceleration branch") {
  MotionEstimator fresh(tiny_config());
  const Matrix zero = fresh.accel_branch(Matrix::Zero(3, 4));
  CHECK(zero.rows() == fresh.config().feature_size());
  CHECK(zero.norm() == 0.0);

  MotionEstimator model(tiny_config());
  perturb(model, 3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 200.0);
  Matrix a(3, 4);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
  FeatureState st;
  const Matrix fa = model.accel_branch(a, &st);
  nn::ParamVector grad = model.params().zeros_like();
  model.accel_backward(st, Matrix::Ones(fa.rows(), fa.cols()), grad);
  Vector values = model.params().values;
  CHECK(max_gradient_error(values, grad.values, [&] {
          model.set_parameters(values);
          return model.accel_branch(a).sum();
        }) < 1e-4);
}

TEST_CASE("velocity fusion") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  Matrix f(7, 5), fa(7, 4);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = n(rng);
  for (Eigen::Index i = 0; i < fa.size(); ++i) fa.data()[i] = n(rng);

  const Matrix lit0 = MotionEstimator::fuse_velocity(f, Matrix::Zero(7, 4), true);
  CHECK(lit0.col(0) == f.col(0));
  for (int j = 1; j < 5; ++j) CHECK(lit0.col(j) == f.col(j - 1));
  CHECK(MotionEstimator::fuse_velocity(f, Matrix::Zero(7, 4), false) == f);

  for (bool literal : {true, false}) {
    const Matrix fv = MotionEstimator::fuse_velocity(f, fa, literal);
    for (int j = 0; j < 5; ++j) {
      for (int r = 0; r < 7; ++r) {
        const double expect = j == 0 ? f(r, 0) : (literal ? f(r, j - 1) : f(r, j)) + fa(r, j - 1);
        CHECK(fv(r, j) == expect);
      }
    }
  }
  CHECK_THROWS_AS(MotionEstimator::fuse_velocity(f, Matrix::Zero(7, 5), true), Error);
}

TEST_CASE("forward contract") {
  MotionEstimator model(tiny_config());
  perturb(model, 6);
  const ScanSequence scan = tiny_scan(ScanStyle::kCurved, 9);
  const ScanInputs in = make_inputs(scan);
  const auto out = model.predict(in);
  REQUIRE(out.size() == 8);
  for (const auto& m : out) {
    CHECK(m.t.allFinite());
    CHECK(m.phi.degrees.allFinite());
  }
  const Matrix a = model.forward(in).state.theta;
  CHECK(a == model.forward(in).state.theta);

  ScanSequence shuffled = scan;
  std::swap_ranges(shuffled.frames.frame(2).begin(), shuffled.frames.frame(2).end(),
                   shuffled.frames.frame(6).begin());
  CHECK((model.forward(make_inputs(shuffled)).state.theta - a).norm() > 1e-9);

  ScanSequence broken = scan;
  broken.imu.pop_back();
  CHECK_THROWS_AS(make_inputs(broken), Error);
}

TEST_CASE("inputs never read ground truth") {
  MotionEstimator model(tiny_config());
  perturb(model, 7);
  const ScanSequence scan = tiny_scan();
  ScanSequence poisoned = scan;
  for (auto& p : poisoned.gt->poses) p.translation.setConstant(std::numeric_limits<double>::quiet_NaN());
  CHECK(model.forward(make_inputs(scan)).state.theta == model.forward(make_inputs(poisoned)).state.theta);
}

TEST_CASE("ablation switches") {
  MotionEstimator model(tiny_config());
  perturb(model, 8);
  const ScanInputs in = make_inputs(tiny_scan());
  const Matrix full = model.forward(in).state.theta;
  ForwardOptions no_accel;
  no_accel.zero_accel_branch = true;
  ForwardOptions no_euler;
  no_euler.zero_euler_input = true;
  CHECK((model.forward(in, no_accel).state.theta - full).norm() > 1e-9);
  CHECK((model.forward(in, no_euler).state.theta - full).norm() > 1e-9);

  // zeroed branch equals feeding zero acceleration through a bias-free branch
  ScanInputs zero_in = in;
  zero_in.euler.setZero();
  CHECK(model.forward(zero_in).state.theta == model.forward(in, no_euler).state.theta);
}

TEST_CASE("composed model gradients") {
  MotionEstimator model(tiny_config());
  perturb(model, 9);
  const ScanSequence scan = tiny_scan();
  const ScanInputs in = make_inputs(scan);
  const Matrix target = to_matrix(scan.gt->relative());

  SUBCASE("offline loss") {
    CHECK(model_gradient_error(model, in, {}, [&](const Matrix& th, Matrix* g) {
            return offline_loss(th, target, g).total;
          }) < 1e-4);
  }
  SUBCASE("online loss") {
    CHECK(model_gradient_error(model, in, {}, [&](const Matrix& th, Matrix* g) {
            return online_loss(th, in.accel, in.euler, g).total;
          }) < 1e-4);
  }
  SUBCASE("without the acceleration branch") {
    ForwardOptions opt;
    opt.zero_accel_branch = true;
    CHECK(model_gradient_error(model, in, opt, [&](const Matrix& th, Matrix* g) {
            return offline_loss(th, target, g).total;
          }) < 1e-4);
  }
  SUBCASE("shifted velocity index") {
    ModelConfig c = tiny_config();
    c.literal_velocity_sum = false;
    MotionEstimator alt(c);
    perturb(alt, 10);
    CHECK(model_gradient_error(alt, in, {}, [&](const Matrix& th, Matrix* g) {
            return offline_loss(th, target, g).total;
          }) < 1e-4);
  }
}

TEST_CASE("backward bookkeeping") {
  MotionEstimator model(tiny_config());
  perturb(model, 11);
  const ScanSequence scan = tiny_scan();
  const ScanInputs in = make_inputs(scan);
  const Tape tape = model.forward(in);

  CHECK(model.backward(tape, Matrix::Zero(6, 5)).values.norm() == 0.0);

  const Matrix up = Matrix::Ones(6, 5);
  const nn::ParamVector all = model.backward(tape, up);
  const nn::ParamVector frozen = model.backward(tape, up, {"encoder"});
  for (const auto& s : frozen.slots()) {
    const auto v = frozen.view(frozen.find(s.name));
    if (s.group == "encoder") {
      CHECK(v.norm() == 0.0);
    } else {
      CHECK(v == all.view(all.find(s.name)));
    }
  }
  CHECK_THROWS_AS(model.backward(tape, Matrix::Ones(6, 4)), Error);

  model.mutable_params();
  try {
    model.backward(tape, up);
    FAIL("expected StateMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kStateMismatch);
  }
  MotionEstimator other(tiny_config());
  CHECK_THROWS_AS(other.backward(model.forward(in), up), Error);
}

TEST_CASE("initialization is seed deterministic") {
  CHECK(MotionEstimator(tiny_config(1)).params().values == MotionEstimator(tiny_config(1)).params().values);
  CHECK(MotionEstimator(tiny_config(1)).params().values != MotionEstimator(tiny_config(2)).params().values);
}

TEST_CASE("checkpoint round trip and corruption") {
  MotionEstimator model(tiny_config());
  perturb(model, 12);
  const auto dir = std::filesystem::temp_directory_path() / "sonotrack_test_ckpt";
  std::filesystem::create_directories(dir);
  const auto path = dir / "model.ckpt";
  save_checkpoint(model, path);
  const MotionEstimator back = load_checkpoint(path);
  CHECK(back.params().values == model.params().values);
  CHECK(config_to_json(back.config()) == config_to_json(model.config()));

  std::string bytes = read_file(path);
  SUBCASE("flipped byte") {
    bytes[bytes.size() / 2] ^= 0x40;
    write_file(path, bytes);
    try {
      load_checkpoint(path);
      FAIL("expected ChecksumMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kChecksumMismatch);
    }
  }
  SUBCASE("newer version") {
    bytes[4] = 9;
    write_file(path, bytes);
    try {
      load_checkpoint(path);
      FAIL("expected FormatVersionMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kFormatVersionMismatch);
    }
  }
  std::filesystem::remove_all(dir);
}
