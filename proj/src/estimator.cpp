#include "sonotrack/estimator.hpp"

#include <cmath>
#include <cstring>
#include <nlohmann/json.hpp>

#include "sonotrack/error.hpp"
#include "sonotrack/scandata.hpp"

namespace sonotrack {

using nn::FeatureMap;
using nn::Matrix;
using nn::Vector;

namespace {

constexpr double kForgetBias = 1.0;
constexpr char kCheckpointMagic[4] = {'S', 'T', 'C', 'K'};

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::string& in, std::size_t offset) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return v;
}

}  // namespace

int ModelConfig::pool_factor() const {
  const int down = 1 << channels.size();
  return (image_height / down) / feature_height;
}

void ModelConfig::check() const {
  if (channels.empty()) throw Error(ErrorCode::kBadSpec, "encoder needs at least one stage");
  const int down = 1 << channels.size();
  if (image_height % down != 0 || image_width % down != 0) {
    throw Error(ErrorCode::kBadSpec, "image dims must be divisible by 2^stages");
  }
  const int sh = image_height / down, sw = image_width / down;
  if (feature_height <= 0 || feature_width <= 0 || sh % feature_height != 0 ||
      sw % feature_width != 0 || sh / feature_height != sw / feature_width) {
    throw Error(ErrorCode::kBadSpec, "feature dims must evenly pool the encoder output");
  }
  if (hidden <= 0) throw Error(ErrorCode::kBadSpec, "hidden size must be positive");
  if (!(accel_scale > 0.0) || !(euler_scale > 0.0) || !(pixel_scale > 0.0)) {
    throw Error(ErrorCode::kBadSpec, "input scales must be positive");
  }
}

ScanInputs make_inputs(const ScanSequence& scan) {
  ScanSequence observed;
  observed.frames = scan.frames;
  observed.imu = scan.imu;
  observed.meta = scan.meta;
  const auto problems = validate(observed);
  if (!problems.empty()) throw Error(ErrorCode::kInvalidScan, problems.front());

  const ProcessedImu imu = preprocess(scan.imu);
  const int n = scan.frames.count;
  ScanInputs in;
  in.frames = scan.frames;
  in.accel.resize(3, n - 2);
  for (int i = 1; i + 1 < n; ++i) in.accel.col(i - 1) = imu.acceleration[i];
  in.euler.resize(3, n - 1);
  for (int i = 0; i + 1 < n; ++i) in.euler.col(i) = imu.relative_euler[i].degrees;
  return in;
}

Matrix to_matrix(const std::vector<MotionParams>& steps) {
  Matrix m(6, static_cast<Eigen::Index>(steps.size()));
  for (std::size_t i = 0; i < steps.size(); ++i) {
    m.col(i).head<3>() = steps[i].t;
    m.col(i).tail<3>() = steps[i].phi.degrees;
  }
  return m;
}

std::vector<MotionParams> from_matrix(const Matrix& theta) {
  std::vector<MotionParams> out(theta.cols());
  for (Eigen::Index i = 0; i < theta.cols(); ++i) {
    out[i].t = theta.col(i).head<3>();
    out[i].phi = EulerAngles(Vec3(theta.col(i).tail<3>()));
  }
  return out;
}

MotionEstimator::MotionEstimator(const ModelConfig& config) : config_(config) {
  config_.check();
  initialize();
}

void MotionEstimator::initialize() {
  int in = config_.input_channels();
  for (std::size_t s = 0; s < config_.channels.size(); ++s) {
    const int ch = config_.channels[s];
    const std::string name = "encoder.stage" + std::to_string(s);
    stages_.push_back({nn::Conv3x3(params_, name + ".down", "encoder", in, ch, 2),
                       nn::Conv3x3(params_, name + ".same", "encoder", ch, ch, 1)});
    in = ch;
  }
  const int feat = config_.feature_size();
  int width = 3;
  for (std::size_t k = 0; k <= config_.accel_widths.size(); ++k) {
    const int out = k < config_.accel_widths.size() ? config_.accel_widths[k] : feat;
    accel_layers_.emplace_back(params_, "accel.fc" + std::to_string(k), "accel", width, out);
    width = out;
  }
  velocity_lstm_ = nn::Lstm(params_, "velocity.lstm", "velocity", feat, config_.hidden);
  velocity_proj_ = nn::Linear(params_, "velocity.proj", "velocity", config_.hidden, feat);
  width = 3;
  for (std::size_t k = 0; k < config_.euler_widths.size(); ++k) {
    euler_layers_.emplace_back(params_, "euler.fc" + std::to_string(k), "euler", width,
                               config_.euler_widths[k]);
    width = config_.euler_widths[k];
  }
  main_lstm_ = nn::Lstm(params_, "main.lstm", "main", feat + config_.euler_features(), config_.hidden);
  head_ = nn::Linear(params_, "head.fc", "head", config_.hidden, 6);

  std::mt19937_64 rng(config_.seed);
  // The residual convolution starts at zero so every stage preserves the
  // activation scale at initialization.
  for (const auto& st : stages_) {
    nn::kaiming_uniform(params_.view(st.down.weight_slot()), 9 * st.down.in_channels(), rng);
  }
  auto init_linear = [&](const nn::Linear& l) {
    nn::kaiming_uniform(params_.view(l.weight_slot()), l.in_features(), rng);
  };
  auto init_lstm = [&](const nn::Lstm& l) {
    // gates are saturating, so the input weights use the unit-gain bound
    nn::uniform_init(params_.view(l.input_weight_slot()), 1.0 / std::sqrt(l.in_features()), rng);
    nn::orthogonal_blocks(params_.view(l.recurrent_weight_slot()), rng);
    params_.view(l.bias_slot()).middleRows(l.hidden_size(), l.hidden_size()).setConstant(kForgetBias);
  };
  for (const auto& l : accel_layers_) init_linear(l);
  init_lstm(velocity_lstm_);
  init_linear(velocity_proj_);
  for (const auto& l : euler_layers_) init_linear(l);
  init_lstm(main_lstm_);
  init_linear(head_);
}

void MotionEstimator::set_parameters(const Vector& values) {
  if (values.size() != params_.values.size()) {
    throw Error(ErrorCode::kShapeMismatch, "parameter vector has " + std::to_string(values.size()) +
                                               " entries, model expects " +
                                               std::to_string(params_.values.size()));
  }
  params_.values = values;
  ++version_;
}

nn::ParamVector& MotionEstimator::mutable_params() {
  ++version_;
  return params_;
}

Matrix MotionEstimator::encode_pairs(const FrameStack& frames, FeatureState* state) const {
  if (frames.height != config_.image_height || frames.width != config_.image_width) {
    throw Error(ErrorCode::kShapeMismatch,
                "frames are " + std::to_string(frames.height) + "x" + std::to_string(frames.width) +
                    ", model expects " + std::to_string(config_.image_height) + "x" +
                    std::to_string(config_.image_width));
  }
  if (frames.count < 2) throw Error(ErrorCode::kShapeMismatch, "need at least two frames");
  const int pairs = frames.count - 1;
  const std::size_t pixels = frames.frame_size();

  FeatureMap x;
  x.batch = pairs;
  x.height = frames.height;
  x.width = frames.width;
  x.data.resize(config_.input_channels(), static_cast<Eigen::Index>(pairs * pixels));
  for (int p = 0; p < pairs; ++p) {
    const auto a = frames.frame(p);
    const auto b = frames.frame(p + 1);
    for (std::size_t k = 0; k < pixels; ++k) {
      const auto col = static_cast<Eigen::Index>(p * pixels + k);
      x.data(0, col) = (a[k] - config_.pixel_centre) / config_.pixel_scale;
      x.data(1, col) = (b[k] - config_.pixel_centre) / config_.pixel_scale;
      if (config_.product_channel) x.data(2, col) = x.data(0, col) * x.data(1, col);
    }
  }

  FeatureState local;
  FeatureState& st = state ? *state : local;
  st.stages.assign(stages_.size(), {});
  st.input = x;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    auto& cache = st.stages[s];
    FeatureMap down = stages_[s].down.forward(params_, x, &cache.down);
    cache.down_pre = down.data;
    down.data = nn::relu(down.data);
    FeatureMap same = stages_[s].same.forward(params_, down, &cache.same);
    same.data += down.data;
    cache.same_pre = same.data;
    same.data = nn::relu(same.data);
    x = std::move(same);
  }
  st.pool_input = x;
  const FeatureMap pooled = nn::average_pool(x, config_.pool_factor());
  st.f = Eigen::Map<const Matrix>(pooled.data.data(), config_.feature_size(), pairs);
  return st.f;
}

void MotionEstimator::encode_backward(const FeatureState& st, const Matrix& df,
                                      nn::ParamVector& grad) const {
  const int pairs = static_cast<int>(df.cols());
  FeatureMap d;
  d.batch = pairs;
  d.height = config_.feature_height;
  d.width = config_.feature_width;
  d.data = Eigen::Map<const Matrix>(df.data(), config_.feature_channels(),
                                    static_cast<Eigen::Index>(pairs) * d.height * d.width);
  d = nn::average_pool_backward(d, config_.pool_factor());
  for (std::size_t s = stages_.size(); s-- > 0;) {
    const auto& cache = st.stages[s];
    FeatureMap da2 = d;
    da2.data = nn::relu_backward(cache.same_pre, d.data);
    FeatureMap dh = stages_[s].same.backward(params_, cache.same, da2, grad);
    dh.data += da2.data;
    dh.data = nn::relu_backward(cache.down_pre, dh.data);
    d = stages_[s].down.backward(params_, cache.down, dh, grad);
  }
}

Matrix MotionEstimator::accel_branch(const Matrix& accel, FeatureState* state) const {
  if (accel.rows() != 3) throw Error(ErrorCode::kShapeMismatch, "acceleration must have 3 rows");
  FeatureState local;
  FeatureState& st = state ? *state : local;
  st.accel_acts.clear();
  st.accel_pre.clear();
  Matrix x = accel / config_.accel_scale;
  for (std::size_t k = 0; k < accel_layers_.size(); ++k) {
    st.accel_acts.push_back(x);
    Matrix pre = accel_layers_[k].forward(params_, x);
    if (k + 1 < accel_layers_.size()) {
      x = nn::relu(pre);
      st.accel_pre.push_back(std::move(pre));
    } else {
      x = std::move(pre);
    }
  }
  st.fa = x;
  return x;
}

void MotionEstimator::accel_backward(const FeatureState& st, const Matrix& dfa,
                                     nn::ParamVector& grad) const {
  Matrix d = dfa;
  for (std::size_t k = accel_layers_.size(); k-- > 0;) {
    if (k + 1 < accel_layers_.size()) d = nn::relu_backward(st.accel_pre[k], d);
    d = accel_layers_[k].backward(params_, st.accel_acts[k], d, grad);
  }
}

Matrix MotionEstimator::fuse_velocity(const Matrix& f, const Matrix& fa, bool literal_velocity_sum) {
  if (f.cols() < 1 || fa.cols() != f.cols() - 1 || fa.rows() != f.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "f^a must have one column fewer than f and equal rows");
  }
  Matrix fv(f.rows(), f.cols());
  fv.col(0) = f.col(0);
  for (Eigen::Index j = 1; j < f.cols(); ++j) {
    fv.col(j) = (literal_velocity_sum ? f.col(j - 1) : f.col(j)) + fa.col(j - 1);
  }
  return fv;
}

Tape MotionEstimator::forward(const ScanInputs& inputs, const ForwardOptions& options) const {
  const int steps = inputs.steps();
  if (steps < 2) throw Error(ErrorCode::kShapeMismatch, "need at least three frames");
  if (inputs.accel.rows() != 3 || inputs.accel.cols() != steps - 1) {
    throw Error(ErrorCode::kShapeMismatch, "acceleration must be 3 x (N-2)");
  }
  if (inputs.euler.rows() != 3 || inputs.euler.cols() != steps) {
    throw Error(ErrorCode::kShapeMismatch, "relative Euler angles must be 3 x (N-1)");
  }

  Tape tape;
  tape.owner = this;
  tape.params_version = version_;
  tape.options = options;
  FeatureState& st = tape.state;

  const Matrix f = encode_pairs(inputs.frames, &st);
  if (options.zero_accel_branch) {
    st.fa = Matrix::Zero(f.rows(), steps - 1);
  } else {
    accel_branch(inputs.accel, &st);
  }
  st.fv = fuse_velocity(f, st.fa, config_.literal_velocity_sum);
  const Matrix vh = velocity_lstm_.forward(params_, st.fv, &st.velocity);
  st.velocity_out = velocity_proj_.forward(params_, vh);
  st.merged = f + st.velocity_out;

  Matrix e = options.zero_euler_input ? Matrix::Zero(3, steps) : Matrix(inputs.euler / config_.euler_scale);
  st.euler_acts.clear();
  st.euler_pre.clear();
  for (const auto& layer : euler_layers_) {
    st.euler_acts.push_back(e);
    Matrix pre = layer.forward(params_, e);
    e = nn::relu(pre);
    st.euler_pre.push_back(std::move(pre));
  }
  st.euler_feat = e;

  Matrix main_in(st.merged.rows() + e.rows(), steps);
  main_in.topRows(st.merged.rows()) = st.merged;
  main_in.bottomRows(e.rows()) = e;
  const Matrix mh = main_lstm_.forward(params_, main_in, &st.main);
  st.theta = head_.forward(params_, mh);
  return tape;
}

std::vector<MotionParams> MotionEstimator::predict(const ScanInputs& inputs,
                                                   const ForwardOptions& options) const {
  return from_matrix(forward(inputs, options).state.theta);
}

nn::ParamVector MotionEstimator::backward(const Tape& tape, const Matrix& dtheta,
                                          const std::vector<std::string>& frozen_groups) const {
  if (tape.owner != this || tape.params_version != version_) {
    throw Error(ErrorCode::kStateMismatch, "tape does not match the model's current parameters");
  }
  const FeatureState& st = tape.state;
  if (dtheta.rows() != 6 || dtheta.cols() != st.theta.cols()) {
    throw Error(ErrorCode::kStateMismatch, "upstream gradient shape differs from the forward output");
  }
  nn::ParamVector grad = params_.zeros_like();

  const Matrix dmh = head_.backward(params_, st.main.hidden, dtheta, grad);
  const Matrix dmain_in = main_lstm_.backward(params_, st.main, dmh, grad);
  const Eigen::Index feat = st.merged.rows();
  const Matrix dmerged = dmain_in.topRows(feat);
  Matrix de = dmain_in.bottomRows(dmain_in.rows() - feat);
  for (std::size_t k = euler_layers_.size(); k-- > 0;) {
    de = nn::relu_backward(st.euler_pre[k], de);
    de = euler_layers_[k].backward(params_, st.euler_acts[k], de, grad);
  }

  const Matrix dvh = velocity_proj_.backward(params_, st.velocity.hidden, dmerged, grad);
  const Matrix dfv = velocity_lstm_.backward(params_, st.velocity, dvh, grad);

  Matrix df = dmerged;
  df.col(0) += dfv.col(0);
  const Eigen::Index steps = df.cols();
  for (Eigen::Index j = 1; j < steps; ++j) {
    df.col(config_.literal_velocity_sum ? j - 1 : j) += dfv.col(j);
  }
  if (!tape.options.zero_accel_branch) {
    accel_backward(st, dfv.rightCols(steps - 1), grad);
  }
  encode_backward(st, df, grad);

  grad.zero_groups(frozen_groups);
  return grad;
}

std::string config_to_json(const ModelConfig& c) {
  nlohmann::json j = {
      {"image_height", c.image_height}, {"image_width", c.image_width},
      {"channels", c.channels},         {"feature_height", c.feature_height},
      {"feature_width", c.feature_width}, {"hidden", c.hidden},
      {"accel_widths", c.accel_widths}, {"euler_widths", c.euler_widths},
      {"literal_velocity_sum", c.literal_velocity_sum},   {"accel_scale", c.accel_scale},
      {"euler_scale", c.euler_scale},   {"pixel_centre", c.pixel_centre},
      {"pixel_scale", c.pixel_scale},   {"product_channel", c.product_channel},
      {"seed", c.seed},
      {"euler_convention", std::string(kEulerConvention)},
  };
  return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kIo, "model config is not valid JSON");
  ModelConfig c;
  try {
    c.image_height = j.at("image_height").get<int>();
    c.image_width = j.at("image_width").get<int>();
    c.channels = j.at("channels").get<std::vector<int>>();
    c.feature_height = j.at("feature_height").get<int>();
    c.feature_width = j.at("feature_width").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.accel_widths = j.at("accel_widths").get<std::vector<int>>();
    c.euler_widths = j.at("euler_widths").get<std::vector<int>>();
    c.literal_velocity_sum = j.at("literal_velocity_sum").get<bool>();
    c.accel_scale = j.at("accel_scale").get<double>();
    c.euler_scale = j.at("euler_scale").get<double>();
    c.pixel_centre = j.at("pixel_centre").get<double>();
    c.pixel_scale = j.at("pixel_scale").get<double>();
    c.product_channel = j.at("product_channel").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("model config: ") + e.what());
  }
  return c;
}

void save_checkpoint(const MotionEstimator& model, const std::filesystem::path& path) {
  const std::string config = config_to_json(model.config());
  std::string out(kCheckpointMagic, 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(config.size()));
  out += config;
  const auto& values = model.params().values;
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(values.size()));
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    std::uint64_t bits;
    const double v = values[i];
    std::memcpy(&bits, &v, sizeof(bits));
    put_le<std::uint64_t>(out, bits);
  }
  put_le<std::uint32_t>(out, crc32(out));
  write_file(path, out);
}

MotionEstimator load_checkpoint(const std::filesystem::path& path) {
  const std::string in = read_file(path);
  if (in.size() < 12 || std::memcmp(in.data(), kCheckpointMagic, 4) != 0) {
    throw Error(ErrorCode::kIo, path.string() + " is not a model checkpoint");
  }
  const auto version = get_le<std::uint32_t>(in, 4);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kFormatVersionMismatch,
                path.string() + " has checkpoint version " + std::to_string(version) +
                    ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  if (in.size() < 16) throw Error(ErrorCode::kChecksumMismatch, path.string() + " is truncated");
  const auto stored = get_le<std::uint32_t>(in, in.size() - 4);
  if (crc32(in.substr(0, in.size() - 4)) != stored) {
    throw Error(ErrorCode::kChecksumMismatch, path.string() + " fails its CRC32");
  }
  const auto config_len = get_le<std::uint32_t>(in, 8);
  std::size_t offset = 12;
  MotionEstimator model(config_from_json(in.substr(offset, config_len)));
  offset += config_len;
  const auto count = get_le<std::uint64_t>(in, offset);
  offset += 8;
  if (count != model.params().size() || in.size() != offset + 8 * count + 4) {
    throw Error(ErrorCode::kShapeMismatch, path.string() + ": parameter count does not match config");
  }
  Vector values(static_cast<Eigen::Index>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto bits = get_le<std::uint64_t>(in, offset + 8 * i);
    std::memcpy(&values[static_cast<Eigen::Index>(i)], &bits, sizeof(bits));
  }
  model.set_parameters(values);
  return model;
}

}  // namespace sonotrack
