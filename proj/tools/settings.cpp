#include "settings.hpp"

#include <sstream>

#include "sonotrack/error.hpp"

namespace sonotrack::cli {
namespace {

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto a = item.find_first_not_of(' ');
    const auto b = item.find_last_not_of(' ');
    if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<int> int_list(KeyValueConfig& cfg, const std::string& key, const std::vector<int>& fallback) {
  std::vector<int> out;
  for (const auto& item : split(cfg.get_string(key, join(fallback)))) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kBadConfig, key + ": '" + item + "' is not an integer");
    }
  }
  return out;
}

}  // namespace

DatasetSpec dataset_settings(KeyValueConfig& cfg) {
  DatasetSpec d;
  d.styles.clear();
  for (const auto& name : split(cfg.get_string("styles", "linear,curved,fast_and_slow,loop"))) {
    const auto style = parse_style(name);
    if (!style) throw Error(ErrorCode::kBadConfig, "styles: unknown trajectory style '" + name + "'");
    d.styles.push_back(*style);
  }
  d.length_min = cfg.get_double("length_min", d.length_min);
  d.length_max = cfg.get_double("length_max", d.length_max);
  d.modulation_min = cfg.get_double("modulation_min", d.modulation_min);
  d.modulation_max = cfg.get_double("modulation_max", d.modulation_max);
  d.phantom_pool = cfg.get_int("phantom_pool", d.phantom_pool);

  TrajectorySpec& t = d.scan.trajectory;
  t.frame_count = cfg.get_int("frame_count", t.frame_count);
  t.dt = cfg.get_double("dt", t.dt);
  t.arc_deg = cfg.get_double("arc_deg", t.arc_deg);
  t.tilt_deg = cfg.get_double("tilt_deg", t.tilt_deg);

  d.scan.image_height = cfg.get_int("image_height", d.scan.image_height);
  d.scan.image_width = cfg.get_int("image_width", d.scan.image_width);
  d.scan.pixel_spacing = cfg.get_double("pixel_spacing", d.scan.pixel_spacing);
  d.scan.placement_jitter = cfg.get_double("placement_jitter", d.scan.placement_jitter);
  d.scan.noise.accel_sigma = cfg.get_double("noise.accel_sigma", d.scan.noise.accel_sigma);
  d.scan.noise.accel_bias = cfg.get_double("noise.accel_bias", d.scan.noise.accel_bias);
  d.scan.noise.orientation_sigma = cfg.get_double("noise.orientation_sigma", d.scan.noise.orientation_sigma);

  d.dims.nx = cfg.get_int("volume.nx", d.dims.nx);
  d.dims.ny = cfg.get_int("volume.ny", d.dims.ny);
  d.dims.nz = cfg.get_int("volume.nz", d.dims.nz);
  d.voxel_spacing = cfg.get_double("volume.spacing", d.voxel_spacing);
  d.speckle.background = cfg.get_double("speckle.background", d.speckle.background);
  d.speckle.contrast = cfg.get_double("speckle.contrast", d.speckle.contrast);
  try {
    d.check();
  } catch (const Error& e) {
    throw Error(ErrorCode::kBadConfig, e.what());
  }
  return d;
}

ModelConfig model_settings(KeyValueConfig& cfg, int image_height, int image_width, std::uint64_t seed) {
  ModelConfig m;
  m.image_height = image_height;
  m.image_width = image_width;
  m.channels = int_list(cfg, "model.channels", m.channels);
  m.feature_height = cfg.get_int("model.feature_height", m.feature_height);
  m.feature_width = cfg.get_int("model.feature_width", m.feature_width);
  m.hidden = cfg.get_int("model.hidden", m.hidden);
  m.accel_widths = int_list(cfg, "model.accel_widths", m.accel_widths);
  m.euler_widths = int_list(cfg, "model.euler_widths", m.euler_widths);
  m.literal_velocity_sum = cfg.get_bool("model.literal_velocity_sum", m.literal_velocity_sum);
  m.accel_scale = cfg.get_double("model.accel_scale", m.accel_scale);
  m.euler_scale = cfg.get_double("model.euler_scale", m.euler_scale);
  m.pixel_centre = cfg.get_double("model.pixel_centre", m.pixel_centre);
  m.pixel_scale = cfg.get_double("model.pixel_scale", m.pixel_scale);
  m.product_channel = cfg.get_bool("model.product_channel", m.product_channel);
  m.seed = seed;
  try {
    m.check();
  } catch (const Error& e) {
    throw Error(ErrorCode::kBadConfig, e.what());
  }
  return m;
}

TrainConfig train_settings(KeyValueConfig& cfg, std::uint64_t seed) {
  TrainConfig t;
  t.epochs = cfg.get_int("train.epochs", t.epochs);
  t.batch_size = cfg.get_int("train.batch_size", t.batch_size);
  t.learning_rate = cfg.get_double("train.learning_rate", t.learning_rate);
  t.lr_halving_period = cfg.get_int("train.lr_halving_period", t.lr_halving_period);
  t.augmentations_per_scan = cfg.get_int("train.augmentations_per_scan", t.augmentations_per_scan);
  t.min_length = cfg.get_int("train.min_length", t.min_length);
  t.p_subsequence = cfg.get_double("train.p_subsequence", t.p_subsequence);
  t.p_interval = cfg.get_double("train.p_interval", t.p_interval);
  t.p_inversion = cfg.get_double("train.p_inversion", t.p_inversion);
  t.max_stride = cfg.get_int("train.max_stride", t.max_stride);
  t.seed = seed;
  t.check();
  return t;
}

OnlineConfig online_settings(KeyValueConfig& cfg) {
  OnlineConfig o;
  o.iterations = cfg.get_int("online.iterations", o.iterations);
  o.learning_rate = cfg.get_double("online.learning_rate", o.learning_rate);
  const std::string policy = cfg.get_string("online.policy", "all");
  if (policy == "all") {
    o.policy = OnlineConfig::Policy::kAll;
  } else if (policy == "freeze_encoder") {
    o.policy = OnlineConfig::Policy::kFreezeEncoder;
  } else {
    throw Error(ErrorCode::kBadConfig, "online.policy must be all or freeze_encoder");
  }
  o.unit_variance = cfg.get_bool("online.unit_variance", o.unit_variance);
  try {
    o.check();
  } catch (const Error& e) {
    throw Error(ErrorCode::kBadConfig, e.what());
  }
  return o;
}

void reject_unknown_keys(const KeyValueConfig& cfg) {
  const auto unused = cfg.unused_keys();
  if (unused.empty()) return;
  std::string names;
  for (const auto& k : unused) names += (names.empty() ? "" : ", ") + k;
  throw Error(ErrorCode::kBadConfig, "unknown config keys: " + names);
}

}  // namespace sonotrack::cli
