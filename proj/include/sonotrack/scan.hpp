#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sonotrack/geometry.hpp"
#include "sonotrack/imu.hpp"

namespace sonotrack {

/// N frames of H x W float pixels in [0, 1], stored frame-major, row-major.
struct FrameStack {
  int count = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  FrameStack() = default;
  FrameStack(int n, int h, int w)
      : count(n), height(h), width(w), pixels(static_cast<std::size_t>(n) * h * w, 0.0f) {}

  std::size_t frame_size() const { return static_cast<std::size_t>(height) * width; }

  std::span<float> frame(int i) {
    return {pixels.data() + static_cast<std::size_t>(i) * frame_size(), frame_size()};
  }
  std::span<const float> frame(int i) const {
    return {pixels.data() + static_cast<std::size_t>(i) * frame_size(), frame_size()};
  }
};

/// Absolute per-frame poses of a scan, in the phantom's world frame.
struct GroundTruth {
  std::vector<Pose> poses;

  std::size_t size() const { return poses.size(); }
  std::vector<MotionParams> relative() const { return relative_steps(poses); }
};

struct ScanMeta {
  double dt = 0.05;             // s, constant frame interval
  double pixel_spacing = 0.3;   // mm
  std::string euler_convention{kEulerConvention};
  std::string units = "length=mm;angle=deg;time=s;acceleration=mm/s^2";
  std::string style;            // trajectory style, informational
  std::string calibration = "probe=identity;imu=identity";
  std::uint64_t seed = 0;
  NoiseSpec noise;
};

struct ScanSequence {
  FrameStack frames;
  std::vector<ImuRecord> imu;
  std::optional<GroundTruth> gt;
  ScanMeta meta;

  int size() const { return frames.count; }
};

}  // namespace sonotrack
