#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sonotrack/scan.hpp"

namespace sonotrack {

inline constexpr int kScanFormatVersion = 1;

/// Every broken invariant of the scan; empty means valid.
std::vector<std::string> validate(const ScanSequence& scan);

enum class AugmentKind { kSubsequence, kInterval, kInversion };

/// Unset fields are drawn from the seed.
struct AugmentParams {
  std::optional<int> begin;   // subsequence: first frame
  std::optional<int> end;     // subsequence: one past the last frame
  std::optional<int> stride;  // interval: keep every stride-th frame
  int min_length = 4;
};

/// Subsequence crops frames, IMU and ground truth together. Interval keeps
/// every k-th frame, scales dt by k and re-synthesizes acceleration from the
/// ground truth (raw samples are kept when there is none). Inversion reverses
/// the scan and re-derives acceleration from the reversed ground truth; it
/// requires ground truth (kNoGroundTruth otherwise).
/// Throws kTooShortAfterAugment when the result would have fewer than
/// params.min_length frames.
ScanSequence augment(const ScanSequence& scan, AugmentKind kind, const AugmentParams& params,
                     std::uint64_t seed);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);
std::uint32_t crc32(const std::string& bytes);

/// Writes the scan directory: meta.json, frames.bin, imu.csv, gt.csv (when
/// ground truth exists) and checksums.txt.
void save_scan(const ScanSequence& scan, const std::filesystem::path& dir);

/// Throws kIo, kFormatVersionMismatch or kChecksumMismatch.
ScanSequence load_scan(const std::filesystem::path& dir);

/// Pose table: frame_index, r00..r22 (row-major rotation), tx, ty, tz.
void write_pose_csv(std::span<const Pose> poses, const std::filesystem::path& path);
std::vector<Pose> read_pose_csv(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

}  // namespace sonotrack
