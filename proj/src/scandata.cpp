#include "sonotrack/scandata.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>

#include "sonotrack/error.hpp"

namespace sonotrack {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr char kFrameMagic[4] = {'S', 'T', 'F', 'R'};
constexpr std::size_t kFrameHeaderBytes = 16;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::string& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return v;
}

std::vector<std::vector<double>> parse_csv(const std::string& text, std::size_t columns,
                                           const std::string& what) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t comma = std::min(line.find(',', pos), line.size());
      const std::string cell = line.substr(pos, comma - pos);
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size()) {
        throw Error(ErrorCode::kIo, what + ": bad number '" + cell + "'");
      }
      row.push_back(v);
      pos = comma + 1;
    }
    if (row.size() != columns) {
      throw Error(ErrorCode::kIo, what + ": expected " + std::to_string(columns) + " columns");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string imu_csv(const std::vector<ImuRecord>& imu) {
  std::string out = "frame_index,Ox,Oy,Oz,Ax,Ay,Az\n";
  for (std::size_t i = 0; i < imu.size(); ++i) {
    out += std::to_string(i);
    for (int k = 0; k < 3; ++k) out += "," + format_double(imu[i].orientation.degrees[k]);
    for (int k = 0; k < 3; ++k) out += "," + format_double(imu[i].acceleration[k]);
    out += "\n";
  }
  return out;
}

std::string pose_csv(std::span<const Pose> poses) {
  std::string out = "frame_index,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz\n";
  for (std::size_t i = 0; i < poses.size(); ++i) {
    out += std::to_string(i);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out += "," + format_double(poses[i].rotation(r, c));
    }
    for (int k = 0; k < 3; ++k) out += "," + format_double(poses[i].translation[k]);
    out += "\n";
  }
  return out;
}

std::vector<Pose> parse_pose_csv(const std::string& text, const std::string& what) {
  std::vector<Pose> poses;
  for (const auto& row : parse_csv(text, 13, what)) {
    Pose p;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) p.rotation(r, c) = row[1 + 3 * r + c];
    }
    p.translation = Vec3(row[10], row[11], row[12]);
    poses.push_back(p);
  }
  return poses;
}

json noise_json(const NoiseSpec& n) {
  return {{"accel_sigma", n.accel_sigma},
          {"accel_bias", n.accel_bias},
          {"orientation_sigma", n.orientation_sigma}};
}

ScanSequence take_frames(const ScanSequence& scan, const std::vector<int>& idx) {
  ScanSequence out;
  out.meta = scan.meta;
  out.frames = FrameStack(static_cast<int>(idx.size()), scan.frames.height, scan.frames.width);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto src = scan.frames.frame(idx[i]);
    std::copy(src.begin(), src.end(), out.frames.frame(static_cast<int>(i)).begin());
    out.imu.push_back(scan.imu[idx[i]]);
  }
  if (scan.gt) {
    GroundTruth gt;
    for (int i : idx) gt.poses.push_back(scan.gt->poses[i]);
    out.gt = std::move(gt);
  }
  return out;
}

void resynthesize_acceleration(ScanSequence& scan, std::uint64_t seed) {
  const auto fresh = synthesize_imu(scan.gt->poses, scan.meta.dt, scan.meta.noise, seed);
  for (std::size_t i = 0; i < scan.imu.size(); ++i) scan.imu[i].acceleration = fresh[i].acceleration;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> validate(const ScanSequence& scan) {
  std::vector<std::string> v;
  const int n = scan.frames.count;
  if (n < 4) v.push_back("too few frames: " + std::to_string(n) + " < 4");
  if (scan.frames.height <= 0 || scan.frames.width <= 0) v.push_back("frame dims not positive");
  if (scan.frames.pixels.size() != static_cast<std::size_t>(std::max(n, 0)) * scan.frames.frame_size()) {
    v.push_back("frame buffer size does not match count x height x width");
  } else {
    for (int f = 0; f < n; ++f) {
      for (float p : scan.frames.frame(f)) {
        if (!std::isfinite(p)) {
          v.push_back("non-finite pixel in frame " + std::to_string(f));
          break;
        }
        if (p < 0.0f || p > 1.0f) {
          v.push_back("pixel outside [0,1] in frame " + std::to_string(f));
          break;
        }
      }
    }
  }
  if (static_cast<int>(scan.imu.size()) != n) {
    v.push_back("imu length mismatch: " + std::to_string(scan.imu.size()) + " records for " +
                std::to_string(n) + " frames");
  }
  for (std::size_t i = 0; i < scan.imu.size(); ++i) {
    const auto& r = scan.imu[i];
    if (!r.orientation.degrees.allFinite() || !r.acceleration.allFinite()) {
      v.push_back("non-finite imu record " + std::to_string(i));
    } else if ((r.orientation.degrees.array() <= -180.0).any() ||
               (r.orientation.degrees.array() > 180.0).any()) {
      v.push_back("imu orientation outside (-180,180] at record " + std::to_string(i));
    }
  }
  if (scan.gt) {
    if (static_cast<int>(scan.gt->size()) != n) {
      v.push_back("gt length mismatch: " + std::to_string(scan.gt->size()) + " poses for " +
                  std::to_string(n) + " frames");
    }
    for (std::size_t i = 0; i < scan.gt->size(); ++i) {
      const auto& p = scan.gt->poses[i];
      if (!p.translation.allFinite() || !is_rotation(p.rotation, 1e-9)) {
        v.push_back("invalid gt pose " + std::to_string(i));
      }
    }
  }
  if (!(scan.meta.dt > 0.0)) v.push_back("dt not positive");
  if (!(scan.meta.pixel_spacing > 0.0)) v.push_back("pixel spacing not positive");
  if (scan.meta.euler_convention != kEulerConvention) {
    v.push_back("unsupported euler convention '" + scan.meta.euler_convention + "'");
  }
  return v;
}

ScanSequence augment(const ScanSequence& scan, AugmentKind kind, const AugmentParams& params,
                     std::uint64_t seed) {
  const int n = scan.frames.count;
  std::mt19937_64 rng(seed);
  auto too_short = [&](int len) {
    if (len < params.min_length) {
      throw Error(ErrorCode::kTooShortAfterAugment,
                  std::to_string(len) + " frames < " + std::to_string(params.min_length));
    }
  };

  switch (kind) {
    case AugmentKind::kSubsequence: {
      int len = 0, begin = 0;
      if (params.begin && params.end) {
        begin = *params.begin;
        len = *params.end - begin;
        if (begin < 0 || *params.end > n) {
          throw Error(ErrorCode::kBadSpec, "subsequence range outside the scan");
        }
      } else {
        too_short(n);
        len = std::uniform_int_distribution<int>(params.min_length, n)(rng);
        begin = std::uniform_int_distribution<int>(0, n - len)(rng);
      }
      too_short(len);
      std::vector<int> idx(len);
      for (int i = 0; i < len; ++i) idx[i] = begin + i;
      return take_frames(scan, idx);
    }
    case AugmentKind::kInterval: {
      int stride = 0;
      if (params.stride) {
        stride = *params.stride;
      } else {
        const int max_stride = std::max(1, (n - 1) / std::max(params.min_length - 1, 1));
        stride = std::uniform_int_distribution<int>(std::min(2, max_stride), max_stride)(rng);
      }
      if (stride < 1) throw Error(ErrorCode::kBadSpec, "interval stride must be >= 1");
      std::vector<int> idx;
      for (int i = 0; i < n; i += stride) idx.push_back(i);
      too_short(static_cast<int>(idx.size()));
      ScanSequence out = take_frames(scan, idx);
      out.meta.dt = scan.meta.dt * stride;
      if (out.gt) resynthesize_acceleration(out, rng());
      return out;
    }
    case AugmentKind::kInversion: {
      if (!scan.gt) {
        throw Error(ErrorCode::kNoGroundTruth, "inversion needs ground truth to re-derive acceleration");
      }
      too_short(n);
      std::vector<int> idx(n);
      for (int i = 0; i < n; ++i) idx[i] = n - 1 - i;
      ScanSequence out = take_frames(scan, idx);
      resynthesize_acceleration(out, rng());
      return out;
    }
  }
  return scan;
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1u << 30));
    crc = ::crc32(crc, bytes.data() + offset, chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::uint32_t crc32(const std::string& bytes) {
  return crc32(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes.data()),
                                             bytes.size()));
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

void write_pose_csv(std::span<const Pose> poses, const fs::path& path) {
  write_file(path, pose_csv(poses));
}

std::vector<Pose> read_pose_csv(const fs::path& path) {
  return parse_pose_csv(read_file(path), path.string());
}

void save_scan(const ScanSequence& scan, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());

  std::map<std::string, std::string> files;

  json meta = {
      {"format_version", kScanFormatVersion},
      {"frame_count", scan.frames.count},
      {"height", scan.frames.height},
      {"width", scan.frames.width},
      {"dt", scan.meta.dt},
      {"pixel_spacing", scan.meta.pixel_spacing},
      {"euler_convention", scan.meta.euler_convention},
      {"units", scan.meta.units},
      {"style", scan.meta.style},
      {"calibration", scan.meta.calibration},
      {"seed", scan.meta.seed},
      {"noise", noise_json(scan.meta.noise)},
      {"has_gt", scan.gt.has_value()},
  };
  files["meta.json"] = meta.dump(2) + "\n";

  std::string frames(kFrameMagic, 4);
  put_u32(frames, static_cast<std::uint32_t>(scan.frames.count));
  put_u32(frames, static_cast<std::uint32_t>(scan.frames.height));
  put_u32(frames, static_cast<std::uint32_t>(scan.frames.width));
  frames.reserve(kFrameHeaderBytes + 4 * scan.frames.pixels.size());
  for (float p : scan.frames.pixels) {
    std::uint32_t bits;
    std::memcpy(&bits, &p, sizeof(bits));
    put_u32(frames, bits);
  }
  files["frames.bin"] = std::move(frames);
  files["imu.csv"] = imu_csv(scan.imu);
  if (scan.gt) files["gt.csv"] = pose_csv(scan.gt->poses);

  std::string sums;
  for (const auto& [name, bytes] : files) {
    write_file(dir / name, bytes);
    char hex[16];
    std::snprintf(hex, sizeof(hex), "%08x", crc32(bytes));
    sums += std::string(hex) + "  " + name + "\n";
  }
  write_file(dir / "checksums.txt", sums);
}

ScanSequence load_scan(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kIo, "not a scan directory: " + dir.string());
  const std::string sums = read_file(dir / "checksums.txt");
  const std::string meta_text = read_file(dir / "meta.json");

  const json meta = json::parse(meta_text, nullptr, false);
  if (!meta.is_discarded() && meta.contains("format_version")) {
    const int version = meta["format_version"].get<int>();
    if (version != kScanFormatVersion) {
      throw Error(ErrorCode::kFormatVersionMismatch,
                  dir.string() + " has format version " + std::to_string(version) +
                      ", this build reads version " + std::to_string(kScanFormatVersion));
    }
  }

  std::map<std::string, std::string> files;
  std::istringstream in(sums);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto sep = line.find("  ");
    if (sep == std::string::npos) throw Error(ErrorCode::kChecksumMismatch, "malformed checksums.txt");
    const std::string name = line.substr(sep + 2);
    const auto expected = static_cast<std::uint32_t>(std::stoul(line.substr(0, sep), nullptr, 16));
    std::string bytes = name == "meta.json" ? meta_text : read_file(dir / name);
    if (crc32(bytes) != expected) {
      throw Error(ErrorCode::kChecksumMismatch, (dir / name).string() + " fails its CRC32");
    }
    files[name] = std::move(bytes);
  }
  for (const char* required : {"meta.json", "frames.bin", "imu.csv"}) {
    if (!files.count(required)) {
      throw Error(ErrorCode::kChecksumMismatch, std::string(required) + " missing from checksums.txt");
    }
  }
  if (meta.is_discarded()) throw Error(ErrorCode::kIo, "meta.json is not valid JSON");

  ScanSequence scan;
  try {
    scan.meta.dt = meta.at("dt").get<double>();
    scan.meta.pixel_spacing = meta.at("pixel_spacing").get<double>();
    scan.meta.euler_convention = meta.at("euler_convention").get<std::string>();
    scan.meta.units = meta.at("units").get<std::string>();
    scan.meta.style = meta.value("style", "");
    scan.meta.calibration = meta.value("calibration", scan.meta.calibration);
    scan.meta.seed = meta.value("seed", std::uint64_t{0});
    if (meta.contains("noise")) {
      const auto& n = meta["noise"];
      scan.meta.noise = NoiseSpec{n.at("accel_sigma").get<double>(), n.at("accel_bias").get<double>(),
                                  n.at("orientation_sigma").get<double>()};
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("meta.json: ") + e.what());
  }

  const std::string& frames = files["frames.bin"];
  if (frames.size() < kFrameHeaderBytes || std::memcmp(frames.data(), kFrameMagic, 4) != 0) {
    throw Error(ErrorCode::kIo, "frames.bin: bad header");
  }
  const auto count = static_cast<int>(get_u32(frames, 4));
  const auto height = static_cast<int>(get_u32(frames, 8));
  const auto width = static_cast<int>(get_u32(frames, 12));
  scan.frames = FrameStack(count, height, width);
  if (frames.size() != kFrameHeaderBytes + 4 * scan.frames.pixels.size()) {
    throw Error(ErrorCode::kIo, "frames.bin: payload size does not match header dims");
  }
  for (std::size_t i = 0; i < scan.frames.pixels.size(); ++i) {
    const std::uint32_t bits = get_u32(frames, kFrameHeaderBytes + 4 * i);
    std::memcpy(&scan.frames.pixels[i], &bits, sizeof(bits));
  }

  for (const auto& row : parse_csv(files["imu.csv"], 7, "imu.csv")) {
    ImuRecord r;
    r.orientation = EulerAngles(row[1], row[2], row[3]);
    r.acceleration = Vec3(row[4], row[5], row[6]);
    scan.imu.push_back(r);
  }
  if (files.count("gt.csv")) {
    scan.gt = GroundTruth{parse_pose_csv(files["gt.csv"], "gt.csv")};
  }
  return scan;
}

}  // namespace sonotrack
