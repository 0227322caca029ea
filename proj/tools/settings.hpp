#pragma once

#include <string>

#include "sonotrack/config.hpp"
#include "sonotrack/estimator.hpp"
#include "sonotrack/learn.hpp"
#include "sonotrack/simulator.hpp"

namespace sonotrack::cli {

// Typed views of a key=value config. Every key is read with its default so
// the effective configuration is complete when echoed into a manifest.

DatasetSpec dataset_settings(KeyValueConfig& cfg);
ModelConfig model_settings(KeyValueConfig& cfg, int image_height, int image_width, std::uint64_t seed);
TrainConfig train_settings(KeyValueConfig& cfg, std::uint64_t seed);
OnlineConfig online_settings(KeyValueConfig& cfg);

/// Throws kBadConfig naming any key that no reader asked for.
void reject_unknown_keys(const KeyValueConfig& cfg);

}  // namespace sonotrack::cli
