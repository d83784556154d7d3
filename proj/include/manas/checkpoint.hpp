#pragma once

#include <string>

#include "manas/trainer.hpp"

namespace manas {

// TrainConfig <-> JSON. parse_train_config validates types and ranges and
// rejects unknown keys.
std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig parse_train_config(const std::string& json_text);

// Single-file checkpoint: "MNCK" magic, format version, a JSON manifest
// (config, epoch, baseline, tensor directory with names/shapes/kinds), then
// raw little-endian IEEE-754 doubles. Parameter values and Adam moments are
// stored losslessly, so a reloaded state continues bit-identically.
void save_checkpoint(const std::string& path, const TrainState& state,
                     const TrainConfig& cfg);

struct LoadedCheckpoint {
  TrainState state;
  TrainConfig config;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// FNV-1a over a parameter set's values; used by freeze/fidelity checks.
std::uint64_t hash_params(const ParameterSet& params);

}  // namespace manas
