#pragma once

#include <memory>
#include <string>

#include "sttvc/model.hpp"

namespace sttvc {

struct Checkpoint {
    std::unique_ptr<CodecModel> model;
    double lambda = 0.0;
    std::uint64_t step = 0;
    std::string rng_state;  // textual std::mt19937_64 state

    std::uint64_t hash() const { return config_hash(model->config(), lambda); }
};

// Versioned binary file: config, lambda, every parameter by name, the frozen
// factorized tables and the training RNG state.
std::vector<std::uint8_t> serialize_checkpoint(const CodecModel& model, double lambda, std::uint64_t step,
                                               const std::string& rng_state);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::string& path, const CodecModel& model, double lambda, std::uint64_t step = 0,
                     const std::string& rng_state = {});
Checkpoint load_checkpoint(const std::string& path);

// Resolves a bare checkpoint name against $STTVC_CHECKPOINT_DIR when the path
// does not exist as given.
std::string resolve_checkpoint_path(const std::string& path);

}  // namespace sttvc
