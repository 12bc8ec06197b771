#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tslm/autoencoder.hpp"
#include "tslm/decoder.hpp"
#include "tslm/denoiser.hpp"
#include "tslm/tensor.hpp"

namespace tslm {

// Binary container: "TSLM" magic, u32 version (little-endian), u64 header
// length, JSON header {config, tensors:[{name, shape, offset}]}, then a
// payload of 32-bit little-endian floats. Offsets are byte positions into
// the payload; round-trips are bit-exact.
struct Checkpoint {
  nlohmann::json config;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Model converters. Loading rebuilds the model from the embedded config
// (including the vocabulary for encoder-bearing models) and copies tensors.
Checkpoint autoencoder_to_checkpoint(AutoencoderModel& model);
AutoencoderModel autoencoder_from_checkpoint(const Checkpoint& ckpt);

Checkpoint denoiser_to_checkpoint(DenoiserModel& model);
DenoiserModel denoiser_from_checkpoint(const Checkpoint& ckpt);

Checkpoint tslm_to_checkpoint(TslmModel& model);
TslmModel tslm_from_checkpoint(const Checkpoint& ckpt);

// Convenience wrappers keyed by the config "kind" field.
void save_model(AutoencoderModel& model, const std::string& path);
void save_model(DenoiserModel& model, const std::string& path);
void save_model(TslmModel& model, const std::string& path);
AutoencoderModel load_autoencoder(const std::string& path);
DenoiserModel load_denoiser(const std::string& path);
TslmModel load_tslm(const std::string& path);

}  // namespace tslm
