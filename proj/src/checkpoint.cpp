#include "tslm/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "tslm/error.hpp"

namespace tslm {

using nlohmann::json;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

float get_f32(const std::string& in, std::size_t pos) {
  const std::uint32_t bits = get_u32(in, pos);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

json encoder_config_json(const MultiModalEncoderModel& model) {
  const auto& cfg = model.config();
  json j;
  j["d"] = cfg.d;
  j["heads"] = cfg.heads;
  j["prototypes"] = cfg.prototypes;
  j["blocks"] = cfg.blocks;
  j["max_positions"] = cfg.max_positions;
  j["ff_multiplier"] = cfg.ff_multiplier;
  j["variant"] = to_string(cfg.variant);
  j["vocab"] = model.vocab().tokens();
  return j;
}

EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig cfg;
  cfg.d = j.at("d").get<std::int64_t>();
  cfg.heads = j.at("heads").get<std::int64_t>();
  cfg.prototypes = j.at("prototypes").get<std::int64_t>();
  cfg.blocks = j.at("blocks").get<std::int64_t>();
  cfg.max_positions = j.at("max_positions").get<std::int64_t>();
  cfg.ff_multiplier = j.at("ff_multiplier").get<std::int64_t>();
  cfg.variant = encoder_variant_from_string(j.at("variant").get<std::string>());
  return cfg;
}

json ae_config_json(const AutoencoderConfig& cfg) {
  json j;
  j["canonical_length"] = cfg.canonical_length;
  j["c1_channels"] = cfg.c1_channels;
  j["c2_channels"] = cfg.c2_channels;
  j["embed_dim"] = cfg.embed_dim;
  return j;
}

AutoencoderConfig ae_config_from_json(const json& j) {
  AutoencoderConfig cfg;
  cfg.canonical_length = j.at("canonical_length").get<std::int64_t>();
  cfg.c1_channels = j.at("c1_channels").get<std::int64_t>();
  cfg.c2_channels = j.at("c2_channels").get<std::int64_t>();
  cfg.embed_dim = j.at("embed_dim").get<std::int64_t>();
  return cfg;
}

// Copies checkpoint tensors into a freshly constructed model by name.
void restore_tensors(const Checkpoint& ckpt,
                     std::vector<std::pair<std::string, Tensor>> model_tensors,
                     const std::string& prefix = "") {
  if (ckpt.tensors.size() < model_tensors.size()) {
    throw FormatError("checkpoint: tensor count mismatch");
  }
  std::size_t found = 0;
  for (auto& [name, tensor] : model_tensors) {
    const std::string want = prefix + name;
    bool matched = false;
    for (const auto& [ckpt_name, ckpt_tensor] : ckpt.tensors) {
      if (ckpt_name != want) continue;
      if (ckpt_tensor.shape() != tensor.shape()) {
        throw FormatError("checkpoint: shape mismatch for " + want);
      }
      auto dst = tensor.mutable_values();
      auto src = ckpt_tensor.values();
      std::copy(src.begin(), src.end(), dst.begin());
      matched = true;
      break;
    }
    if (!matched) throw FormatError("checkpoint: missing tensor " + want);
    ++found;
  }
  (void)found;
}

std::string expect_kind(const Checkpoint& ckpt, const std::string& kind) {
  if (!ckpt.config.contains("kind") || ckpt.config["kind"].get<std::string>() != kind) {
    throw FormatError("checkpoint: expected kind '" + kind + "'");
  }
  return kind;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json header;
  header["config"] = ckpt.config;
  header["tensors"] = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : ckpt.tensors) {
    json t;
    t["name"] = name;
    t["shape"] = tensor.shape();
    t["offset"] = offset;
    header["tensors"].push_back(t);
    offset += static_cast<std::uint64_t>(tensor.size()) * 4;
  }
  const std::string header_str = header.dump();

  std::string blob;
  blob += "TSLM";
  put_u32(blob, kCheckpointVersion);
  put_u64(blob, header_str.size());
  blob += header_str;
  for (const auto& [name, tensor] : ckpt.tensors) {
    for (double v : tensor.values()) put_f32(blob, static_cast<float>(v));
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (blob.size() < 16 || blob.compare(0, 4, "TSLM") != 0) {
    throw FormatError(path + ": bad magic");
  }
  const std::uint32_t version = get_u32(blob, 4);
  if (version != kCheckpointVersion) {
    throw FormatError(path + ": unknown checkpoint version " + std::to_string(version) +
                      " (migration required)");
  }
  const std::uint64_t header_len = get_u64(blob, 8);
  if (blob.size() < 16 + header_len) throw FormatError(path + ": truncated header");
  json header = json::parse(blob.substr(16, header_len), nullptr, /*allow_exceptions=*/false);
  if (header.is_discarded()) throw FormatError(path + ": malformed header JSON");

  const std::size_t payload_start = 16 + header_len;
  const std::size_t payload_size = blob.size() - payload_start;

  Checkpoint ckpt;
  ckpt.config = header.value("config", json::object());
  std::uint64_t expected_offset = 0;
  for (const auto& t : header.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const std::vector<std::int64_t> shape = t.at("shape").get<std::vector<std::int64_t>>();
    const std::uint64_t offset = t.at("offset").get<std::uint64_t>();
    if (offset != expected_offset) throw FormatError(path + ": overlapping tensor offsets");
    std::int64_t numel = 1;
    for (std::int64_t dim : shape) numel *= dim;
    if (offset + static_cast<std::uint64_t>(numel) * 4 > payload_size) {
      throw FormatError(path + ": payload shorter than tensor table");
    }
    std::vector<double> values(static_cast<std::size_t>(numel));
    for (std::int64_t i = 0; i < numel; ++i) {
      values[static_cast<std::size_t>(i)] = static_cast<double>(
          get_f32(blob, payload_start + offset + static_cast<std::size_t>(i) * 4));
    }
    ckpt.tensors.emplace_back(name, Tensor::from_values(shape, std::move(values)));
    expected_offset = offset + static_cast<std::uint64_t>(numel) * 4;
  }
  if (expected_offset != payload_size) {
    throw FormatError(path + ": payload length does not match tensor table");
  }
  return ckpt;
}

Checkpoint autoencoder_to_checkpoint(AutoencoderModel& model) {
  Checkpoint ckpt;
  ckpt.config["kind"] = "autoencoder";
  ckpt.config["autoencoder"] = ae_config_json(model.config());
  ckpt.tensors = model.named_tensors();
  return ckpt;
}

AutoencoderModel autoencoder_from_checkpoint(const Checkpoint& ckpt) {
  expect_kind(ckpt, "autoencoder");
  Rng rng(0);
  AutoencoderModel model(ae_config_from_json(ckpt.config.at("autoencoder")), rng);
  restore_tensors(ckpt, model.named_tensors());
  return model;
}

Checkpoint denoiser_to_checkpoint(DenoiserModel& model) {
  Checkpoint ckpt;
  ckpt.config["kind"] = "denoiser";
  ckpt.config["encoder"] = encoder_config_json(model.encoder());
  ckpt.config["autoencoder"] = ae_config_json(model.autoencoder().config());
  ckpt.tensors = model.encoder().named_tensors();
  for (auto& [name, tensor] : model.autoencoder().named_tensors()) {
    ckpt.tensors.emplace_back("ae." + name, tensor);
  }
  return ckpt;
}

DenoiserModel denoiser_from_checkpoint(const Checkpoint& ckpt) {
  expect_kind(ckpt, "denoiser");
  const auto& enc_json = ckpt.config.at("encoder");
  Vocabulary vocab = Vocabulary::from_tokens(enc_json.at("vocab").get<std::vector<std::string>>());
  Rng rng(0);
  MultiModalEncoderModel encoder(std::move(vocab), encoder_config_from_json(enc_json), rng);
  AutoencoderModel ae(ae_config_from_json(ckpt.config.at("autoencoder")), rng);
  restore_tensors(ckpt, encoder.named_tensors());
  restore_tensors(ckpt, ae.named_tensors(), "ae.");
  return DenoiserModel(std::move(encoder), std::move(ae));
}

Checkpoint tslm_to_checkpoint(TslmModel& model) {
  Checkpoint ckpt;
  ckpt.config["kind"] = "tslm";
  ckpt.config["encoder"] = encoder_config_json(model.encoder());
  json dec;
  dec["blocks"] = model.decoder_config().blocks;
  dec["max_len"] = model.decoder_config().max_len;
  dec["max_positions"] = model.decoder_config().max_positions;
  ckpt.config["decoder"] = dec;
  ckpt.tensors = model.named_tensors();
  return ckpt;
}

TslmModel tslm_from_checkpoint(const Checkpoint& ckpt) {
  expect_kind(ckpt, "tslm");
  const auto& enc_json = ckpt.config.at("encoder");
  Vocabulary vocab = Vocabulary::from_tokens(enc_json.at("vocab").get<std::vector<std::string>>());
  Rng rng(0);
  MultiModalEncoderModel encoder(std::move(vocab), encoder_config_from_json(enc_json), rng);
  DecoderConfig dec;
  dec.blocks = ckpt.config.at("decoder").at("blocks").get<std::int64_t>();
  dec.max_len = ckpt.config.at("decoder").at("max_len").get<std::int64_t>();
  dec.max_positions = ckpt.config.at("decoder").at("max_positions").get<std::int64_t>();
  TslmModel model(std::move(encoder), dec, rng);
  restore_tensors(ckpt, model.named_tensors());
  return model;
}

void save_model(AutoencoderModel& model, const std::string& path) {
  Checkpoint ckpt = autoencoder_to_checkpoint(model);
  save_checkpoint(ckpt, path);
}

void save_model(DenoiserModel& model, const std::string& path) {
  Checkpoint ckpt = denoiser_to_checkpoint(model);
  save_checkpoint(ckpt, path);
}

void save_model(TslmModel& model, const std::string& path) {
  Checkpoint ckpt = tslm_to_checkpoint(model);
  save_checkpoint(ckpt, path);
}

AutoencoderModel load_autoencoder(const std::string& path) {
  return autoencoder_from_checkpoint(load_checkpoint(path));
}

DenoiserModel load_denoiser(const std::string& path) {
  return denoiser_from_checkpoint(load_checkpoint(path));
}

TslmModel load_tslm(const std::string& path) {
  return tslm_from_checkpoint(load_checkpoint(path));
}

}  // namespace tslm
