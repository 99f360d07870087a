#include <bit>
#include <cstring>

#include "adsorbtext/encoder.hpp"

namespace adsorbtext {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kBlobName = "params.bin";

}  // namespace

void save_checkpoint(const EncoderModel& model, const std::filesystem::path& dir, const std::string& vocab_hash,
                     std::uint64_t step, std::uint64_t seed) {
  std::string blob;
  json tensors = json::array();
  for (const auto& p : model.parameters()) {
    auto values = p.tensor.values();
    tensors.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", blob.size()}, {"count", values.size()}});
    blob.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
  }
  json manifest = {{"format", "adsorbtext-checkpoint"},
                   {"format_version", kCheckpointFormatVersion},
                   {"config", model.config().to_json()},
                   {"vocab_hash", vocab_hash},
                   {"step", step},
                   {"seed", seed},
                   {"mlm_head", model.has_mlm_head()},
                   {"mlm_tied", model.has_mlm_head() ? model.mlm_tied() : true},
                   {"dtype", "float64-le"},
                   {"tensors", std::move(tensors)},
                   {"blob", {{"file", kBlobName}, {"bytes", blob.size()}, {"fnv1a64", hex64(fnv1a64(blob))}}}};
  StagedDirectory staged(dir);
  write_file_atomic(staged.path() / kBlobName, blob);
  write_file_atomic(staged.path() / kManifestName, manifest.dump(2) + "\n");
  staged.commit();
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir, const std::optional<std::string>& expected_vocab_hash) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir / kManifestName));
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint " + dir.string() + ": corrupt manifest: " + e.what());
  } catch (const IoError& e) {
    throw CheckpointError("checkpoint " + dir.string() + ": " + e.what());
  }
  LoadedCheckpoint out;
  try {
    if (manifest.value("format", std::string()) != "adsorbtext-checkpoint")
      throw CheckpointError("checkpoint " + dir.string() + ": not an adsorbtext checkpoint");
    int version = manifest.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion)
      throw CheckpointError("checkpoint " + dir.string() + ": version mismatch (file " + std::to_string(version) +
                            ", expected " + std::to_string(kCheckpointFormatVersion) + ")");
    auto& m = out.manifest;
    m.format_version = version;
    m.config = EncoderConfig::from_json(manifest.at("config"));
    m.vocab_hash = manifest.at("vocab_hash").get<std::string>();
    m.step = manifest.at("step").get<std::uint64_t>();
    m.seed = manifest.at("seed").get<std::uint64_t>();
    m.mlm_head = manifest.at("mlm_head").get<bool>();
    m.mlm_tied = manifest.at("mlm_tied").get<bool>();

    std::string blob;
    try {
      blob = read_file(dir / kBlobName);
    } catch (const IoError& e) {
      throw CheckpointError("checkpoint " + dir.string() + ": " + e.what());
    }
    const auto& blob_meta = manifest.at("blob");
    if (blob.size() != blob_meta.at("bytes").get<std::size_t>())
      throw CheckpointError("checkpoint " + dir.string() + ": parameter blob is " + std::to_string(blob.size()) +
                            " bytes, manifest declares " + std::to_string(blob_meta.at("bytes").get<std::size_t>()) +
                            " (truncated or corrupt)");
    if (hex64(fnv1a64(blob)) != blob_meta.at("fnv1a64").get<std::string>())
      throw CheckpointError("checkpoint " + dir.string() + ": parameter blob checksum mismatch (corrupt)");

    out.model = EncoderModel(m.config);
    if (m.mlm_head) out.model.attach_mlm_head(m.mlm_tied, 0);
    auto params = out.model.parameters();
    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != params.size())
      throw CheckpointError("checkpoint " + dir.string() + ": tensor count does not match the config");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& t = tensors[i];
      auto& p = params[i];
      if (t.at("name").get<std::string>() != p.name || t.at("shape").get<std::vector<std::size_t>>() != p.tensor.shape())
        throw CheckpointError("checkpoint " + dir.string() + ": tensor '" + t.at("name").get<std::string>() +
                              "' does not match the declared layout");
      auto offset = t.at("offset").get<std::size_t>();
      auto count = t.at("count").get<std::size_t>();
      if (count != p.tensor.size() || offset + count * sizeof(double) > blob.size())
        throw CheckpointError("checkpoint " + dir.string() + ": tensor '" + p.name + "' out of blob bounds");
      std::memcpy(p.tensor.values().data(), blob.data() + offset, count * sizeof(double));
    }
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint " + dir.string() + ": corrupt manifest: " + e.what());
  } catch (const ValidationError& e) {
    throw CheckpointError("checkpoint " + dir.string() + ": " + e.what());
  }
  if (expected_vocab_hash && *expected_vocab_hash != out.manifest.vocab_hash)
    out.warnings.push_back("checkpoint vocabulary hash " + out.manifest.vocab_hash +
                           " differs from the supplied vocabulary " + *expected_vocab_hash);
  return out;
}

}  // namespace adsorbtext
