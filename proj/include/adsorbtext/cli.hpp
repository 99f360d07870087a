#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "adsorbtext/io.hpp"

namespace adsorbtext::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUserError = 1;
inline constexpr int kExitInternalError = 2;

/// Runs one subcommand. `args` excludes the program name. Values from a
/// `--config file.json` override flags; ADSORBTEXT_SEED overrides --seed.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct SmokeOptions {
  std::filesystem::path fixture;  // systems JSONL; defaults to the bundled fixture
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  std::size_t layers = 2, heads = 2, hidden = 32, ffn = 64;
  std::size_t pretrain_epochs = 2;
  std::size_t train_epochs = 8;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  /// Called after each successful stage; lets tests tamper with intermediates.
  std::function<void(const std::string& stage, const std::filesystem::path& out_dir)> after_stage;
};

struct SmokeReport {
  std::vector<std::string> stages;
  std::vector<std::filesystem::path> artifacts;
  double seconds = 0.0;
};

std::filesystem::path bundled_fixture();
/// Artifact paths relative to the smoke output directory.
const std::vector<std::string>& smoke_artifacts();

/// featurize -> build-vocab -> pretrain -> train -> predict -> eval -> attention
/// through run(). Throws StageError naming the first failing stage.
SmokeReport end_to_end_smoke(const SmokeOptions& options);

}  // namespace adsorbtext::cli
