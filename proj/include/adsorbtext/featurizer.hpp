#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adsorbtext/io.hpp"
#include "adsorbtext/systems.hpp"

namespace adsorbtext {

enum class SiteType { ontop, bridge, hollow, fourfold };
std::string_view to_string(SiteType site);
/// 1 -> ontop, 2 -> bridge, 3 -> hollow, >= 4 -> fourfold.
SiteType site_type_for_contacts(std::size_t n_contacts);

enum class StringFormat { S1, S2, S3, S4, S5, DESC };
std::string_view to_string(StringFormat format);
/// Accepts "s1".."s5", "S1".."S5", "desc", "DESC".
StringFormat parse_format(std::string_view text);

inline constexpr double kDefaultCutoffTolerance = 0.25;  // angstrom

struct SurfaceContact {
  std::size_t index = 0;
  std::string element;
  double distance = 0.0;
};

struct AdsorptionConfiguration {
  std::size_t binding_atom = 0;
  std::string binding_element;
  /// Distance-ascending; ties keep atom order.
  std::vector<SurfaceContact> primary_surface_atoms;
  SiteType site_type = SiteType::ontop;
  /// One list per primary atom: its own element, then surface/subsurface
  /// neighbours alphabetically, then adsorbate neighbours in atom order.
  std::vector<std::vector<std::string>> secondary_lists;
};

class NoBindingDetected : public Error {
 public:
  explicit NoBindingDetected(const std::string& id) : Error("system '" + id + "': no binding detected") {}
};

/// Throws NoBindingDetected when no adsorbate atom touches the surface.
AdsorptionConfiguration detect_configuration(const AtomicSystem& system,
                                             double cutoff_tolerance = kDefaultCutoffTolerance);

struct SerializedSample {
  std::string system_id;
  StringFormat format = StringFormat::S1;
  std::string text;
  std::optional<double> energy_ev;
  Split split = Split::train;

  bool operator==(const SerializedSample&) const = default;
};

/// `config` may be null for S1. Other formats require it.
SerializedSample serialize(const AtomicSystem& system, const AdsorptionConfiguration* config,
                           StringFormat format);
SerializedSample render_system_description(const AtomicSystem& system,
                                           const AdsorptionConfiguration* config);

/// Detects the configuration and serializes. When detection fails for
/// S2-S5 the S1 content is emitted instead and `fell_back` is set.
struct FeaturizeResult {
  SerializedSample sample;
  bool fell_back = false;
};
FeaturizeResult featurize(const AtomicSystem& system, StringFormat format,
                          double cutoff_tolerance = kDefaultCutoffTolerance);

/// Order-preserving featurization over up to `threads` workers.
std::vector<FeaturizeResult> featurize_all(const std::vector<AtomicSystem>& systems, StringFormat format,
                                           double cutoff_tolerance = kDefaultCutoffTolerance,
                                           unsigned threads = 1);

struct DescriptionCache {
  std::map<std::string, std::string> adsorbates;  // keyed by SMILES
  std::map<std::string, std::string> bulks;       // keyed by reduced formula
};

/// Reads {"adsorbates": {...}, "bulks": {...}}; throws ParseError when malformed.
DescriptionCache load_description_cache(const std::filesystem::path& path);
DescriptionCache parse_description_cache(std::string_view text, const std::string& source = "<memory>");

struct CacheMergeReport {
  std::size_t samples = 0;
  std::size_t missing_adsorbate = 0;
  std::size_t missing_bulk = 0;
};

/// Appends cached prose to every DESC sample, separated by blank lines.
/// `systems` supplies the SMILES/formula for each sample id.
CacheMergeReport merge_description_cache(std::vector<SerializedSample>& samples,
                                         const std::vector<AtomicSystem>& systems,
                                         const DescriptionCache& cache);

// Serialized corpus file: one JSON object per line.
void save_corpus(const std::filesystem::path& path, const std::vector<SerializedSample>& samples);
std::string corpus_to_string(const std::vector<SerializedSample>& samples);
std::vector<SerializedSample> load_corpus(const std::filesystem::path& path);
std::vector<SerializedSample> parse_corpus(std::string_view text, const std::string& source = "<memory>");

}  // namespace adsorbtext
