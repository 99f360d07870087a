#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adsorbtext/io.hpp"

namespace adsorbtext {

using Vec3 = std::array<double, 3>;
/// Rows are the three lattice vectors, in angstrom.
using Cell = std::array<Vec3, 3>;
using MillerIndex = std::array<int, 3>;

enum class Split { ID, OOD_ads, OOD_cat, OOD_both, train };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);
inline constexpr std::array<Split, 4> kValidationSplits{Split::ID, Split::OOD_ads, Split::OOD_cat,
                                                        Split::OOD_both};

/// Tag convention: 0 = subsurface slab, 1 = surface, 2 = adsorbate.
enum : int { kTagSubsurface = 0, kTagSurface = 1, kTagAdsorbate = 2 };

struct Atom {
  std::string element;
  Vec3 position{};
  int tag = 0;

  bool operator==(const Atom&) const = default;
};

struct AtomicSystem {
  std::string id;
  std::string adsorbate_smiles;
  std::string bulk_formula;
  MillerIndex miller_index{};
  Cell cell{};
  std::vector<Atom> atoms;
  std::optional<double> energy_ev;
  Split split = Split::train;

  bool operator==(const AtomicSystem&) const = default;

  std::size_t adsorbate_atom_count() const;
};

/// Checks every record invariant; throws ValidationError naming the field and id.
void validate(const AtomicSystem& system);

/// One JSON object per line. Empty lines are skipped.
std::vector<AtomicSystem> load_dataset(const std::filesystem::path& path);
std::vector<AtomicSystem> parse_dataset(std::string_view text, const std::string& source = "<memory>");
void save_dataset(const std::filesystem::path& path, const std::vector<AtomicSystem>& systems);
std::string dataset_to_string(const std::vector<AtomicSystem>& systems);

double determinant(const Cell& cell);

/// Minimum distance between a and every image of b shifted by -1..1 lattice vectors.
/// Throws ValidationError on a singular cell.
double minimum_image_distance(const Vec3& a, const Vec3& b, const Cell& cell);

}  // namespace adsorbtext
