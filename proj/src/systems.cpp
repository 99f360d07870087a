#include "adsorbtext/systems.hpp"

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "adsorbtext/elements.hpp"
#include "adsorbtext/io.hpp"

namespace adsorbtext {

using nlohmann::json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::ID: return "ID";
    case Split::OOD_ads: return "OOD_ads";
    case Split::OOD_cat: return "OOD_cat";
    case Split::OOD_both: return "OOD_both";
    case Split::train: return "train";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  for (Split s : {Split::ID, Split::OOD_ads, Split::OOD_cat, Split::OOD_both, Split::train})
    if (to_string(s) == text) return s;
  throw ValidationError("unknown split '" + std::string(text) + "'");
}

std::size_t AtomicSystem::adsorbate_atom_count() const {
  std::size_t n = 0;
  for (const auto& a : atoms) n += (a.tag == kTagAdsorbate);
  return n;
}

double determinant(const Cell& c) {
  return c[0][0] * (c[1][1] * c[2][2] - c[1][2] * c[2][1]) -
         c[0][1] * (c[1][0] * c[2][2] - c[1][2] * c[2][0]) +
         c[0][2] * (c[1][0] * c[2][1] - c[1][1] * c[2][0]);
}

void validate(const AtomicSystem& s) {
  auto fail = [&](const std::string& field, const std::string& why) {
    throw ValidationError("system '" + s.id + "': field '" + field + "': " + why);
  };
  if (s.id.empty()) fail("id", "empty");
  if (std::abs(determinant(s.cell)) < 1e-12) fail("cell", "lattice vectors are linearly dependent");
  bool has_ads = false, has_surf = false;
  std::map<std::string, int> tagged;
  for (const auto& a : s.atoms) {
    if (a.tag < 0 || a.tag > 2) fail("tag", "value " + std::to_string(a.tag) + " not in {0,1,2}");
    if (!is_known_element(a.element)) fail("element", "unknown element symbol '" + a.element + "'");
    for (double x : a.position)
      if (!std::isfinite(x)) fail("position", "non-finite coordinate");
    has_ads |= a.tag == kTagAdsorbate;
    has_surf |= a.tag == kTagSurface;
    if (a.tag == kTagAdsorbate) ++tagged[a.element];
  }
  if (!has_ads) fail("tag", "no adsorbate (tag 2) atom");
  if (!has_surf) fail("tag", "no surface (tag 1) atom");
  if (tagged != element_counts(s.adsorbate_smiles))
    fail("adsorbate_smiles", "element multiset differs from the tag-2 atoms");
  for (const auto& [sym, n] : element_counts(s.bulk_formula))
    if (!is_known_element(sym)) fail("bulk_formula", "unknown element symbol '" + sym + "'");
  if (s.energy_ev && !std::isfinite(*s.energy_ev)) fail("energy_ev", "non-finite");
}

namespace {

AtomicSystem from_json(const json& j) {
  AtomicSystem s;
  s.id = j.at("id").get<std::string>();
  s.adsorbate_smiles = j.at("adsorbate_smiles").get<std::string>();
  s.bulk_formula = j.at("bulk_formula").get<std::string>();
  s.miller_index = j.at("miller_index").get<MillerIndex>();
  s.cell = j.at("cell").get<Cell>();
  for (const auto& ja : j.at("atoms")) {
    Atom a;
    a.element = ja.at("element").get<std::string>();
    a.position = ja.at("position").get<Vec3>();
    a.tag = ja.at("tag").get<int>();
    s.atoms.push_back(std::move(a));
  }
  if (j.contains("energy_ev") && !j["energy_ev"].is_null()) s.energy_ev = j["energy_ev"].get<double>();
  s.split = parse_split(j.at("split").get<std::string>());
  return s;
}

json to_json(const AtomicSystem& s) {
  json atoms = json::array();
  for (const auto& a : s.atoms) atoms.push_back({{"element", a.element}, {"position", a.position}, {"tag", a.tag}});
  json j = {{"id", s.id},
            {"adsorbate_smiles", s.adsorbate_smiles},
            {"bulk_formula", s.bulk_formula},
            {"miller_index", s.miller_index},
            {"cell", s.cell},
            {"atoms", std::move(atoms)},
            {"split", std::string(to_string(s.split))}};
  if (s.energy_ev) j["energy_ev"] = *s.energy_ev;
  return j;
}

}  // namespace

std::vector<AtomicSystem> parse_dataset(std::string_view text, const std::string& source) {
  std::vector<AtomicSystem> out;
  std::set<std::string> ids;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    AtomicSystem s;
    try {
      s = from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(source, lineno, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(source, lineno, e.what());
    }
    try {
      validate(s);
    } catch (const ValidationError& e) {
      throw ValidationError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!ids.insert(s.id).second)
      throw ValidationError(source + ":" + std::to_string(lineno) + ": duplicate id '" + s.id + "'");
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<AtomicSystem> load_dataset(const std::filesystem::path& path) {
  return parse_dataset(read_file(path), path.string());
}

std::string dataset_to_string(const std::vector<AtomicSystem>& systems) {
  std::string out;
  for (const auto& s : systems) out += to_json(s).dump() + "\n";
  return out;
}

void save_dataset(const std::filesystem::path& path, const std::vector<AtomicSystem>& systems) {
  write_file_atomic(path, dataset_to_string(systems));
}

double minimum_image_distance(const Vec3& a, const Vec3& b, const Cell& cell) {
  if (std::abs(determinant(cell)) < 1e-12) throw ValidationError("minimum_image_distance: singular cell");
  double best = std::numeric_limits<double>::infinity();
  for (int i = -1; i <= 1; ++i)
    for (int j = -1; j <= 1; ++j)
      for (int k = -1; k <= 1; ++k) {
        double d2 = 0.0;
        for (int c = 0; c < 3; ++c) {
          double shifted = b[c] + i * cell[0][c] + j * cell[1][c] + k * cell[2][c];
          double diff = shifted - a[c];
          d2 += diff * diff;
        }
        best = std::min(best, d2);
      }
  return std::sqrt(best);
}

}  // namespace adsorbtext
