#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace adsorbtext {

struct ElementProperties {
  std::string symbol;
  int atomic_number = 0;
  double atomic_mass = 0.0;            // amu
  int period = 0;
  double dipole_polarizability = 0.0;  // atomic units
  double electronegativity = 0.0;      // Pauling
  double electron_affinity = 0.0;      // eV
  double covalent_radius = 0.0;        // angstrom
};

/// Bundled, compiled-in element table. Throws ValidationError for unknown symbols.
const ElementProperties& element_properties(std::string_view symbol);
bool is_known_element(std::string_view symbol);
const std::vector<ElementProperties>& element_table();
std::string_view element_table_version();

/// Element symbols and counts of a formula-like string ("NH3", "VCr3", "OCH2CH3").
/// Only capitalised symbols and trailing counts are read; bond and branch
/// characters are skipped.
std::map<std::string, int> element_counts(std::string_view formula);

}  // namespace adsorbtext
