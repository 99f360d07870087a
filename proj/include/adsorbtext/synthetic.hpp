#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adsorbtext/featurizer.hpp"
#include "adsorbtext/systems.hpp"

namespace adsorbtext {

// Generated slab + adsorbate systems whose energy is an analytic function of
// the adsorbate, the site type and the interacting surface elements, plus
// Gaussian noise. Every generated geometry is checked with
// detect_configuration so the serialized site matches the one used for the
// energy.

struct SyntheticOptions {
  std::size_t n_systems = 2000;
  std::uint64_t seed = 0;
  double noise_sd = 0.1;  // eV
  /// Fraction of in-domain systems assigned to the ID validation split.
  double validation_fraction = 0.2;
  /// Hold out some adsorbates and metals to populate OOD_ads/OOD_cat/OOD_both.
  bool ood_splits = false;
};

const std::vector<std::string>& synthetic_adsorbates();
const std::vector<std::string>& synthetic_metals();

/// Noise-free energy for an adsorbate on the given site with the given primary surface elements.
double synthetic_energy_mean(const std::string& adsorbate_smiles, SiteType site,
                             std::span<const std::string> primary_elements);

std::vector<AtomicSystem> generate_synthetic(const SyntheticOptions& options);

}  // namespace adsorbtext
