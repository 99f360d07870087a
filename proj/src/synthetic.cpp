#include "adsorbtext/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "adsorbtext/elements.hpp"

namespace adsorbtext {

namespace {

struct Unit {
  std::string element;
  int hydrogens = 0;
};

struct AdsorbateSpec {
  std::string smiles;
  std::vector<Unit> chain;  // chain[0] binds
  double offset;            // eV
};

const std::vector<AdsorbateSpec>& adsorbate_specs() {
  static const std::vector<AdsorbateSpec> specs = {
      {"*H", {{"H", 0}}, -0.3},
      {"*O", {{"O", 0}}, -2.1},
      {"*OH", {{"O", 1}}, -1.2},
      {"*OH2", {{"O", 2}}, 0.2},
      {"*N", {{"N", 0}}, -1.6},
      {"*NH", {{"N", 1}}, -1.0},
      {"*NH2", {{"N", 2}}, -0.5},
      {"*NH3", {{"N", 3}}, 0.4},
      {"*C", {{"C", 0}}, 1.2},
      {"*CH", {{"C", 1}}, 0.6},
      {"*CH2", {{"C", 2}}, 0.1},
      {"*CH3", {{"C", 3}}, -0.2},
      {"*CO", {{"C", 0}, {"O", 0}}, -0.8},
      {"*COH", {{"C", 0}, {"O", 1}}, 0.3},
      {"*CHO", {{"C", 1}, {"O", 0}}, -0.1},
      {"*OCH3", {{"O", 0}, {"C", 3}}, -0.6},
      {"*NO", {{"N", 0}, {"O", 0}}, -0.9},
  };
  return specs;
}

const AdsorbateSpec& spec_for(const std::string& smiles) {
  for (const auto& s : adsorbate_specs())
    if (s.smiles == smiles) return s;
  throw ValidationError("unknown synthetic adsorbate '" + smiles + "'");
}

const std::vector<MillerIndex> kMillers = {{1, 0, 0}, {1, 1, 0}, {1, 1, 1}, {2, 1, 0}, {2, 1, 1}, {2, 2, 1}};
const std::vector<std::pair<int, int>> kRatios = {{1, 1}, {1, 2}, {1, 3}, {2, 1}, {3, 1}};

// Held out for the OOD splits.
const std::set<std::string> kHeldOutAdsorbates = {"*NH2", "*CHO", "*OH2"};
const std::set<std::string> kHeldOutMetals = {"Hf", "Os", "Ga"};

constexpr double kSurfaceZ = 10.0;
constexpr std::size_t kSupercell = 4;

double site_shift(SiteType s) {
  switch (s) {
    case SiteType::ontop: return 0.0;
    case SiteType::bridge: return -0.35;
    case SiteType::hollow: return -0.6;
    case SiteType::fourfold: return -0.8;
  }
  return 0.0;
}

std::string formula_of(const std::string& a, int p, const std::string& b, int q) {
  auto part = [](const std::string& el, int n) { return n == 1 ? el : el + std::to_string(n); };
  return part(a, p) + part(b, q);
}

Vec3 add(Vec3 a, Vec3 b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }

struct Candidate {
  AtomicSystem system;
  std::size_t binding_index = 0;
  SiteType site = SiteType::ontop;
};

// Builds one geometry; returns false when the requested site cannot host the
// binding atom within the contact cutoff.
bool build(Candidate& c, const AdsorbateSpec& ads, const std::string& el_a, const std::string& el_b, int p, int q,
           SiteType site, std::mt19937_64& rng) {
  const double ra = element_properties(el_a).covalent_radius;
  const double rb = element_properties(el_b).covalent_radius;
  const double a = ra + rb;
  const double depth = a * std::sqrt(2.0 / 3.0);
  const Vec3 u{a, 0.0, 0.0};
  const Vec3 v{a / 2.0, a * std::numbers::sqrt3 / 2.0, 0.0};
  auto lattice = [&](double i, double j, double z) {
    return Vec3{i * u[0] + j * v[0], i * u[1] + j * v[1], z};
  };

  const std::size_t n_sites = kSupercell * kSupercell;
  auto species_layer = [&]() {
    std::size_t n_a = static_cast<std::size_t>(std::lround(static_cast<double>(n_sites) * p / (p + q)));
    n_a = std::clamp<std::size_t>(n_a, 1, n_sites - 1);
    std::vector<std::string> layer(n_sites, el_b);
    std::fill(layer.begin(), layer.begin() + static_cast<long>(n_a), el_a);
    std::shuffle(layer.begin(), layer.end(), rng);
    return layer;
  };
  auto surface = species_layer();
  auto subsurface = species_layer();

  auto& sys = c.system;
  sys.cell = {Vec3{kSupercell * a, 0.0, 0.0}, Vec3{kSupercell * v[0], kSupercell * v[1], 0.0}, Vec3{0.0, 0.0, 25.0}};
  sys.atoms.clear();
  for (std::size_t j = 0; j < kSupercell; ++j)
    for (std::size_t i = 0; i < kSupercell; ++i)
      sys.atoms.push_back({subsurface[j * kSupercell + i],
                           lattice(i + 1.0 / 3.0, j + 1.0 / 3.0, kSurfaceZ - depth), kTagSubsurface});
  for (std::size_t j = 0; j < kSupercell; ++j)
    for (std::size_t i = 0; i < kSupercell; ++i)
      sys.atoms.push_back({surface[j * kSupercell + i], lattice(i, j, kSurfaceZ), kTagSurface});
  auto surface_element = [&](std::size_t i, std::size_t j) { return surface[j * kSupercell + i]; };

  // site atoms (lattice coordinates) and the horizontal site centre
  std::vector<std::pair<std::size_t, std::size_t>> site_atoms;
  switch (site) {
    case SiteType::ontop: site_atoms = {{1, 1}}; break;
    case SiteType::bridge: site_atoms = {{1, 1}, {2, 1}}; break;
    default: site_atoms = {{2, 1}, {1, 2}, {2, 2}}; break;  // fcc hollow
  }
  Vec3 centre{0.0, 0.0, kSurfaceZ};
  double r_min = 1e9, r_sum = 0.0;
  for (auto [i, j] : site_atoms) {
    auto pos = lattice(static_cast<double>(i), static_cast<double>(j), kSurfaceZ);
    centre[0] += pos[0] / site_atoms.size();
    centre[1] += pos[1] / site_atoms.size();
    double r = element_properties(surface_element(i, j)).covalent_radius;
    r_min = std::min(r_min, r);
    r_sum += r;
  }
  auto first = lattice(static_cast<double>(site_atoms[0].first), static_cast<double>(site_atoms[0].second), kSurfaceZ);
  const double horizontal = std::hypot(first[0] - centre[0], first[1] - centre[1]);

  const double rx = element_properties(ads.chain[0].element).covalent_radius;
  const double d_low = std::hypot(horizontal, 0.6);
  const double d_high = rx + r_min + kDefaultCutoffTolerance - 0.03;
  if (d_low > d_high) return false;
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  double d = std::clamp(rx + r_sum / site_atoms.size() + jitter(rng), d_low, d_high);
  double h = std::sqrt(d * d - horizontal * horizontal);

  Vec3 pos{centre[0], centre[1], kSurfaceZ + h};
  c.binding_index = sys.atoms.size();
  for (std::size_t k = 0; k < ads.chain.size(); ++k) {
    const auto& unit = ads.chain[k];
    sys.atoms.push_back({unit.element, pos, kTagAdsorbate});
    const bool terminal = k + 1 == ads.chain.size();
    for (int hh = 0; hh < unit.hydrogens; ++hh) {
      double phi = std::numbers::pi / 2.0 + 2.0 * std::numbers::pi * hh / unit.hydrogens;
      Vec3 off = terminal ? Vec3{0.5 * std::cos(phi), 0.5 * std::sin(phi), 0.87}
                          : Vec3{0.9 * std::cos(phi), 0.9 * std::sin(phi), 0.45};
      sys.atoms.push_back({"H", add(pos, off), kTagAdsorbate});
    }
    pos = add(pos, Vec3{0.0, 0.0, 1.3});
  }
  sys.adsorbate_smiles = ads.smiles;
  sys.bulk_formula = formula_of(el_a, p, el_b, q);
  c.site = site;
  return true;
}

}  // namespace

const std::vector<std::string>& synthetic_adsorbates() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& s : adsorbate_specs()) n.push_back(s.smiles);
    return n;
  }();
  return names;
}

const std::vector<std::string>& synthetic_metals() {
  static const std::vector<std::string> metals = {"Al", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu",
                                                  "Zn", "Ga", "Y",  "Zr", "Nb", "Mo", "Ru", "Rh", "Pd", "Ag",
                                                  "Sn", "Hf", "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au"};
  return metals;
}

double synthetic_energy_mean(const std::string& adsorbate_smiles, SiteType site,
                             std::span<const std::string> primary_elements) {
  if (primary_elements.empty()) throw ValidationError("synthetic energy needs at least one primary element");
  double c = 0.0;
  for (const auto& el : primary_elements) c += 0.8 * (element_properties(el).electronegativity - 1.9);
  return spec_for(adsorbate_smiles).offset + site_shift(site) + c / static_cast<double>(primary_elements.size());
}

std::vector<AtomicSystem> generate_synthetic(const SyntheticOptions& options) {
  if (options.noise_sd < 0.0) throw ValidationError("noise_sd must be >= 0");
  if (options.validation_fraction < 0.0 || options.validation_fraction > 1.0)
    throw ValidationError("validation_fraction must lie in [0, 1]");
  std::mt19937_64 rng(options.seed ^ 0x5ca1ab1e0ddba11ULL);
  const auto& specs = adsorbate_specs();
  const auto& metals = synthetic_metals();
  std::uniform_int_distribution<std::size_t> pick_ads(0, specs.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_metal(0, metals.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_ratio(0, kRatios.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_miller(0, kMillers.size() - 1);
  std::uniform_int_distribution<int> pick_site(0, 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, options.noise_sd);

  std::vector<AtomicSystem> out;
  out.reserve(options.n_systems);
  while (out.size() < options.n_systems) {
    const auto& ads = specs[pick_ads(rng)];
    std::string el_a = metals[pick_metal(rng)];
    std::string el_b = metals[pick_metal(rng)];
    if (el_a == el_b) continue;
    auto [p, q] = kRatios[pick_ratio(rng)];
    auto site = static_cast<SiteType>(pick_site(rng));

    Candidate c;
    if (!build(c, ads, el_a, el_b, p, q, site, rng)) continue;
    char id[32];
    std::snprintf(id, sizeof id, "syn-%06zu", out.size());
    c.system.id = id;
    c.system.miller_index = kMillers[pick_miller(rng)];

    AdsorptionConfiguration config;
    try {
      config = detect_configuration(c.system);
    } catch (const NoBindingDetected&) {
      continue;
    }
    if (config.binding_atom != c.binding_index || config.site_type != c.site) continue;

    std::vector<std::string> primaries;
    for (const auto& contact : config.primary_surface_atoms) primaries.push_back(contact.element);
    double energy = synthetic_energy_mean(ads.smiles, config.site_type, primaries);
    if (options.noise_sd > 0.0) energy += noise(rng);
    c.system.energy_ev = energy;

    bool ads_ood = options.ood_splits && kHeldOutAdsorbates.count(ads.smiles);
    bool cat_ood = options.ood_splits && (kHeldOutMetals.count(el_a) || kHeldOutMetals.count(el_b));
    double r = unit(rng);
    if (ads_ood && cat_ood)
      c.system.split = Split::OOD_both;
    else if (ads_ood)
      c.system.split = Split::OOD_ads;
    else if (cat_ood)
      c.system.split = Split::OOD_cat;
    else
      c.system.split = r < options.validation_fraction ? Split::ID : Split::train;
    validate(c.system);
    out.push_back(std::move(c.system));
  }
  return out;
}

}  // namespace adsorbtext
