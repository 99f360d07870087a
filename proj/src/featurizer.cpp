#include "adsorbtext/featurizer.hpp"

#include <algorithm>
#include <exception>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "adsorbtext/elements.hpp"
#include "adsorbtext/io.hpp"

namespace adsorbtext {

using nlohmann::json;

std::string_view to_string(SiteType site) {
  switch (site) {
    case SiteType::ontop: return "ontop";
    case SiteType::bridge: return "bridge";
    case SiteType::hollow: return "hollow";
    case SiteType::fourfold: return "fourfold";
  }
  return "?";
}

SiteType site_type_for_contacts(std::size_t n) {
  if (n == 0) throw ValidationError("site type needs at least one contact");
  if (n == 1) return SiteType::ontop;
  if (n == 2) return SiteType::bridge;
  if (n == 3) return SiteType::hollow;
  return SiteType::fourfold;
}

std::string_view to_string(StringFormat f) {
  switch (f) {
    case StringFormat::S1: return "S1";
    case StringFormat::S2: return "S2";
    case StringFormat::S3: return "S3";
    case StringFormat::S4: return "S4";
    case StringFormat::S5: return "S5";
    case StringFormat::DESC: return "DESC";
  }
  return "?";
}

StringFormat parse_format(std::string_view text) {
  std::string up(text);
  for (auto& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (auto f : {StringFormat::S1, StringFormat::S2, StringFormat::S3, StringFormat::S4, StringFormat::S5,
                 StringFormat::DESC})
    if (to_string(f) == up) return f;
  throw ValidationError("unknown string format '" + std::string(text) + "'");
}

AdsorptionConfiguration detect_configuration(const AtomicSystem& system, double tolerance) {
  if (tolerance < 0.0) throw ValidationError("cutoff tolerance must be >= 0");
  const auto& atoms = system.atoms;
  auto radius = [&](std::size_t i) { return element_properties(atoms[i].element).covalent_radius; };
  auto in_contact = [&](std::size_t i, std::size_t j, double& d) {
    d = minimum_image_distance(atoms[i].position, atoms[j].position, system.cell);
    return d <= radius(i) + radius(j) + tolerance;
  };

  struct Candidate {
    std::size_t atom;
    std::vector<SurfaceContact> contacts;
  };
  std::optional<Candidate> best;
  for (std::size_t a = 0; a < atoms.size(); ++a) {
    if (atoms[a].tag != kTagAdsorbate) continue;
    Candidate c{a, {}};
    for (std::size_t s = 0; s < atoms.size(); ++s) {
      double d = 0.0;
      if (atoms[s].tag == kTagSurface && in_contact(a, s, d)) c.contacts.push_back({s, atoms[s].element, d});
    }
    if (c.contacts.empty()) continue;
    std::stable_sort(c.contacts.begin(), c.contacts.end(),
                     [](const SurfaceContact& x, const SurfaceContact& y) { return x.distance < y.distance; });
    if (!best || c.contacts.size() > best->contacts.size() ||
        (c.contacts.size() == best->contacts.size() &&
         c.contacts.front().distance < best->contacts.front().distance))
      best = std::move(c);
  }
  if (!best) throw NoBindingDetected(system.id);

  AdsorptionConfiguration config;
  config.binding_atom = best->atom;
  config.binding_element = atoms[best->atom].element;
  config.primary_surface_atoms = std::move(best->contacts);
  config.site_type = site_type_for_contacts(config.primary_surface_atoms.size());

  for (const auto& primary : config.primary_surface_atoms) {
    std::vector<std::string> slab_neighbours;
    std::vector<std::string> adsorbate_neighbours;
    for (std::size_t q = 0; q < atoms.size(); ++q) {
      double d = 0.0;
      if (q == primary.index || !in_contact(primary.index, q, d)) continue;
      (atoms[q].tag == kTagAdsorbate ? adsorbate_neighbours : slab_neighbours).push_back(atoms[q].element);
    }
    std::stable_sort(slab_neighbours.begin(), slab_neighbours.end());
    std::vector<std::string> list{primary.element};
    list.insert(list.end(), slab_neighbours.begin(), slab_neighbours.end());
    list.insert(list.end(), adsorbate_neighbours.begin(), adsorbate_neighbours.end());
    config.secondary_lists.push_back(std::move(list));
  }
  return config;
}

namespace {

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string s1_text(const AtomicSystem& s) {
  const auto& m = s.miller_index;
  return "<s>" + s.adsorbate_smiles + "</s>" + s.bulk_formula + " (" + std::to_string(m[0]) + " " +
         std::to_string(m[1]) + " " + std::to_string(m[2]) + ")</s>";
}

std::vector<std::string> primary_elements(const AdsorptionConfiguration& c) {
  std::vector<std::string> out;
  for (const auto& p : c.primary_surface_atoms) out.push_back(p.element);
  return out;
}

std::string property_blocks(const AtomicSystem& s) {
  std::vector<std::string> order;
  std::set<std::string> seen;
  for (const auto* formula : {&s.adsorbate_smiles, &s.bulk_formula})
    for (const auto& [sym, n] : element_counts(*formula))  // std::map: alphabetical
      if (seen.insert(sym).second) order.push_back(sym);
  std::string out;
  for (const auto& sym : order) {
    const auto& e = element_properties(sym);
    out += "[" + e.symbol + ", " + std::to_string(e.atomic_number) + ", " + format_real(e.atomic_mass) + ", " +
           std::to_string(e.period) + ", " + format_real(e.dipole_polarizability) + ", " +
           format_real(e.electronegativity) + ", " + format_real(e.electron_affinity) + "]";
  }
  return out;
}

std::string secondary_block(const AdsorptionConfiguration& c) {
  std::vector<std::string> lists;
  for (const auto& l : c.secondary_lists) lists.push_back("[" + join(l, " ") + "]");
  return join(lists, " ");
}

const AdsorptionConfiguration& require(const AtomicSystem& s, const AdsorptionConfiguration* c) {
  if (!c) throw NoBindingDetected(s.id);
  return *c;
}

}  // namespace

SerializedSample serialize(const AtomicSystem& system, const AdsorptionConfiguration* config,
                           StringFormat format) {
  SerializedSample out{system.id, format, s1_text(system), system.energy_ev, system.split};
  switch (format) {
    case StringFormat::S1:
      break;
    case StringFormat::S2:
    case StringFormat::S3: {
      const auto& c = require(system, config);
      std::vector<std::string> items{c.binding_element};
      for (auto& e : primary_elements(c)) items.push_back(e);
      items.emplace_back(to_string(c.site_type));
      out.text += "[" + join(items, ", ") + "]</s>";
      if (format == StringFormat::S3) out.text += property_blocks(system) + "</s>";
      break;
    }
    case StringFormat::S4:
    case StringFormat::S5: {
      const auto& c = require(system, config);
      std::vector<std::string> items{c.binding_element};
      for (const auto& p : c.primary_surface_atoms)
        items.push_back(format == StringFormat::S4 ? p.element
                                                   : "(" + p.element + " " + format_one_decimal(p.distance) + ")");
      items.emplace_back(to_string(c.site_type));
      items.push_back(secondary_block(c));
      out.text += "[" + join(items, " ") + "]</s>";
      break;
    }
    case StringFormat::DESC:
      return render_system_description(system, config);
  }
  return out;
}

SerializedSample render_system_description(const AtomicSystem& system, const AdsorptionConfiguration* config) {
  const auto& c = require(system, config);
  const auto& m = system.miller_index;
  std::string text = "Adsorbate " + system.adsorbate_smiles + " is adsorbed on the catalytic surface " +
                     system.bulk_formula + " with a Miller Index of (" + std::to_string(m[0]) + ", " +
                     std::to_string(m[1]) + ", " + std::to_string(m[2]) + "). The " + c.binding_element +
                     " atom of the adsorbate is placed on the " + std::string(to_string(c.site_type)) +
                     " site and is binding to the catalytic surface atoms " + join(primary_elements(c), ", ") +
                     ".";
  return {system.id, StringFormat::DESC, std::move(text), system.energy_ev, system.split};
}

FeaturizeResult featurize(const AtomicSystem& system, StringFormat format, double tolerance) {
  if (format == StringFormat::S1) return {serialize(system, nullptr, format), false};
  try {
    auto config = detect_configuration(system, tolerance);
    return {serialize(system, &config, format), false};
  } catch (const NoBindingDetected&) {
    return {serialize(system, nullptr, StringFormat::S1), true};
  }
}

std::vector<FeaturizeResult> featurize_all(const std::vector<AtomicSystem>& systems, StringFormat format,
                                           double tolerance, unsigned threads) {
  std::vector<FeaturizeResult> out(systems.size());
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(systems.size())));
  if (threads <= 1) {
    for (std::size_t i = 0; i < systems.size(); ++i) out[i] = featurize(systems[i], format, tolerance);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  std::size_t chunk = (systems.size() + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t * chunk; i < std::min(systems.size(), (t + 1) * chunk); ++i)
          out[i] = featurize(systems[i], format, tolerance);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

DescriptionCache parse_description_cache(std::string_view text, const std::string& source) {
  DescriptionCache cache;
  try {
    auto j = json::parse(text);
    if (!j.is_object()) throw ParseError(source, 1, "description cache must be an object");
    for (const auto* key : {"adsorbates", "bulks"}) {
      if (!j.contains(key)) continue;
      auto& target = std::string_view(key) == "adsorbates" ? cache.adsorbates : cache.bulks;
      for (const auto& [k, v] : j.at(key).items()) target[k] = v.get<std::string>();
    }
  } catch (const json::exception& e) {
    throw ParseError(source, 1, e.what());
  }
  return cache;
}

DescriptionCache load_description_cache(const std::filesystem::path& path) {
  return parse_description_cache(read_file(path), path.string());
}

CacheMergeReport merge_description_cache(std::vector<SerializedSample>& samples,
                                         const std::vector<AtomicSystem>& systems,
                                         const DescriptionCache& cache) {
  std::map<std::string, const AtomicSystem*> by_id;
  for (const auto& s : systems) by_id[s.id] = &s;
  CacheMergeReport report;
  for (auto& sample : samples) {
    if (sample.format != StringFormat::DESC) continue;
    ++report.samples;
    auto it = by_id.find(sample.system_id);
    if (it == by_id.end()) throw ValidationError("no system for sample '" + sample.system_id + "'");
    const auto& sys = *it->second;
    if (auto a = cache.adsorbates.find(sys.adsorbate_smiles); a != cache.adsorbates.end())
      sample.text += "\n\n" + a->second;
    else
      ++report.missing_adsorbate;
    if (auto b = cache.bulks.find(sys.bulk_formula); b != cache.bulks.end())
      sample.text += "\n\n" + b->second;
    else
      ++report.missing_bulk;
  }
  return report;
}

std::string corpus_to_string(const std::vector<SerializedSample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    json j = {{"system_id", s.system_id},
              {"format", std::string(to_string(s.format))},
              {"text", s.text},
              {"split", std::string(to_string(s.split))}};
    j["energy_ev"] = s.energy_ev ? json(*s.energy_ev) : json(nullptr);
    out += j.dump() + "\n";
  }
  return out;
}

void save_corpus(const std::filesystem::path& path, const std::vector<SerializedSample>& samples) {
  write_file_atomic(path, corpus_to_string(samples));
}

std::vector<SerializedSample> parse_corpus(std::string_view text, const std::string& source) {
  std::vector<SerializedSample> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = json::parse(line);
      SerializedSample s;
      s.system_id = j.at("system_id").get<std::string>();
      s.format = parse_format(j.at("format").get<std::string>());
      s.text = j.at("text").get<std::string>();
      if (j.contains("energy_ev") && !j["energy_ev"].is_null()) s.energy_ev = j["energy_ev"].get<double>();
      s.split = parse_split(j.at("split").get<std::string>());
      if (s.text.empty()) throw ValidationError("empty text");
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw ParseError(source, lineno, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  return out;
}

std::vector<SerializedSample> load_corpus(const std::filesystem::path& path) {
  return parse_corpus(read_file(path), path.string());
}

}  // namespace adsorbtext
