#include "adsorbtext/eval_pairs.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace adsorbtext {

using nlohmann::json;

std::vector<SplitMae> mae_by_split(std::span<const PredictionRecord> records) {
  if (records.empty()) throw Error("mae_by_split: no records");
  std::map<Split, std::pair<double, std::size_t>> acc;
  double total = 0.0;
  for (const auto& r : records) {
    auto& a = acc[r.split];
    a.first += std::abs(r.error());
    ++a.second;
    total += std::abs(r.error());
  }
  std::vector<SplitMae> out;
  for (const auto& [split, a] : acc)
    out.push_back({std::string(to_string(split)), a.first / static_cast<double>(a.second), a.second});
  out.push_back({"total", total / static_cast<double>(records.size()), records.size()});
  return out;
}

SimilarityFlags similarity_flags(const PredictionRecord& a, const PredictionRecord& b) {
  return {a.adsorbate_smiles == b.adsorbate_smiles, a.bulk_formula == b.bulk_formula};
}

namespace {

std::vector<std::pair<Split, std::vector<std::size_t>>> scopes_of(std::span<const PredictionRecord> records,
                                                                  bool within_split) {
  std::set<std::string_view> seen;
  for (const auto& r : records)
    if (!seen.insert(r.system_id).second) throw ValidationError("duplicate system id '" + r.system_id + "'");
  std::map<Split, std::vector<std::size_t>> by_split;
  for (std::size_t k = 0; k < records.size(); ++k) by_split[within_split ? records[k].split : Split::ID].push_back(k);
  std::vector<std::pair<Split, std::vector<std::size_t>>> out(by_split.begin(), by_split.end());
  for (auto& [split, idx] : out)
    std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return records[x].system_id < records[y].system_id; });
  return out;
}

}  // namespace

void for_each_pair(std::span<const PredictionRecord> records, bool within_split,
                   const std::function<void(Split, const PairRecord&)>& visit) {
  PairRecord p;
  for (const auto& [scope, idx] : scopes_of(records, within_split)) {
    for (std::size_t x = 0; x < idx.size(); ++x) {
      const auto& a = records[idx[x]];
      p.id_i.assign(a.system_id);
      for (std::size_t y = x + 1; y < idx.size(); ++y) {
        const auto& b = records[idx[y]];
        p.id_j.assign(b.system_id);
        p.label_ddE = a.label - b.label;
        p.prediction_ddE = a.prediction - b.prediction;
        p.error_i = a.error();
        p.error_j = b.error();
        p.error = p.error_i - p.error_j;
        p.flags = similarity_flags(a, b);
        visit(scope, p);
      }
    }
  }
}

std::vector<PairRecord> generate_pairs(std::span<const PredictionRecord> records, bool within_split) {
  std::vector<PairRecord> out;
  for_each_pair(records, within_split, [&](Split, const PairRecord& p) { out.push_back(p); });
  return out;
}

std::string_view to_string(Subgroup g) {
  switch (g) {
    case Subgroup::total: return "total";
    case Subgroup::sharing_one: return "sharing_one";
    case Subgroup::sharing_two: return "sharing_two";
    case Subgroup::similar: return "similar";
    case Subgroup::shares_adsorbate: return "shares_adsorbate";
    case Subgroup::shares_bulk: return "shares_bulk";
  }
  return "?";
}

bool in_subgroup(const SimilarityFlags& f, Subgroup g) {
  switch (g) {
    case Subgroup::total: return true;
    case Subgroup::sharing_one: return f.sharing_one();
    case Subgroup::sharing_two: return f.sharing_two();
    case Subgroup::similar: return f.similar();
    case Subgroup::shares_adsorbate: return f.shares_adsorbate;
    case Subgroup::shares_bulk: return f.shares_bulk;
  }
  return false;
}

void CoMoments::add(double a, double b) {
  ++n;
  const double inv = 1.0 / static_cast<double>(n);
  double da = a - mean_a;
  double db = b - mean_b;
  mean_a += da * inv;
  mean_b += db * inv;
  m2_a += da * (a - mean_a);
  m2_b += db * (b - mean_b);
  c_ab += da * (b - mean_b);
  double d = a - b;
  double dd = d - mean_d;
  mean_d += dd * inv;
  m2_d += dd * (d - mean_d);
  sum_sq_d += d * d;
}

void CoMoments::merge(const CoMoments& o) {
  if (o.n == 0) return;
  if (n == 0) {
    *this = o;
    return;
  }
  const double n1 = static_cast<double>(n), n2 = static_cast<double>(o.n), nt = n1 + n2;
  const double w = n1 * n2 / nt;
  double da = o.mean_a - mean_a, db = o.mean_b - mean_b, dd = o.mean_d - mean_d;
  m2_a += o.m2_a + da * da * w;
  m2_b += o.m2_b + db * db * w;
  m2_d += o.m2_d + dd * dd * w;
  c_ab += o.c_ab + da * db * w;
  mean_a += da * n2 / nt;
  mean_b += db * n2 / nt;
  mean_d += dd * n2 / nt;
  sum_sq_d += o.sum_sq_d;
  n += o.n;
}

double CoMoments::rmse_d() const { return n ? std::sqrt(sum_sq_d / static_cast<double>(n)) : 0.0; }

ErrorPropagation propagation_from(const CoMoments& m) {
  ErrorPropagation e;
  e.pairs = m.n;
  e.var_pair = m.var_d();
  e.var_i = m.var_a();
  e.var_j = m.var_b();
  e.two_cov = 2.0 * m.cov();
  e.residual = std::abs(e.var_pair - e.var_i - e.var_j + e.two_cov);
  return e;
}

ErrorPropagation error_propagation_stats(std::span<const PredictionRecord> records, std::span<const PairRecord> pairs,
                                         Subgroup subgroup) {
  if (records.size() < 2) throw Error("error_propagation_stats: need at least 2 records");
  CoMoments m;
  for (const auto& p : pairs)
    if (in_subgroup(p.flags, subgroup)) m.add(p.error_i, p.error_j);
  return propagation_from(m);
}

std::optional<double> secr(const CoMoments& subgroup, const CoMoments& total) {
  if (subgroup.n == 0 || total.n == 0) return std::nullopt;
  double rt = total.rmse_d();
  if (rt == 0.0) return std::nullopt;
  return 100.0 * (1.0 - subgroup.rmse_d() / rt);
}

std::optional<double> secr(std::span<const PairRecord> pairs, Subgroup subgroup) {
  CoMoments sub, total;
  for (const auto& p : pairs) {
    total.add(p.error_i, p.error_j);
    if (in_subgroup(p.flags, subgroup)) sub.add(p.error_i, p.error_j);
  }
  if (subgroup == Subgroup::total) return secr(total, total);
  return secr(sub, total);
}

std::vector<PairScopeStats> analyze_pairs(std::span<const PredictionRecord> records, bool within_split) {
  std::vector<PairScopeStats> out;
  for (const auto& [scope, idx] : scopes_of(records, within_split)) {
    PairScopeStats s;
    s.scope = within_split ? std::string(to_string(scope)) : "all";
    s.systems = idx.size();
    for (std::size_t x = 0; x < idx.size(); ++x) {
      const auto& a = records[idx[x]];
      const double ea = a.error();
      for (std::size_t y = x + 1; y < idx.size(); ++y) {
        const auto& b = records[idx[y]];
        const double eb = b.error();
        auto flags = similarity_flags(a, b);
        for (std::size_t g = 0; g < kSubgroups.size(); ++g)
          if (in_subgroup(flags, kSubgroups[g])) s.groups[g].add(ea, eb);
      }
    }
    s.pairs = s.group(Subgroup::total).n;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::pair<std::string, double>> error_variance_by_split(std::span<const PredictionRecord> records) {
  std::map<Split, CoMoments> acc;
  CoMoments total;
  for (const auto& r : records) {
    acc[r.split].add(r.error(), 0.0);
    total.add(r.error(), 0.0);
  }
  std::vector<std::pair<std::string, double>> out;
  for (const auto& [split, m] : acc) out.emplace_back(std::string(to_string(split)), m.var_a());
  out.emplace_back("total", total.var_a());
  return out;
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json evaluation_report(std::span<const PredictionRecord> records, bool within_split) {
  json report;
  report["systems"] = records.size();
  json mae = json::array();
  for (const auto& m : mae_by_split(records)) mae.push_back({{"split", m.split}, {"mae", m.mae}, {"count", m.count}});
  report["mae"] = std::move(mae);
  json var = json::array();
  for (const auto& [split, v] : error_variance_by_split(records)) var.push_back({{"split", split}, {"variance", v}});
  report["error_variance"] = std::move(var);
  report["pairs_within_split"] = within_split;
  json scopes = json::array();
  for (const auto& s : analyze_pairs(records, within_split)) {
    json groups = json::object();
    const auto& total = s.group(Subgroup::total);
    for (std::size_t g = 0; g < kSubgroups.size(); ++g) {
      const auto& m = s.groups[g];
      auto prop = propagation_from(m);
      groups[std::string(to_string(kSubgroups[g]))] = {
          {"pairs", m.n},
          {"rmse", m.rmse_d()},
          {"secr_percent", optional_number(secr(m, total))},
          {"var_pair", prop.var_pair},
          {"var_i", prop.var_i},
          {"var_j", prop.var_j},
          {"two_cov", prop.two_cov},
          {"residual", prop.residual}};
    }
    scopes.push_back({{"scope", s.scope},
                      {"systems", s.systems},
                      {"pairs", s.pairs},
                      {"expected_pairs", pair_count(s.systems)},
                      {"subgroups", std::move(groups)}});
  }
  report["pair_scopes"] = std::move(scopes);
  return report;
}

std::string report_to_text(const json& report) {
  std::ostringstream out;
  out << "systems: " << report.at("systems").get<std::size_t>() << "\n\nMAE (eV)\n";
  for (const auto& m : report.at("mae"))
    out << "  " << m.at("split").get<std::string>() << "\t" << format_real(m.at("mae").get<double>()) << "\tn="
        << m.at("count").get<std::size_t>() << "\n";
  out << "\nenergy-difference pairs\n";
  for (const auto& s : report.at("pair_scopes")) {
    out << "  " << s.at("scope").get<std::string>() << ": " << s.at("systems").get<std::size_t>() << " systems, "
        << s.at("pairs").get<std::uint64_t>() << " pairs\n";
    for (const auto& [name, g] : s.at("subgroups").items()) {
      out << "    " << name << "\tpairs=" << g.at("pairs").get<std::uint64_t>()
          << "\trmse=" << format_real(g.at("rmse").get<double>()) << "\tsecr=";
      if (g.at("secr_percent").is_null())
        out << "undefined";
      else
        out << format_real(g.at("secr_percent").get<double>()) << "%";
      out << "\tresidual=" << format_real(g.at("residual").get<double>()) << "\n";
    }
  }
  return out.str();
}

std::string predictions_to_string(std::span<const PredictionRecord> records) {
  std::string out = "system_id\tsplit\tsmiles\tformula\tlabel\tprediction\n";
  for (const auto& r : records)
    out += r.system_id + '\t' + std::string(to_string(r.split)) + '\t' + r.adsorbate_smiles + '\t' + r.bulk_formula +
           '\t' + format_real(r.label) + '\t' + format_real(r.prediction) + '\n';
  return out;
}

void save_predictions(const std::filesystem::path& path, std::span<const PredictionRecord> records) {
  write_file_atomic(path, predictions_to_string(records));
}

std::vector<PredictionRecord> parse_predictions(std::string_view text, const std::string& source) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != "system_id\tsplit\tsmiles\tformula\tlabel\tprediction")
    throw ParseError(source, 1, "expected predictions header");
  std::vector<PredictionRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, '\t')) f.push_back(field);
    if (f.size() != 6) throw ParseError(source, lineno, "expected 6 columns, got " + std::to_string(f.size()));
    try {
      PredictionRecord r{f[0], parse_split(f[1]), f[2], f[3], std::stod(f[4]), std::stod(f[5])};
      if (!std::isfinite(r.label) || !std::isfinite(r.prediction)) throw ValidationError("non-finite energy");
      out.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw ParseError(source, lineno, std::string("bad number: ") + e.what());
    } catch (const ValidationError& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  return out;
}

std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path) {
  return parse_predictions(read_file(path), path.string());
}

std::vector<std::filesystem::path> export_parity(const std::filesystem::path& dir,
                                                 std::span<const PredictionRecord> records) {
  std::filesystem::create_directories(dir);
  std::vector<Split> splits(kValidationSplits.begin(), kValidationSplits.end());
  if (std::any_of(records.begin(), records.end(), [](const auto& r) { return r.split == Split::train; }))
    splits.push_back(Split::train);
  std::vector<std::filesystem::path> written;
  std::string summary = "split\tcount\tmae\n";
  for (Split split : splits) {
    std::string body = "system_id\tlabel\tprediction\n";
    double abs_sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : records) {
      if (r.split != split) continue;
      body += r.system_id + '\t' + format_real(r.label) + '\t' + format_real(r.prediction) + '\n';
      abs_sum += std::abs(r.error());
      ++n;
    }
    auto path = dir / ("parity_" + std::string(to_string(split)) + ".tsv");
    write_file_atomic(path, body);
    written.push_back(path);
    summary += std::string(to_string(split)) + '\t' + std::to_string(n) + '\t' +
               (n ? format_real(abs_sum / static_cast<double>(n)) : std::string("nan")) + '\n';
  }
  auto path = dir / "parity_summary.tsv";
  write_file_atomic(path, summary);
  written.push_back(path);
  return written;
}

}  // namespace adsorbtext
