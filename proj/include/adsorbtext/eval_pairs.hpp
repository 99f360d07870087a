#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "adsorbtext/systems.hpp"

namespace adsorbtext {

struct PredictionRecord {
  std::string system_id;
  Split split = Split::ID;
  std::string adsorbate_smiles;
  std::string bulk_formula;
  double label = 0.0;
  double prediction = 0.0;

  double error() const { return prediction - label; }
  bool operator==(const PredictionRecord&) const = default;
};

struct SplitMae {
  std::string split;  // a split name or "total"
  double mae = 0.0;
  std::size_t count = 0;
};

/// One row per split present (in Split order) followed by "total". Throws on empty input.
std::vector<SplitMae> mae_by_split(std::span<const PredictionRecord> records);

struct SimilarityFlags {
  bool shares_adsorbate = false;
  bool shares_bulk = false;

  bool sharing_one() const { return shares_adsorbate != shares_bulk; }
  bool sharing_two() const { return shares_adsorbate && shares_bulk; }
  bool similar() const { return shares_adsorbate || shares_bulk; }
};

/// Exact string identity of SMILES and of bulk formula.
SimilarityFlags similarity_flags(const PredictionRecord& a, const PredictionRecord& b);

struct PairRecord {
  std::string id_i, id_j;  // id_i < id_j
  double label_ddE = 0.0;       // label_i - label_j
  double prediction_ddE = 0.0;  // prediction_i - prediction_j
  double error = 0.0;           // error_i - error_j
  double error_i = 0.0, error_j = 0.0;
  SimilarityFlags flags;
};

inline std::uint64_t pair_count(std::uint64_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

/// Streams every unordered pair, within each split when `within_split`
/// (splits in Split order) or over all records otherwise. Pairs are never
/// materialized. Throws ValidationError on duplicate ids.
void for_each_pair(std::span<const PredictionRecord> records, bool within_split,
                   const std::function<void(Split scope, const PairRecord&)>& visit);
std::vector<PairRecord> generate_pairs(std::span<const PredictionRecord> records, bool within_split);

enum class Subgroup { total, sharing_one, sharing_two, similar, shares_adsorbate, shares_bulk };
inline constexpr std::array<Subgroup, 6> kSubgroups{Subgroup::total,   Subgroup::sharing_one,      Subgroup::sharing_two,
                                                   Subgroup::similar, Subgroup::shares_adsorbate, Subgroup::shares_bulk};
std::string_view to_string(Subgroup g);
bool in_subgroup(const SimilarityFlags& f, Subgroup g);

/// Single-pass co-moments of paired errors (a = error_i, b = error_j) and of
/// their difference, with population normalization.
struct CoMoments {
  std::uint64_t n = 0;
  double mean_a = 0.0, mean_b = 0.0, mean_d = 0.0;
  double m2_a = 0.0, m2_b = 0.0, m2_d = 0.0, c_ab = 0.0;
  double sum_sq_d = 0.0;

  void add(double a, double b);
  void merge(const CoMoments& other);
  double var_a() const { return n ? m2_a / static_cast<double>(n) : 0.0; }
  double var_b() const { return n ? m2_b / static_cast<double>(n) : 0.0; }
  double var_d() const { return n ? m2_d / static_cast<double>(n) : 0.0; }
  double cov() const { return n ? c_ab / static_cast<double>(n) : 0.0; }
  double rmse_d() const;
};

struct ErrorPropagation {
  std::uint64_t pairs = 0;
  double var_pair = 0.0;  // Var(error_ij)
  double var_i = 0.0;
  double var_j = 0.0;
  double two_cov = 0.0;
  /// |Var(e_ij) - Var(e_i) - Var(e_j) + 2 Cov(e_i, e_j)|
  double residual = 0.0;
};
ErrorPropagation propagation_from(const CoMoments& m);
/// Throws Error with fewer than 2 records.
ErrorPropagation error_propagation_stats(std::span<const PredictionRecord> records,
                                         std::span<const PairRecord> pairs, Subgroup subgroup = Subgroup::total);

/// 100 * (1 - RMSE(subgroup) / RMSE(total)); nullopt when the subgroup is
/// empty or the total RMSE is zero.
std::optional<double> secr(std::span<const PairRecord> pairs, Subgroup subgroup);
std::optional<double> secr(const CoMoments& subgroup, const CoMoments& total);

struct PairScopeStats {
  std::string scope;  // split name or "all"
  std::uint64_t systems = 0;
  std::uint64_t pairs = 0;
  std::array<CoMoments, kSubgroups.size()> groups{};

  const CoMoments& group(Subgroup g) const { return groups[static_cast<std::size_t>(g)]; }
};

/// Streaming accumulation of every subgroup per scope.
std::vector<PairScopeStats> analyze_pairs(std::span<const PredictionRecord> records, bool within_split);

/// Population variance of per-system errors per split plus "total".
std::vector<std::pair<std::string, double>> error_variance_by_split(std::span<const PredictionRecord> records);

nlohmann::json evaluation_report(std::span<const PredictionRecord> records, bool within_split);
std::string report_to_text(const nlohmann::json& report);

// Predictions table: system_id, split, smiles, formula, label, prediction.
std::string predictions_to_string(std::span<const PredictionRecord> records);
void save_predictions(const std::filesystem::path& path, std::span<const PredictionRecord> records);
std::vector<PredictionRecord> parse_predictions(std::string_view text, const std::string& source = "<memory>");
std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path);

/// Writes parity_<split>.tsv for the four validation splits (and train when
/// present) plus parity_summary.tsv. Returns the files written.
std::vector<std::filesystem::path> export_parity(const std::filesystem::path& dir,
                                                 std::span<const PredictionRecord> records);

}  // namespace adsorbtext
