#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "adsorbtext/eval_pairs.hpp"
#include "test_support.hpp"

using namespace adsorbtext;

namespace {

PredictionRecord rec(std::string id, Split split, std::string ads, std::string bulk, double label, double pred) {
  return {std::move(id), split, std::move(ads), std::move(bulk), label, pred};
}

// Errors carry a per-adsorbate and per-bulk bias plus noise, so pairs sharing
// a component have correlated errors.
std::vector<PredictionRecord> biased_records(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> ads{"*O", "*OH", "*CO", "*NH2", "*CH3"}, bulks{"Pt", "Cu3Au", "Ni", "Sc3Al", "VCr3", "Zr"};
  std::normal_distribution<double> noise(0.0, 0.05), bias(0.0, 0.4), label(-1.0, 1.0);
  std::vector<double> ab, bb;
  for (std::size_t i = 0; i < ads.size(); ++i) ab.push_back(bias(rng));
  for (std::size_t i = 0; i < bulks.size(); ++i) bb.push_back(bias(rng));
  std::vector<PredictionRecord> out;
  const std::array<Split, 4> splits{Split::ID, Split::OOD_ads, Split::OOD_cat, Split::OOD_both};
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t a = rng() % ads.size(), b = rng() % bulks.size();
    double y = label(rng);
    char id[16];
    std::snprintf(id, sizeof id, "s%04zu", k);
    out.push_back(rec(id, splits[k % 4], ads[a], bulks[b], y, y + ab[a] + bb[b] + noise(rng)));
  }
  return out;
}

double brute_rmse(const std::vector<PairRecord>& pairs, Subgroup g) {
  double s = 0;
  std::size_t n = 0;
  for (const auto& p : pairs)
    if (in_subgroup(p.flags, g)) {
      s += p.error * p.error;
      ++n;
    }
  return std::sqrt(s / double(n));
}

}  // namespace

TEST_CASE("MAE per split") {
  std::vector<PredictionRecord> r{rec("a", Split::OOD_cat, "*O", "Pt", 1.0, 1.5), rec("b", Split::ID, "*O", "Pt", 0.0, -0.25),
                                  rec("c", Split::ID, "*O", "Ni", 2.0, 2.25)};
  auto m = mae_by_split(r);
  REQUIRE(m.size() == 3);
  CHECK(m[0].split == "ID");
  CHECK(m[0].mae == doctest::Approx(0.25));
  CHECK(m[0].count == 2);
  CHECK(m[1].split == "OOD_cat");
  CHECK(m[1].mae == doctest::Approx(0.5));
  CHECK(m[2].split == "total");
  CHECK(m[2].mae == doctest::Approx(1.0 / 3));
  CHECK(m[2].count == 3);
  CHECK_THROWS(mae_by_split(std::vector<PredictionRecord>{}));
}

TEST_CASE("similarity flags") {
  auto a = rec("1", Split::ID, "NH", "Sc3Al", 0, 0);
  auto same_ads = rec("2", Split::ID, "NH", "Pt", 0, 0);
  auto same_bulk = rec("3", Split::ID, "*OH", "Sc3Al", 0, 0);
  auto both = rec("4", Split::ID, "NH", "Sc3Al", 0, 0);
  auto none = rec("5", Split::ID, "*OH", "Pt3", 0, 0);
  auto near_miss = rec("6", Split::ID, "*NH", "Al3Sc", 0, 0);

  auto f = similarity_flags(a, same_ads);
  CHECK(f.shares_adsorbate);
  CHECK_FALSE(f.shares_bulk);
  CHECK(f.sharing_one());
  CHECK(f.similar());
  CHECK_FALSE(f.sharing_two());
  f = similarity_flags(a, same_bulk);
  CHECK(f.sharing_one());
  CHECK(f.shares_bulk);
  f = similarity_flags(a, both);
  CHECK(f.sharing_two());
  CHECK_FALSE(f.sharing_one());
  CHECK(f.similar());
  f = similarity_flags(a, none);
  CHECK_FALSE(f.similar());
  // exact string identity only
  CHECK_FALSE(similarity_flags(a, near_miss).similar());

  CHECK(in_subgroup(f, Subgroup::total));
  CHECK_FALSE(in_subgroup(f, Subgroup::similar));
}

TEST_CASE("pair enumeration") {
  auto records = biased_records(43, 1);
  CHECK(pair_count(0) == 0);
  CHECK(pair_count(1) == 0);
  CHECK(pair_count(2) == 1);
  CHECK(pair_count(43) == 903);
  CHECK(pair_count(100000) == 4999950000ULL);

  auto all = generate_pairs(records, false);
  CHECK(all.size() == 903);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& p : all) {
    CHECK(p.id_i < p.id_j);
    CHECK(seen.insert({p.id_i, p.id_j}).second);
  }

  std::size_t expected = 0;
  for (auto s : {Split::ID, Split::OOD_ads, Split::OOD_cat, Split::OOD_both}) {
    std::size_t n = 0;
    for (const auto& r : records) n += r.split == s;
    expected += pair_count(n);
  }
  std::size_t within = 0;
  for_each_pair(records, true, [&](Split, const PairRecord& p) {
    ++within;
    const auto& a = *std::find_if(records.begin(), records.end(), [&](auto& r) { return r.system_id == p.id_i; });
    const auto& b = *std::find_if(records.begin(), records.end(), [&](auto& r) { return r.system_id == p.id_j; });
    CHECK(a.split == b.split);
    CHECK(p.label_ddE == doctest::Approx(a.label - b.label));
    CHECK(p.prediction_ddE == doctest::Approx(a.prediction - b.prediction));
    CHECK(p.error == doctest::Approx(p.prediction_ddE - p.label_ddE));
    CHECK(p.error == doctest::Approx(a.error() - b.error()));
  });
  CHECK(within == expected);

  auto dup = records;
  dup.push_back(records[0]);
  CHECK_THROWS_AS(generate_pairs(dup, false), ValidationError);
}

TEST_CASE("co-moments agree with two-pass statistics") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.3, 1.0);
  std::vector<double> a(500), b(500);
  for (std::size_t i = 0; i < 500; ++i) {
    a[i] = g(rng);
    b[i] = 0.5 * a[i] + g(rng);
  }
  CoMoments m, left, right;
  for (std::size_t i = 0; i < 500; ++i) {
    m.add(a[i], b[i]);
    (i < 200 ? left : right).add(a[i], b[i]);
  }
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < 500; ++i) {
    ma += a[i] / 500;
    mb += b[i] / 500;
  }
  double va = 0, vb = 0, c = 0, vd = 0, sq = 0;
  for (std::size_t i = 0; i < 500; ++i) {
    va += (a[i] - ma) * (a[i] - ma) / 500;
    vb += (b[i] - mb) * (b[i] - mb) / 500;
    c += (a[i] - ma) * (b[i] - mb) / 500;
    double d = a[i] - b[i] - (ma - mb);
    vd += d * d / 500;
    sq += (a[i] - b[i]) * (a[i] - b[i]) / 500;
  }
  CHECK(m.var_a() == doctest::Approx(va).epsilon(1e-12));
  CHECK(m.var_b() == doctest::Approx(vb).epsilon(1e-12));
  CHECK(m.cov() == doctest::Approx(c).epsilon(1e-12));
  CHECK(m.var_d() == doctest::Approx(vd).epsilon(1e-12));
  CHECK(m.rmse_d() == doctest::Approx(std::sqrt(sq)).epsilon(1e-12));
  left.merge(right);
  CHECK(left.var_d() == doctest::Approx(m.var_d()).epsilon(1e-12));
  CHECK(left.cov() == doctest::Approx(m.cov()).epsilon(1e-12));
  CHECK(left.n == 500);
}

TEST_CASE("error propagation identity") {
  auto records = biased_records(60, 3);
  auto pairs = generate_pairs(records, false);
  for (auto g : kSubgroups) {
    auto e = error_propagation_stats(records, pairs, g);
    CHECK(e.residual < 1e-12);
    CHECK(e.var_pair == doctest::Approx(e.var_i + e.var_j - e.two_cov).epsilon(1e-10));
  }
  SUBCASE("identical errors give zero pair variance") {
    std::vector<PredictionRecord> r{rec("a", Split::ID, "*O", "Pt", 0, 0.3), rec("b", Split::ID, "*O", "Ni", 1, 1.3),
                                    rec("c", Split::ID, "*O", "Cu", 2, 2.3)};
    auto p = generate_pairs(r, false);
    auto e = error_propagation_stats(r, p);
    CHECK(e.var_pair == doctest::Approx(0.0));
    CHECK(e.pairs == 3);
  }
  std::vector<PredictionRecord> one{records[0]};
  CHECK_THROWS(error_propagation_stats(one, {}, Subgroup::total));
}

TEST_CASE("SECR") {
  auto records = biased_records(80, 4);
  auto pairs = generate_pairs(records, false);
  SUBCASE("total is zero") { CHECK(*secr(pairs, Subgroup::total) == doctest::Approx(0.0).epsilon(1e-12)); }
  SUBCASE("brute force on correlated bias") {
    const double total = brute_rmse(pairs, Subgroup::total);
    for (auto g : {Subgroup::sharing_one, Subgroup::sharing_two, Subgroup::similar, Subgroup::shares_adsorbate,
                   Subgroup::shares_bulk}) {
      auto s = secr(pairs, g);
      REQUIRE(s.has_value());
      CHECK(*s == doctest::Approx(100.0 * (1.0 - brute_rmse(pairs, g) / total)).epsilon(1e-10));
    }
    // shared components cancel their bias
    CHECK(*secr(pairs, Subgroup::sharing_two) > *secr(pairs, Subgroup::sharing_one));
    CHECK(*secr(pairs, Subgroup::similar) > 0.0);
  }
  SUBCASE("sign flips when similar pairs are worse") {
    std::vector<PredictionRecord> r{rec("a", Split::ID, "*O", "Pt", 0, 1.0), rec("b", Split::ID, "*O", "Ni", 0, -1.0),
                                    rec("c", Split::ID, "*OH", "Cu", 0, 0.9), rec("d", Split::ID, "*CO", "Zr", 0, 0.8)};
    auto p = generate_pairs(r, false);
    auto s = secr(p, Subgroup::similar);
    REQUIRE(s.has_value());
    CHECK(*s < 0.0);
  }
  SUBCASE("undefined cases") {
    std::vector<PredictionRecord> r{rec("a", Split::ID, "*O", "Pt", 0, 0.5), rec("b", Split::ID, "*OH", "Ni", 0, 0.5)};
    auto p = generate_pairs(r, false);
    CHECK_FALSE(secr(p, Subgroup::similar).has_value());
    CHECK_FALSE(secr(p, Subgroup::total).has_value());  // zero total RMSE
  }
}

TEST_CASE("scope statistics and report") {
  auto records = biased_records(40, 5);
  auto scopes = analyze_pairs(records, true);
  REQUIRE(scopes.size() == 4);
  std::uint64_t total = 0;
  for (const auto& s : scopes) {
    CHECK(s.pairs == pair_count(s.systems));
    CHECK(s.group(Subgroup::total).n == s.pairs);
    CHECK(s.group(Subgroup::similar).n == s.group(Subgroup::sharing_one).n + s.group(Subgroup::sharing_two).n);
    total += s.pairs;
  }
  CHECK(total == generate_pairs(records, true).size());
  auto all = analyze_pairs(records, false);
  REQUIRE(all.size() == 1);
  CHECK(all[0].scope == "all");
  CHECK(all[0].pairs == 780);

  auto report = evaluation_report(records, true);
  CHECK(report.at("systems") == 40);
  CHECK(report.at("pair_scopes").size() == 4);
  for (const auto& s : report.at("pair_scopes")) {
    CHECK(s.at("pairs") == s.at("expected_pairs"));
    CHECK(s.at("subgroups").at("total").at("secr_percent").get<double>() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(s.at("subgroups").at("total").at("residual").get<double>() < 1e-12);
  }
  auto text = report_to_text(report);
  CHECK(text.find("MAE") != std::string::npos);

  auto vars = error_variance_by_split(records);
  CHECK(vars.back().first == "total");
}

TEST_CASE("predictions and parity files") {
  testing::TempDir tmp("parity");
  auto records = biased_records(12, 6);
  records[0].split = Split::train;
  save_predictions(tmp / "p.tsv", records);
  CHECK(load_predictions(tmp / "p.tsv") == records);
  CHECK_THROWS_AS(parse_predictions("id\tx\n"), ParseError);

  auto files = export_parity(tmp / "parity", records);
  CHECK(files.size() == 6);
  for (auto s : {"ID", "OOD_ads", "OOD_cat", "OOD_both", "train"})
    CHECK(std::filesystem::exists(tmp / "parity" / (std::string("parity_") + s + ".tsv")));
  auto body = read_file(tmp / "parity" / "parity_train.tsv");
  CHECK(body == "system_id\tlabel\tprediction\n" + records[0].system_id + "\t" + format_real(records[0].label) + "\t" +
                     format_real(records[0].prediction) + "\n");
  auto summary = read_file(tmp / "parity" / "parity_summary.tsv");
  CHECK(summary.starts_with("split\tcount\tmae\n"));
}
