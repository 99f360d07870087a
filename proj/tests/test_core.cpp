#include <doctest.h>

#include <array>
#include <cmath>
#include <random>

#include "adsorbtext/elements.hpp"
#include "adsorbtext/io.hpp"
#include "adsorbtext/systems.hpp"
#include "test_support.hpp"

using namespace adsorbtext;

TEST_CASE("format_real gives the shortest round-trip form with a decimal point") {
  CHECK(format_real(52.0) == "52.0");
  CHECK(format_real(1.01) == "1.01");
  CHECK(format_real(-1.4) == "-1.4");
  CHECK(format_real(97.34) == "97.34");
  CHECK(format_real(0.1 + 0.2) == "0.30000000000000004");
}

TEST_CASE("format_one_decimal rounds half away from zero") {
  CHECK(format_one_decimal(2.1) == "2.1");
  CHECK(format_one_decimal(2.25) == "2.3");
  CHECK(format_one_decimal(-2.25) == "-2.3");
  CHECK(format_one_decimal(2.04999) == "2.0");
  // re-rounding a rounded value is stable
  CHECK(format_one_decimal(std::stod(format_one_decimal(3.45))) == format_one_decimal(3.45));
}

TEST_CASE("element table rows printed in the S3 example") {
  const auto& h = element_properties("H");
  CHECK(h.atomic_number == 1);
  CHECK(h.atomic_mass == 1.01);
  CHECK(h.period == 1);
  CHECK(h.dipole_polarizability == 4.51);
  CHECK(h.electronegativity == 2.2);
  CHECK(h.electron_affinity == 0.75);

  const auto& v = element_properties("V");
  CHECK(v.atomic_number == 23);
  CHECK(v.atomic_mass == 50.94);
  CHECK(v.period == 4);
  CHECK(v.dipole_polarizability == 97.34);
  CHECK(v.electronegativity == 1.63);
  CHECK(v.electron_affinity == 0.52);

  const auto& n = element_properties("N");
  CHECK(n.atomic_number == 7);
  CHECK(n.atomic_mass == 14.01);
  CHECK(n.electron_affinity == -1.4);
  const auto& cr = element_properties("Cr");
  CHECK(cr.atomic_mass == 52.0);
  CHECK(cr.dipole_polarizability == 78.4);

  CHECK_THROWS_AS(element_properties("Xx"), ValidationError);
  CHECK_FALSE(is_known_element("Xx"));
}

TEST_CASE("element table invariants") {
  for (const auto& e : element_table()) {
    CHECK(e.atomic_number >= 1);
    CHECK(e.covalent_radius > 0.0);
  }
  CHECK_FALSE(element_table_version().empty());
}

TEST_CASE("element_counts reads symbols and counts only") {
  auto c = element_counts("NH3");
  CHECK(c.size() == 2);
  CHECK(c["N"] == 1);
  CHECK(c["H"] == 3);
  auto o = element_counts("*OCH2CH3");
  CHECK(o["C"] == 2);
  CHECK(o["H"] == 5);
  CHECK(o["O"] == 1);
  CHECK(element_counts("VCr3")["Cr"] == 3);
}

TEST_CASE("load_dataset on the NH3/VCr3 fixture") {
  auto systems = load_dataset(testing::nh3_fixture());
  REQUIRE(systems.size() == 1);
  const auto& s = systems[0];
  CHECK(s.adsorbate_smiles == "NH3");
  CHECK(s.bulk_formula == "VCr3");
  CHECK(s.miller_index == MillerIndex{2, 1, 0});
  // independent tag count
  std::map<std::string, int> ads;
  for (const auto& a : s.atoms)
    if (a.tag == 2) ++ads[a.element];
  CHECK(ads == std::map<std::string, int>{{"H", 3}, {"N", 1}});
  CHECK(s.adsorbate_atom_count() == 4);
}

TEST_CASE("load_dataset edge cases") {
  testing::TempDir tmp("core");
  write_file_atomic(tmp / "empty.jsonl", "");
  CHECK(load_dataset(tmp / "empty.jsonl").empty());

  auto base = load_dataset(testing::nh3_fixture()).at(0);
  SUBCASE("tag 3 names the field") {
    auto bad = base;
    bad.atoms[0].tag = 3;
    write_file_atomic(tmp / "bad.jsonl", dataset_to_string({bad}));
    try {
      load_dataset(tmp / "bad.jsonl");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("tag") != std::string::npos);
      CHECK(std::string(e.what()).find(":1:") != std::string::npos);
    }
  }
  SUBCASE("duplicate ids") {
    write_file_atomic(tmp / "dup.jsonl", dataset_to_string({base, base}));
    CHECK_THROWS_AS(load_dataset(tmp / "dup.jsonl"), Error);
  }
  SUBCASE("unknown element") {
    auto bad = base;
    bad.atoms[0].element = "Xx";
    write_file_atomic(tmp / "el.jsonl", dataset_to_string({bad}));
    CHECK_THROWS_WITH_AS(load_dataset(tmp / "el.jsonl"), doctest::Contains("element"), Error);
  }
  SUBCASE("adsorbate multiset mismatch") {
    auto bad = base;
    bad.adsorbate_smiles = "NH2";
    CHECK_THROWS_AS(validate(bad), ValidationError);
  }
  SUBCASE("singular cell") {
    auto bad = base;
    bad.cell[2] = bad.cell[0];
    CHECK_THROWS_WITH_AS(validate(bad), doctest::Contains("cell"), ValidationError);
  }
  SUBCASE("malformed line reports its number") {
    write_file_atomic(tmp / "broken.jsonl", dataset_to_string({base}) + "{not json\n");
    CHECK_THROWS_WITH_AS(load_dataset(tmp / "broken.jsonl"), doctest::Contains(":2:"), ParseError);
  }
}

TEST_CASE("dataset save/load round trip") {
  testing::TempDir tmp("roundtrip");
  auto systems = load_dataset(testing::data_dir() / "fixtures" / "synthetic_small.jsonl");
  REQUIRE(systems.size() > 10);
  save_dataset(tmp / "copy.jsonl", systems);
  CHECK(load_dataset(tmp / "copy.jsonl") == systems);
}

TEST_CASE("minimum_image_distance") {
  Cell cubic{Vec3{10, 0, 0}, Vec3{0, 10, 0}, Vec3{0, 0, 10}};
  CHECK(minimum_image_distance({1, 2, 3}, {1, 2, 3}, cubic) == 0.0);
  CHECK(minimum_image_distance({0, 0, 0}, {9, 0, 0}, cubic) == doctest::Approx(1.0).epsilon(1e-12));

  Cell singular{Vec3{1, 0, 0}, Vec3{2, 0, 0}, Vec3{0, 0, 1}};
  CHECK_THROWS_AS(minimum_image_distance({0, 0, 0}, {1, 1, 1}, singular), ValidationError);

  // brute force over the 27 images in a triclinic cell
  Cell tri{Vec3{7.0, 0.0, 0.0}, Vec3{2.1, 6.3, 0.0}, Vec3{1.2, -0.8, 9.5}};
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Vec3 a{}, b{};
    for (int k = 0; k < 3; ++k)
      for (int d = 0; d < 3; ++d) {
        a[d] += u(rng) * tri[k][d];
        b[d] += u(rng) * tri[k][d];
      }
    double best = 1e300;
    for (int i = -1; i <= 1; ++i)
      for (int j = -1; j <= 1; ++j)
        for (int k = -1; k <= 1; ++k) {
          double s = 0;
          for (int d = 0; d < 3; ++d) {
            double diff = b[d] + i * tri[0][d] + j * tri[1][d] + k * tri[2][d] - a[d];
            s += diff * diff;
          }
          best = std::min(best, std::sqrt(s));
        }
    double got = minimum_image_distance(a, b, tri);
    CHECK(got == doctest::Approx(best).epsilon(1e-12));
    CHECK(got == doctest::Approx(minimum_image_distance(b, a, tri)).epsilon(1e-12));
    double direct = std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
    CHECK(got <= direct + 1e-12);
  }
}

TEST_CASE("split names round trip") {
  for (auto s : {Split::ID, Split::OOD_ads, Split::OOD_cat, Split::OOD_both, Split::train})
    CHECK(parse_split(to_string(s)) == s);
  CHECK_THROWS(parse_split("validation"));
}

TEST_CASE("fnv1a64 known vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}
