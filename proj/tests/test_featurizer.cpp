#include <doctest.h>

#include "adsorbtext/featurizer.hpp"
#include "adsorbtext/synthetic.hpp"
#include "test_support.hpp"

using namespace adsorbtext;

namespace {

const std::string kS1 = "<s>NH3</s>VCr3 (2 1 0)</s>";
const std::string kS2 = kS1 + "[N, Cr, Cr, bridge]</s>";
const std::string kS3 = kS2 +
                        "[H, 1, 1.01, 1, 4.51, 2.2, 0.75][N, 7, 14.01, 2, 7.6, 3.04, -1.4]"
                        "[Cr, 24, 52.0, 4, 78.4, 1.66, 0.67][V, 23, 50.94, 4, 97.34, 1.63, 0.52]</s>";
const std::string kS4 = kS1 + "[N Cr Cr bridge [Cr Cr Cr Cr V V V N] [Cr Cr Cr Cr V V V N]]</s>";
const std::string kS5 = kS1 + "[N (Cr 2.1) (Cr 2.1) bridge [Cr Cr Cr Cr V V V N] [Cr Cr Cr Cr V V V N]]</s>";
const std::string kDesc =
    "Adsorbate NH3 is adsorbed on the catalytic surface VCr3 with a Miller Index of (2, 1, 0). The N atom of "
    "the adsorbate is placed on the bridge site and is binding to the catalytic surface atoms Cr, Cr.";

// Single adatom above one surface atom in a large cubic cell.
AtomicSystem ontop_system(const std::string& ads, const std::string& metal, double height) {
  AtomicSystem s;
  s.id = "ontop";
  s.adsorbate_smiles = ads;
  s.bulk_formula = metal;
  s.miller_index = {1, 1, 1};
  s.cell = {Vec3{15, 0, 0}, Vec3{0, 15, 0}, Vec3{0, 0, 20}};
  s.atoms = {{metal, {0, 0, 0}, kTagSurface}, {metal, {4, 0, 0}, kTagSurface}, {ads, {0, 0, height}, kTagAdsorbate}};
  return s;
}

}  // namespace

TEST_CASE("site type mapping") {
  CHECK(site_type_for_contacts(1) == SiteType::ontop);
  CHECK(site_type_for_contacts(2) == SiteType::bridge);
  CHECK(site_type_for_contacts(3) == SiteType::hollow);
  CHECK(site_type_for_contacts(4) == SiteType::fourfold);
  CHECK(site_type_for_contacts(7) == SiteType::fourfold);
  CHECK(parse_format("s4") == StringFormat::S4);
  CHECK(parse_format("DESC") == StringFormat::DESC);
  CHECK_THROWS(parse_format("s9"));
}

TEST_CASE("configuration of the NH3/VCr3 fixture") {
  auto sys = testing::load_nh3();
  auto cfg = detect_configuration(sys);
  CHECK(cfg.binding_element == "N");
  CHECK(cfg.site_type == SiteType::bridge);
  REQUIRE(cfg.primary_surface_atoms.size() == 2);
  for (const auto& p : cfg.primary_surface_atoms) {
    CHECK(p.element == "Cr");
    CHECK(p.distance == doctest::Approx(2.1).epsilon(1e-3));
    CHECK(p.distance <= 0.71 + 1.39 + 0.25);
  }
  std::vector<std::string> expected{"Cr", "Cr", "Cr", "Cr", "V", "V", "V", "N"};
  REQUIRE(cfg.secondary_lists.size() == 2);
  CHECK(cfg.secondary_lists[0] == expected);
  CHECK(cfg.secondary_lists[1] == expected);
}

TEST_CASE("string formats reproduce the published NH3/VCr3 examples byte for byte") {
  auto sys = testing::load_nh3();
  auto cfg = detect_configuration(sys);
  CHECK(serialize(sys, nullptr, StringFormat::S1).text == kS1);
  CHECK(serialize(sys, &cfg, StringFormat::S2).text == kS2);
  CHECK(serialize(sys, &cfg, StringFormat::S3).text == kS3);
  CHECK(serialize(sys, &cfg, StringFormat::S4).text == kS4);
  CHECK(serialize(sys, &cfg, StringFormat::S5).text == kS5);
  CHECK(render_system_description(sys, &cfg).text == kDesc);
  CHECK(featurize(sys, StringFormat::DESC).sample.text == kDesc);
}

TEST_CASE("serialized samples carry id, label and split") {
  auto sys = testing::load_nh3();
  auto s = featurize(sys, StringFormat::S4).sample;
  CHECK(s.system_id == sys.id);
  CHECK(s.energy_ev == sys.energy_ev);
  CHECK(s.split == sys.split);
  CHECK(s.format == StringFormat::S4);
}

TEST_CASE("ontop single atom") {
  auto sys = ontop_system("O", "Cu", 1.8);
  auto cfg = detect_configuration(sys);
  CHECK(cfg.site_type == SiteType::ontop);
  CHECK(cfg.primary_surface_atoms.size() == 1);
  auto desc = render_system_description(sys, &cfg).text;
  CHECK(desc.ends_with("binding to the catalytic surface atoms Cu."));
  CHECK_THROWS(render_system_description(sys, nullptr));
  CHECK_THROWS(serialize(sys, nullptr, StringFormat::S4));
}

TEST_CASE("no binding falls back to S1 content") {
  auto sys = ontop_system("O", "Cu", 6.0);
  CHECK_THROWS_AS(detect_configuration(sys), NoBindingDetected);
  auto r = featurize(sys, StringFormat::S5);
  CHECK(r.fell_back);
  CHECK(r.sample.text == serialize(sys, nullptr, StringFormat::S1).text);
  CHECK_FALSE(featurize(sys, StringFormat::S1).fell_back);
}

TEST_CASE("tolerance controls contacts") {
  auto sys = ontop_system("O", "Cu", 0.66 + 1.32 + 0.2);
  CHECK(detect_configuration(sys, 0.25).primary_surface_atoms.size() == 1);
  CHECK_THROWS_AS(detect_configuration(sys, 0.1), NoBindingDetected);
}

TEST_CASE("formats share the S1 prefix and are deterministic over generated systems") {
  SyntheticOptions opt;
  opt.n_systems = 40;
  opt.seed = 3;
  auto systems = generate_synthetic(opt);
  for (const auto& sys : systems) {
    auto s1 = serialize(sys, nullptr, StringFormat::S1).text;
    CHECK(s1.starts_with("<s>"));
    auto cfg = detect_configuration(sys);
    CHECK(cfg.primary_surface_atoms.size() >= 1);
    CHECK(cfg.site_type == site_type_for_contacts(cfg.primary_surface_atoms.size()));
    for (std::size_t k = 0; k < cfg.secondary_lists.size(); ++k)
      CHECK(cfg.secondary_lists[k].front() == cfg.primary_surface_atoms[k].element);
    for (auto f : {StringFormat::S2, StringFormat::S3, StringFormat::S4, StringFormat::S5}) {
      auto a = serialize(sys, &cfg, f).text;
      CHECK(a.starts_with(s1));
      CHECK(a == serialize(sys, &cfg, f).text);
    }
  }
}

TEST_CASE("parallel featurization preserves order") {
  SyntheticOptions opt;
  opt.n_systems = 30;
  opt.seed = 9;
  auto systems = generate_synthetic(opt);
  auto serial = featurize_all(systems, StringFormat::S5, kDefaultCutoffTolerance, 1);
  auto parallel = featurize_all(systems, StringFormat::S5, kDefaultCutoffTolerance, 4);
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].sample == parallel[i].sample);
    CHECK(serial[i].sample.system_id == systems[i].id);
  }
}

TEST_CASE("description cache merge") {
  auto sys = testing::load_nh3();
  std::vector<AtomicSystem> systems{sys};
  auto make = [&] { return std::vector<SerializedSample>{featurize(sys, StringFormat::DESC).sample}; };

  SUBCASE("empty cache leaves samples unchanged") {
    auto samples = make();
    auto report = merge_description_cache(samples, systems, DescriptionCache{});
    CHECK(samples[0].text == kDesc);
    CHECK(report.missing_adsorbate == 1);
    CHECK(report.missing_bulk == 1);
  }
  SUBCASE("adsorbate entry only") {
    auto samples = make();
    auto cache = parse_description_cache(R"({"adsorbates": {"NH3": "Ammonia is a molecule."}, "bulks": {}})");
    auto report = merge_description_cache(samples, systems, cache);
    CHECK(samples[0].text == kDesc + "\n\nAmmonia is a molecule.");
    CHECK(report.missing_adsorbate == 0);
    CHECK(report.missing_bulk == 1);
  }
  SUBCASE("both entries give three paragraphs") {
    auto samples = make();
    auto cache = parse_description_cache(
        R"({"adsorbates": {"NH3": "Ammonia text."}, "bulks": {"VCr3": "Cubic alloy text."}})");
    merge_description_cache(samples, systems, cache);
    CHECK(samples[0].text == kDesc + "\n\nAmmonia text.\n\nCubic alloy text.");
  }
  SUBCASE("malformed cache") {
    CHECK_THROWS_AS(parse_description_cache("{\"adsorbates\": 3}"), ParseError);
    CHECK_THROWS_AS(parse_description_cache("not json"), ParseError);
  }
}

TEST_CASE("corpus round trip") {
  testing::TempDir tmp("corpus");
  auto sys = testing::load_nh3();
  std::vector<SerializedSample> samples;
  for (auto f : {StringFormat::S1, StringFormat::S3, StringFormat::S5, StringFormat::DESC})
    samples.push_back(featurize(sys, f).sample);
  save_corpus(tmp / "c.jsonl", samples);
  CHECK(load_corpus(tmp / "c.jsonl") == samples);
}
