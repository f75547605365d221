#include <catch2/catch_amalgamated.hpp>

#include "perilayer/config.hpp"

using namespace perilayer;

namespace {

const char* kMinimal = R"(version = 1
[domain]
half_length = 1.0
half_length_top = 1.5
height_bottom = 0.75
height_top = 0.75
source_y = 0.4
source_radius = 0.2

[cell]
hole = disk
disk_radius = 0.25

[study]
deltas = 1/4 1/8
bulk_h = 1/16
macro_h = 1/16
alpha = 0.15

[output]
dir = results
)";

}  // namespace

TEST_CASE("config parses sections, fractions and defaults") {
  const auto cfg = parse_config_text(kMinimal);
  CHECK(cfg.study.domain.half_length == 1.0);
  CHECK(cfg.study.deltas == std::vector<double>{0.25, 0.125});
  CHECK(cfg.study.bulk_h == Catch::Approx(1.0 / 16));
  CHECK(cfg.out_dir == "results");
  CHECK(std::holds_alternative<DiskHole>(cfg.study.cell.hole));
  CHECK(cfg.study.chi_profile.kind == CutoffKind::QuinticSmoothstep);
}

TEST_CASE("config rejects unknown keys with a line diagnostic") {
  std::string text = kMinimal;
  text += "\n[cell]\nwhatever = 1\n";
  try {
    parse_config_text(text);
    FAIL("expected config_error");
  } catch (const config_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("unknown key 'whatever'") != std::string::npos);
    CHECK(msg.find("line") != std::string::npos);
  }
}

TEST_CASE("config rejects unknown sections, bad numbers and bad schema") {
  CHECK_THROWS_AS(parse_config_text("[nope]\nx = 1\n"), config_error);
  std::string bad = kMinimal;
  bad += "\n[study]\nalpha = fast\n";
  CHECK_THROWS_AS(parse_config_text(bad), config_error);
  CHECK_THROWS_AS(parse_config_text("version = 7\n"), config_error);
}

TEST_CASE("config re-validates physical constraints") {
  // 2L/delta not an integer.
  std::string text = kMinimal;
  text += "\n[study]\ndeltas = 0.3\n";
  CHECK_THROWS_AS(parse_config_text(text), config_error);

  std::string hole = kMinimal;
  hole += "\n[cell]\ndisk_radius = 0.9\n";
  CHECK_THROWS_AS(parse_config_text(hole), config_error);
}

TEST_CASE("study thresholds are picked up") {
  std::string text = kMinimal;
  text += "\n[study]\nrequire_eoc_level0 = 0.8\nrequire_eoc_gap01 = 0.3\n";
  StudyThresholds th;
  parse_config_text(text, &th);
  REQUIRE(th.eoc_level0_min.has_value());
  CHECK(*th.eoc_level0_min == 0.8);
  REQUIRE(th.eoc_gap01_min.has_value());
  CHECK(*th.eoc_gap01_min == 0.3);
  CHECK(!th.u20_worsening_max.has_value());
}

TEST_CASE("constants record round trip with hash guard") {
  TransmissionConstants tc;
  tc.max_order = 2;
  tc.d_infinity = 0.25;
  tc.d_t = {0, 0, 0.125};
  tc.d_n = {0, 0.5, 0};
  tc.n_t = {0, 0, 0.196};
  tc.n_n = {0, 0, 1e-12};
  tc.diagnostics.l_band = 8;
  tc.diagnostics.h = 1.0 / 64;
  const std::string text = format_constants(tc, "abc123");

  TransmissionConstants back;
  REQUIRE(parse_constants(text, "abc123", back));
  CHECK(back.d_infinity == tc.d_infinity);
  CHECK(back.d_n[1] == tc.d_n[1]);
  CHECK(back.n_t[2] == tc.n_t[2]);
  CHECK(back.max_order == 2);

  // Stale cache: mismatched hash is rejected.
  CHECK(!parse_constants(text, "different", back));

  // Byte reproducibility.
  CHECK(format_constants(tc, "abc123") == text);
}

TEST_CASE("bundled example configs parse") {
  const auto bench = load_config(std::string(PERILAYER_SOURCE_DIR) + "/configs/bench.cfg");
  CHECK(bench.study.deltas.size() == 3);
  CHECK(bench.study.levels.size() == 3);
  const auto empty = load_config(std::string(PERILAYER_SOURCE_DIR) + "/configs/empty.cfg");
  CHECK(empty.study.cell.empty());
}
