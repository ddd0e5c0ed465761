#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "ssrguard/config.hpp"
#include "ssrguard/error.hpp"
#include "ssrguard/io.hpp"
#include "support.hpp"

using namespace ssrguard;

TEST_SUITE("io") {

TEST_CASE("shortest round-trip number formatting") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 65.45847405843939, 400.0,
                   std::numeric_limits<double>::denorm_min(), std::nextafter(1.0, 0.0)}) {
    CAPTURE(v);
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(format_double(400.0) == "400");
  CHECK(format_double(0.5) == "0.5");
  CHECK_THROWS_AS(parse_double("1.5x"), IoError);
  CHECK_THROWS_AS(parse_double(""), IoError);
}

TEST_CASE("CSV parsing keeps comments apart") {
  std::istringstream in("# a\n# b\nx,y\n1,2\n3,4\n");
  const CsvTable t = read_csv(in);
  CHECK(t.comments.size() == 2);
  CHECK(t.header == std::vector<std::string>{"x", "y"});
  CHECK(t.rows.size() == 2);
  CHECK(t.column("y") == 1);
  CHECK_THROWS_AS(t.column("z"), IoError);
}

TEST_CASE("atomic write leaves no file behind on failure") {
  const auto dir = testing::scratch_dir("atomic");
  const auto path = dir / "out.txt";
  CHECK_THROWS(write_file_atomic(path, [](std::ostream& out) {
    out << "partial";
    throw std::runtime_error("boom");
  }));
  CHECK_FALSE(std::filesystem::exists(path));
  CHECK(std::distance(std::filesystem::directory_iterator(dir), std::filesystem::directory_iterator()) == 0);
  write_file_atomic(path, [](std::ostream& out) { out << "done"; });
  CHECK(read_text_file(path) == "done");
}

TEST_CASE("sha256 matches known digests") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}  // TEST_SUITE

TEST_SUITE("config") {

TEST_CASE("circuit parameters round-trip through JSON") {
  const PfcParams& p = testing::default_params();
  const PfcParams q = pfc_params_from_json(pfc_params_to_json(p));
  CHECK(q.filter_inductance == p.filter_inductance);
  CHECK(q.kp_i == p.kp_i);
  CHECK(q.w_g == p.w_g);
  CHECK(q.duty_feedforward == p.duty_feedforward);
  CHECK(pfc_params_to_json(q) == pfc_params_to_json(p));
}

TEST_CASE("missing or invalid fields are named") {
  nlohmann::json tree = pfc_params_to_json(testing::default_params());
  tree.erase("boost_inductance_h");
  try {
    pfc_params_from_json(tree);
    FAIL("expected an error");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("boost_inductance_h") != std::string::npos);
  }
  tree = pfc_params_to_json(testing::default_params());
  tree["d_min"] = "low";
  CHECK_THROWS_AS(pfc_params_from_json(tree), InvalidArgument);
}

TEST_CASE("missing config file") {
  CHECK_THROWS_AS(load_pfc_params("/nonexistent/ssrguard.json"), Error);
}

}  // TEST_SUITE
