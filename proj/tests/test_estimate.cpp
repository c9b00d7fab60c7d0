#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "ipreuse/estimate.hpp"
#include "population_oracle.hpp"

using namespace ipreuse;
using namespace ipreuse::estimate;

namespace {

CaptureHistory from_rows(const std::vector<std::string>& rows) {
  CaptureHistory h;
  h.occasions = rows.empty() ? 0 : static_cast<std::uint32_t>(rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    h.individuals.push_back("ind" + std::to_string(i));
    std::vector<bool> row;
    for (char c : rows[i]) row.push_back(c == '1');
    h.seen.push_back(std::move(row));
  }
  return h;
}

}  // namespace

TEST_CASE("observation log parsing") {
  std::istringstream is(
      "# sightings\n"
      "10.0.0.1,0\n"
      "\n"
      "10.0.0.2,650\n"
      "10.0.0.1,1250\n");
  auto log = load_observations(is);
  REQUIRE(log.size() == 3);
  CHECK(log[0].ip == "10.0.0.1");
  CHECK(log[0].time == 0);
  CHECK(log[1].ip == "10.0.0.2");
  CHECK(log[1].time == 650);
  CHECK(log[2].time == 1250);
}

TEST_CASE("observation log rejects malformed lines with their line number") {
  std::istringstream is("10.0.0.1,0\nnot-a-record\n");
  try {
    load_observations(is);
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  std::istringstream bad_time("10.0.0.1,xyz\n");
  CHECK_THROWS_AS(load_observations(bad_time), std::runtime_error);

  std::istringstream empty("# nothing here\n\n");
  CHECK_THROWS_AS(load_observations(empty), std::runtime_error);
}

TEST_CASE("history bucketing by fixed occasion length") {
  std::vector<Observation> log = {
      {"10.0.0.1", 0}, {"10.0.0.1", 650}, {"10.0.0.2", 1250}};
  auto h = build_history(log, 600);
  REQUIRE(h.occasions == 3);
  REQUIRE(h.individuals.size() == 2);
  // first-seen order
  CHECK(h.individuals[0] == "10.0.0.1");
  CHECK(h.individuals[1] == "10.0.0.2");
  CHECK(h.seen[0] == std::vector<bool>{true, true, false});
  CHECK(h.seen[1] == std::vector<bool>{false, false, true});

  // repeat sightings within one occasion collapse
  std::vector<Observation> dup = {{"a", 10}, {"a", 20}, {"a", 599}};
  auto hd = build_history(dup, 600);
  CHECK(hd.occasions == 1);
  CHECK(hd.seen[0] == std::vector<bool>{true});

  CHECK_THROWS_AS(build_history(log, 0), std::invalid_argument);
  CHECK_THROWS_AS(build_history(log, -5), std::invalid_argument);
  CHECK_THROWS_AS(build_history({}, 600), std::invalid_argument);
  std::vector<Observation> neg = {{"a", -1}};
  CHECK_THROWS_AS(build_history(neg, 600), std::invalid_argument);
}

TEST_CASE("abundance hand example") {
  auto h = from_rows({"101", "111", "011", "010", "110"});
  auto occ = jolly_seber(h);
  REQUIRE(occ.size() == 3);

  CHECK(occ[0].index == 1);
  CHECK(occ[0].n == 3);
  CHECK(occ[0].m == 0);
  CHECK_FALSE(occ[0].n_hat.has_value());

  const auto& o2 = occ[1];
  CHECK(o2.index == 2);
  CHECK(o2.n == 4);
  CHECK(o2.m == 2);
  CHECK(o2.u == 2);
  CHECK(o2.R == 4);
  CHECK(o2.r == 2);
  CHECK(o2.z == 1);
  CHECK(o2.m_hat == doctest::Approx(11.0 / 3.0).epsilon(1e-9));
  REQUIRE(o2.n_hat.has_value());
  CHECK(*o2.n_hat == doctest::Approx(46.0 / 9.0).epsilon(1e-6));
  CHECK(*o2.n_hat == doctest::Approx(5.111).epsilon(0.002));

  CHECK_FALSE(occ[2].n_hat.has_value());

  CHECK(capture_rate(h) == doctest::Approx(5.0 / (46.0 / 9.0)).epsilon(1e-9));
}

TEST_CASE("abundance when every individual is always seen") {
  auto h = from_rows({"111", "111", "111"});
  auto occ = jolly_seber(h);
  REQUIRE(occ.size() == 3);
  const auto& o2 = occ[1];
  CHECK(o2.n == 3);
  CHECK(o2.m == 3);
  CHECK(o2.r == 3);
  CHECK(o2.z == 0);
  // Chapman correction biases tiny samples low: 4*3/4 - 1
  REQUIRE(o2.n_hat.has_value());
  CHECK(*o2.n_hat == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("capture rate needs at least three occasions") {
  CHECK_THROWS_AS(capture_rate(from_rows({"11", "10"})), std::invalid_argument);
  CHECK_THROWS_AS(capture_rate(from_rows({"1"})), std::invalid_argument);
}

TEST_CASE("closed population estimates are close to truth") {
  // With no births/deaths the interior abundance estimates should hover
  // around the true stock.
  Rng rng(7);
  double sum = 0.0;
  std::uint64_t count = 0;
  for (int rep = 0; rep < 500; ++rep) {
    auto h = oracle::closed_population(200, 5, 0.5, rng);
    for (const auto& o : jolly_seber(h))
      if (o.n_hat) {
        sum += *o.n_hat;
        ++count;
      }
  }
  REQUIRE(count == 500 * 3);
  double mean = sum / static_cast<double>(count);
  CHECK(mean == doctest::Approx(200.0).epsilon(0.10));
}

TEST_CASE("open population estimates track a changing stock") {
  Rng rng(11);
  double rel_err_sum = 0.0;
  std::uint64_t count = 0;
  for (int rep = 0; rep < 50; ++rep) {
    auto pop = oracle::open_population(300, 6, 0.9, 30, 0.6, rng);
    auto occ = jolly_seber(pop.history);
    for (const auto& o : occ) {
      if (!o.n_hat) continue;
      double truth = static_cast<double>(pop.alive[o.index - 1]);
      rel_err_sum += std::abs(*o.n_hat - truth) / truth;
      ++count;
    }
  }
  REQUIRE(count == 50 * 4);
  CHECK(rel_err_sum / static_cast<double>(count) < 0.10);
}

TEST_CASE("reuse interval statistics from a trace") {
  using sim::EventType;
  std::vector<sim::TraceEvent> trace = {
      {EventType::kAllocate, 0, 0, 5},    {EventType::kRelease, 100, 0, 5},
      {EventType::kAllocate, 2000, 0, 6}, {EventType::kRelease, 2100, 0, 6},
      {EventType::kAllocate, 2200, 1, 5}, {EventType::kRelease, 2300, 1, 5},
      {EventType::kAllocate, 4200, 0, 7}, {EventType::kAllocate, 4200, 1, 7},
  };
  auto st = reuse_stats(trace, 1000, 1800);
  CHECK(st.intervals == 3);  // 1900, 2100, 1900
  CHECK(st.min == 1900);
  CHECK(st.max == 2100);
  CHECK(st.median == 1900);
  CHECK(st.mean == doctest::Approx(5900.0 / 3.0).epsilon(1e-9));
  double mean = 5900.0 / 3.0;
  double var = (2.0 * (1900.0 - mean) * (1900.0 - mean) +
                (2100.0 - mean) * (2100.0 - mean)) /
               3.0;
  CHECK(st.cv == doctest::Approx(std::sqrt(var) / mean).epsilon(1e-9));
  CHECK(st.bin_width == 1000);
  REQUIRE(st.histogram.size() == 2);
  CHECK(st.histogram.at(1000) == 2);
  CHECK(st.histogram.at(2000) == 1);
  CHECK(st.below_cooldown == 0);

  auto strict = reuse_stats(trace, 1000, 2000);
  CHECK(strict.below_cooldown == 2);
}

TEST_CASE("reuse statistics edge cases") {
  using sim::EventType;
  std::vector<sim::TraceEvent> no_reuse = {
      {EventType::kAllocate, 0, 0, 1},
      {EventType::kRelease, 50, 0, 1},
  };
  CHECK_THROWS_AS(reuse_stats(no_reuse, 100, 0), std::runtime_error);

  std::vector<sim::TraceEvent> one = {
      {EventType::kAllocate, 0, 0, 1},
      {EventType::kRelease, 50, 0, 1},
      {EventType::kAllocate, 70, 0, 2},
  };
  CHECK_THROWS_AS(reuse_stats(one, 0, 0), std::invalid_argument);
  auto st = reuse_stats(one, 100, 30);
  CHECK(st.intervals == 1);
  CHECK(st.median == 20);
  CHECK(st.cv == doctest::Approx(0.0));
  CHECK(st.below_cooldown == 1);
}

TEST_CASE("reuse statistics on a simulated trace") {
  sim::SimConfig cfg;
  cfg.pool.pool_size = 2000;
  cfg.pool.policy = pool::Policy::kRandom;
  cfg.n_tenants = 300;
  cfg.quota_max = 1;
  cfg.adversary_quota = 10;
  cfg.adversary_target_allocations = 3000;
  cfg.seed = 5;
  cfg.record_trace = true;
  auto rep = sim::run(cfg);
  auto st = reuse_stats(rep.trace, 600, cfg.pool.cooldown_seconds);
  CHECK(st.intervals > 0);
  CHECK(st.below_cooldown == 0);
  CHECK(st.min >= cfg.pool.cooldown_seconds);
  std::uint64_t total = 0;
  for (const auto& [lo, c] : st.histogram) {
    CHECK(lo % 600 == 0);
    total += c;
  }
  CHECK(total == st.intervals);
}

TEST_CASE("estimate documents are deterministic") {
  auto h = from_rows({"101", "111", "011", "010", "110"});
  auto occ = jolly_seber(h);
  auto doc = estimates_json(h, occ, capture_rate(h));
  CHECK(doc["schema_version"] == 1);
  CHECK(doc["occasions"] == 3);
  CHECK(doc["individuals"] == 5);
  REQUIRE(doc["estimates"].size() == 3);
  CHECK(doc["estimates"][1]["n_hat"].get<double>() ==
        doctest::Approx(46.0 / 9.0));
  CHECK(doc["estimates"][0]["n_hat"].is_null());
  CHECK(doc.dump() == estimates_json(h, occ, capture_rate(h)).dump());

  using sim::EventType;
  std::vector<sim::TraceEvent> trace = {
      {EventType::kAllocate, 0, 0, 5},
      {EventType::kRelease, 100, 0, 5},
      {EventType::kAllocate, 2000, 0, 6},
  };
  auto rj = reuse_json(reuse_stats(trace, 1000, 1800));
  CHECK(rj["schema_version"] == 1);
  CHECK(rj["intervals"] == 1);
  CHECK(rj["histogram"]["1000"] == 1);
}
