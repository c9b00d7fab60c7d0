#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <sstream>

#include "ipreuse/sim.hpp"

using namespace ipreuse;
using sim::EventType;
using sim::SimConfig;
using sim::SimReport;

namespace {

SimConfig base(std::uint32_t pool_size, pool::Policy policy) {
  SimConfig c;
  c.pool.pool_size = pool_size;
  c.pool.policy = policy;
  return c;
}

}  // namespace

TEST_CASE("config validation rejects nonsense") {
  SimConfig c = base(10, pool::Policy::kRandom);
  c.pool.pool_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = base(10, pool::Policy::kRandom);
  c.tick_seconds = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = base(10, pool::Policy::kRandom);
  c.adversary_hold_seconds = 100;  // below one tick
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = base(10, pool::Policy::kRandom);
  c.adversary_target_allocations = 0;  // and no other stop condition
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("single tenant with a one-IP pool follows its drawn quota") {
  bool saw_take = false, saw_skip = false;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SimConfig c = base(1, pool::Policy::kLru);
    c.n_tenants = 1;
    c.quota_max = 1;
    c.adversary_quota = 1;
    c.max_ticks = 1;
    c.adversary_target_allocations = 100;  // never reached in one tick
    c.seed = seed;
    c.record_trace = true;
    SimReport r = sim::run(c);
    CHECK(r.tenant_allocations <= 1);
    if (r.tenant_allocations == 1) {
      saw_take = true;
      // Tenant drew quota 1 and holds the only IP; the adversary starved.
      CHECK(r.exhausted_events >= 1);
      CHECK(r.adversary_allocations == 0);
    } else {
      saw_skip = true;
      CHECK(r.adversary_allocations == 1);
    }
  }
  CHECK(saw_take);
  CHECK(saw_skip);
}

TEST_CASE("adversary releases aged holdings before allocating") {
  SimConfig c = base(2, pool::Policy::kLru);
  c.n_tenants = 0;
  c.adversary_quota = 1;
  c.adversary_hold_seconds = 600;
  c.adversary_target_allocations = 2;
  c.record_trace = true;
  SimReport r = sim::run(c);
  REQUIRE(r.trace.size() == 3);
  CHECK(r.trace[0].type == EventType::kAllocate);
  CHECK(r.trace[0].ip == 0);
  CHECK(r.trace[0].time == 0);
  CHECK(r.trace[1].type == EventType::kRelease);
  CHECK(r.trace[1].ip == 0);
  CHECK(r.trace[1].time == 600);
  CHECK(r.trace[2].type == EventType::kAllocate);
  CHECK(r.trace[2].ip == 1);  // next never-used IP under LRU
  CHECK(r.summary.unique_ips == 2);
  // Both acquisitions hit never-released IPs: no reuse intervals.
  CHECK(r.metrics.reuse_intervals.empty());
  CHECK_FALSE(r.summary.median_reuse_seconds.has_value());
}

TEST_CASE("tagging cycles a fixed footprint: quota x 4 cohorts") {
  SimConfig c = base(1000, pool::Policy::kTagging);
  c.n_tenants = 50;
  c.quota_max = 1;
  c.adversary_quota = 60;
  c.adversary_target_allocations = 5000;
  c.seed = 3;
  SimReport r = sim::run(c);
  // hold 600, cooldown 1800: ceil((600+1800)/600) = 4 cohorts of 60.
  CHECK(r.summary.unique_ips == 240);
  CHECK(r.summary.mean_prev_tenants == 0.0);
  CHECK(r.cooldown_violations == 0);
  // Steady-state reacquisitions measure staleness against the pool epoch,
  // so the median sits near half the simulated duration.
  REQUIRE(r.summary.median_reuse_seconds.has_value());
  CHECK(*r.summary.median_reuse_seconds >
        static_cast<std::int64_t>(0.3 * r.duration_seconds));
  CHECK(*r.summary.median_reuse_seconds <
        static_cast<std::int64_t>(0.7 * r.duration_seconds));
}

TEST_CASE("exhaustion is counted, caps stop the run") {
  SimConfig c = base(1, pool::Policy::kRandom);
  c.n_tenants = 0;
  c.adversary_quota = 2;
  c.adversary_target_allocations = 2;
  c.max_ticks = 3;
  SimReport r = sim::run(c);
  CHECK(r.adversary_allocations == 1);
  CHECK(r.exhausted_events >= 1);
  CHECK(r.ticks == 3);
  CHECK_FALSE(r.stalled);
}

TEST_CASE("summarize: errors on empty, lower-middle median") {
  sim::AdversaryMetrics empty;
  CHECK_THROWS_AS(sim::summarize(empty), std::domain_error);

  sim::AdversaryMetrics m;
  m.acquisitions = 4;
  m.unique_ips = 3;
  m.prev_tenant_counts = {0, 1, 2, 5};
  m.reuse_intervals = {4, 1, 3, 2};
  sim::MetricsSummary s = sim::summarize(m);
  CHECK(s.unique_ips == 3);
  CHECK(s.mean_prev_tenants == doctest::Approx(2.0));
  REQUIRE(s.median_reuse_seconds.has_value());
  CHECK(*s.median_reuse_seconds == 2);  // even length takes the lower middle
}

TEST_CASE("policy ordering at desk scale") {
  for (std::uint64_t seed : {1, 2}) {
    std::uint64_t unique_random = 0, unique_lru = 0, unique_tag = 0;
    std::int64_t med_random = 0, med_lru = 0, med_tag = 0;
    for (pool::Policy policy :
         {pool::Policy::kRandom, pool::Policy::kLru, pool::Policy::kTagging}) {
      SimConfig c = base(2000, policy);
      c.n_tenants = 400;
      c.quota_max = 1;
      c.adversary_quota = 10;
      c.adversary_target_allocations = 2000;
      c.seed = seed;
      SimReport r = sim::run(c);
      CHECK(r.cooldown_violations == 0);
      REQUIRE(r.summary.median_reuse_seconds.has_value());
      if (policy == pool::Policy::kRandom) {
        unique_random = r.summary.unique_ips;
        med_random = *r.summary.median_reuse_seconds;
      } else if (policy == pool::Policy::kLru) {
        unique_lru = r.summary.unique_ips;
        med_lru = *r.summary.median_reuse_seconds;
      } else {
        unique_tag = r.summary.unique_ips;
        med_tag = *r.summary.median_reuse_seconds;
      }
    }
    CHECK(unique_tag == 40);  // 10 x 4 cohorts
    CHECK(unique_random >= 10 * unique_tag);
    CHECK(unique_lru >= 10 * unique_tag);
    CHECK(med_tag > med_random);
    CHECK(med_tag > med_lru);
  }
}

TEST_CASE("adversary reuse intervals respect the cooldown") {
  SimConfig c = base(300, pool::Policy::kRandom);
  c.n_tenants = 60;
  c.quota_max = 1;
  c.adversary_quota = 5;
  c.adversary_target_allocations = 500;
  c.seed = 11;
  SimReport r = sim::run(c);
  for (std::int64_t iv : r.metrics.reuse_intervals)
    CHECK(iv >= c.pool.cooldown_seconds);
  CHECK(r.metrics.reuse_intervals.size() <= r.metrics.acquisitions);
}

TEST_CASE("identical configs give byte-identical reports and traces") {
  SimConfig c = base(500, pool::Policy::kTagging);
  c.n_tenants = 100;
  c.quota_max = 2;
  c.adversary_quota = 8;
  c.adversary_target_allocations = 400;
  c.seed = 99;
  c.record_trace = true;
  SimReport a = sim::run(c);
  SimReport b = sim::run(c);
  CHECK(sim::report_json(a).dump() == sim::report_json(b).dump());
  std::ostringstream ta, tb;
  sim::write_trace_csv(ta, a.trace);
  sim::write_trace_csv(tb, b.trace);
  CHECK(ta.str() == tb.str());
  CHECK(!a.trace.empty());
}

TEST_CASE("trace csv round-trips") {
  SimConfig c = base(50, pool::Policy::kLru);
  c.n_tenants = 10;
  c.quota_max = 1;
  c.adversary_quota = 2;
  c.adversary_target_allocations = 30;
  c.record_trace = true;
  SimReport r = sim::run(c);
  std::ostringstream os;
  sim::write_trace_csv(os, r.trace);
  std::istringstream is(os.str());
  std::vector<sim::TraceEvent> back = sim::load_trace_csv(is);
  REQUIRE(back.size() == r.trace.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].type == r.trace[i].type);
    CHECK(back[i].time == r.trace[i].time);
    CHECK(back[i].ip == r.trace[i].ip);
    CHECK(back[i].tenant == r.trace[i].tenant);
  }
}

TEST_CASE("malformed trace csv is rejected with a line number") {
  std::istringstream bad("event,time,ip,tenant\nallocate,abc,1,2\n");
  CHECK_THROWS_WITH_AS(sim::load_trace_csv(bad),
                       doctest::Contains("line 2"), std::runtime_error);
  std::istringstream bad2("event,time,ip,tenant\nnope,1,2,3\n");
  CHECK_THROWS_AS(sim::load_trace_csv(bad2), std::runtime_error);
  std::istringstream bad3("allocate,1,2\n");
  CHECK_THROWS_AS(sim::load_trace_csv(bad3), std::runtime_error);
}

TEST_CASE("unreachable targets trip the stall guard eventually") {
  // The adversary fills its quota on tick 0 and then, with an absurd hold
  // time, never releases or allocates again; the stall guard must bail out
  // rather than tick forever toward the unreachable target.
  SimConfig c = base(1, pool::Policy::kRandom);
  c.n_tenants = 0;
  c.adversary_quota = 1;
  c.adversary_hold_seconds = std::int64_t{1} << 60;
  c.adversary_target_allocations = 2;
  SimReport r = sim::run(c);
  CHECK(r.stalled);
  CHECK(r.adversary_allocations == 1);
}
