#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <vector>

#include "ipreuse/pool.hpp"
#include "naive_pool.hpp"

using namespace ipreuse;
using pool::IpId;
using pool::Policy;
using pool::Pool;
using pool::PoolConfig;
using pool::TenantId;
using ipreuse::testing::NaivePool;

namespace {

PoolConfig desk(std::uint32_t size, Policy policy, std::int64_t cooldown = 1800) {
  PoolConfig c;
  c.pool_size = size;
  c.policy = policy;
  c.cooldown_seconds = cooldown;
  return c;
}

}  // namespace

TEST_CASE("fresh pool: every IP is eligible, ascending") {
  Pool p(desk(3, Policy::kRandom));
  CHECK(p.eligible(0) == std::vector<IpId>{0, 1, 2});
}

TEST_CASE("cooldown boundary is inclusive") {
  Pool p(desk(8, Policy::kLru));
  Rng rng(1);
  // Drain the never-used IPs so ip 5 can be singled out.
  for (int i = 0; i < 8; ++i) p.allocate(1, 0, rng);
  p.release(5, 1000);
  // 1500 seconds after release: still cooling.
  auto el = p.eligible(2500);
  CHECK(std::find(el.begin(), el.end(), 5) == el.end());
  // Exactly 1800 seconds after release: eligible again.
  el = p.eligible(2800);
  CHECK(std::find(el.begin(), el.end(), 5) != el.end());
}

TEST_CASE("allocate marks the IP and records the acquirer") {
  Pool p(desk(1, Policy::kRandom));
  Rng rng(1);
  auto got = p.allocate(7, 50, rng);
  REQUIRE(got.has_value());
  CHECK(*got == 0);
  CHECK(p.is_allocated(0));
  CHECK(p.holder(0) == 7);
  CHECK(p.acquire_time(0) == 50);
  CHECK(p.prior_tenants(0) == std::vector<TenantId>{7});
}

TEST_CASE("exhausted pool returns nothing and counts the event") {
  Pool p(desk(1, Policy::kRandom));
  Rng rng(1);
  REQUIRE(p.allocate(1, 0, rng).has_value());
  CHECK_FALSE(p.allocate(2, 0, rng).has_value());
  CHECK(p.stats().exhausted_events == 1);
  // Released but cooling IPs are still not eligible.
  p.release(0, 10);
  CHECK_FALSE(p.allocate(2, 20, rng).has_value());
  CHECK(p.stats().exhausted_events == 2);
}

TEST_CASE("lru prefers the oldest release; never-used first") {
  Pool p(desk(4, Policy::kLru, 0));
  Rng rng(1);
  // ip0..ip3 allocated, then released at different times.
  for (int i = 0; i < 4; ++i) p.allocate(1, 0, rng);
  p.release(2, 50);
  p.release(1, 100);
  p.release(0, 150);
  // Oldest release is ip2.
  auto got = p.allocate(9, 200, rng);
  REQUIRE(got.has_value());
  CHECK(*got == 2);
  // With a never-used IP available it would have won instead.
  Pool q(desk(3, Policy::kLru, 0));
  q.allocate(1, 0, rng);  // takes ip0 (never-used, smallest id)
  q.release(0, 10);
  auto next = q.allocate(2, 2000, rng);
  REQUIRE(next.has_value());
  CHECK(*next == 1);  // ip1 never used, beats the released ip0
}

TEST_CASE("same-timestamp releases break ties toward the smaller id") {
  Pool p(desk(5, Policy::kLru, 600));
  Rng rng(1);
  for (int i = 0; i < 5; ++i) p.allocate(1, 0, rng);
  // Release out of id order at one timestamp.
  p.release(4, 100);
  p.release(2, 100);
  p.release(3, 100);
  CHECK(*p.allocate(2, 700, rng) == 2);
  CHECK(*p.allocate(2, 700, rng) == 3);
  CHECK(*p.allocate(2, 700, rng) == 4);
}

TEST_CASE("tagging prefers the requester's own released IPs") {
  Pool p(desk(6, Policy::kTagging, 100));
  Rng rng(1);
  // Tenant A takes ip0/ip1, tenant B takes ip2; all released at t=10.
  p.allocate(1, 0, rng);
  p.allocate(1, 0, rng);
  p.allocate(2, 0, rng);
  p.release(0, 10);
  p.release(1, 10);
  p.release(2, 10);
  // At t=200 everything is eligible.  A gets its own oldest back (ip0),
  // even though ips 3..5 have never been used.
  CHECK(*p.allocate(1, 200, rng) == 0);
  CHECK(*p.allocate(1, 200, rng) == 1);
  // With its own stock gone, A falls back to global LRU: never-used ip3.
  CHECK(*p.allocate(1, 200, rng) == 3);
  // B still finds its own ip2 despite A's churn.
  CHECK(*p.allocate(2, 200, rng) == 2);
}

TEST_CASE("release then tagged reacquire after cooldown returns the same IP") {
  Pool p(desk(64, Policy::kTagging));
  Rng rng(1);
  auto first = p.allocate(5, 0, rng);
  REQUIRE(first.has_value());
  p.release(*first, 600);
  auto again = p.allocate(5, 2400, rng);  // 600 + 1800 cooldown
  REQUIRE(again.has_value());
  CHECK(*again == *first);
}

TEST_CASE("double release throws, unknown ip throws") {
  Pool p(desk(2, Policy::kRandom));
  Rng rng(1);
  p.allocate(1, 0, rng);
  p.release(0, 5);
  CHECK_THROWS_AS(p.release(0, 6), std::logic_error);
  CHECK_THROWS_AS(p.release(99, 6), std::out_of_range);
}

TEST_CASE("timestamps must not go backwards") {
  Pool p(desk(2, Policy::kRandom));
  Rng rng(1);
  p.allocate(1, 100, rng);
  CHECK_THROWS_AS(p.allocate(1, 50, rng), std::invalid_argument);
}

TEST_CASE("prior tenants accumulate distinct holders") {
  Pool p(desk(1, Policy::kLru, 0));
  Rng rng(1);
  p.allocate(3, 0, rng);
  p.release(0, 1);
  p.allocate(8, 2, rng);
  p.release(0, 3);
  p.allocate(3, 4, rng);  // repeat holder, still two distinct
  CHECK(p.prior_tenant_count(0) == 2);
  CHECK(p.prior_tenant_count_excluding(0, 8) == 1);
  CHECK(p.prior_tenant_count_excluding(0, 99) == 2);
  CHECK(p.prior_tenants(0) == std::vector<TenantId>{3, 8});
}

// Drives the real pool and the naive reference through the same random
// op script and requires identical choices (deterministic policies).
static void lockstep(Policy policy, std::uint64_t seed) {
  const std::uint32_t size = 40;
  const std::int64_t cooldown = 900;
  Pool fast(desk(size, policy, cooldown));
  NaivePool slow(size, cooldown, policy);
  Rng script(seed);
  Rng pool_rng(seed + 1);   // consumed identically by both on random draws
  Rng naive_rng(seed + 1);

  std::int64_t now = 0;
  std::vector<IpId> held;
  for (int step = 0; step < 4000; ++step) {
    now += script.below(3) == 0 ? static_cast<std::int64_t>(script.below(700)) : 0;
    bool do_alloc = held.empty() || script.below(100) < 55;
    if (do_alloc) {
      TenantId t = static_cast<TenantId>(script.below(6));
      auto a = fast.allocate(t, now, pool_rng);
      auto b = slow.allocate(t, now, naive_rng);
      REQUIRE(a.has_value() == b.has_value());
      if (a) {
        if (policy != Policy::kRandom) REQUIRE(*a == *b);
        held.push_back(*a);
        // Keep the naive pool in sync under random policy, where the two
        // implementations may legitimately pick different IPs.
        if (policy == Policy::kRandom && *a != *b) {
          slow.release(*b, now);
          // Un-cool it: re-allocating under naive bookkeeping only.  Easier:
          // rebuild is overkill; instead force-allocate the matching ip.
          // NaivePool has no force op, so emulate by scanning: release left
          // it eligible only after cooldown, which breaks sync.  Random runs
          // therefore use a dedicated checker below instead of lockstep.
          REQUIRE(policy != Policy::kRandom);
        }
      }
    } else {
      std::size_t idx = script.below(held.size());
      IpId ip = held[idx];
      held[idx] = held.back();
      held.pop_back();
      fast.release(ip, now);
      slow.release(ip, now);
    }
    if (step % 97 == 0) {
      REQUIRE(fast.eligible(now) == slow.eligible(now));
    }
  }
  CHECK(fast.stats().cooldown_violations == 0);
}

TEST_CASE("lockstep against the reference: lru") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) lockstep(Policy::kLru, seed);
}

TEST_CASE("lockstep against the reference: tagging") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) lockstep(Policy::kTagging, seed);
}

TEST_CASE("random policy: choices always come from the eligible set") {
  const std::uint32_t size = 30;
  const std::int64_t cooldown = 500;
  Pool fast(desk(size, Policy::kRandom, cooldown));
  Rng script(77);
  Rng pool_rng(78);

  // Shadow bookkeeping, maintained independently of the pool internals.
  std::vector<bool> held_flag(size, false);
  std::vector<std::int64_t> released_at(size, pool::kNeverReleased);
  auto expected_eligible = [&](std::int64_t now) {
    std::vector<IpId> out;
    for (IpId ip = 0; ip < size; ++ip)
      if (!held_flag[ip] && (released_at[ip] == pool::kNeverReleased ||
                             now - released_at[ip] >= cooldown))
        out.push_back(ip);
    return out;
  };

  std::int64_t now = 0;
  std::vector<IpId> held;
  for (int step = 0; step < 5000; ++step) {
    now += script.below(4) == 0 ? static_cast<std::int64_t>(script.below(400)) : 0;
    bool do_alloc = held.empty() || script.below(100) < 55;
    if (do_alloc) {
      auto expect = expected_eligible(now);
      auto got = fast.allocate(1, now, pool_rng);
      if (expect.empty()) {
        REQUIRE_FALSE(got.has_value());
      } else {
        REQUIRE(got.has_value());
        REQUIRE(std::binary_search(expect.begin(), expect.end(), *got));
        held_flag[*got] = true;
        held.push_back(*got);
      }
    } else if (!held.empty()) {
      std::size_t idx = script.below(held.size());
      IpId ip = held[idx];
      held[idx] = held.back();
      held.pop_back();
      fast.release(ip, now);
      held_flag[ip] = false;
      released_at[ip] = now;
    }
  }
  CHECK(fast.stats().cooldown_violations == 0);
}

TEST_CASE("random policy: reproducible and uniform") {
  // Reproducibility: the same seed yields the identical allocation sequence.
  auto run_sequence = [] {
    Pool p(desk(10, Policy::kRandom, 0));
    Rng rng(123);
    std::vector<IpId> seq;
    std::int64_t now = 0;
    for (int i = 0; i < 200; ++i) {
      auto got = p.allocate(1, now, rng);
      REQUIRE(got.has_value());
      seq.push_back(*got);
      p.release(*got, now);
      ++now;
    }
    return seq;
  };
  CHECK(run_sequence() == run_sequence());

  // Uniformity smoke test: three perpetually eligible IPs, zero cooldown.
  Pool p(desk(3, Policy::kRandom, 0));
  Rng rng(9);
  std::map<IpId, int> freq;
  for (int i = 0; i < 3000; ++i) {
    auto got = p.allocate(1, i, rng);
    REQUIRE(got.has_value());
    ++freq[*got];
    p.release(*got, i);
  }
  for (auto& [ip, n] : freq) {
    CHECK(n > 850);
    CHECK(n < 1150);
  }
}

TEST_CASE("cooldown is never violated across heavy churn") {
  Pool p(desk(25, Policy::kRandom, 700));
  NaivePool mirror(25, 700, Policy::kRandom);
  Rng script(31);
  Rng rng(32);
  std::int64_t now = 0;
  std::vector<IpId> held;
  std::vector<std::int64_t> last_release(25, pool::kNeverReleased);
  for (int step = 0; step < 8000; ++step) {
    if (script.below(3) == 0) now += script.below(500);
    if (held.empty() || script.below(2) == 0) {
      auto got = p.allocate(2, now, rng);
      if (got) {
        if (last_release[*got] != pool::kNeverReleased)
          REQUIRE(now - last_release[*got] >= 700);
        held.push_back(*got);
      }
    } else {
      std::size_t idx = script.below(held.size());
      IpId ip = held[idx];
      held[idx] = held.back();
      held.pop_back();
      p.release(ip, now);
      last_release[ip] = now;
    }
  }
  CHECK(p.stats().cooldown_violations == 0);
}

TEST_CASE("sketch tracking: zero and one are exact, big counts are close") {
  PoolConfig c = desk(400, Policy::kLru, 0);
  c.prior_tracking = pool::PriorTracking::kSketch;
  c.sketch_exempt = 9999;
  Pool p(c);
  Rng rng(1);

  // Never-held IPs report zero.
  CHECK(p.prior_tenant_count(399) == 0);

  // The exempt tenant is tracked by flag, so excluding it stays exact.
  p.allocate(9999, 0, rng);  // takes ip0
  CHECK(p.prior_tenant_count(0) == 1);
  CHECK(p.prior_tenant_count_excluding(0, 9999) == 0);
  CHECK_THROWS_AS(p.prior_tenant_count_excluding(0, 5), std::logic_error);

  // One real holder estimates exactly one.
  p.allocate(17, 0, rng);  // ip1
  CHECK(p.prior_tenant_count(1) == 1);

  // Many distinct holders: averaged over several IPs the estimate stays
  // within ~15% of the truth (single sketches can be off by more).
  for (int holders : {40, 300}) {
    const int kIps = 24;
    PoolConfig many = desk(1, Policy::kLru, 0);
    many.prior_tracking = pool::PriorTracking::kSketch;
    many.sketch_exempt = 9999;
    double total = 0;
    for (int k = 0; k < kIps; ++k) {
      Pool q(many);
      Rng qr(7);
      for (int t = 0; t < holders; ++t) {
        // Distinct tenant ids per pool instance so sketches are independent.
        q.allocate(static_cast<TenantId>(100000 * (k + 1) + t), t, qr);
        q.release(0, t);
      }
      total += q.prior_tenant_count(0);
    }
    double mean = total / kIps;
    CHECK(mean > holders * 0.85);
    CHECK(mean < holders * 1.15);
  }
}

TEST_CASE("config validation") {
  PoolConfig c;
  c.pool_size = 0;
  CHECK_THROWS_AS(Pool{c}, std::invalid_argument);
  c.pool_size = 1;
  c.cooldown_seconds = -5;
  CHECK_THROWS_AS(Pool{c}, std::invalid_argument);
}
