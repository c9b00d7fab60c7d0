#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ipreuse/rng.hpp"

namespace ipreuse::pool {

using IpId = std::uint32_t;
using TenantId = std::uint32_t;

inline constexpr TenantId kNoTenant = 0xffffffffu;
inline constexpr IpId kNil = 0xffffffffu;
// Sentinel for "never released"; real timestamps are non-negative.
inline constexpr std::int64_t kNeverReleased =
    std::numeric_limits<std::int64_t>::min();

enum class Policy { kRandom, kLru, kTagging };

const char* policy_name(Policy p);
std::optional<Policy> policy_from_name(const std::string& name);

// How the per-IP set of previous holders is tracked.  kExact keeps the real
// set; kSketch keeps a small cardinality sketch per IP so multi-hundred-
// thousand-IP pools stay within a laptop's memory.  In sketch mode one tenant
// (sketch_exempt) can be designated up front: it is tracked by a separate flag
// rather than inserted, which keeps "distinct holders excluding that tenant"
// exact at any scale.
enum class PriorTracking { kExact, kSketch };

struct PoolConfig {
  std::uint32_t pool_size = 0;
  std::int64_t cooldown_seconds = 1800;  // ineligibility window after release
  Policy policy = Policy::kRandom;
  PriorTracking prior_tracking = PriorTracking::kExact;
  TenantId sketch_exempt = kNoTenant;
};

struct PoolStats {
  std::uint64_t allocations = 0;
  std::uint64_t releases = 0;
  std::uint64_t exhausted_events = 0;    // allocate() calls that found nothing
  std::uint64_t cooldown_violations = 0; // defensive counter; must stay zero
};

// An address pool with a release cooldown and three allocation policies:
//
//   kRandom  - uniform over the eligible set, via the caller's Rng
//   kLru     - the eligible IP with the oldest last release; never-used IPs
//              come first, ties break toward the smallest IpId
//   kTagging - prefer the caller's own previously released IPs (oldest
//              first); otherwise fall back to the global kLru order
//
// An IP is eligible when it is free and either never released or released at
// least cooldown_seconds ago (inclusive boundary).  Timestamps passed to
// allocate()/release() must be non-decreasing.
//
// Internals are O(1) amortized per operation: a swap-remove array holds the
// eligible set for random draws, an intrusive list holds it in LRU order, and
// per-tenant intrusive lists hold each tenant's tagged IPs.  Released IPs
// wait in a FIFO and are promoted into all three structures once their
// cooldown lapses; same-timestamp promotion batches are sorted by IpId so the
// LRU tie-break holds (skipped under kRandom where order is unobservable).
class Pool {
 public:
  explicit Pool(const PoolConfig& config);

  // Returns the allocated IP, or nullopt when no eligible IP exists (the
  // caller decides whether to retry later).
  std::optional<IpId> allocate(TenantId tenant, std::int64_t now, Rng& rng);

  // Marks the IP free, stamps last_release_time, and tags it with the
  // releasing tenant.  Throws std::logic_error if the IP is not allocated and
  // std::out_of_range for an unknown IP.
  void release(IpId ip, std::int64_t now);

  // Every eligible IP at `now`, ascending.  O(pool); intended for tests and
  // diagnostics, not the hot path.
  std::vector<IpId> eligible(std::int64_t now);

  const PoolConfig& config() const { return config_; }
  const PoolStats& stats() const { return stats_; }
  std::uint32_t size() const { return static_cast<std::uint32_t>(entries_.size()); }
  std::uint32_t allocated_count() const { return allocated_count_; }

  bool is_allocated(IpId ip) const { return entry(ip).holder != kNoTenant; }
  TenantId holder(IpId ip) const { return entry(ip).holder; }
  TenantId tag(IpId ip) const { return entry(ip).tag; }
  std::int64_t acquire_time(IpId ip) const { return entry(ip).acquire_time; }
  // kNeverReleased when the IP has never been released.
  std::int64_t last_release_time(IpId ip) const { return entry(ip).last_release; }

  // Distinct tenants that ever held the IP (including the current holder).
  // Exact in kExact mode; a cardinality estimate in kSketch mode.
  std::uint32_t prior_tenant_count(IpId ip) const;
  // Same count with one tenant excluded.  In kSketch mode only the configured
  // sketch_exempt tenant may be excluded (that count stays exact for small
  // true values because the exempt tenant never enters the sketch).
  std::uint32_t prior_tenant_count_excluding(IpId ip, TenantId tenant) const;
  // Sorted set of previous holders; kExact mode only.
  std::vector<TenantId> prior_tenants(IpId ip) const;

 private:
  struct Entry {
    TenantId holder = kNoTenant;
    TenantId tag = kNoTenant;
    std::int64_t acquire_time = 0;
    std::int64_t last_release = kNeverReleased;
    IpId lru_prev = kNil, lru_next = kNil;
    IpId tag_prev = kNil, tag_next = kNil;
    std::uint32_t epos = kNil;  // index into eligible_ when promoted
  };
  struct ListEnds {
    IpId head = kNil, tail = kNil;
  };
  // HyperLogLog with 64 eight-bit registers (64 bytes per IP).  Small counts
  // fall into the linear-counting regime and stay accurate to ~1.
  struct Sketch {
    std::array<std::uint8_t, 64> reg{};
  };

  const Entry& entry(IpId ip) const;
  Entry& entry(IpId ip);
  void check_time(std::int64_t now);
  void promote(std::int64_t now);
  void insert_eligible(IpId ip);
  void remove_from_structures(IpId ip);
  void lru_append(IpId ip);
  void lru_unlink(IpId ip);
  void tag_append(IpId ip);
  void tag_unlink(IpId ip);
  void record_holder(IpId ip, TenantId tenant);
  std::uint32_t sketch_estimate(const Sketch& s) const;

  PoolConfig config_;
  PoolStats stats_;
  std::vector<Entry> entries_;
  std::vector<IpId> eligible_;          // promoted eligible set, swap-remove
  std::deque<IpId> cooling_;            // released, cooldown still running
  IpId lru_head_ = kNil, lru_tail_ = kNil;
  std::unordered_map<TenantId, ListEnds> tag_ends_;
  std::uint32_t allocated_count_ = 0;
  std::int64_t time_floor_ = 0;
  std::vector<IpId> promote_batch_;     // scratch for same-tick promotions

  // Prior-holder tracking; exactly one of these is populated.
  std::vector<std::vector<TenantId>> exact_;  // sorted vectors
  std::vector<Sketch> sketch_;
  std::vector<std::uint8_t> exempt_seen_;     // sketch mode: exempt tenant bit
};

}  // namespace ipreuse::pool
