#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipreuse/pool.hpp"

namespace ipreuse::sim {

// A multi-agent allocation simulation: n_tenants benign tenants plus one
// adversary share a Pool.  Time advances in fixed ticks.  Each tick every
// tenant (in seeded-shuffled order) redraws a quota target from
// U{0..quota_max} and releases or allocates to reach it; the adversary runs
// last, releases every IP held at least adversary_hold seconds, then
// allocates back up to adversary_quota.  The run ends once the adversary has
// performed adversary_target_allocations allocations (or an optional
// simulated-duration / tick cap is reached).
struct SimConfig {
  pool::PoolConfig pool;
  std::uint32_t n_tenants = 0;
  std::int64_t tick_seconds = 600;
  // Per-tenant quota ceiling.  The default keeps aggregate tenant demand far
  // enough below pool capacity that the eligible set never empties; much
  // larger values throttle allocation for every agent, adversary included.
  std::uint32_t quota_max = 2;
  std::uint32_t adversary_quota = 60;
  std::int64_t adversary_hold_seconds = 600;
  std::uint64_t adversary_target_allocations = 581000;
  std::int64_t max_duration_seconds = 0;  // 0 = unbounded
  std::uint64_t max_ticks = 0;            // 0 = unbounded
  std::uint64_t seed = 1;
  bool record_trace = false;

  // The adversary's TenantId (tenants are 0..n_tenants-1).
  pool::TenantId adversary_id() const { return n_tenants; }
  // Throws std::invalid_argument on nonsense (zero pool, zero tick, ...).
  void validate() const;
};

enum class EventType { kAllocate, kRelease };

struct TraceEvent {
  EventType type;
  std::int64_t time;
  std::int64_t ip;
  std::int64_t tenant;
};

void write_trace_csv(std::ostream& os, const std::vector<TraceEvent>& trace);
// Parses the CSV written above ("event,time,ip,tenant" header, '#' comments).
// Throws std::runtime_error with a line number on malformed input.
std::vector<TraceEvent> load_trace_csv(std::istream& is);

// Per-acquisition adversary measurements.
//
// prev_tenant_counts: distinct prior holders of the acquired IP, not counting
// the adversary itself.
//
// reuse_intervals: how stale the latest foreign control of the IP is, i.e.
// now minus the last release by any agent other than the adversary; an IP the
// adversary alone has cycled counts from the pool epoch (time 0).  IPs that
// have never been released at all contribute no interval.
struct AdversaryMetrics {
  std::vector<std::uint32_t> prev_tenant_counts;
  std::vector<std::int64_t> reuse_intervals;
  std::uint64_t acquisitions = 0;
  std::uint64_t unique_ips = 0;
};

struct MetricsSummary {
  std::uint64_t unique_ips = 0;
  double mean_prev_tenants = 0.0;
  // Lower-middle median; absent when no acquisition touched a released IP.
  std::optional<std::int64_t> median_reuse_seconds;
};

// Throws std::domain_error when the metrics contain no acquisitions.
MetricsSummary summarize(const AdversaryMetrics& metrics);

struct SimReport {
  SimConfig config;
  MetricsSummary summary;
  AdversaryMetrics metrics;
  std::uint64_t ticks = 0;
  std::int64_t duration_seconds = 0;  // simulated time covered
  std::uint64_t tenant_allocations = 0;
  std::uint64_t tenant_releases = 0;
  std::uint64_t adversary_allocations = 0;
  std::uint64_t exhausted_events = 0;
  std::uint64_t cooldown_violations = 0;
  bool stalled = false;  // safety stop: adversary made no progress for ages
  std::vector<TraceEvent> trace;
};

SimReport run(const SimConfig& config);

// Deterministic, self-describing document (config echo + metrics).  Wall
// clock never appears here so identical configs serialize byte-identically.
nlohmann::ordered_json report_json(const SimReport& report);
nlohmann::ordered_json config_json(const SimConfig& config);

}  // namespace ipreuse::sim
