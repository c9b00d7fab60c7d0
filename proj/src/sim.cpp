#include "ipreuse/sim.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace ipreuse::sim {

namespace {

// Tenants that made no headway for this many consecutive ticks indicate a
// configuration whose adversary target is unreachable; stop instead of
// spinning forever.
constexpr std::uint64_t kStallTicks = 100000;

std::int64_t parse_i64(std::string_view s, int line_no, const char* what) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw std::runtime_error("trace line " + std::to_string(line_no) +
                             ": bad " + what + " '" + std::string(s) + "'");
  return v;
}

}  // namespace

void SimConfig::validate() const {
  if (pool.pool_size == 0)
    throw std::invalid_argument("pool_size must be positive");
  if (pool.cooldown_seconds < 0)
    throw std::invalid_argument("cooldown must be non-negative");
  if (tick_seconds <= 0)
    throw std::invalid_argument("tick_seconds must be positive");
  if (adversary_quota == 0)
    throw std::invalid_argument("adversary_quota must be positive");
  if (adversary_hold_seconds < tick_seconds)
    throw std::invalid_argument("adversary_hold must be at least one tick");
  if (adversary_target_allocations == 0 && max_duration_seconds == 0 &&
      max_ticks == 0)
    throw std::invalid_argument(
        "need an adversary target, a duration cap, or a tick cap");
}

SimReport run(const SimConfig& config) {
  config.validate();

  SimConfig cfg = config;
  cfg.pool.sketch_exempt = cfg.adversary_id();
  pool::Pool p(cfg.pool);
  Rng rng(cfg.seed);

  SimReport report;
  report.config = config;

  const pool::TenantId adversary = cfg.adversary_id();
  std::vector<std::vector<pool::IpId>> held(cfg.n_tenants);
  // Adversary holdings in acquisition order (times are non-decreasing).
  std::vector<std::pair<pool::IpId, std::int64_t>> adv_held;
  std::size_t adv_head = 0;

  // Latest release of each IP by anyone other than the adversary; the pool
  // epoch (0) stands in until that happens.  Drives reuse_intervals.
  std::vector<std::int64_t> last_foreign_release(cfg.pool.pool_size, 0);
  std::vector<bool> seen(cfg.pool.pool_size, false);

  std::vector<std::uint32_t> order(cfg.n_tenants);
  std::iota(order.begin(), order.end(), 0u);

  AdversaryMetrics& metrics = report.metrics;
  std::int64_t now = 0;
  std::uint64_t idle_ticks = 0;

  auto trace_push = [&](EventType t, std::int64_t ip, std::int64_t tenant) {
    if (cfg.record_trace)
      report.trace.push_back(TraceEvent{t, now, ip, tenant});
  };

  while (metrics.acquisitions < cfg.adversary_target_allocations) {
    if (cfg.max_duration_seconds > 0 && now >= cfg.max_duration_seconds) break;
    if (cfg.max_ticks > 0 && report.ticks >= cfg.max_ticks) break;
    if (idle_ticks >= kStallTicks) {
      report.stalled = true;
      break;
    }

    // Benign tenants first, in a fresh seeded order every tick.
    rng.shuffle(order);
    for (std::uint32_t t : order) {
      std::uint32_t quota = rng.below32(cfg.quota_max + 1);
      std::vector<pool::IpId>& mine = held[t];
      while (mine.size() > quota) {
        std::uint32_t idx = rng.below32(static_cast<std::uint32_t>(mine.size()));
        pool::IpId ip = mine[idx];
        mine[idx] = mine.back();
        mine.pop_back();
        p.release(ip, now);
        last_foreign_release[ip] = now;
        ++report.tenant_releases;
        trace_push(EventType::kRelease, ip, t);
      }
      while (mine.size() < quota) {
        auto got = p.allocate(t, now, rng);
        if (!got) break;  // exhausted; try again next tick
        mine.push_back(*got);
        ++report.tenant_allocations;
        trace_push(EventType::kAllocate, *got, t);
      }
    }

    // Adversary: drop everything held long enough, then refill.
    while (adv_head < adv_held.size() &&
           now - adv_held[adv_head].second >= cfg.adversary_hold_seconds) {
      pool::IpId ip = adv_held[adv_head].first;
      ++adv_head;
      p.release(ip, now);
      trace_push(EventType::kRelease, ip, adversary);
    }
    if (adv_head > 4096) {  // compact the consumed prefix now and then
      adv_held.erase(adv_held.begin(), adv_held.begin() + adv_head);
      adv_head = 0;
    }

    std::uint64_t before = metrics.acquisitions;
    while (adv_held.size() - adv_head < cfg.adversary_quota &&
           metrics.acquisitions < cfg.adversary_target_allocations) {
      auto got = p.allocate(adversary, now, rng);
      if (!got) break;
      pool::IpId ip = *got;
      metrics.prev_tenant_counts.push_back(
          p.prior_tenant_count_excluding(ip, adversary));
      if (p.last_release_time(ip) != pool::kNeverReleased)
        metrics.reuse_intervals.push_back(now - last_foreign_release[ip]);
      if (!seen[ip]) {
        seen[ip] = true;
        ++metrics.unique_ips;
      }
      ++metrics.acquisitions;
      adv_held.emplace_back(ip, now);
      trace_push(EventType::kAllocate, ip, adversary);
    }
    idle_ticks = metrics.acquisitions == before ? idle_ticks + 1 : 0;

    ++report.ticks;
    now += cfg.tick_seconds;
  }

  report.duration_seconds = now;
  report.adversary_allocations = metrics.acquisitions;
  report.exhausted_events = p.stats().exhausted_events;
  report.cooldown_violations = p.stats().cooldown_violations;
  if (metrics.acquisitions > 0) report.summary = summarize(metrics);
  return report;
}

MetricsSummary summarize(const AdversaryMetrics& metrics) {
  if (metrics.acquisitions == 0)
    throw std::domain_error("metrics contain no acquisitions");
  MetricsSummary s;
  s.unique_ips = metrics.unique_ips;
  std::uint64_t total = 0;
  for (std::uint32_t c : metrics.prev_tenant_counts) total += c;
  s.mean_prev_tenants = metrics.prev_tenant_counts.empty()
                            ? 0.0
                            : static_cast<double>(total) /
                                  static_cast<double>(metrics.prev_tenant_counts.size());
  if (!metrics.reuse_intervals.empty()) {
    std::vector<std::int64_t> sorted = metrics.reuse_intervals;
    std::sort(sorted.begin(), sorted.end());
    // Lower-middle median: index (n-1)/2.
    s.median_reuse_seconds = sorted[(sorted.size() - 1) / 2];
  }
  return s;
}

void write_trace_csv(std::ostream& os, const std::vector<TraceEvent>& trace) {
  os << "event,time,ip,tenant\n";
  for (const TraceEvent& e : trace) {
    os << (e.type == EventType::kAllocate ? "allocate" : "release") << ','
       << e.time << ',' << e.ip << ',' << e.tenant << '\n';
  }
}

std::vector<TraceEvent> load_trace_csv(std::istream& is) {
  std::vector<TraceEvent> out;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen && line == "event,time,ip,tenant") {
      header_seen = true;
      continue;
    }
    std::array<std::string_view, 4> f;
    std::string_view rest = line;
    for (int i = 0; i < 4; ++i) {
      std::size_t comma = rest.find(',');
      if (i < 3) {
        if (comma == std::string_view::npos)
          throw std::runtime_error("trace line " + std::to_string(line_no) +
                                   ": expected 4 comma-separated fields");
        f[i] = rest.substr(0, comma);
        rest.remove_prefix(comma + 1);
      } else {
        if (comma != std::string_view::npos)
          throw std::runtime_error("trace line " + std::to_string(line_no) +
                                   ": expected 4 comma-separated fields");
        f[i] = rest;
      }
    }
    TraceEvent e;
    if (f[0] == "allocate")
      e.type = EventType::kAllocate;
    else if (f[0] == "release")
      e.type = EventType::kRelease;
    else
      throw std::runtime_error("trace line " + std::to_string(line_no) +
                               ": unknown event '" + std::string(f[0]) + "'");
    e.time = parse_i64(f[1], line_no, "time");
    e.ip = parse_i64(f[2], line_no, "ip");
    e.tenant = parse_i64(f[3], line_no, "tenant");
    out.push_back(e);
  }
  return out;
}

nlohmann::ordered_json config_json(const SimConfig& c) {
  nlohmann::ordered_json j;
  j["pool_size"] = c.pool.pool_size;
  j["cooldown_seconds"] = c.pool.cooldown_seconds;
  j["policy"] = pool::policy_name(c.pool.policy);
  j["prior_tracking"] =
      c.pool.prior_tracking == pool::PriorTracking::kExact ? "exact" : "sketch";
  j["n_tenants"] = c.n_tenants;
  j["tick_seconds"] = c.tick_seconds;
  j["quota_max"] = c.quota_max;
  j["adversary_quota"] = c.adversary_quota;
  j["adversary_hold_seconds"] = c.adversary_hold_seconds;
  j["adversary_target_allocations"] = c.adversary_target_allocations;
  j["max_duration_seconds"] = c.max_duration_seconds;
  j["max_ticks"] = c.max_ticks;
  j["seed"] = c.seed;
  return j;
}

nlohmann::ordered_json report_json(const SimReport& r) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["kind"] = "sim_report";
  j["config"] = config_json(r.config);
  nlohmann::ordered_json m;
  m["adversary_allocations"] = r.adversary_allocations;
  m["unique_ips"] = r.summary.unique_ips;
  m["mean_prev_tenants"] = r.summary.mean_prev_tenants;
  if (r.summary.median_reuse_seconds)
    m["median_reuse_seconds"] = *r.summary.median_reuse_seconds;
  else
    m["median_reuse_seconds"] = nullptr;
  m["reuse_interval_count"] = r.metrics.reuse_intervals.size();
  m["ticks"] = r.ticks;
  m["sim_duration_seconds"] = r.duration_seconds;
  m["tenant_allocations"] = r.tenant_allocations;
  m["tenant_releases"] = r.tenant_releases;
  m["pool_exhausted_events"] = r.exhausted_events;
  m["cooldown_violations"] = r.cooldown_violations;
  m["stalled"] = r.stalled;
  j["metrics"] = m;
  return j;
}

}  // namespace ipreuse::sim
