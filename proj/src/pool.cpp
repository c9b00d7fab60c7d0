#include "ipreuse/pool.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace ipreuse::pool {

const char* policy_name(Policy p) {
  switch (p) {
    case Policy::kRandom: return "random";
    case Policy::kLru: return "lru";
    case Policy::kTagging: return "tagging";
  }
  return "?";
}

std::optional<Policy> policy_from_name(const std::string& name) {
  if (name == "random") return Policy::kRandom;
  if (name == "lru") return Policy::kLru;
  if (name == "tagging") return Policy::kTagging;
  return std::nullopt;
}

Pool::Pool(const PoolConfig& config) : config_(config) {
  if (config_.pool_size == 0)
    throw std::invalid_argument("pool_size must be positive");
  if (config_.cooldown_seconds < 0)
    throw std::invalid_argument("cooldown_seconds must be non-negative");
  entries_.resize(config_.pool_size);
  eligible_.reserve(config_.pool_size);
  // Never-used IPs start eligible, in ascending id order so the LRU list
  // honours the never-used-first / smallest-id tie-break from day one.
  for (IpId ip = 0; ip < config_.pool_size; ++ip) {
    entries_[ip].epos = static_cast<std::uint32_t>(eligible_.size());
    eligible_.push_back(ip);
    lru_append(ip);
  }
  if (config_.prior_tracking == PriorTracking::kExact) {
    exact_.resize(config_.pool_size);
  } else {
    sketch_.resize(config_.pool_size);
    exempt_seen_.assign(config_.pool_size, 0);
  }
}

const Pool::Entry& Pool::entry(IpId ip) const {
  if (ip >= entries_.size()) throw std::out_of_range("ip id out of range");
  return entries_[ip];
}

Pool::Entry& Pool::entry(IpId ip) {
  if (ip >= entries_.size()) throw std::out_of_range("ip id out of range");
  return entries_[ip];
}

void Pool::check_time(std::int64_t now) {
  if (now < time_floor_)
    throw std::invalid_argument("timestamps must be non-decreasing");
  time_floor_ = now;
}

void Pool::lru_append(IpId ip) {
  Entry& e = entries_[ip];
  e.lru_prev = lru_tail_;
  e.lru_next = kNil;
  if (lru_tail_ != kNil)
    entries_[lru_tail_].lru_next = ip;
  else
    lru_head_ = ip;
  lru_tail_ = ip;
}

void Pool::lru_unlink(IpId ip) {
  Entry& e = entries_[ip];
  if (e.lru_prev != kNil)
    entries_[e.lru_prev].lru_next = e.lru_next;
  else
    lru_head_ = e.lru_next;
  if (e.lru_next != kNil)
    entries_[e.lru_next].lru_prev = e.lru_prev;
  else
    lru_tail_ = e.lru_prev;
  e.lru_prev = e.lru_next = kNil;
}

void Pool::tag_append(IpId ip) {
  Entry& e = entries_[ip];
  ListEnds& ends = tag_ends_[e.tag];
  e.tag_prev = ends.tail;
  e.tag_next = kNil;
  if (ends.tail != kNil)
    entries_[ends.tail].tag_next = ip;
  else
    ends.head = ip;
  ends.tail = ip;
}

void Pool::tag_unlink(IpId ip) {
  Entry& e = entries_[ip];
  auto it = tag_ends_.find(e.tag);
  ListEnds& ends = it->second;
  if (e.tag_prev != kNil)
    entries_[e.tag_prev].tag_next = e.tag_next;
  else
    ends.head = e.tag_next;
  if (e.tag_next != kNil)
    entries_[e.tag_next].tag_prev = e.tag_prev;
  else
    ends.tail = e.tag_prev;
  e.tag_prev = e.tag_next = kNil;
  if (ends.head == kNil) tag_ends_.erase(it);
}

void Pool::insert_eligible(IpId ip) {
  Entry& e = entries_[ip];
  e.epos = static_cast<std::uint32_t>(eligible_.size());
  eligible_.push_back(ip);
  lru_append(ip);
  if (e.tag != kNoTenant) tag_append(ip);
}

void Pool::remove_from_structures(IpId ip) {
  Entry& e = entries_[ip];
  // Swap-remove from the eligible array.
  IpId moved = eligible_.back();
  eligible_[e.epos] = moved;
  entries_[moved].epos = e.epos;
  eligible_.pop_back();
  e.epos = kNil;
  lru_unlink(ip);
  if (e.tag != kNoTenant) tag_unlink(ip);
}

void Pool::promote(std::int64_t now) {
  // Move IPs whose cooldown has lapsed out of the waiting FIFO.  Release
  // timestamps are non-decreasing, so the FIFO is ordered by release time and
  // we stop at the first entry that is still cooling.
  promote_batch_.clear();
  while (!cooling_.empty()) {
    IpId ip = cooling_.front();
    if (entries_[ip].last_release + config_.cooldown_seconds > now) break;
    cooling_.pop_front();
    promote_batch_.push_back(ip);
  }
  if (promote_batch_.empty()) return;
  if (config_.policy != Policy::kRandom) {
    // All releases within one tick share a timestamp; sorting each promoted
    // batch by (release time, id) realises the ascending-id LRU tie-break.
    // Random draws never observe list order, so that policy skips the sort.
    std::sort(promote_batch_.begin(), promote_batch_.end(),
              [this](IpId a, IpId b) {
                const Entry& ea = entries_[a];
                const Entry& eb = entries_[b];
                if (ea.last_release != eb.last_release)
                  return ea.last_release < eb.last_release;
                return a < b;
              });
  }
  for (IpId ip : promote_batch_) insert_eligible(ip);
  promote_batch_.clear();
}

std::optional<IpId> Pool::allocate(TenantId tenant, std::int64_t now, Rng& rng) {
  check_time(now);
  promote(now);
  IpId ip = kNil;
  switch (config_.policy) {
    case Policy::kRandom:
      if (!eligible_.empty())
        ip = eligible_[rng.below32(static_cast<std::uint32_t>(eligible_.size()))];
      break;
    case Policy::kLru:
      ip = lru_head_;
      break;
    case Policy::kTagging: {
      auto it = tag_ends_.find(tenant);
      if (it != tag_ends_.end() && it->second.head != kNil)
        ip = it->second.head;
      else
        ip = lru_head_;
      break;
    }
  }
  if (ip == kNil) {
    ++stats_.exhausted_events;
    return std::nullopt;
  }
  Entry& e = entries_[ip];
  // Defensive: everything in the eligible structures must satisfy the
  // cooldown.  This counter feeding the reports must stay at zero.
  if (e.last_release != kNeverReleased &&
      now - e.last_release < config_.cooldown_seconds)
    ++stats_.cooldown_violations;
  remove_from_structures(ip);
  e.holder = tenant;
  e.acquire_time = now;
  record_holder(ip, tenant);
  ++allocated_count_;
  ++stats_.allocations;
  return ip;
}

void Pool::release(IpId ip, std::int64_t now) {
  check_time(now);
  Entry& e = entry(ip);
  if (e.holder == kNoTenant)
    throw std::logic_error("release of an IP that is not allocated");
  e.tag = e.holder;
  e.holder = kNoTenant;
  e.last_release = now;
  cooling_.push_back(ip);
  --allocated_count_;
  ++stats_.releases;
}

std::vector<IpId> Pool::eligible(std::int64_t now) {
  check_time(now);
  promote(now);
  std::vector<IpId> out(eligible_.begin(), eligible_.end());
  std::sort(out.begin(), out.end());
  return out;
}

void Pool::record_holder(IpId ip, TenantId tenant) {
  if (config_.prior_tracking == PriorTracking::kExact) {
    std::vector<TenantId>& set = exact_[ip];
    auto it = std::lower_bound(set.begin(), set.end(), tenant);
    if (it == set.end() || *it != tenant) set.insert(it, tenant);
    return;
  }
  if (tenant == config_.sketch_exempt) {
    exempt_seen_[ip] = 1;
    return;
  }
  const std::uint64_t h = mix64(tenant);
  const std::uint32_t bucket = static_cast<std::uint32_t>(h >> 58);
  // Rank of the remaining 58 bits: position of the first set bit, capped.
  const std::uint64_t rest = (h << 6) | 0x3full;
  const std::uint8_t rank = static_cast<std::uint8_t>(std::countl_zero(rest) + 1);
  Sketch& s = sketch_[ip];
  if (rank > s.reg[bucket]) s.reg[bucket] = rank;
}

std::uint32_t Pool::sketch_estimate(const Sketch& s) const {
  constexpr double kAlpha = 0.709;  // bias constant for 64 registers
  constexpr double kM = 64.0;
  double sum = 0.0;
  int zeros = 0;
  for (std::uint8_t r : s.reg) {
    sum += std::ldexp(1.0, -static_cast<int>(r));
    if (r == 0) ++zeros;
  }
  double estimate = kAlpha * kM * kM / sum;
  if (estimate <= 2.5 * kM && zeros > 0)
    estimate = kM * std::log(kM / zeros);  // linear counting, small range
  return static_cast<std::uint32_t>(std::llround(estimate));
}

std::uint32_t Pool::prior_tenant_count(IpId ip) const {
  const Entry& e = entry(ip);
  (void)e;
  if (config_.prior_tracking == PriorTracking::kExact)
    return static_cast<std::uint32_t>(exact_[ip].size());
  return sketch_estimate(sketch_[ip]) + (exempt_seen_[ip] ? 1 : 0);
}

std::uint32_t Pool::prior_tenant_count_excluding(IpId ip, TenantId tenant) const {
  const Entry& e = entry(ip);
  (void)e;
  if (config_.prior_tracking == PriorTracking::kExact) {
    const std::vector<TenantId>& set = exact_[ip];
    bool present = std::binary_search(set.begin(), set.end(), tenant);
    return static_cast<std::uint32_t>(set.size()) - (present ? 1 : 0);
  }
  if (tenant != config_.sketch_exempt)
    throw std::logic_error(
        "sketch tracking can only exclude the configured exempt tenant");
  return sketch_estimate(sketch_[ip]);
}

std::vector<TenantId> Pool::prior_tenants(IpId ip) const {
  const Entry& e = entry(ip);
  (void)e;
  if (config_.prior_tracking != PriorTracking::kExact)
    throw std::logic_error("prior_tenants() requires exact tracking");
  return exact_[ip];
}

}  // namespace ipreuse::pool
