#pragma once

// Deliberately simple reference implementation of the pool semantics, written
// straight from the allocation rules with O(pool) scans.  The real Pool is
// checked against this in lockstep for the deterministic policies, so any
// disagreement points at a bug in one of the two.

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "ipreuse/pool.hpp"
#include "ipreuse/rng.hpp"

namespace ipreuse::testing {

class NaivePool {
 public:
  using IpId = pool::IpId;
  using TenantId = pool::TenantId;

  NaivePool(std::uint32_t size, std::int64_t cooldown, pool::Policy policy)
      : cooldown_(cooldown), policy_(policy), entries_(size) {}

  std::vector<IpId> eligible(std::int64_t now) const {
    std::vector<IpId> out;
    for (IpId ip = 0; ip < entries_.size(); ++ip) {
      const E& e = entries_[ip];
      if (e.holder != pool::kNoTenant) continue;
      if (e.release == pool::kNeverReleased || now - e.release >= cooldown_)
        out.push_back(ip);
    }
    return out;
  }

  std::optional<IpId> allocate(TenantId tenant, std::int64_t now, Rng& rng) {
    std::vector<IpId> el = eligible(now);
    if (el.empty()) return std::nullopt;
    IpId pick = pool::kNil;
    switch (policy_) {
      case pool::Policy::kRandom:
        pick = el[rng.below(el.size())];
        break;
      case pool::Policy::kLru:
        pick = lru_min(el);
        break;
      case pool::Policy::kTagging: {
        std::vector<IpId> own;
        for (IpId ip : el)
          if (entries_[ip].tag == tenant) own.push_back(ip);
        pick = own.empty() ? lru_min(el) : lru_min(own);
        break;
      }
    }
    E& e = entries_[pick];
    e.holder = tenant;
    e.acquire = now;
    e.prior.insert(tenant);
    return pick;
  }

  void release(IpId ip, std::int64_t now) {
    E& e = entries_.at(ip);
    if (e.holder == pool::kNoTenant)
      throw std::logic_error("naive: release of unallocated ip");
    e.tag = e.holder;
    e.holder = pool::kNoTenant;
    e.release = now;
  }

  bool is_allocated(IpId ip) const { return entries_.at(ip).holder != pool::kNoTenant; }
  std::int64_t last_release(IpId ip) const { return entries_.at(ip).release; }
  const std::set<TenantId>& prior(IpId ip) const { return entries_.at(ip).prior; }

 private:
  struct E {
    TenantId holder = pool::kNoTenant;
    TenantId tag = pool::kNoTenant;
    std::int64_t acquire = 0;
    std::int64_t release = pool::kNeverReleased;
    std::set<TenantId> prior;
  };

  // Never-used IPs sort before any release timestamp; ties go to the
  // smallest id because the scan is ascending and comparison is strict.
  IpId lru_min(const std::vector<IpId>& candidates) const {
    IpId best = candidates.front();
    for (IpId ip : candidates) {
      const E& a = entries_[ip];
      const E& b = entries_[best];
      bool a_virgin = a.release == pool::kNeverReleased;
      bool b_virgin = b.release == pool::kNeverReleased;
      if (a_virgin != b_virgin) {
        if (a_virgin) best = ip;
        continue;
      }
      if (!a_virgin && a.release < b.release) best = ip;
    }
    return best;
  }

  std::int64_t cooldown_;
  pool::Policy policy_;
  std::vector<E> entries_;
};

}  // namespace ipreuse::testing
