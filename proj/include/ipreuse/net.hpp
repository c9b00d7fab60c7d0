#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ipreuse::net {

struct MalformedCidr : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Strict dotted-quad parse: four decimal octets 0-255, no leading zeros
// ("01" is rejected), nothing else.
std::optional<std::uint32_t> parse_ipv4(std::string_view s);
std::string format_ipv4(std::uint32_t ip);

struct Cidr {
  std::uint32_t base = 0;
  int prefix_len = 0;

  bool contains(std::uint32_t ip) const {
    if (prefix_len == 0) return true;
    std::uint32_t mask = ~std::uint32_t{0} << (32 - prefix_len);
    return (ip & mask) == base;
  }
  std::uint32_t first() const { return base; }
  std::uint32_t last() const {
    if (prefix_len <= 0) return ~std::uint32_t{0};
    if (prefix_len >= 32) return base;  // >>32 would be undefined
    return base | (~std::uint32_t{0} >> prefix_len);
  }
  std::string str() const {
    return format_ipv4(base) + "/" + std::to_string(prefix_len);
  }
};

// Parses "a.b.c.d/len"; a bare address means /32.  Rejects host bits set
// below the prefix (throws MalformedCidr).
Cidr parse_cidr(std::string_view s);

// Membership-only prefix set; prefixes are merged into disjoint intervals,
// lookups binary-search them.
class CidrSet {
 public:
  void add(const Cidr& c);
  void finalize();  // sort + merge; idempotent, called lazily by contains()
  bool contains(std::uint32_t ip) const;
  bool empty() const { return ranges_.empty() && pending_.empty(); }
  std::size_t interval_count() const;

 private:
  struct Range {
    std::uint32_t lo, hi;  // inclusive
  };
  mutable std::vector<Range> ranges_;
  mutable std::vector<Range> pending_;
};

// FireHOL netset style: one CIDR (or bare address) per line, '#' comments.
// Throws MalformedCidr with the offending line number.
CidrSet load_netset(std::istream& is);

}  // namespace ipreuse::net
