#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "ipreuse/net.hpp"
#include "ipreuse/psl.hpp"
#include "ipreuse/session.hpp"

namespace ipreuse::attr {

struct MalformedHost : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct HostNotUnderSld : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline constexpr const char* kExternal = "External";

// Provider address space annotated with the owning managed service.
struct CloudRanges {
  std::vector<std::pair<net::Cidr, std::string>> entries;

  // {"prefixes": [{"ip_prefix": "198.51.100.0/24", "service": "SNS"}, ...]};
  // extra keys per entry (region etc.) are ignored.
  static CloudRanges load(std::istream& is);

  // longest containing prefix wins, earliest entry breaks ties;
  // kExternal when nothing contains the address
  std::string classify(std::uint32_t src_ip) const;
};

// User-agent prefix -> service name.
struct UaTable {
  std::vector<std::pair<std::string, std::string>> prefixes;

  static UaTable builtin();
  // TSV: prefix<TAB>service, '#' comments
  static UaTable load(std::istream& is);
  std::optional<std::string> lookup(std::string_view ua) const;
};

enum class HostKind { kIpLiteral, kIpbn, kWildcardDns, kDomainName };
const char* host_kind_name(HostKind k);

struct AutomationFlags {
  bool two_digits = false;  // some label left of the sld has >= 2 digits
  bool encodes_ip = false;  // dst_ip spelled dashed or dotted left of the sld
};

struct HostClassification {
  HostKind kind = HostKind::kDomainName;
  std::string host;  // normalized
  std::optional<std::uint32_t> ip;  // for IpLiteral / Ipbn
  std::optional<std::string> sld, etld;  // DomainName under a known suffix
  std::optional<int> depth;
  AutomationFlags flags;
};

// Lowercases, strips one trailing dot and a ":port" suffix, validates
// label syntax.  Throws MalformedHost.
std::string normalize_host(std::string_view raw);

// One provider suffix per line, '#' comments.
std::set<std::string> load_wildcard_providers(std::istream& is);

struct KindResult {
  HostKind kind;
  std::optional<std::uint32_t> ip;
};
// host must be normalized.  Order: IPv4 literal, then the EC2 IP-based
// instance name (ec2-A-B-C-D under compute[-1].amazonaws.com), then
// wildcard-DNS providers, else a domain name.
KindResult classify_host(std::string_view host,
                         const std::set<std::string>& wildcard_providers);

// Labels host carries beyond its sld; throws HostNotUnderSld.
int subdomain_depth(std::string_view host, std::string_view sld);

AutomationFlags automation_flags(std::string_view host, std::string_view sld,
                                 std::uint32_t dst_ip);

// Full per-host classification (kind + PSL split + depth + flags).
HostClassification classify(std::string_view raw, const psl::SuffixList& psl,
                            const std::set<std::string>& wildcard_providers,
                            std::uint32_t dst_ip);

enum class Validation { kValidated, kMismatch, kNotInSnapshot };
const char* validation_name(Validation v);

// Offline DNS answers: which addresses each host resolved to when the
// snapshot was taken.  Keeps runs deterministic — nothing here queries
// live resolvers.
struct Snapshot {
  std::unordered_map<std::string, std::vector<std::uint32_t>> entries;

  // CSV: host,ip per line, '#' comments
  static Snapshot load(std::istream& is);
  Validation validate(const std::string& host, std::uint32_t dst_ip) const;
};

struct RankList {
  std::unordered_map<std::string, std::uint32_t> ranks;  // 1 = most popular

  // CSV: rank,domain; duplicate domains and non-positive ranks rejected
  static RankList load(std::istream& is);
  std::optional<std::uint32_t> rank(const std::string& domain) const;
};

struct AttributionRefs {
  CloudRanges ranges;
  UaTable ua = UaTable::builtin();
  psl::SuffixList psl;
  std::set<std::string> wildcard_providers;
  Snapshot snapshot;
  RankList ranks;
};

struct AttributionReport {
  std::uint64_t sessions = 0;
  std::map<std::string, std::uint64_t> source_services;  // incl. External
  std::map<std::string, std::uint64_t> ua_services;
  std::uint64_t ua_unmatched = 0;

  std::uint64_t with_host = 0;
  std::uint64_t no_host = 0;
  std::uint64_t inconsistent_host = 0;  // Host header vs SNI disagree
  std::uint64_t malformed_host = 0;
  std::map<std::string, std::uint64_t> host_kinds;

  // Domain-name hosts
  std::uint64_t domain_sessions = 0;
  std::uint64_t public_suffix_hosts = 0;  // host was itself a suffix
  std::uint64_t validated_sessions = 0;
  std::uint64_t mismatch_sessions = 0;
  std::uint64_t not_in_snapshot_sessions = 0;

  // Aggregates over validated domain hosts
  std::set<std::string> unique_slds;
  std::map<std::string, std::uint64_t> etld_counts;  // distinct slds per etld
  std::map<std::string, int> sld_min_depth;
  std::uint64_t rank_top1k = 0, rank_top10k = 0, rank_top1m = 0,
                unranked = 0;  // buckets over unique slds
  std::uint64_t two_digit_hosts = 0, ip_encoding_hosts = 0;  // distinct hosts
};

AttributionReport attribute_report(
    const std::vector<session::SessionRecord>& sessions,
    const AttributionRefs& refs);

nlohmann::ordered_json report_json(const AttributionReport& rep);

}  // namespace ipreuse::attr
