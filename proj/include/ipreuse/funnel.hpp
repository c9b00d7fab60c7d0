#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ipreuse/net.hpp"
#include "ipreuse/session.hpp"

namespace ipreuse::funnel {

struct MalformedRule : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filter stages, applied in this order.  kKept marks survivors.
enum class Stage { kNetwork, kTransport, kSession, kApplication, kKept };
const char* stage_name(Stage s);

struct StageVerdict {
  std::string session_id;
  Stage stage = Stage::kKept;
  std::string reason;  // "kept", or a short drop code / rule name
};

// User-supplied application signature.
struct Rule {
  enum class Kind { kSubstringCi, kUaPrefix, kPortEq, kMagicHex };
  std::string name;
  Kind kind = Kind::kSubstringCi;
  std::string pattern;  // decoded: lowered text, prefix, or raw magic bytes
  std::uint16_t port = 0;
};

// One rule per line: name<TAB>kind<TAB>pattern with kind in
// {substring_ci, ua_prefix, port_eq, magic_hex}.  '#' comments allowed.
// Throws MalformedRule with the offending line number.
std::vector<Rule> load_rules(std::istream& is);

// Built-in application checks run before user rules, in a fixed order;
// returns the drop reason or empty when the session passes.  The built-ins:
//   shellcode     wget/curl/chmod/shell anywhere in the payload (ASCII,
//                 case-insensitive)
//   dnp3          dst_port 20000 and the 0x05 0x64 frame magic
//   tds           dst_port 1433 and a plausible packet-type first byte
//   bittorrent    0x13 "BitTorrent protocol" handshake
//   bitcoin       a known network magic (main/testnet/testnet3)
//   skype         placeholder signature ("skype" in the payload); the real
//                 protocol is undocumented — extend via user rules
//   ipfs          "/multistream/1.0.0" negotiation marker
//   proxy         HTTP CONNECT, or a request path carrying a full URI
//   route53_healthcheck  the Route53 health-check user-agent prefix
std::string builtin_drop_reason(const session::SessionRecord& s);
std::string rule_drop_reason(const session::SessionRecord& s,
                             const std::vector<Rule>& user_rules);

// A stage splits the active sessions (indices into the corpus) into
// survivors and (index, reason) drops.
struct Partition {
  std::vector<std::size_t> kept;
  std::vector<std::pair<std::size_t, std::string>> dropped;
};

Partition stage_network(const std::vector<session::SessionRecord>& corpus,
                        const std::vector<std::size_t>& active,
                        const net::CidrSet& blocklist);
// Keeps a source only if all its active sessions target one (dst_ip,
// dst_port) pair; scanners touch several.
Partition stage_transport(const std::vector<session::SessionRecord>& corpus,
                          const std::vector<std::size_t>& active);
Partition stage_session(const std::vector<session::SessionRecord>& corpus,
                        const std::vector<std::size_t>& active);
Partition stage_application(const std::vector<session::SessionRecord>& corpus,
                            const std::vector<std::size_t>& active,
                            const std::vector<Rule>& user_rules);

struct StageCounts {
  std::string label;
  std::uint64_t sources = 0;
  std::uint64_t sessions = 0;
  std::uint64_t bytes = 0;  // client payload bytes
};

struct FunnelReport {
  std::vector<StageCounts> stages;  // initial, then after each stage
  std::vector<StageVerdict> verdicts;  // input order, one per session
  std::map<std::string, std::uint64_t> reason_counts;
  std::vector<std::size_t> survivors;  // indices into the input corpus
};

struct FunnelConfig {
  net::CidrSet blocklist;
  std::vector<Rule> user_rules;
};

FunnelReport run_funnel(const std::vector<session::SessionRecord>& corpus,
                        const FunnelConfig& config);

nlohmann::ordered_json report_json(const FunnelReport& report,
                                   bool include_verdicts = false);

}  // namespace ipreuse::funnel
