#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ipreuse::session {

struct HttpInfo {
  std::string method;
  std::string path;
  std::string host;        // Host header, may be empty
  std::string user_agent;  // may be empty
};

// One recorded inbound TCP session.  payload_prefix holds up to the first
// 4096 raw bytes the client sent; client_payload_len is the full length.
struct SessionRecord {
  std::string session_id;
  std::uint32_t src_ip = 0;
  std::uint32_t dst_ip = 0;
  std::uint16_t dst_port = 0;
  std::int64_t start_time = 0;
  bool handshake_complete = false;
  std::uint64_t client_payload_len = 0;
  std::string payload_prefix;
  std::optional<HttpInfo> http;
  std::optional<std::string> tls_sni;
};

inline constexpr std::size_t kPayloadPrefixCap = 4096;

std::string base64_encode(std::string_view raw);
// Throws std::runtime_error on non-base64 input.
std::string base64_decode(std::string_view enc);

// One record per line; payload_prefix is base64.  Checks field types,
// address syntax, port range, the payload-length invariant and the prefix
// cap; throws std::runtime_error naming the offending line.
std::vector<SessionRecord> load_sessions(std::istream& is);
void write_sessions(std::ostream& os, const std::vector<SessionRecord>& recs);

}  // namespace ipreuse::session
