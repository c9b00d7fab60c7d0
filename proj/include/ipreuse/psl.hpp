#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ipreuse::psl {

// Public-suffix rules: plain suffixes, one-label wildcards ("*.ck") and
// exceptions ("!www.ck").  Matching follows the published algorithm: the
// exception rule wins, otherwise the longest match; with no match at all
// the prevailing rule is "*" (the last label is the suffix).
class SuffixList {
 public:
  // Text format: one rule per line, "//" comments, blank lines ignored.
  static SuffixList parse(std::istream& is);

  // (sld, etld) for a registrable host — e.g. "sub.example.com" ->
  // ("example.com", "com").  nullopt when the host is itself a public
  // suffix.  The host must be normalized (lowercase, no trailing dot).
  std::optional<std::pair<std::string, std::string>> split(
      std::string_view host) const;

  std::size_t rule_count() const { return rules_.size(); }

 private:
  struct Rule {
    std::vector<std::string> labels_rev;  // right-to-left
    bool exception = false;
  };
  std::vector<Rule> rules_;
};

}  // namespace ipreuse::psl
