#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ipreuse/sim.hpp"

namespace ipreuse::estimate {

// One sighting of an address at a point in time.
struct Observation {
  std::string ip;
  std::int64_t time = 0;
};

// Parses "ip,timestamp_seconds" lines; blank lines and '#' comments are
// ignored.  Throws std::runtime_error (with a line number) on malformed
// input and when the log contains no observations at all.
std::vector<Observation> load_observations(std::istream& is);

// Capture history: which individuals (distinct addresses) were seen in which
// fixed-length occasion.  Occasion k covers [k*occasion_length,
// (k+1)*occasion_length).  Individuals are kept in first-seen order.
struct CaptureHistory {
  std::uint32_t occasions = 0;
  std::vector<std::string> individuals;
  std::vector<std::vector<bool>> seen;  // [individual][occasion]
};

// Throws std::invalid_argument for a non-positive occasion length, negative
// timestamps, or an empty observation list.
CaptureHistory build_history(const std::vector<Observation>& log,
                             std::int64_t occasion_length);

// Per-occasion abundance estimate (occasions are 1-based in `index`).
//
//   n - individuals captured at this occasion
//   m - of those, previously captured
//   u - first captures (n - m)
//   R - individuals released back after the occasion (every capture is,
//       since observed addresses return to circulation): R = n
//   r - of the R released here, captured again later
//   z - seen both before and after this occasion, but not at it
//
//   M_hat = m + (R + 1) * z / (r + 1)        (bias-corrected marked count)
//   N_hat = (n + 1) * M_hat / (m + 1) - 1    (undefined at first/last)
struct OccasionEstimate {
  std::uint32_t index = 0;
  std::uint64_t n = 0, m = 0, u = 0, R = 0, r = 0, z = 0;
  double m_hat = 0.0;
  std::optional<double> n_hat;
};

std::vector<OccasionEstimate> jolly_seber(const CaptureHistory& history);

// Distinct individuals divided by the largest interior N_hat.  Throws
// std::invalid_argument when fewer than 3 occasions exist.
double capture_rate(const CaptureHistory& history);

// Reuse-interval statistics from an allocation trace: for every allocation
// of a previously released IP, the gap back to that release.
struct ReuseStats {
  std::uint64_t intervals = 0;
  std::int64_t min = 0, max = 0, median = 0;  // lower-middle median
  double mean = 0.0;
  double cv = 0.0;  // population stddev / mean
  std::int64_t bin_width = 0;
  std::map<std::int64_t, std::uint64_t> histogram;  // bin lower bound -> count
  std::uint64_t below_cooldown = 0;  // intervals violating the cooldown
};

// Throws std::invalid_argument for a non-positive bin width and
// std::runtime_error when the trace holds no reuse event.
ReuseStats reuse_stats(const std::vector<sim::TraceEvent>& trace,
                       std::int64_t bin_width, std::int64_t cooldown);

nlohmann::ordered_json estimates_json(const CaptureHistory& history,
                                      const std::vector<OccasionEstimate>& occ,
                                      double rate);
nlohmann::ordered_json reuse_json(const ReuseStats& stats);

}  // namespace ipreuse::estimate
