#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ioncast/timeutil.hpp"

namespace ioncast {

struct StormEvent {
  Timestamp start = 0;
  Timestamp end = 0;  // inclusive
  int g_level = 0;    // 0..5

  bool contains(Timestamp t) const { return t >= start && t <= end; }
  bool operator==(const StormEvent&) const = default;
};

// Sorted by start; overlapping or touching events are merged keeping the
// highest G-level.
struct EventCatalog {
  std::vector<StormEvent> events;

  static EventCatalog normalized(std::vector<StormEvent> events);
  std::size_t size() const { return events.size(); }
};

EventCatalog parse_event_csv(const std::string& text);  // `start,end,g_level`; level as G3 or 3
EventCatalog read_event_csv(const std::string& path);
std::string format_event_csv(const EventCatalog& c);

enum class Split { Train, Val, Test };
std::string to_string(Split s);

struct SplitSpec {
  std::vector<Split> assignment;  // one per catalog event
  double holdout_fraction = 0.1;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;

  std::vector<std::size_t> events_in(Split s) const;
  bool operator==(const SplitSpec& o) const { return assignment == o.assignment; }
};

// Per G-level: ceil(fraction * n) test events and up to as many validation
// events (at least one event of the level stays in training when n > 1).
SplitSpec build_splits(const EventCatalog& catalog, double holdout_fraction, std::uint64_t seed);
std::size_t holdout_count(std::size_t n, double fraction);

struct SplitMasks {
  std::vector<char> train;
  std::vector<char> val;
  std::vector<char> test;
};

// train: outside [start - margin, end + margin] of every held-out event.
// val/test: inside that widened window of an event of the split.
SplitMasks build_masks(const std::vector<Timestamp>& times, const EventCatalog& catalog, const SplitSpec& split,
                       std::int64_t margin_seconds);

// Start indices (first context frame) of windows of context + horizon frames
// that are contiguous at `cadence` and lie wholly inside `mask`; every
// dilation-th such candidate is kept. SamplingError if none remain.
std::vector<std::size_t> sample_sequences(const std::vector<Timestamp>& times, std::int64_t cadence, int context,
                                          int horizon, int dilation, const std::vector<char>& mask);

}  // namespace ioncast
