#include "ioncast/events.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "ioncast/errors.hpp"

namespace ioncast {

EventCatalog EventCatalog::normalized(std::vector<StormEvent> events) {
  for (const auto& e : events) {
    if (e.end < e.start) throw ArgumentError("event ends before it starts: " + format_iso8601(e.start));
    if (e.g_level < 0 || e.g_level > 5) throw ArgumentError("G-level " + std::to_string(e.g_level) + " outside 0..5");
  }
  std::sort(events.begin(), events.end(), [](const StormEvent& a, const StormEvent& b) {
    return a.start != b.start ? a.start < b.start : a.end < b.end;
  });
  EventCatalog c;
  for (const auto& e : events) {
    if (!c.events.empty() && e.start <= c.events.back().end) {
      auto& last = c.events.back();
      last.end = std::max(last.end, e.end);
      last.g_level = std::max(last.g_level, e.g_level);
    } else {
      c.events.push_back(e);
    }
  }
  return c;
}

EventCatalog parse_event_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool header = false;
  std::vector<StormEvent> events;
  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != "start,end,g_level") throw IngestError("line 1: expected header 'start,end,g_level'");
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 3) throw IngestError("line " + std::to_string(lineno) + ": expected 3 fields");
    StormEvent e;
    try {
      e.start = parse_iso8601(f[0]);
      e.end = parse_iso8601(f[1]);
      std::string g = f[2];
      if (!g.empty() && (g[0] == 'G' || g[0] == 'g')) g = g.substr(1);
      std::size_t used = 0;
      e.g_level = std::stoi(g, &used);
      if (used != g.size()) throw std::invalid_argument("g_level");
    } catch (const std::exception&) {
      throw IngestError("line " + std::to_string(lineno) + ": unparseable event row '" + line + "'");
    }
    events.push_back(e);
  }
  try {
    return EventCatalog::normalized(std::move(events));
  } catch (const ArgumentError& e) {
    throw IngestError(e.what());
  }
}

EventCatalog read_event_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_event_csv(ss.str());
}

std::string format_event_csv(const EventCatalog& c) {
  std::ostringstream out;
  out << "start,end,g_level\n";
  for (const auto& e : c.events) out << format_iso8601(e.start) << ',' << format_iso8601(e.end) << ",G" << e.g_level << '\n';
  return out.str();
}

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::vector<std::size_t> SplitSpec::events_in(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] == s) out.push_back(i);
  return out;
}

std::size_t holdout_count(std::size_t n, double fraction) {
  // The epsilon keeps e.g. 0.1 * 30 = 3.0000000000000004 at 3.
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

SplitSpec build_splits(const EventCatalog& catalog, double holdout_fraction, std::uint64_t seed) {
  if (catalog.events.empty()) throw SplitError("event catalog is empty");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw SplitError("holdout fraction must lie in (0, 1), got " + std::to_string(holdout_fraction));
  SplitSpec spec;
  spec.holdout_fraction = holdout_fraction;
  spec.seed = seed;
  spec.assignment.assign(catalog.size(), Split::Train);
  std::map<int, std::vector<std::size_t>> by_level;
  for (std::size_t i = 0; i < catalog.size(); ++i) by_level[catalog.events[i].g_level].push_back(i);
  std::mt19937_64 rng(seed);
  for (auto& [level, idx] : by_level) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n = idx.size();
    const std::size_t n_test = std::min(n, holdout_count(n, holdout_fraction));
    const std::size_t n_val = std::min(n_test, n > n_test + 1 ? n - n_test - 1 : std::size_t{0});
    for (std::size_t k = 0; k < n_test; ++k) spec.assignment[idx[k]] = Split::Test;
    for (std::size_t k = n_test; k < n_test + n_val; ++k) spec.assignment[idx[k]] = Split::Val;
    if (n_val < n_test) {
      spec.warnings.push_back("G" + std::to_string(level) + ": " + std::to_string(n) +
                              " events allow only " + std::to_string(n_val) + " validation events");
    }
  }
  return spec;
}

SplitMasks build_masks(const std::vector<Timestamp>& times, const EventCatalog& catalog, const SplitSpec& split,
                       std::int64_t margin_seconds) {
  if (split.assignment.size() != catalog.size())
    throw SplitError("split assigns " + std::to_string(split.assignment.size()) + " events, catalog has " +
                     std::to_string(catalog.size()));
  SplitMasks m;
  m.train.assign(times.size(), 1);
  m.val.assign(times.size(), 0);
  m.test.assign(times.size(), 0);
  for (std::size_t e = 0; e < catalog.size(); ++e) {
    const auto s = split.assignment[e];
    if (s == Split::Train) continue;
    const auto lo = catalog.events[e].start - margin_seconds;
    const auto hi = catalog.events[e].end + margin_seconds;
    auto first = std::lower_bound(times.begin(), times.end(), lo);
    for (auto it = first; it != times.end() && *it <= hi; ++it) {
      const auto i = static_cast<std::size_t>(it - times.begin());
      m.train[i] = 0;
      (s == Split::Val ? m.val : m.test)[i] = 1;
    }
  }
  return m;
}

std::vector<std::size_t> sample_sequences(const std::vector<Timestamp>& times, std::int64_t cadence, int context,
                                          int horizon, int dilation, const std::vector<char>& mask) {
  if (context < 1 || horizon < 1 || dilation < 1)
    throw SamplingError("context, horizon and dilation must be >= 1");
  if (mask.size() != times.size()) throw SamplingError("mask length differs from the time axis");
  const auto len = static_cast<std::size_t>(context + horizon);
  std::vector<std::size_t> out;
  std::size_t candidate = 0;
  // run = number of consecutive masked, contiguous frames ending at i.
  std::size_t run = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!mask[i]) {
      run = 0;
      continue;
    }
    run = (run > 0 && times[i] - times[i - 1] == cadence) ? run + 1 : 1;
    if (run >= len) {
      if (candidate % static_cast<std::size_t>(dilation) == 0) out.push_back(i + 1 - len);
      ++candidate;
    }
  }
  if (out.empty()) {
    throw SamplingError("no valid sequences of " + std::to_string(len) + " frames in the split (" +
                        std::to_string(times.size()) + " frames)");
  }
  return out;
}

}  // namespace ioncast
