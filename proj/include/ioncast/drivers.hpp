#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ioncast/timeutil.hpp"

namespace ioncast {

enum class AlignPolicy { HoldPrevious, Linear };

std::string to_string(AlignPolicy p);
AlignPolicy parse_align_policy(const std::string& s);

// Key-value schema next to a driver CSV, e.g.
//   units = sfu
//   sentinel = 9999
//   cadence = 86400
//   policy = hold-previous
//   max_gap = 172800
struct DriverSchema {
  std::string units;
  std::optional<double> sentinel;
  std::int64_t cadence = 900;
  AlignPolicy policy = AlignPolicy::HoldPrevious;
  std::int64_t max_gap = 0;  // 0 -> 2 * cadence
};

DriverSchema parse_driver_schema(const std::string& text);
DriverSchema read_driver_schema(const std::string& path);
std::string format_driver_schema(const DriverSchema& s);

struct DriverSeries {
  std::string name;
  DriverSchema schema;
  std::vector<Timestamp> times;  // strictly increasing
  std::vector<double> values;    // NaN marks a gap

  std::size_t size() const { return times.size(); }
  std::int64_t max_gap() const { return schema.max_gap > 0 ? schema.max_gap : 2 * schema.cadence; }
};

// CSV with header `timestamp,value`. IngestError carries the line number of an
// unparseable row; FormatError on non-increasing timestamps.
DriverSeries parse_driver_csv(const std::string& text, const DriverSchema& schema, const std::string& name);
DriverSeries read_driver_csv(const std::string& path, const DriverSchema& schema, const std::string& name);
std::string format_driver_csv(const DriverSeries& s);

struct AlignedDrivers {
  std::vector<std::string> names;
  std::vector<Timestamp> times;
  std::vector<std::vector<double>> values;  // [time][driver]

  std::size_t index(const std::string& name) const;  // throws ConfigError
};

// One complete driver vector per cadence step in [start, end]. Hold-previous
// uses the latest valid sample at or before t; linear interpolates between the
// surrounding valid samples. AlignmentError when the bracketing gap exceeds
// the series' max gap.
AlignedDrivers align_drivers(const std::vector<DriverSeries>& series, Timestamp start, Timestamp end,
                             std::int64_t cadence);

}  // namespace ioncast
