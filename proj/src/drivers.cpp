#include "ioncast/drivers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "ioncast/errors.hpp"

namespace ioncast {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double parse_number(const std::string& s, bool& ok) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    ok = used == s.size();
    return v;
  } catch (const std::exception&) {
    ok = false;
    return 0.0;
  }
}

}  // namespace

std::string to_string(AlignPolicy p) { return p == AlignPolicy::HoldPrevious ? "hold-previous" : "linear-interpolate"; }

AlignPolicy parse_align_policy(const std::string& s) {
  if (s == "hold-previous" || s == "hold") return AlignPolicy::HoldPrevious;
  if (s == "linear-interpolate" || s == "linear") return AlignPolicy::Linear;
  throw ConfigError("unknown alignment policy '" + s + "'");
}

DriverSchema parse_driver_schema(const std::string& text) {
  DriverSchema s;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("schema line " + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto val = trim(line.substr(eq + 1));
    bool ok = true;
    if (key == "units") {
      s.units = val;
    } else if (key == "sentinel") {
      s.sentinel = parse_number(val, ok);
    } else if (key == "cadence") {
      s.cadence = static_cast<std::int64_t>(parse_number(val, ok));
      ok = ok && s.cadence > 0;
    } else if (key == "policy") {
      s.policy = parse_align_policy(val);
    } else if (key == "max_gap") {
      s.max_gap = static_cast<std::int64_t>(parse_number(val, ok));
      ok = ok && s.max_gap >= 0;
    } else {
      throw ConfigError("schema line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (!ok) throw ConfigError("schema line " + std::to_string(lineno) + ": bad value for '" + key + "'");
  }
  return s;
}

DriverSchema read_driver_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_driver_schema(ss.str());
}

std::string format_driver_schema(const DriverSchema& s) {
  std::ostringstream out;
  out << "units = " << s.units << '\n';
  if (s.sentinel) out << "sentinel = " << *s.sentinel << '\n';
  out << "cadence = " << s.cadence << '\n';
  out << "policy = " << to_string(s.policy) << '\n';
  out << "max_gap = " << s.max_gap << '\n';
  return out.str();
}

DriverSeries parse_driver_csv(const std::string& text, const DriverSchema& schema, const std::string& name) {
  DriverSeries s;
  s.name = name;
  s.schema = schema;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    if (!header) {
      if (line != "timestamp,value") throw IngestError("line 1: expected header 'timestamp,value', got '" + line + "'");
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      throw IngestError("line " + std::to_string(lineno) + ": expected 2 fields");
    Timestamp t = 0;
    try {
      t = parse_iso8601(trim(line.substr(0, comma)));
    } catch (const ArgumentError&) {
      throw IngestError("line " + std::to_string(lineno) + ": bad timestamp '" + line.substr(0, comma) + "'");
    }
    const auto field = trim(line.substr(comma + 1));
    double v = std::numeric_limits<double>::quiet_NaN();
    if (!field.empty() && field != "nan" && field != "NaN") {
      bool ok = false;
      v = parse_number(field, ok);
      if (!ok) throw IngestError("line " + std::to_string(lineno) + ": bad value '" + field + "'");
      if (schema.sentinel && v == *schema.sentinel) v = std::numeric_limits<double>::quiet_NaN();
    }
    if (!s.times.empty() && t <= s.times.back()) {
      throw FormatError("line " + std::to_string(lineno) + ": timestamp " + format_iso8601(t) +
                        " is not after the previous row");
    }
    s.times.push_back(t);
    s.values.push_back(v);
  }
  if (!header) throw IngestError("empty driver file for '" + name + "'");
  return s;
}

DriverSeries read_driver_csv(const std::string& path, const DriverSchema& schema, const std::string& name) {
  try {
    return parse_driver_csv(slurp(path), schema, name);
  } catch (const IngestError& e) {
    throw IngestError(path + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::string format_driver_csv(const DriverSeries& s) {
  std::ostringstream out;
  out.precision(17);
  out << "timestamp,value\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out << format_iso8601(s.times[i]) << ',';
    if (std::isnan(s.values[i])) {
      if (s.schema.sentinel) out << *s.schema.sentinel;
    } else {
      out << s.values[i];
    }
    out << '\n';
  }
  return out.str();
}

std::size_t AlignedDrivers::index(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw ConfigError("no aligned driver named '" + name + "'");
}

AlignedDrivers align_drivers(const std::vector<DriverSeries>& series, Timestamp start, Timestamp end,
                             std::int64_t cadence) {
  if (cadence <= 0) throw ArgumentError("cadence must be positive");
  if (end < start) throw ArgumentError("alignment range is empty");
  AlignedDrivers out;
  for (Timestamp t = start; t <= end; t += cadence) out.times.push_back(t);
  out.values.assign(out.times.size(), std::vector<double>(series.size(), 0.0));
  for (std::size_t d = 0; d < series.size(); ++d) {
    const auto& s = series[d];
    out.names.push_back(s.name);
    std::vector<Timestamp> vt;
    std::vector<double> vv;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (!std::isnan(s.values[i])) {
        vt.push_back(s.times[i]);
        vv.push_back(s.values[i]);
      }
    const auto gap = s.max_gap();
    auto fail = [&](const std::string& interval, Timestamp at) {
      throw AlignmentError("driver '" + s.name + "': gap " + interval + " exceeds max_gap " + std::to_string(gap) +
                           " s at " + format_iso8601(at));
    };
    auto span = [](Timestamp a, Timestamp b) { return format_iso8601(a) + " .. " + format_iso8601(b); };
    if (vt.empty()) fail("(no valid samples)", start);
    std::size_t j = 0;  // first valid sample with time > t
    for (std::size_t k = 0; k < out.times.size(); ++k) {
      const Timestamp t = out.times[k];
      while (j < vt.size() && vt[j] <= t) ++j;
      if (s.schema.policy == AlignPolicy::HoldPrevious) {
        if (j == 0) fail("before " + format_iso8601(vt.front()), t);
        if (t - vt[j - 1] > gap) fail(span(vt[j - 1], j < vt.size() ? vt[j] : t), t);
        out.values[k][d] = vv[j - 1];
      } else {
        if (j > 0 && vt[j - 1] == t) {
          out.values[k][d] = vv[j - 1];
          continue;
        }
        if (j == 0) fail("before " + format_iso8601(vt.front()), t);
        if (j == vt.size()) fail("after " + format_iso8601(vt.back()), t);
        if (vt[j] - vt[j - 1] > gap) fail(span(vt[j - 1], vt[j]), t);
        const double w = static_cast<double>(t - vt[j - 1]) / static_cast<double>(vt[j] - vt[j - 1]);
        out.values[k][d] = vv[j - 1] + w * (vv[j] - vv[j - 1]);
      }
    }
  }
  return out;
}

}  // namespace ioncast
