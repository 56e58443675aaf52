#include "ioncast/iongrid.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ioncast/errors.hpp"

namespace ioncast {

namespace {

static_assert(std::endian::native == std::endian::little, "IONGRID I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& b) : bytes_(b) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > bytes_.size()) {
      throw FormatError(std::string("IONGRID truncated while reading ") + what + " at offset " + std::to_string(pos_) +
                        ": expected at least " + std::to_string(pos_ + n) + " bytes, got " +
                        std::to_string(bytes_.size()));
    }
  }

  std::size_t pos() const { return pos_; }
  const char* data() const { return bytes_.data() + pos_; }
  void skip(std::size_t n) { pos_ += n; }
  std::size_t size() const { return bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_grid_stack(const GridStack& s) {
  const std::size_t C = s.channels.size();
  if (C == 0 || s.height == 0 || s.width == 0) throw ArgumentError("IONGRID needs C, H, W > 0");
  if (C > 0xffff || s.height > 0xffff || s.width > 0xffff) throw ArgumentError("IONGRID dimensions exceed u16");
  if (s.times.size() != s.frames.size()) throw ArgumentError("IONGRID times and frames differ in count");
  const Shape shape{C, s.height, s.width};
  std::string out = "IONG";
  put<std::uint16_t>(out, kIonGridVersion);
  put<std::uint32_t>(out, s.cadence);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.frames.size()));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(C));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(s.height));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(s.width));
  for (const auto& name : s.channels) {
    if (name.size() > 0xffff) throw ArgumentError("channel name too long");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
  }
  for (std::size_t i = 0; i < s.frames.size(); ++i) {
    if (s.frames[i].shape() != shape) {
      throw DimensionError("frame " + std::to_string(i) + " has shape " + shape_str(s.frames[i].shape()) +
                           ", header says " + shape_str(shape));
    }
    put<std::uint64_t>(out, static_cast<std::uint64_t>(s.times[i]));
    out.append(reinterpret_cast<const char*>(s.frames[i].ptr()), s.frames[i].size() * sizeof(float));
  }
  return out;
}

GridStack decode_grid_stack(const std::string& bytes) {
  Reader r(bytes);
  if (r.str(4, "magic") != "IONG") throw FormatError("IONGRID bad magic at offset 0");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kIonGridVersion) {
    throw FormatError("IONGRID unsupported version " + std::to_string(version) + " at offset 4");
  }
  GridStack s;
  s.cadence = r.get<std::uint32_t>("cadence");
  const auto n_frames = r.get<std::uint32_t>("frame count");
  const std::size_t C = r.get<std::uint16_t>("channel count");
  s.height = r.get<std::uint16_t>("height");
  s.width = r.get<std::uint16_t>("width");
  if (C == 0 || s.height == 0 || s.width == 0) {
    throw FormatError("IONGRID dimension fault at offset 14: C=" + std::to_string(C) + " H=" +
                      std::to_string(s.height) + " W=" + std::to_string(s.width));
  }
  if (s.cadence == 0) throw FormatError("IONGRID cadence 0 at offset 6");
  for (std::size_t c = 0; c < C; ++c) {
    const auto len = r.get<std::uint16_t>("channel name length");
    s.channels.push_back(r.str(len, "channel name"));
  }
  const std::size_t per = C * s.height * s.width;
  const std::size_t frame_bytes = 8 + per * sizeof(float);
  const std::size_t expected = r.pos() + static_cast<std::size_t>(n_frames) * frame_bytes;
  if (bytes.size() != expected) {
    throw FormatError("IONGRID size mismatch: header (" + std::to_string(n_frames) + " frames of " + std::to_string(C) +
                      "x" + std::to_string(s.height) + "x" + std::to_string(s.width) + ") implies " +
                      std::to_string(expected) + " bytes, got " + std::to_string(bytes.size()) +
                      (bytes.size() < expected ? " (truncated)" : " (trailing data)"));
  }
  s.times.reserve(n_frames);
  s.frames.reserve(n_frames);
  for (std::uint32_t i = 0; i < n_frames; ++i) {
    const auto offset = r.pos();
    const auto t = static_cast<Timestamp>(r.get<std::uint64_t>("timestamp"));
    if (!s.times.empty() && t <= s.times.back()) {
      throw FormatError("IONGRID frame " + std::to_string(i) + " at offset " + std::to_string(offset) +
                        " has a non-increasing timestamp");
    }
    Tensor<float> f({C, s.height, s.width});
    r.need(per * sizeof(float), "frame data");
    std::memcpy(f.ptr(), r.data(), per * sizeof(float));
    r.skip(per * sizeof(float));
    s.times.push_back(t);
    s.frames.push_back(std::move(f));
  }
  return s;
}

void write_grid_stack(const std::string& path, const GridStack& stack) {
  const auto bytes = encode_grid_stack(stack);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write to '" + path + "' failed");
}

GridStack read_grid_stack(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open IONGRID file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_grid_stack(ss.str());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace ioncast
