#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ioncast/tensor.hpp"
#include "ioncast/timeutil.hpp"

namespace ioncast {

// In-memory form of an IONGRID file. Layout (little-endian):
//   "IONG" | u16 version | u32 cadence_s | u32 n_frames | u16 C | u16 H | u16 W
//   C x (u16 byte length, UTF-8 name)
//   n_frames x (u64 epoch seconds, C*H*W f32 row-major)
struct GridStack {
  std::uint32_t cadence = 900;
  std::vector<std::string> channels;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Timestamp> times;
  std::vector<Tensor<float>> frames;  // each [C x H x W]

  std::size_t size() const { return frames.size(); }
};

inline constexpr std::uint16_t kIonGridVersion = 1;

std::string encode_grid_stack(const GridStack& stack);
// FormatError on bad magic/version, truncation (expected vs actual byte
// counts), dimension faults or non-increasing timestamps.
GridStack decode_grid_stack(const std::string& bytes);

void write_grid_stack(const std::string& path, const GridStack& stack);
GridStack read_grid_stack(const std::string& path);

}  // namespace ioncast
