#pragma once

// Shared bits for the grid-world environments.

#include <algorithm>
#include <array>
#include <cstdint>
#include <vector>

namespace sqmarl {

// Coordinate convention: Up = row-1, Down = row+1, Left = col-1, Right = col+1.
enum class GridAction : uint8_t { Up = 0, Down = 1, Left = 2, Right = 3 };
constexpr int kGridActions = 4;

struct Pos {
  int row = 0;
  int col = 0;
  bool operator==(const Pos&) const = default;
};

inline Pos moved(Pos p, GridAction a) {
  switch (a) {
    case GridAction::Up: return {p.row - 1, p.col};
    case GridAction::Down: return {p.row + 1, p.col};
    case GridAction::Left: return {p.row, p.col - 1};
    case GridAction::Right: return {p.row, p.col + 1};
  }
  return p;
}

// Off-grid moves clamp to the boundary.
inline Pos moved_clamped(Pos p, GridAction a, int height, int width) {
  Pos q = moved(p, a);
  q.row = std::clamp(q.row, 0, height - 1);
  q.col = std::clamp(q.col, 0, width - 1);
  return q;
}

enum class AgentColor : uint8_t { Red = 0, Blue = 1 };

// Channel-major binary occupancy tensor (channels x height x width).
struct GridObservation {
  int channels = 0, height = 0, width = 0;
  std::vector<uint8_t> data;

  GridObservation() = default;
  GridObservation(int c, int h, int w)
      : channels(c), height(h), width(w), data(static_cast<size_t>(c) * h * w, 0) {}

  uint8_t& at(int c, int r, int col) {
    return data[(static_cast<size_t>(c) * height + r) * width + col];
  }
  uint8_t at(int c, int r, int col) const {
    return data[(static_cast<size_t>(c) * height + r) * width + col];
  }
  int channel_sum(int c) const {
    int s = 0;
    for (int r = 0; r < height; ++r)
      for (int col = 0; col < width; ++col) s += at(c, r, col);
    return s;
  }
  bool operator==(const GridObservation&) const = default;
};

}  // namespace sqmarl
