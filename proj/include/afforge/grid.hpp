#ifndef AFFORGE_GRID_HPP
#define AFFORGE_GRID_HPP

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "afforge/error.hpp"

namespace afforge {

/// Row-major H x W scalar map. Used for depth maps, logits and 2D heatmaps.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(checked(width, height)), fill) {}
  Grid(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(checked(width, height))) {
      throw Error(ErrorKind::DimensionMismatch, "grid data size does not match width*height");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  bool same_shape(const Grid& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  bool operator==(const Grid&) const = default;

 private:
  static long checked(int width, int height) {
    if (width < 0 || height < 0) throw Error(ErrorKind::InvalidArgument, "negative grid dimension");
    return static_cast<long>(width) * height;
  }
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using DepthMap = Grid<float>;

}  // namespace afforge

#endif  // AFFORGE_GRID_HPP
