#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cmot/error.hpp"

namespace cmot {

// Dense row-major 2-D field. Row index is y, column index is x.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int h, int w, T fill = T{}) : h_(h), w_(w) {
    if (h < 0 || w < 0) fail(Errc::invalid_argument, "negative grid extent");
    data_.assign(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill);
  }

  int height() const noexcept { return h_; }
  int width() const noexcept { return w_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool contains(int y, int x) const noexcept {
    return y >= 0 && x >= 0 && y < h_ && x < w_;
  }

  T& operator()(int y, int x) noexcept { return data_[index(y, x)]; }
  const T& operator()(int y, int x) const noexcept { return data_[index(y, x)]; }

  std::size_t index(int y, int x) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(w_) +
           static_cast<std::size_t>(x);
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& raw() noexcept { return data_; }
  const std::vector<T>& raw() const noexcept { return data_; }

  bool same_shape(const Grid& o) const noexcept {
    return h_ == o.h_ && w_ == o.w_;
  }

  template <typename U>
  bool same_shape(const Grid<U>& o) const noexcept {
    return h_ == o.height() && w_ == o.width();
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.h_ == b.h_ && a.w_ == b.w_ && a.data_ == b.data_;
  }

 private:
  int h_ = 0;
  int w_ = 0;
  std::vector<T> data_;
};

using DensityGrid = Grid<double>;
using IndicatorGrid = Grid<std::uint8_t>;

template <typename A, typename B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    fail(Errc::shape_mismatch,
         std::string(what) + ": " + std::to_string(a.height()) + "x" +
             std::to_string(a.width()) + " vs " + std::to_string(b.height()) +
             "x" + std::to_string(b.width()));
  }
}

template <typename T>
double grid_sum(const Grid<T>& g) {
  double s = 0.0;
  for (const T& v : g.values()) s += static_cast<double>(v);
  return s;
}

template <typename T>
Grid<double> to_double(const Grid<T>& g) {
  Grid<double> out(g.height(), g.width());
  for (std::size_t i = 0; i < g.size(); ++i) out.raw()[i] = static_cast<double>(g.raw()[i]);
  return out;
}

}  // namespace cmot
