#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dpp/error.hpp"

namespace dpp {

using Point = std::vector<std::int64_t>;

/// Direction index: 2*i is +e_i, 2*i+1 is -e_i.
inline int axis_of(int dir) { return dir / 2; }
inline int sign_of(int dir) { return (dir % 2 == 0) ? 1 : -1; }
inline int opposite(int dir) { return dir ^ 1; }

inline constexpr int kMaxDim = 8;
inline constexpr std::uint64_t kMaxSites = std::uint64_t{1} << 32;

/// Torus window of Z^d with row-major site indexing (last axis fastest).
class LatticeWindow {
 public:
  LatticeWindow() = default;

  explicit LatticeWindow(std::vector<std::uint32_t> sides) : sides_(std::move(sides)) {
    require(!sides_.empty(), errc::invalid_argument, "window dimension must be >= 1");
    require(static_cast<int>(sides_.size()) <= kMaxDim, errc::unsupported_dimension,
            "window dimension exceeds " + std::to_string(kMaxDim));
    strides_.assign(sides_.size(), 1);
    std::uint64_t total = 1;
    for (std::size_t i = sides_.size(); i-- > 0;) {
      require(sides_[i] >= 2, errc::invalid_argument, "window sides must be >= 2");
      strides_[i] = total;
      total *= sides_[i];
      require(total <= kMaxSites, errc::dimension_overflow, "window has too many sites");
    }
    volume_ = total;
  }

  static LatticeWindow cube(int d, std::uint32_t side) {
    return LatticeWindow(std::vector<std::uint32_t>(static_cast<std::size_t>(d), side));
  }

  int dim() const { return static_cast<int>(sides_.size()); }
  const std::vector<std::uint32_t>& sides() const { return sides_; }
  std::uint32_t side(int axis) const { return sides_[static_cast<std::size_t>(axis)]; }
  std::uint64_t stride(int axis) const { return strides_[static_cast<std::size_t>(axis)]; }
  std::uint64_t volume() const { return volume_; }
  std::uint32_t min_side() const {
    std::uint32_t m = sides_.front();
    for (auto s : sides_) m = s < m ? s : m;
    return m;
  }

  static std::int64_t wrap(std::int64_t x, std::int64_t l) {
    std::int64_t r = x % l;
    return r < 0 ? r + l : r;
  }

  std::uint64_t index(const Point& p) const {
    require(static_cast<int>(p.size()) == dim(), errc::invalid_argument, "point dimension mismatch");
    std::uint64_t idx = 0;
    for (int i = 0; i < dim(); ++i) idx += static_cast<std::uint64_t>(wrap(p[i], side(i))) * stride(i);
    return idx;
  }

  Point point(std::uint64_t idx) const {
    Point p(sides_.size());
    for (int i = 0; i < dim(); ++i) {
      p[i] = static_cast<std::int64_t>((idx / stride(i)) % side(i));
    }
    return p;
  }

  std::int64_t coord(std::uint64_t idx, int axis) const {
    return static_cast<std::int64_t>((idx / stride(axis)) % side(axis));
  }

  /// Index of the site k steps from idx along an axis (k may be negative).
  std::uint64_t step(std::uint64_t idx, int axis, std::int64_t k) const {
    std::int64_t l = side(axis);
    std::int64_t c = coord(idx, axis);
    std::int64_t n = wrap(c + k, l);
    return idx + static_cast<std::uint64_t>(n - c) * stride(axis);
  }

  /// Representative of a coordinate in (-L/2, L/2].
  static std::int64_t centered(std::int64_t c, std::int64_t l) {
    c = wrap(c, l);
    return (2 * c > l) ? c - l : c;
  }

  Point centered_point(std::uint64_t idx) const {
    Point p = point(idx);
    for (int i = 0; i < dim(); ++i) p[i] = centered(p[i], side(i));
    return p;
  }

  bool operator==(const LatticeWindow& o) const { return sides_ == o.sides_; }

 private:
  std::vector<std::uint32_t> sides_;
  std::vector<std::uint64_t> strides_;
  std::uint64_t volume_ = 0;
};

}  // namespace dpp
