#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "dtp/vec.hpp"

namespace dtp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Tensor-product grid over a box. Axis 0 varies slowest in the flat node
/// index, so increasing flat index is lexicographic order of the coordinates.
class Grid {
  public:
    Grid() = default;

    /// Uniform grid with `counts[i]` nodes on axis i; endpoints hit the box exactly.
    static Grid uniform(const Box& box, std::span<const std::size_t> counts) {
        if (counts.size() != box.dim()) throw std::invalid_argument("Grid: counts/box dimension mismatch");
        std::vector<std::vector<double>> axes(box.dim());
        for (std::size_t a = 0; a < box.dim(); ++a) {
            const std::size_t n = counts[a];
            if (n < 2) throw std::invalid_argument("Grid: at least 2 nodes per axis required");
            const double lo = box[a].lo;
            const double hi = box[a].hi;
            if (!(lo < hi)) throw std::invalid_argument("Grid: degenerate axis");
            axes[a].resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double t = static_cast<double>(i) / static_cast<double>(n - 1);
                axes[a][i] = lo * (1.0 - t) + hi * t;
            }
            axes[a].front() = lo;
            axes[a].back() = hi;
        }
        return Grid(std::move(axes), true);
    }

    static Grid uniform(const Box& box, std::size_t nodes_per_axis) {
        std::vector<std::size_t> counts(box.dim(), nodes_per_axis);
        return uniform(box, counts);
    }

    /// Grid from explicit, strictly increasing node coordinates per axis.
    static Grid from_axes(std::vector<std::vector<double>> axes) { return Grid(std::move(axes), false); }

    [[nodiscard]] std::size_t dim() const { return axes_.size(); }
    [[nodiscard]] std::size_t size() const { return size_; }
    [[nodiscard]] std::size_t count(std::size_t axis) const { return axes_[axis].size(); }
    [[nodiscard]] const std::vector<double>& axis(std::size_t a) const { return axes_[a]; }
    [[nodiscard]] std::size_t stride(std::size_t a) const { return strides_[a]; }

    [[nodiscard]] Box box() const {
        Box b;
        for (const auto& ax : axes_) b.push({ax.front(), ax.back()});
        return b;
    }

    [[nodiscard]] Vec node(std::size_t flat) const {
        Vec x(dim());
        for (std::size_t a = 0; a < dim(); ++a) {
            x[a] = axes_[a][(flat / strides_[a]) % axes_[a].size()];
        }
        return x;
    }

    friend bool operator==(const Grid& a, const Grid& b) { return a.axes_ == b.axes_; }

    [[nodiscard]] std::size_t axis_index(std::size_t flat, std::size_t a) const {
        return (flat / strides_[a]) % axes_[a].size();
    }

    /// Largest spacing between consecutive nodes on axis a.
    [[nodiscard]] double max_spacing(std::size_t a) const {
        double h = 0.0;
        for (std::size_t i = 1; i < axes_[a].size(); ++i) h = std::max(h, axes_[a][i] - axes_[a][i - 1]);
        return h;
    }

    /// Euclidean diameter of the largest cell.
    [[nodiscard]] double cell_diameter() const {
        double s = 0.0;
        for (std::size_t a = 0; a < dim(); ++a) s += max_spacing(a) * max_spacing(a);
        return std::sqrt(s);
    }

    /// Flat index of the node nearest to x (after clamping into the box).
    [[nodiscard]] std::size_t nearest(const Vec& x) const {
        std::size_t flat = 0;
        for (std::size_t a = 0; a < dim(); ++a) {
            const auto [i, t] = locate_axis(a, x[a]);
            flat += (t > 0.5 ? i + 1 : i) * strides_[a];
        }
        return flat;
    }

    /// Cell index and barycentric offset in [0,1] along one axis; clamps to the axis range.
    [[nodiscard]] std::pair<std::size_t, double> locate_axis(std::size_t a, double v) const {
        const auto& ax = axes_[a];
        const std::size_t n = ax.size();
        if (!(v > ax.front())) return {0, 0.0};
        if (!(v < ax.back())) return {n - 2, 1.0};
        std::size_t i;
        if (uniform_) {
            const double h = (ax.back() - ax.front()) / static_cast<double>(n - 1);
            i = std::min<std::size_t>(static_cast<std::size_t>((v - ax.front()) / h), n - 2);
            // correct for rounding in the division
            while (i > 0 && v < ax[i]) --i;
            while (i + 2 < n && v >= ax[i + 1]) ++i;
        } else {
            i = static_cast<std::size_t>(std::upper_bound(ax.begin(), ax.end(), v) - ax.begin()) - 1;
            i = std::min(i, n - 2);
        }
        const double t = (v - ax[i]) / (ax[i + 1] - ax[i]);
        return {i, std::clamp(t, 0.0, 1.0)};
    }

  private:
    Grid(std::vector<std::vector<double>> axes, bool uniform) : axes_(std::move(axes)), uniform_(uniform) {
        if (axes_.empty() || axes_.size() > Vec::kMaxDim) throw std::invalid_argument("Grid: dimension must be 1..3");
        for (const auto& ax : axes_) {
            if (ax.size() < 2) throw std::invalid_argument("Grid: at least 2 nodes per axis required");
            for (std::size_t i = 1; i < ax.size(); ++i) {
                if (!(ax[i] > ax[i - 1])) throw std::invalid_argument("Grid: nodes must be strictly increasing");
            }
        }
        strides_.assign(axes_.size(), 1);
        for (std::size_t a = axes_.size(); a-- > 1;) strides_[a - 1] = strides_[a] * axes_[a].size();
        size_ = strides_[0] * axes_[0].size();
        if (size_ > std::numeric_limits<std::uint32_t>::max()) throw std::invalid_argument("Grid: too many nodes");
    }

    std::vector<std::vector<double>> axes_;
    std::vector<std::size_t> strides_;
    std::size_t size_ = 0;
    bool uniform_ = false;
};

/// Position of a point inside the grid: lower corner of the enclosing cell and
/// the offsets along each axis. Multilinear weights follow from the offsets.
struct CellLocation {
    std::uint32_t base = 0;
    std::array<double, Vec::kMaxDim> t{};
};

inline CellLocation locate(const Grid& grid, const Vec& x) {
    CellLocation loc;
    std::size_t base = 0;
    for (std::size_t a = 0; a < grid.dim(); ++a) {
        const auto [i, t] = grid.locate_axis(a, x[a]);
        base += i * grid.stride(a);
        loc.t[a] = t;
    }
    loc.base = static_cast<std::uint32_t>(base);
    return loc;
}

/// Multilinear interpolation of node values at a located point.
inline double interpolate(const Grid& grid, std::span<const double> values, const CellLocation& loc) {
    const std::size_t n = grid.dim();
    if (n == 1) {
        const double t = loc.t[0];
        const double v0 = values[loc.base];
        if (t == 0.0) return v0;
        return v0 + t * (values[loc.base + 1] - v0);
    }
    double acc = 0.0;
    const std::size_t corners = std::size_t{1} << n;
    for (std::size_t c = 0; c < corners; ++c) {
        double w = 1.0;
        std::size_t idx = loc.base;
        for (std::size_t a = 0; a < n; ++a) {
            if (c & (std::size_t{1} << a)) {
                w *= loc.t[a];
                idx += grid.stride(a);
            } else {
                w *= 1.0 - loc.t[a];
            }
        }
        if (w != 0.0) acc += w * values[idx];
    }
    return acc;
}

inline double interpolate(const Grid& grid, std::span<const double> values, const Vec& x) {
    return interpolate(grid, values, locate(grid, x));
}

enum class CostKind { original, rotated };

/// Value function tabulated on a grid, evaluated by multilinear interpolation.
struct GriddedValueFunction {
    Grid grid;
    std::vector<double> values;
    double beta = 0.0;
    CostKind kind = CostKind::original;
    /// Certified sup-norm distance of `values` to the discrete fixed point.
    double bellman_residual = 0.0;
    /// Sup-norm change of the last sweep.
    double last_update = 0.0;
    std::size_t iterations = 0;

    [[nodiscard]] double operator()(const Vec& x) const { return interpolate(grid, values, x); }
};

}  // namespace dtp
