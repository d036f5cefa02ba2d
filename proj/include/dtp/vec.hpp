#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>

namespace dtp {

/// Dense vector with a fixed capacity of three coordinates.
///
/// States and controls of the supported systems live in R^n with n <= 3, so a
/// value type with inline storage is used throughout instead of heap vectors.
class Vec {
  public:
    static constexpr std::size_t kMaxDim = 3;

    Vec() = default;

    explicit Vec(std::size_t dim, double fill = 0.0) : size_(dim) {
        if (dim > kMaxDim) throw std::invalid_argument("Vec: dimension exceeds 3");
        data_.fill(0.0);
        std::fill_n(data_.begin(), dim, fill);
    }

    Vec(std::initializer_list<double> values) : size_(values.size()) {
        if (values.size() > kMaxDim) throw std::invalid_argument("Vec: dimension exceeds 3");
        std::size_t i = 0;
        for (double v : values) data_[i++] = v;
    }

    static Vec from_span(std::span<const double> values) {
        Vec v(values.size());
        std::copy(values.begin(), values.end(), v.data_.begin());
        return v;
    }

    [[nodiscard]] std::size_t size() const { return size_; }
    [[nodiscard]] bool empty() const { return size_ == 0; }

    double& operator[](std::size_t i) {
        assert(i < size_);
        return data_[i];
    }
    double operator[](std::size_t i) const {
        assert(i < size_);
        return data_[i];
    }

    [[nodiscard]] const double* begin() const { return data_.data(); }
    [[nodiscard]] const double* end() const { return data_.data() + size_; }
    double* begin() { return data_.data(); }
    double* end() { return data_.data() + size_; }

    Vec& operator+=(const Vec& o) {
        check_same(o);
        for (std::size_t i = 0; i < size_; ++i) data_[i] += o.data_[i];
        return *this;
    }
    Vec& operator-=(const Vec& o) {
        check_same(o);
        for (std::size_t i = 0; i < size_; ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Vec& operator*=(double s) {
        for (std::size_t i = 0; i < size_; ++i) data_[i] *= s;
        return *this;
    }

    friend Vec operator+(Vec a, const Vec& b) { return a += b; }
    friend Vec operator-(Vec a, const Vec& b) { return a -= b; }
    friend Vec operator*(Vec a, double s) { return a *= s; }
    friend Vec operator*(double s, Vec a) { return a *= s; }

    friend bool operator==(const Vec& a, const Vec& b) {
        return a.size_ == b.size_ && std::equal(a.begin(), a.end(), b.begin());
    }

    [[nodiscard]] double dot(const Vec& o) const {
        check_same(o);
        double s = 0.0;
        for (std::size_t i = 0; i < size_; ++i) s += data_[i] * o.data_[i];
        return s;
    }

    /// Euclidean norm.
    [[nodiscard]] double norm() const { return std::sqrt(dot(*this)); }

    /// Lexicographic comparison, used for deterministic tie-breaking.
    [[nodiscard]] bool lex_less(const Vec& o) const {
        return std::lexicographical_compare(begin(), end(), o.begin(), o.end());
    }

    friend std::ostream& operator<<(std::ostream& os, const Vec& v) {
        os << '(';
        for (std::size_t i = 0; i < v.size_; ++i) os << (i ? ", " : "") << v.data_[i];
        return os << ')';
    }

  private:
    void check_same(const Vec& o) const {
        if (o.size_ != size_) throw std::invalid_argument("Vec: dimension mismatch");
    }

    std::array<double, kMaxDim> data_{};
    std::size_t size_ = 0;
};

inline double distance(const Vec& a, const Vec& b) { return (a - b).norm(); }

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    [[nodiscard]] double width() const { return hi - lo; }
    [[nodiscard]] double mid() const { return 0.5 * (lo + hi); }
    [[nodiscard]] bool contains(double v) const { return lo <= v && v <= hi; }
};

/// Axis-aligned box in R^n.
class Box {
  public:
    Box() = default;
    Box(std::initializer_list<Interval> axes) {
        if (axes.size() > Vec::kMaxDim) throw std::invalid_argument("Box: dimension exceeds 3");
        for (const auto& a : axes) push(a);
    }

    void push(Interval axis) {
        if (dim_ == Vec::kMaxDim) throw std::invalid_argument("Box: dimension exceeds 3");
        if (!(axis.lo <= axis.hi) || !std::isfinite(axis.lo) || !std::isfinite(axis.hi))
            throw std::invalid_argument("Box: axis bounds must be finite with lo <= hi");
        axes_[dim_++] = axis;
    }

    [[nodiscard]] std::size_t dim() const { return dim_; }
    [[nodiscard]] const Interval& operator[](std::size_t i) const {
        assert(i < dim_);
        return axes_[i];
    }

    /// Membership with an absolute slack per axis (slack 0 is exact).
    [[nodiscard]] bool contains(const Vec& x, double slack = 0.0) const {
        if (x.size() != dim_) return false;
        for (std::size_t i = 0; i < dim_; ++i) {
            if (!(x[i] >= axes_[i].lo - slack && x[i] <= axes_[i].hi + slack)) return false;
        }
        return true;
    }

    [[nodiscard]] Vec clamp(const Vec& x) const {
        Vec c = x;
        for (std::size_t i = 0; i < dim_; ++i) c[i] = std::clamp(c[i], axes_[i].lo, axes_[i].hi);
        return c;
    }

    [[nodiscard]] bool contains_box(const Box& inner) const {
        if (inner.dim_ != dim_) return false;
        for (std::size_t i = 0; i < dim_; ++i) {
            if (inner.axes_[i].lo < axes_[i].lo || inner.axes_[i].hi > axes_[i].hi) return false;
        }
        return true;
    }

    /// Euclidean distance from x to the box boundary (0 if outside or on it).
    [[nodiscard]] double distance_to_boundary(const Vec& x) const {
        double d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < dim_; ++i) {
            d = std::min({d, x[i] - axes_[i].lo, axes_[i].hi - x[i]});
        }
        return std::max(d, 0.0);
    }

    friend bool operator==(const Box& a, const Box& b) {
        if (a.dim_ != b.dim_) return false;
        for (std::size_t i = 0; i < a.dim_; ++i) {
            if (a.axes_[i].lo != b.axes_[i].lo || a.axes_[i].hi != b.axes_[i].hi) return false;
        }
        return true;
    }

  private:
    std::array<Interval, Vec::kMaxDim> axes_{};
    std::size_t dim_ = 0;
};

}  // namespace dtp
