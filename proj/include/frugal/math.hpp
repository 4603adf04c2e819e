#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace frugal {

template <typename T>
struct Vec3 {
  T x{}, y{}, z{};

  constexpr Vec3() = default;
  constexpr Vec3(T x_, T y_, T z_) : x(x_), y(y_), z(z_) {}

  constexpr T operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  T& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(T s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(T s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  Vec3& operator*=(T s) { x *= s; y *= s; z *= s; return *this; }

  constexpr T dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  constexpr Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  T norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const { const T n = norm(); return {x / n, y / n, z / n}; }
  constexpr Vec3 cwise_mul(const Vec3& o) const { return {x * o.x, y * o.y, z * o.z}; }
  bool all_finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }

  template <typename U>
  constexpr Vec3<U> cast() const { return {static_cast<U>(x), static_cast<U>(y), static_cast<U>(z)}; }
};

template <typename T>
constexpr Vec3<T> operator*(T s, const Vec3<T>& v) { return v * s; }

using Vec3d = Vec3<double>;
using Vec3f = Vec3<float>;

// Row-major 3x3 matrix.
template <typename T>
struct Mat3 {
  std::array<T, 9> m{};

  static constexpr Mat3 identity() {
    Mat3 r;
    r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    return r;
  }
  static Mat3 from_rows(const Vec3<T>& r0, const Vec3<T>& r1, const Vec3<T>& r2) {
    Mat3 r;
    r.m = {r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z};
    return r;
  }
  static Mat3 from_cols(const Vec3<T>& c0, const Vec3<T>& c1, const Vec3<T>& c2) {
    Mat3 r;
    r.m = {c0.x, c1.x, c2.x, c0.y, c1.y, c2.y, c0.z, c1.z, c2.z};
    return r;
  }

  constexpr T operator()(int r, int c) const { return m[r * 3 + c]; }
  T& operator()(int r, int c) { return m[r * 3 + c]; }

  Vec3<T> row(int r) const { return {m[r * 3], m[r * 3 + 1], m[r * 3 + 2]}; }
  Vec3<T> col(int c) const { return {m[c], m[3 + c], m[6 + c]}; }

  Vec3<T> operator*(const Vec3<T>& v) const {
    return {row(0).dot(v), row(1).dot(v), row(2).dot(v)};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        r(i, j) = row(i).dot(o.col(j));
    return r;
  }
  Mat3 transpose() const {
    return from_rows(col(0), col(1), col(2));
  }
  T det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
};

using Mat3d = Mat3<double>;

// R Rᵀ = I and det(R) = 1, both within tol.
template <typename T>
bool is_rotation(const Mat3<T>& r, T tol) {
  const Mat3<T> g = r * r.transpose();
  T dev = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      dev = std::max(dev, std::abs(g(i, j) - (i == j ? T(1) : T(0))));
  return dev <= tol && std::abs(r.det() - T(1)) <= tol;
}

inline double softplus(double x) {
  if (x > 20.0) return x;
  if (x < -20.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double softplus_inv(double y) { return std::log(std::expm1(y)); }

inline double sigmoid(double x) {
  if (x >= 0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double sqr(double x) { return x * x; }

}  // namespace frugal
