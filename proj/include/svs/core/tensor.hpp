#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "svs/core/error.hpp"

namespace svs {

using Real = double;

// Dense row-major tensor. Rank is dynamic (1..4 in practice); the innermost
// dimension is contiguous, which keeps time-axis loops vectorizable.
struct Tensor {
  std::vector<int> shape;
  std::vector<Real> v;

  Tensor() = default;
  explicit Tensor(std::initializer_list<int> s) : shape(s) { v.assign(numel_of(shape), Real(0)); }
  explicit Tensor(const std::vector<int>& s) : shape(s) { v.assign(numel_of(shape), Real(0)); }

  static std::int64_t numel_of(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  Real* data() { return v.data(); }
  const Real* data() const { return v.data(); }

  Real& operator[](std::int64_t i) { return v[static_cast<size_t>(i)]; }
  Real operator[](std::int64_t i) const { return v[static_cast<size_t>(i)]; }

  // 2-d accessors: (row, col) over shape [rows, cols].
  Real& at(int r, int c) { return v[static_cast<size_t>(r) * shape[1] + c]; }
  Real at(int r, int c) const { return v[static_cast<size_t>(r) * shape[1] + c]; }
  Real* row(int r) { return v.data() + static_cast<size_t>(r) * shape[1]; }
  const Real* row(int r) const { return v.data() + static_cast<size_t>(r) * shape[1]; }

  // 3-d accessor over shape [a, b, c].
  Real& at(int i, int j, int k) {
    return v[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  Real at(int i, int j, int k) const {
    return v[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }

  void fill(Real x) { std::fill(v.begin(), v.end(), x); }
  void zero() { fill(Real(0)); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

inline void require_shape(const Tensor& t, std::initializer_list<int> s, const char* what) {
  if (t.shape != std::vector<int>(s)) throw InvalidInput(std::string(what) + ": unexpected shape");
}

}  // namespace svs
