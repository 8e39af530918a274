#pragma once

// Order-4 symmetric elasticity tensors in two dimensions.
//
// Symmetric 2x2 matrices are identified with R^3 through the orthonormal
// basis (E11, E22, (E12 + E21)/sqrt(2)). In that basis the Frobenius product
// becomes the Euclidean dot product and every tensor with minor and major
// symmetry is a symmetric 3x3 matrix.

#include <Eigen/Core>

#include <string_view>

namespace elastinv {

/// Symmetric 2x2 matrix [[a11, a12], [a12, a22]].
struct SymMat2 {
  double a11 = 0.0;
  double a22 = 0.0;
  double a12 = 0.0;

  static SymMat2 identity() { return {1.0, 1.0, 0.0}; }

  double trace() const { return a11 + a22; }
  double frobenius_norm() const;

  /// Orthonormal Voigt coordinates (a11, a22, sqrt(2) a12).
  Eigen::Vector3d voigt() const;
  static SymMat2 from_voigt(const Eigen::Vector3d& v);

  SymMat2& operator+=(const SymMat2& o) {
    a11 += o.a11;
    a22 += o.a22;
    a12 += o.a12;
    return *this;
  }
  friend SymMat2 operator+(SymMat2 a, const SymMat2& b) { return a += b; }
  friend SymMat2 operator-(const SymMat2& a, const SymMat2& b) {
    return {a.a11 - b.a11, a.a22 - b.a22, a.a12 - b.a12};
  }
  friend SymMat2 operator*(double s, const SymMat2& a) {
    return {s * a.a11, s * a.a22, s * a.a12};
  }
  friend bool operator==(const SymMat2&, const SymMat2&) = default;
};

/// Symmetrized part (A + A^T)/2 of a general 2x2 matrix.
SymMat2 symmetric_part(const Eigen::Matrix2d& a);

/// Frobenius product A:B = sum_ij A_ij B_ij.
double frob_dd(const SymMat2& a, const SymMat2& b);

enum class CanonicalTensor { Ident, Dilat, C1, C2, C3 };

CanonicalTensor parse_canonical(std::string_view name);
std::string_view to_string(CanonicalTensor kind);

/// Order-4 tensor with minor and major symmetries, stored as its 3x3
/// orthonormal-Voigt matrix.
class Tensor4Sym {
 public:
  Tensor4Sym() : v_(Eigen::Matrix3d::Zero()) {}
  /// Symmetrizes `v`; callers pass a symmetric matrix.
  explicit Tensor4Sym(const Eigen::Matrix3d& v);

  const Eigen::Matrix3d& voigt() const { return v_; }

  /// Contraction T:A. Only the symmetric part of the argument is seen.
  SymMat2 apply(const SymMat2& a) const;
  SymMat2 apply(const Eigen::Matrix2d& a) const { return apply(symmetric_part(a)); }

  Tensor4Sym transpose() const { return Tensor4Sym(v_.transpose().eval()); }

  /// Spectral norm of the Voigt matrix, equal to the operator norm on
  /// symmetric matrices under the Frobenius norm.
  double operator_norm() const;
  /// Smallest eigenvalue of the Voigt matrix.
  double min_eigenvalue() const;
  bool is_elliptic(double tol = 0.0) const { return min_eigenvalue() > tol; }

  Tensor4Sym& operator+=(const Tensor4Sym& o) {
    v_ += o.v_;
    return *this;
  }
  friend Tensor4Sym operator+(Tensor4Sym a, const Tensor4Sym& b) { return a += b; }
  friend Tensor4Sym operator*(double s, const Tensor4Sym& t) { return Tensor4Sym(s * t.v_); }

 private:
  Eigen::Matrix3d v_;
};

struct IsoParams {
  double mu = 1.0;
  double lambda = 0.0;
};

/// 2 mu Ident + lambda Dilat. Throws InvalidArgument for mu <= 0.
Tensor4Sym make_isotropic(const IsoParams& p);

Tensor4Sym canonical(CanonicalTensor kind);

}  // namespace elastinv
