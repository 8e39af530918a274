#include "elastinv/tensor_algebra.hpp"

#include "elastinv/error.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

namespace elastinv {

namespace {
const double kSqrt2 = std::sqrt(2.0);
}

double SymMat2::frobenius_norm() const { return std::sqrt(frob_dd(*this, *this)); }

Eigen::Vector3d SymMat2::voigt() const { return {a11, a22, kSqrt2 * a12}; }

SymMat2 SymMat2::from_voigt(const Eigen::Vector3d& v) { return {v[0], v[1], v[2] / kSqrt2}; }

SymMat2 symmetric_part(const Eigen::Matrix2d& a) {
  return {a(0, 0), a(1, 1), 0.5 * (a(0, 1) + a(1, 0))};
}

double frob_dd(const SymMat2& a, const SymMat2& b) {
  return a.a11 * b.a11 + a.a22 * b.a22 + 2.0 * a.a12 * b.a12;
}

Tensor4Sym::Tensor4Sym(const Eigen::Matrix3d& v) : v_(0.5 * (v + v.transpose())) {}

SymMat2 Tensor4Sym::apply(const SymMat2& a) const {
  return SymMat2::from_voigt(v_ * a.voigt());
}

double Tensor4Sym::operator_norm() const {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(v_, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double Tensor4Sym::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(v_, Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0];
}

Tensor4Sym make_isotropic(const IsoParams& p) {
  ELASTINV_REQUIRE(std::isfinite(p.mu) && p.mu > 0.0, InvalidArgument,
                   "make_isotropic: mu must be positive");
  ELASTINV_REQUIRE(std::isfinite(p.lambda), InvalidArgument,
                   "make_isotropic: lambda must be finite");
  return 2.0 * p.mu * canonical(CanonicalTensor::Ident) +
         p.lambda * canonical(CanonicalTensor::Dilat);
}

Tensor4Sym canonical(CanonicalTensor kind) {
  Eigen::Matrix3d v = Eigen::Matrix3d::Zero();
  switch (kind) {
    case CanonicalTensor::Ident:
      v.setIdentity();
      break;
    case CanonicalTensor::Dilat:
      v.topLeftCorner<2, 2>().setOnes();
      break;
    case CanonicalTensor::C1:
      v(0, 0) = 1.0;
      break;
    case CanonicalTensor::C2:
      v(1, 1) = 1.0;
      break;
    case CanonicalTensor::C3:
      v(2, 2) = 1.0;
      break;
  }
  return Tensor4Sym(v);
}

CanonicalTensor parse_canonical(std::string_view name) {
  if (name == "ident" || name == "I") return CanonicalTensor::Ident;
  if (name == "dilat" || name == "IxI") return CanonicalTensor::Dilat;
  if (name == "c1" || name == "C1") return CanonicalTensor::C1;
  if (name == "c2" || name == "C2") return CanonicalTensor::C2;
  if (name == "c3" || name == "C3") return CanonicalTensor::C3;
  throw InvalidArgument("unknown canonical tensor '" + std::string(name) + "'");
}

std::string_view to_string(CanonicalTensor kind) {
  switch (kind) {
    case CanonicalTensor::Ident: return "ident";
    case CanonicalTensor::Dilat: return "dilat";
    case CanonicalTensor::C1: return "c1";
    case CanonicalTensor::C2: return "c2";
    case CanonicalTensor::C3: return "c3";
  }
  return "?";
}

}  // namespace elastinv
