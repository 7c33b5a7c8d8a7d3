#pragma once

// Small dense complex linear algebra used throughout: spin-1/2 operators,
// closed-form SU(2) propagators and Hermitian matrix exponentials.
//
// Frequency convention: every Hamiltonian is expressed in Hz and every
// propagator is exp(-i 2 pi H t).

#include <cmath>
#include <complex>
#include <numbers>

#include <Eigen/Dense>

namespace qmn {

using cplx = std::complex<double>;
using Mat2 = Eigen::Matrix2cd;
using Mat4 = Eigen::Matrix4cd;
using MatX = Eigen::MatrixXcd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr cplx kI{0.0, 1.0};

namespace spin {

inline Mat2 identity() { return Mat2::Identity(); }

inline Mat2 sigma_x() {
  Mat2 m;
  m << 0.0, 1.0, 1.0, 0.0;
  return m;
}

inline Mat2 sigma_y() {
  Mat2 m;
  m << 0.0, -kI, kI, 0.0;
  return m;
}

inline Mat2 sigma_z() {
  Mat2 m;
  m << 1.0, 0.0, 0.0, -1.0;
  return m;
}

inline Mat2 Ix() { return 0.5 * sigma_x(); }
inline Mat2 Iy() { return 0.5 * sigma_y(); }
inline Mat2 Iz() { return 0.5 * sigma_z(); }

/// exp(-i theta I_n) for a unit axis n. Spin-1/2 rotation by angle theta.
inline Mat2 rotation(const Vec3& axis, double theta) {
  const double c = std::cos(0.5 * theta);
  const double s = std::sin(0.5 * theta);
  Mat2 m;
  m << cplx(c, -s * axis.z()), cplx(-s * axis.y(), -s * axis.x()),
      cplx(s * axis.y(), -s * axis.x()), cplx(c, s * axis.z());
  return m;
}

/// Rotation about an equatorial axis at azimuth phi.
inline Mat2 rotation_xy(double phi, double theta) {
  return rotation(Vec3(std::cos(phi), std::sin(phi), 0.0), theta);
}

inline Mat2 rotation_z(double theta) { return rotation(Vec3::UnitZ(), theta); }

}  // namespace spin

/// exp(-i 2 pi t (f . I)) with f a field vector in Hz. Exact closed form.
inline Mat2 field_propagator(const Vec3& field_hz, double t) {
  const double norm = field_hz.norm();
  if (norm == 0.0) return Mat2::Identity();
  return spin::rotation(field_hz / norm, kTwoPi * norm * t);
}

/// Pauli decomposition of a 2x2 Hermitian matrix: h = c0 * 1 + f . I.
struct PauliForm {
  double c0 = 0.0;
  Vec3 field = Vec3::Zero();
};

inline PauliForm pauli_form(const Mat2& h) {
  PauliForm p;
  p.c0 = 0.5 * (h(0, 0).real() + h(1, 1).real());
  p.field.x() = 2.0 * h(1, 0).real();
  p.field.y() = 2.0 * h(1, 0).imag();
  p.field.z() = h(0, 0).real() - h(1, 1).real();
  return p;
}

/// exp(-i 2 pi H t) for Hermitian 2x2 H (Hz), closed form via Pauli decomposition.
inline Mat2 propagator(const Mat2& h, double t) {
  const PauliForm p = pauli_form(h);
  return std::exp(-kI * (kTwoPi * p.c0 * t)) * field_propagator(p.field, t);
}

/// Spectral form of a Hermitian operator, reusable for many evolution times.
template <typename Matrix>
class HermitianSpectrum {
 public:
  explicit HermitianSpectrum(const Matrix& h) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(h);
    vectors_ = solver.eigenvectors();
    values_ = solver.eigenvalues();
  }

  /// exp(-i 2 pi H t)
  Matrix propagator(double t) const {
    Matrix diag = Matrix::Zero(vectors_.rows(), vectors_.cols());
    for (Eigen::Index i = 0; i < values_.size(); ++i)
      diag(i, i) = std::exp(-kI * (kTwoPi * values_(i) * t));
    return vectors_ * diag * vectors_.adjoint();
  }

  const auto& eigenvalues() const { return values_; }

 private:
  Matrix vectors_;
  typename Eigen::SelfAdjointEigenSolver<Matrix>::RealVectorType values_;
};

template <typename Matrix>
Matrix hermitian_propagator(const Matrix& h, double t) {
  return HermitianSpectrum<Matrix>(h).propagator(t);
}

/// max |U^dagger U - 1| entrywise.
template <typename Matrix>
double unitarity_error(const Matrix& u) {
  const Matrix g = u.adjoint() * u;
  return (g - Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

template <typename Matrix>
double hermiticity_error(const Matrix& h) {
  return (h - h.adjoint()).cwiseAbs().maxCoeff();
}

inline MatX kron(const MatX& a, const MatX& b) {
  MatX out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// |Tr(A^dagger B)| / d
template <typename Matrix>
double trace_overlap(const Matrix& a, const Matrix& b) {
  return std::abs((a.adjoint() * b).trace()) / static_cast<double>(a.rows());
}

}  // namespace qmn
