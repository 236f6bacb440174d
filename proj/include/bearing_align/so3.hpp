#pragma once

#include <random>

#include "bearing_align/types.hpp"

namespace bearing_align {

/// Hat map: w -> skew-symmetric matrix with hat(w) v = w x v.
Matrix3 hat(const Vector3& w);

/// Vee map, inverse of hat. Throws NonSkewError if the symmetry violation
/// of A exceeds 1e-9.
Vector3 vee(const Matrix3& a);

/// Exponential map so(3) -> SO(3) via the Rodrigues closed form, with a
/// second-order series branch below angle 1e-8.
Rotation exp_so3(const Vector3& w);

Rotation rot_x(double angle);
Rotation rot_y(double angle);
Rotation rot_z(double angle);

/// Nearest rotation to A in the Frobenius norm (orthogonal polar factor),
/// computed from a symmetric eigen-solve of A^T A. Throws
/// DegenerateMatrixError if det(A) <= 1e-12.
Rotation project_to_so3(const Matrix3& a);

/// Alignment error ||I - Ra^T Rb||_F, in [0, 2*sqrt(2)].
double frobenius_error(const Rotation& r_a, const Rotation& r_b);

/// Eigen-decomposition of a symmetric 3x3 matrix by the closed-form
/// trigonometric method (characteristic cubic). Eigenvalues ascending;
/// `vectors` holds the corresponding eigenvectors as columns, each with its
/// largest-magnitude component made positive.
struct SymEigen3 {
    Vector3 values;
    Matrix3 vectors;
};
SymEigen3 sym_eigen3(const Matrix3& a);

/// Rotation drawn from the Haar (uniform) distribution on SO(3): uniform
/// axis and rotation angle with density (1 - cos t)/pi on [0, pi].
Rotation sample_uniform_rotation(std::mt19937_64& rng);

}  // namespace bearing_align
