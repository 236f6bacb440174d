#include "bearing_align/so3.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace bearing_align {

namespace {

constexpr double kPi = 3.14159265358979323846;

}  // namespace

Matrix3 hat(const Vector3& w) {
    Matrix3 m;
    m << 0.0, -w.z(), w.y(),
         w.z(), 0.0, -w.x(),
         -w.y(), w.x(), 0.0;
    return m;
}

Vector3 vee(const Matrix3& a) {
    const Matrix3 sym = a + a.transpose();
    if (sym.cwiseAbs().maxCoeff() > 1e-9) {
        throw NonSkewError("vee: matrix is not skew-symmetric within 1e-9");
    }
    return Vector3(a(2, 1), a(0, 2), a(1, 0));
}

Rotation exp_so3(const Vector3& w) {
    const double angle = w.norm();
    const Matrix3 k = hat(w);
    Matrix3 m;
    if (angle < 1e-8) {
        // Second-order series; exact to double precision at this angle.
        m = Matrix3::Identity() + k + 0.5 * k * k;
    } else {
        const double s = std::sin(angle) / angle;
        const double c = (1.0 - std::cos(angle)) / (angle * angle);
        m = Matrix3::Identity() + s * k + c * k * k;
    }
    return Rotation::from_matrix_unchecked(m);
}

Rotation rot_x(double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    Matrix3 m;
    m << 1, 0, 0,
         0, c, -s,
         0, s, c;
    return Rotation::from_matrix_unchecked(m);
}

Rotation rot_y(double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    Matrix3 m;
    m << c, 0, s,
         0, 1, 0,
         -s, 0, c;
    return Rotation::from_matrix_unchecked(m);
}

Rotation rot_z(double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    Matrix3 m;
    m << c, -s, 0,
         s, c, 0,
         0, 0, 1;
    return Rotation::from_matrix_unchecked(m);
}

namespace {

// Eigenvector of (a - lambda I) as the largest cross product of two rows.
Vector3 eigenvector_from_rows(const Matrix3& a, double lambda) {
    const Matrix3 m = a - lambda * Matrix3::Identity();
    const Vector3 r0 = m.row(0), r1 = m.row(1), r2 = m.row(2);
    const std::array<Vector3, 3> crosses = {r0.cross(r1), r0.cross(r2), r1.cross(r2)};
    int best = 0;
    double best_norm = crosses[0].squaredNorm();
    for (int i = 1; i < 3; ++i) {
        const double n = crosses[i].squaredNorm();
        if (n > best_norm) {
            best = i;
            best_norm = n;
        }
    }
    if (best_norm <= 0.0) {
        return Vector3::Zero();
    }
    return crosses[best] / std::sqrt(best_norm);
}

void fix_column_signs(Matrix3& u) {
    for (int c = 0; c < 3; ++c) {
        int imax = 0;
        u.col(c).cwiseAbs().maxCoeff(&imax);
        if (u(imax, c) < 0.0) {
            u.col(c) = -u.col(c);
        }
    }
}

}  // namespace

SymEigen3 sym_eigen3(const Matrix3& a_in) {
    const Matrix3 a = 0.5 * (a_in + a_in.transpose());
    SymEigen3 out;

    const double off = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
    const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
    if (off <= (1e-30) * scale * scale) {
        // Already diagonal.
        std::array<std::pair<double, int>, 3> d = {
            std::make_pair(a(0, 0), 0), std::make_pair(a(1, 1), 1), std::make_pair(a(2, 2), 2)};
        std::sort(d.begin(), d.end());
        Matrix3 u = Matrix3::Zero();
        for (int c = 0; c < 3; ++c) {
            out.values(c) = d[c].first;
            u(d[c].second, c) = 1.0;
        }
        out.vectors = u;
        return out;
    }

    // Trigonometric solution of the characteristic cubic.
    const double q = a.trace() / 3.0;
    const Matrix3 b = a - q * Matrix3::Identity();
    const double p2 = b.squaredNorm();  // sum of squares of entries
    const double p = std::sqrt(p2 / 6.0);
    const Matrix3 bn = b / p;
    const double r = std::clamp(bn.determinant() / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;

    const double lam3 = q + 2.0 * p * std::cos(phi);
    const double lam1 = q + 2.0 * p * std::cos(phi + 2.0 * kPi / 3.0);
    const double lam2 = 3.0 * q - lam1 - lam3;
    out.values = Vector3(lam1, lam2, lam3);  // ascending by construction

    // Eigenvector extraction via cross products of shifted rows. The most
    // isolated eigenvalue gets a direct extraction; a clustered pair is
    // resolved inside the orthogonal complement.
    const double gap_low = lam2 - lam1;
    const double gap_high = lam3 - lam2;
    const double cluster_tol = 1e-7 * std::max(scale, 1.0);

    Matrix3 u;
    if (gap_low < cluster_tol && gap_high < cluster_tol) {
        u = Matrix3::Identity();
    } else {
        const int isolated = (gap_low >= gap_high) ? 0 : 2;
        Vector3 v_iso = eigenvector_from_rows(a, out.values(isolated));
        if (v_iso.squaredNorm() == 0.0) {
            v_iso = Vector3::UnitX();
        }
        // Orthonormal basis {s, t} of the complement of v_iso.
        Vector3 s = v_iso.cross(std::abs(v_iso.x()) < 0.9 ? Vector3::UnitX() : Vector3::UnitY());
        s.normalize();
        const Vector3 t = v_iso.cross(s);
        // 2x2 restriction of a to span{s, t}.
        const double a11 = s.dot(a * s);
        const double a12 = s.dot(a * t);
        const double a22 = t.dot(a * t);
        const double half_tr = 0.5 * (a11 + a22);
        const double disc = std::sqrt(std::max(0.25 * (a11 - a22) * (a11 - a22) + a12 * a12, 0.0));
        const double mu_lo = half_tr - disc;
        double cth, sth;
        if (std::abs(a12) > 1e-300) {
            const double d = a11 - mu_lo;
            const double nrm = std::hypot(d, a12);
            cth = -a12 / nrm;
            sth = d / nrm;
        } else {
            cth = (a11 <= a22) ? 1.0 : 0.0;
            sth = (a11 <= a22) ? 0.0 : 1.0;
        }
        const Vector3 v_lo = cth * s + sth * t;
        const Vector3 v_hi = v_iso.cross(v_lo);
        if (isolated == 0) {
            u.col(0) = v_iso;
            u.col(1) = v_lo;
            u.col(2) = v_hi;
        } else {
            u.col(2) = v_iso;
            u.col(0) = v_lo;
            u.col(1) = v_hi;
        }
    }

    // One Rayleigh-quotient pass sharpens the eigenvalues; re-sort in case
    // refinement reorders a tight cluster.
    std::array<std::pair<double, Vector3>, 3> pairs;
    for (int c = 0; c < 3; ++c) {
        const Vector3 v = u.col(c).normalized();
        pairs[c] = {v.dot(a * v), v};
    }
    std::sort(pairs.begin(), pairs.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });
    for (int c = 0; c < 3; ++c) {
        out.values(c) = pairs[c].first;
        u.col(c) = pairs[c].second;
    }

    fix_column_signs(u);
    out.vectors = u;
    return out;
}

Rotation project_to_so3(const Matrix3& a) {
    if (!a.allFinite() || a.determinant() <= 1e-12) {
        throw DegenerateMatrixError("project_to_so3: determinant not positive");
    }
    const SymEigen3 eig = sym_eigen3(a.transpose() * a);
    if (eig.values(0) <= 1e-24) {
        throw DegenerateMatrixError("project_to_so3: matrix is rank deficient");
    }
    Vector3 inv_sqrt;
    for (int i = 0; i < 3; ++i) {
        inv_sqrt(i) = 1.0 / std::sqrt(eig.values(i));
    }
    const Matrix3 m = a * eig.vectors * inv_sqrt.asDiagonal() * eig.vectors.transpose();
    return Rotation::from_matrix_unchecked(m);
}

double frobenius_error(const Rotation& r_a, const Rotation& r_b) {
    return (Matrix3::Identity() - r_a.matrix().transpose() * r_b.matrix()).norm();
}

Rotation sample_uniform_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector3 axis(gauss(rng), gauss(rng), gauss(rng));
    while (axis.norm() < 1e-12) {
        axis = Vector3(gauss(rng), gauss(rng), gauss(rng));
    }
    axis.normalize();

    // Invert the Haar angle CDF F(t) = (t - sin t)/pi by bisection.
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double target = unif(rng) * kPi;
    double lo = 0.0, hi = kPi;
    for (int i = 0; i < 64; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid - std::sin(mid) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    const double angle = 0.5 * (lo + hi);
    return exp_so3(angle * axis);
}

}  // namespace bearing_align
