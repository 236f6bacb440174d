#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace bearing_align {

using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;

// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct NonSkewError : Error {
    using Error::Error;
};
struct NotARotationError : Error {
    using Error::Error;
};
struct DegenerateMatrixError : Error {
    using Error::Error;
};
struct CollocatedError : Error {
    using Error::Error;
};
struct DegenerateCrossError : Error {
    using Error::Error;
};
struct MissingMeasurementError : Error {
    using Error::Error;
};
struct DegenerateSpectrumError : Error {
    using Error::Error;
};
struct NonFiniteError : Error {
    using Error::Error;
};
struct DivergedError : Error {
    using Error::Error;
};
struct SearchFailedError : Error {
    using Error::Error;
};
struct ParseError : Error {
    using Error::Error;
};
struct ValidationError : Error {
    using Error::Error;
};

/// Coordinate frame tag: the global frame or the body frame of one agent.
class Frame {
public:
    static Frame global() { return Frame(0); }
    static Frame body(int agent_id) { return Frame(agent_id); }

    bool is_global() const { return agent_ == 0; }
    int agent() const { return agent_; }

    friend bool operator==(const Frame& a, const Frame& b) { return a.agent_ == b.agent_; }
    friend bool operator!=(const Frame& a, const Frame& b) { return !(a == b); }

private:
    explicit Frame(int agent) : agent_(agent) {}
    int agent_;  // 0 = global
};

/// Unit-norm direction tagged with the frame it is expressed in.
class UnitVector3 {
public:
    // Requires ||v|| = 1 within 1e-12.
    UnitVector3(const Vector3& v, Frame frame) : v_(v), frame_(frame) {
        if (std::abs(v.norm() - 1.0) > 1e-12) {
            throw Error("UnitVector3: vector is not unit norm");
        }
    }

    /// Normalizes v; throws DegenerateCrossError below the given norm floor.
    static UnitVector3 normalized(const Vector3& v, Frame frame, double min_norm = 1e-12) {
        const double n = v.norm();
        if (n <= min_norm) {
            throw DegenerateCrossError("UnitVector3: cannot normalize near-zero vector");
        }
        return UnitVector3(v / n, frame, unchecked_tag{});
    }

    const Vector3& vec() const { return v_; }
    Frame frame() const { return frame_; }

private:
    struct unchecked_tag {};
    UnitVector3(const Vector3& v, Frame frame, unchecked_tag) : v_(v), frame_(frame) {}

    Vector3 v_;
    Frame frame_;
};

/// Element of SO(3): orthogonal 3x3 matrix with determinant +1.
/// Invariants checked on construction: m^T m = I within 1e-9 entrywise,
/// det(m) = 1 within 1e-9.
class Rotation {
public:
    Rotation() : m_(Matrix3::Identity()) {}

    static Rotation identity() { return Rotation(); }

    static Rotation from_matrix(const Matrix3& m) {
        if (!is_rotation(m)) {
            throw NotARotationError("Rotation: matrix violates SO(3) invariants");
        }
        return Rotation(m);
    }

    // For internal use where validity is guaranteed by construction.
    static Rotation from_matrix_unchecked(const Matrix3& m) { return Rotation(m); }

    static bool is_rotation(const Matrix3& m, double tol = 1e-9) {
        if (!m.allFinite()) return false;
        const Matrix3 gram = m.transpose() * m - Matrix3::Identity();
        return gram.cwiseAbs().maxCoeff() <= tol && std::abs(m.determinant() - 1.0) <= tol;
    }

    const Matrix3& matrix() const { return m_; }

    Rotation transposed() const { return Rotation(m_.transpose()); }

    Vector3 operator*(const Vector3& v) const { return m_ * v; }
    Rotation operator*(const Rotation& other) const { return Rotation(m_ * other.m_); }

private:
    explicit Rotation(const Matrix3& m) : m_(m) {}
    Matrix3 m_;
};

/// State of one agent: orientation and body-frame angular velocity (rad/s).
struct AgentState {
    Rotation R;
    Vector3 w = Vector3::Zero();
};

}  // namespace bearing_align
