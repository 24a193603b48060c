#pragma once

#include "evsyn/error.hpp"
#include "evsyn/random.hpp"

#include <Eigen/Core>

#include <cmath>
#include <random>
#include <string>

namespace evsyn {

/// Symmetric 2x2 matrix [[a, b], [b, c]].
template <class Scalar>
struct Sym2 {
    Scalar a{1};
    Scalar b{0};
    Scalar c{1};

    Scalar determinant() const { return a * c - b * b; }
    bool is_zero() const { return a == Scalar(0) && b == Scalar(0) && c == Scalar(0); }

    Eigen::Matrix<Scalar, 2, 2> matrix() const
    {
        Eigen::Matrix<Scalar, 2, 2> m;
        m << a, b, b, c;
        return m;
    }

    static Sym2 from_matrix(const Eigen::Matrix<Scalar, 2, 2>& m)
    {
        return {m(0, 0), Scalar(0.5) * (m(0, 1) + m(1, 0)), m(1, 1)};
    }
};

/// Lower-triangular factor [[u, 0], [v, w]].
template <class Scalar>
struct Chol2 {
    Scalar u{1};
    Scalar v{0};
    Scalar w{1};

    Eigen::Matrix<Scalar, 2, 2> matrix() const
    {
        Eigen::Matrix<Scalar, 2, 2> m;
        m << u, Scalar(0), v, w;
        return m;
    }

    /// D * D^T.
    Sym2<Scalar> reconstruct() const { return {u * u, u * v, v * v + w * w}; }

    Eigen::Matrix<Scalar, 2, 1> apply(const Eigen::Matrix<Scalar, 2, 1>& z) const
    {
        return {u * z(0), v * z(0) + w * z(1)};
    }
};

using Sym2d = Sym2<double>;
using Chol2d = Chol2<double>;

/// Closed-form Cholesky factor of a positive-definite 2x2 matrix.
template <class Scalar>
Chol2<Scalar> cholesky2(const Sym2<Scalar>& m)
{
    using std::sqrt;
    if (!(m.a > Scalar(0)))
        throw DefinitenessError("cholesky2: leading entry a must be positive (a = " + std::to_string(double(m.a)) + ")");
    if (!(m.c > Scalar(0)))
        throw DefinitenessError("cholesky2: trailing entry c must be positive (c = " + std::to_string(double(m.c)) + ")");
    const Scalar schur = m.c - m.b * m.b / m.a;
    if (!(m.determinant() > Scalar(0)) || !(schur > Scalar(0)))
        throw DefinitenessError("cholesky2: a*c - b^2 must be positive (matrix is singular or indefinite)");
    const Scalar u = sqrt(m.a);
    return {u, m.b / u, sqrt(schur)};
}

/// mean + D z with z two independent standard normals and D = cholesky2(cov).
inline Eigen::Vector2d correlated_normal_pair(RandomStream& stream, const Eigen::Vector2d& mean, const Sym2d& cov)
{
    const Chol2d d = cholesky2(cov);
    std::normal_distribution<double> z;
    const double z0 = z(stream);
    const double z1 = z(stream);
    return mean + d.apply(Eigen::Vector2d(z0, z1));
}

} // namespace evsyn
