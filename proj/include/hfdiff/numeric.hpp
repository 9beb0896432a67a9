#pragma once

#include <functional>
#include <optional>

#include <Eigen/Dense>

namespace hfdiff {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using ScalarFn = std::function<double(const Vector&)>;
using VectorFn = std::function<Vector(const Vector&)>;

// Closed box used to keep finite-difference stencils inside a parameter
// domain. Steps are shrunk to the distance to the nearest face; a point
// sitting on a face keeps the nominal step.
struct StencilBox {
  Vector lower;
  Vector upper;
};

// Central-difference gradient, step cbrt(eps) * max(1, |x_i|).
Vector numeric_gradient(const ScalarFn& f, const Vector& at,
                        const std::optional<StencilBox>& box = std::nullopt);

// Central-difference Hessian, step eps^(1/4) * max(1, |x_i|), returned
// symmetrized as (H + H^T) / 2.
Matrix numeric_hessian(const ScalarFn& f, const Vector& at,
                       const std::optional<StencilBox>& box = std::nullopt);

// Column k is the central difference of f along coordinate k.
Matrix numeric_jacobian(const VectorFn& f, const Vector& at);

}  // namespace hfdiff
