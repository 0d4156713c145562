#pragma once

#include <functional>
#include <span>
#include <vector>

namespace fedveca {

// Flat vector of 64-bit model coordinates. Holds global parameters w_k,
// local parameters, gradients and descent directions alike.
using ParamVector = std::vector<double>;

// Inner product accumulated in fixed index order.
double dot(std::span<const double> a, std::span<const double> b);

double l2_norm(std::span<const double> v);

// Returns y + alpha * x. Inputs are not modified.
ParamVector axpy(double alpha, std::span<const double> x, std::span<const double> y);

// y += alpha * x
void axpy_inplace(double alpha, std::span<const double> x, ParamVector& y);

bool all_finite(std::span<const double> v);

// Throws NumericalError naming `what` if any entry is NaN or infinite.
void check_finite(std::span<const double> v, const char* what);

// Central-difference gradient, (f(w + h e_j) - f(w - h e_j)) / (2h) per
// coordinate. Test oracle for analytic gradients.
ParamVector finite_diff_grad(const std::function<double(const ParamVector&)>& f,
                             const ParamVector& w, double h);

}  // namespace fedveca
