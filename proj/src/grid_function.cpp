#include "kacdiff/grid_function.hpp"

#include <algorithm>
#include <cmath>

#include "kacdiff/errors.hpp"

namespace kacdiff {

GridFunction::GridFunction(std::vector<double> xs, std::vector<double> ys, Interpolation interp)
    : xs_(std::move(xs)), ys_(std::move(ys)), interp_(interp) {
    validate();
    if (interp_ == Interpolation::Cubic) estimate_slopes();
}

GridFunction::GridFunction(std::vector<double> xs, std::vector<double> ys, std::vector<double> slopes)
    : xs_(std::move(xs)), ys_(std::move(ys)), slopes_(std::move(slopes)), interp_(Interpolation::Cubic) {
    validate();
    if (slopes_.size() != xs_.size())
        throw InterpolationError("GridFunction: slopes must match the grid length");
}

void GridFunction::validate() const {
    if (xs_.size() != ys_.size()) throw InterpolationError("GridFunction: xs and ys differ in length");
    if (xs_.size() < 2) throw InterpolationError("GridFunction: need at least two nodes");
    for (std::size_t i = 1; i < xs_.size(); ++i)
        if (!(xs_[i] > xs_[i - 1])) throw InterpolationError("GridFunction: xs must be strictly increasing");
}

void GridFunction::estimate_slopes() {
    const std::size_t n = xs_.size();
    slopes_.assign(n, 0.0);
    if (n == 2) {
        slopes_[0] = slopes_[1] = (ys_[1] - ys_[0]) / (xs_[1] - xs_[0]);
        return;
    }
    // Three-point derivative of the interpolating parabola at node `at`.
    auto parabola = [&](std::size_t i0, std::size_t at) {
        const double x0 = xs_[i0], x1 = xs_[i0 + 1], x2 = xs_[i0 + 2];
        const double y0 = ys_[i0], y1 = ys_[i0 + 1], y2 = ys_[i0 + 2];
        const double x = xs_[at];
        return y0 * ((x - x1) + (x - x2)) / ((x0 - x1) * (x0 - x2)) +
               y1 * ((x - x0) + (x - x2)) / ((x1 - x0) * (x1 - x2)) +
               y2 * ((x - x0) + (x - x1)) / ((x2 - x0) * (x2 - x1));
    };
    slopes_[0] = parabola(0, 0);
    for (std::size_t i = 1; i + 1 < n; ++i) slopes_[i] = parabola(i - 1, i);
    slopes_[n - 1] = parabola(n - 3, n - 1);
}

std::size_t GridFunction::locate(double x) const {
    if (!(x >= xs_.front() && x <= xs_.back()))
        throw InterpolationError("GridFunction: x = " + std::to_string(x) + " outside [" +
                                 std::to_string(xs_.front()) + ", " + std::to_string(xs_.back()) + "]");
    auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    std::size_t i = static_cast<std::size_t>(it - xs_.begin());
    if (i == 0) return 0;
    return std::min(i - 1, xs_.size() - 2);
}

double GridFunction::operator()(double x) const {
    const std::size_t i = locate(x);
    const double h = xs_[i + 1] - xs_[i];
    const double t = (x - xs_[i]) / h;
    if (interp_ == Interpolation::Linear) return ys_[i] + t * (ys_[i + 1] - ys_[i]);
    const double t2 = t * t, t3 = t2 * t;
    const double h00 = 2 * t3 - 3 * t2 + 1;
    const double h10 = t3 - 2 * t2 + t;
    const double h01 = -2 * t3 + 3 * t2;
    const double h11 = t3 - t2;
    return h00 * ys_[i] + h10 * h * slopes_[i] + h01 * ys_[i + 1] + h11 * h * slopes_[i + 1];
}

double GridFunction::derivative(double x) const {
    const std::size_t i = locate(x);
    const double h = xs_[i + 1] - xs_[i];
    const double t = (x - xs_[i]) / h;
    if (interp_ == Interpolation::Linear) return (ys_[i + 1] - ys_[i]) / h;
    const double t2 = t * t;
    const double d00 = (6 * t2 - 6 * t) / h;
    const double d10 = 3 * t2 - 4 * t + 1;
    const double d01 = (-6 * t2 + 6 * t) / h;
    const double d11 = 3 * t2 - 2 * t;
    return d00 * ys_[i] + d10 * slopes_[i] + d01 * ys_[i + 1] + d11 * slopes_[i + 1];
}

}  // namespace kacdiff
