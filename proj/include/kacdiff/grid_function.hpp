#pragma once

#include <span>
#include <string>
#include <vector>

namespace kacdiff {

enum class Interpolation { Linear, Cubic };

/// Tabulated real function on a strictly increasing grid.
///
/// Cubic interpolation is piecewise cubic Hermite. When node derivatives are
/// supplied they are used as-is; otherwise they are estimated by second-order
/// finite differences on the (possibly nonuniform) grid. Evaluation outside
/// [xs.front(), xs.back()] throws InterpolationError.
class GridFunction {
public:
    GridFunction() = default;
    GridFunction(std::vector<double> xs, std::vector<double> ys,
                 Interpolation interp = Interpolation::Cubic);
    GridFunction(std::vector<double> xs, std::vector<double> ys, std::vector<double> slopes);

    double operator()(double x) const;
    double derivative(double x) const;

    std::span<const double> xs() const noexcept { return xs_; }
    std::span<const double> ys() const noexcept { return ys_; }
    std::span<const double> slopes() const noexcept { return slopes_; }
    Interpolation interpolation() const noexcept { return interp_; }
    std::size_t size() const noexcept { return xs_.size(); }
    bool empty() const noexcept { return xs_.empty(); }
    double front() const { return xs_.front(); }
    double back() const { return xs_.back(); }

    /// Index i with xs[i] <= x <= xs[i+1] (x must be inside the grid).
    std::size_t locate(double x) const;

private:
    void validate() const;
    void estimate_slopes();

    std::vector<double> xs_;
    std::vector<double> ys_;
    std::vector<double> slopes_;
    Interpolation interp_ = Interpolation::Cubic;
};

}  // namespace kacdiff
