#include "ccam/gradcheck.hpp"

#include <cmath>

namespace ccam {

namespace {

GradientComparison compare_section(std::string name, const Matrix& a, const Matrix& n,
                                   double floor) {
    if (a.rows() != n.rows() || a.cols() != n.cols()) {
        throw std::invalid_argument("compare_gradients: section " + name + " shapes " +
                                    shape_of(a) + " vs " + shape_of(n));
    }
    GradientComparison c{std::move(name)};
    for (Index k = 0; k < a.size(); ++k) {
        const double abs_err = std::abs(a.data()[k] - n.data()[k]);
        c.max_absolute_error = std::max(c.max_absolute_error, abs_err);
        if (std::abs(a.data()[k]) > floor) {
            c.max_relative_error =
                std::max(c.max_relative_error, abs_err / std::abs(a.data()[k]));
            ++c.checked;
        }
    }
    return c;
}

}  // namespace

std::vector<GradientComparison> compare_gradients(const Gradients<double>& analytic,
                                                  const Gradients<double>& numeric,
                                                  double floor) {
    std::vector<const Matrix*> numeric_sections;
    numeric.for_each([&](std::string_view, const Matrix& m) { numeric_sections.push_back(&m); });
    std::vector<GradientComparison> out;
    std::size_t k = 0;
    analytic.for_each([&](std::string_view name, const Matrix& m) {
        out.push_back(compare_section(std::string(name), m, *numeric_sections[k++], floor));
    });
    out.push_back(compare_section("frames", analytic.frames, numeric.frames, floor));
    return out;
}

}  // namespace ccam
