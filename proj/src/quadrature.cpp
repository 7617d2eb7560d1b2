#include "nmqsd/quadrature.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "nmqsd/errors.hpp"

namespace nmqsd {

double gregory_weight(int panels, int i) {
    if (i < 0 || i > panels) {
        return 0.0;
    }
    switch (panels) {
    case 0: return 0.0;
    case 1: return 0.5;
    case 2: return i == 1 ? 4.0 / 3.0 : 1.0 / 3.0;
    case 3: return (i == 0 || i == 3) ? 3.0 / 8.0 : 9.0 / 8.0;
    case 4: {
        static constexpr std::array<double, 5> boole{14.0 / 45.0, 64.0 / 45.0, 24.0 / 45.0,
                                                     64.0 / 45.0, 14.0 / 45.0};
        return boole[static_cast<std::size_t>(i)];
    }
    default: break;
    }
    switch (std::min(i, panels - i)) {
    case 0: return 3.0 / 8.0;
    case 1: return 7.0 / 6.0;
    case 2: return 23.0 / 24.0;
    default: return 1.0;
    }
}

void line_weights(int n, std::span<const int> kinks, double r, std::vector<double>& w,
                  double& w_extra) {
    if (n < 0 || r < 0.0 || r > 1.0) {
        throw ValidationError("oop-coefficients", "line_weights: bad node count or offset");
    }
    w.assign(static_cast<std::size_t>(n) + 1, 0.0);
    w_extra = 0.0;

    std::array<int, 8> cuts{};
    std::size_t ncut = 0;
    cuts[ncut++] = 0;
    int last_kink = 0;
    for (int k : kinks) {
        if (k > 0 && k < n) {
            if (ncut + 1 >= cuts.size()) {
                throw ValidationError("oop-coefficients", "line_weights: too many kinks");
            }
            cuts[ncut++] = k;
        }
        if (k <= n) {
            last_kink = std::max(last_kink, k);
        }
    }
    std::sort(cuts.begin() + 1, cuts.begin() + static_cast<std::ptrdiff_t>(ncut));
    cuts[ncut++] = n;
    for (std::size_t c = 0; c + 1 < ncut; ++c) {
        const int a = cuts[c];
        const int m = cuts[c + 1] - a;
        for (int i = 0; i <= m; ++i) {
            w[static_cast<std::size_t>(a + i)] += gregory_weight(m, i);
        }
    }
    if (r == 0.0) {
        return;
    }
    // Partial panel: Lagrange interpolant through x = lo-n, ..., 0 and x = r,
    // integrated over [0, r] by two-point Gauss-Legendre (exact for cubics).
    const int lo = std::max({0, n - 2, last_kink});
    const int q = n - lo + 1;
    std::array<double, 4> x{};
    for (int j = 0; j < q; ++j) {
        x[static_cast<std::size_t>(j)] = static_cast<double>(lo + j - n);
    }
    x[static_cast<std::size_t>(q)] = r;
    const double g = 0.5 / std::sqrt(3.0);
    const std::array<double, 2> gauss{r * (0.5 - g), r * (0.5 + g)};
    for (int j = 0; j <= q; ++j) {
        double integral = 0.0;
        for (double u : gauss) {
            double basis = 1.0;
            for (int k = 0; k <= q; ++k) {
                if (k != j) {
                    basis *= (u - x[static_cast<std::size_t>(k)]) /
                             (x[static_cast<std::size_t>(j)] - x[static_cast<std::size_t>(k)]);
                }
            }
            integral += 0.5 * r * basis;
        }
        if (j < q) {
            w[static_cast<std::size_t>(lo + j)] += integral;
        } else {
            w_extra += integral;
        }
    }
}

void trapezoid_weights(int n, std::vector<double>& w) {
    w.assign(static_cast<std::size_t>(n) + 1, n == 0 ? 0.0 : 1.0);
    if (n > 0) {
        w.front() = 0.5;
        w.back() = 0.5;
    }
}

} // namespace nmqsd
