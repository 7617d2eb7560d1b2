#pragma once

// Grid quadrature used by the coefficient integrator. All weights are in
// units of the grid step h.

#include <span>
#include <vector>

namespace nmqsd {

/// Weight of node i (0..panels) in a composite rule over `panels` equal panels:
/// trapezoid (1), Simpson (2), 3/8 (3), Boole (4), and the fourth-order
/// Gregory end-corrected trapezoid for 5 or more panels.
double gregory_weight(int panels, int i);

/// Weights for the integral over [0, t_n + r h] of a function sampled at grid
/// nodes 0..n and at the extra node t_n + r h (0 <= r <= 1).
///
/// The function may have a kink at each grid index in `kinks`; [0, t_n] is split
/// there and each piece gets its own composite rule. The partial panel
/// [t_n, t_n + r h] integrates the polynomial through the extra node and up to
/// three grid nodes on the same side of the last kink.
/// On return w has n + 1 entries and w_extra holds the weight of the extra node.
void line_weights(int n, std::span<const int> kinks, double r, std::vector<double>& w,
                  double& w_extra);

/// Trapezoid weights for [0, t_n]: 1/2 at both ends, 1 inside (w has n + 1 entries).
void trapezoid_weights(int n, std::vector<double>& w);

} // namespace nmqsd
