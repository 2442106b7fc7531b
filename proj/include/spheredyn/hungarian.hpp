// hungarian.hpp - exact O(n^3) assignment solver (Kuhn-Munkres with
// potentials, e-maxx formulation).
#pragma once

#include <Eigen/Dense>
#include <vector>

namespace spheredyn {

// Returns row_to_col: row i is matched to column row_to_col[i], minimizing
// the total cost over all permutations. cost must be square.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

}  // namespace spheredyn
