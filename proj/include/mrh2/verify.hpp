#pragma once
//
// Structural properties of an H2 matrix and comparisons against dense
// oracles. Used by the verify subcommand and the acceptance suite.
//
#include <cstdint>
#include <string>
#include <vector>

#include "mrh2/h2_matrix.hpp"

namespace mrh2 {

struct Check {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  bool pass() const { return value <= bound; }
};

/// max over clusters of |V^H V - I|_F / max(k, 1).
double basis_orthonormality(const ClusterBasis& basis);

/// Largest deviation between the transfer of a child c of t and V_c^H V_t|c,
/// together with the part of V_t|c outside the range of V_c.
double nestedness_defect(const ClusterBasis& basis);

/// |sum over leaves of #t #s - N^2|, plus one for every subdivided node whose
/// children do not partition it.
double tiling_defect(const BlockClusterTree& bt);

/// Number of admissible leaves that violate the admissibility condition.
Index admissibility_violations(const BlockClusterTree& bt);

/// |m(a x + b y) - (a m x + b m y)| / |a m x + b m y| for random data.
double matvec_linearity(const H2Matrix& m, std::uint64_t seed);

/// max over samples of |m x - d x| / |d x|, d dense in original ordering.
double matvec_error(const H2Matrix& m, const DenseMatrix& d, int samples, std::uint64_t seed);

/// max over samples of |(a * b) x - a (b x)| / |a (b x)| for the formatted product.
double product_error(const H2Matrix& a, const H2Matrix& b, int samples, std::uint64_t seed);

/// |inv e - lu_solve(d, e)| / |lu_solve(d, e)|.
double direct_solve_error(const H2Matrix& inv, const DenseMatrix& d, const Vector& e);

/// The structural checks above with their thresholds.
std::vector<Check> structural_checks(const H2Matrix& m);

/// Dense oracle checks at tolerance eps_acc; `d` is the dense operator.
std::vector<Check> oracle_checks(const H2Matrix& m, const DenseMatrix& d, const Vector& e,
                                 double eps_acc, std::uint64_t seed);

}  // namespace mrh2
