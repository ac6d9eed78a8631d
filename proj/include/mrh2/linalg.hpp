#pragma once
//
// Dense complex primitives used by the H2 construction and its verification:
// adaptive cross approximation, low-rank recompression, truncated Hermitian
// eigendecomposition and dense inversion.
//

#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mrh2 {

using Index = Eigen::Index;
using Complex = std::complex<double>;
using DenseMatrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

/// Base class of all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Entry oracle over local (row, col) indices of a block. Must be reentrant.
using EntryOracle = std::function<Complex(Index, Index)>;

/// Factorization a * b^T of a #t x #s block.
struct LowRankFactor {
  DenseMatrix a;  // #t x k
  DenseMatrix b;  // #s x k

  LowRankFactor() = default;
  LowRankFactor(Index rows, Index cols) : a(rows, 0), b(cols, 0) {}
  LowRankFactor(DenseMatrix a_, DenseMatrix b_);

  Index rank() const { return a.cols(); }
  Index rows() const { return a.rows(); }
  Index cols() const { return b.rows(); }

  DenseMatrix dense() const { return a * b.transpose(); }
};

struct CompressionParams {
  double eps_aca = 1e-4;
  double eps_acc = 1e-4;
  Index max_rank = 200;

  // throws Error when 0 <= eps_acc <= eps_aca < 1 or max_rank >= 1 is violated;
  // zero tolerances disable truncation
  void validate() const;
};

/// Raised when ACA hits its rank cap before reaching the tolerance.
class RankOverflowError : public Error {
 public:
  RankOverflowError(const std::string& what, LowRankFactor partial)
      : Error(what), partial_(std::move(partial)) {}
  const LowRankFactor& partial() const { return partial_; }

 private:
  LowRankFactor partial_;
};

/// Raised by dense inversion when a pivot falls below the singularity threshold.
class SingularMatrixError : public Error {
 public:
  SingularMatrixError(const std::string& what, Index pivot)
      : Error(what), pivot_(pivot) {}
  Index pivot() const { return pivot_; }

 private:
  Index pivot_;
};

/// Partially pivoted ACA of a rows x cols block.
///
/// Stops once |a_k| |b_k| <= eps * |M_k|_F, where |M_k|_F is the incrementally
/// updated Frobenius norm of the accumulated cross approximation. Rows whose
/// residual vanishes are skipped; the iteration ends when no unused row with a
/// nonzero residual remains. max_rank <= 0 selects min(rows, cols, 200).
///
/// Before accepting convergence the residual is sampled in a few columns of
/// every column segment (segments start at the given offsets; empty means one
/// segment). If the sampled residual exceeds the tolerance, pivoting resumes
/// from the worst sampled column. This catches blocks that the pivot path
/// never touched, which happens for horizontally grouped blocks.
LowRankFactor aca_factorize(const EntryOracle& entry, Index rows, Index cols,
                            double eps, Index max_rank = 0,
                            std::span<const Index> col_segments = {});

/// Truncated SVD of a * b^T through thin QR of both factors and an SVD of the
/// k x k core. Singular values at or below eps * sigma_1 are dropped.
LowRankFactor recompress_lowrank(const LowRankFactor& f, double eps);

struct TruncatedEig {
  DenseMatrix p;  // n x k, orthonormal columns, eigenvalues descending
  Eigen::VectorXd lambda;  // the k retained eigenvalues
  Index k() const { return p.cols(); }
};

/// Truncated eigendecomposition of a Hermitian positive semidefinite matrix.
///
/// k is the smallest count for which sqrt(lambda_{k+1} / lambda_1) <= eps and
/// the discarded part has Frobenius norm <= eps^2 |g|_F. eps = 0 keeps all n.
TruncatedEig trunc_eig_hermitian(const DenseMatrix& g, double eps);

/// Inverse via LU with partial pivoting.
DenseMatrix dense_lu_invert(const DenseMatrix& m);

/// Singular values of a dense matrix, descending.
Eigen::VectorXd singular_values(const DenseMatrix& m);

/// Number of singular values above eps * sigma_1.
Index eps_rank(const Eigen::VectorXd& sigma, double eps);

}  // namespace mrh2
