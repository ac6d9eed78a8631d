#include "mrh2/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

namespace mrh2 {

LowRankFactor::LowRankFactor(DenseMatrix a_, DenseMatrix b_)
    : a(std::move(a_)), b(std::move(b_)) {
  if (a.cols() != b.cols()) {
    throw Error("LowRankFactor: factor column counts differ");
  }
}

void CompressionParams::validate() const {
  if (!(eps_acc >= 0.0) || !(eps_acc <= eps_aca) || !(eps_aca < 1.0)) {
    throw Error("CompressionParams: require 0 <= eps_acc <= eps_aca < 1");
  }
  if (max_rank < 1) {
    throw Error("CompressionParams: max_rank must be >= 1");
  }
}

LowRankFactor aca_factorize(const EntryOracle& entry, Index rows, Index cols,
                            double eps, Index max_rank, std::span<const Index> col_segments) {
  if (rows <= 0 || cols <= 0) {
    return LowRankFactor(std::max<Index>(rows, 0), std::max<Index>(cols, 0));
  }
  const Index full = std::min(rows, cols);
  const Index cap = max_rank > 0 ? std::min(max_rank, full)
                                 : std::min<Index>(full, 200);

  std::vector<Vector> us;
  std::vector<Vector> vs;
  std::vector<bool> row_used(static_cast<std::size_t>(rows), false);
  double norm2 = 0.0;
  double scale = 0.0;  // largest raw entry magnitude sampled so far
  bool converged = false;
  Index next_row = 0;

  std::vector<Index> seg(col_segments.begin(), col_segments.end());
  if (seg.empty() || seg.front() != 0) seg.insert(seg.begin(), 0);
  seg.push_back(cols);
  std::mt19937_64 rng(0x5eedULL + static_cast<std::uint64_t>(rows) * 131 +
                      static_cast<std::uint64_t>(cols));

  // Samples residual columns per segment. Returns the unused row holding the
  // largest sampled residual when the estimate of |R|_F exceeds eps |M_k|_F,
  // otherwise -1.
  auto verify = [&]() -> Index {
    double est2 = 0.0;
    double worst = 0.0;
    Index worst_row = -1;
    Vector c(rows);
    for (std::size_t q = 0; q + 1 < seg.size(); ++q) {
      const Index lo = seg[q];
      const Index width = seg[q + 1] - lo;
      if (width <= 0) continue;
      const Index samples = std::min<Index>(width, 2);
      for (Index s = 0; s < samples; ++s) {
        const Index j = lo + static_cast<Index>(rng() % static_cast<std::uint64_t>(width));
        for (Index r = 0; r < rows; ++r) c(r) = entry(r, j);
        for (std::size_t l = 0; l < us.size(); ++l) c -= vs[l](j) * us[l];
        est2 += c.squaredNorm() * static_cast<double>(width) / static_cast<double>(samples);
        for (Index r = 0; r < rows; ++r) {
          if (row_used[static_cast<std::size_t>(r)]) continue;
          if (std::abs(c(r)) > worst) {
            worst = std::abs(c(r));
            worst_row = r;
          }
        }
      }
    }
    if (est2 <= eps * eps * std::max(norm2, 0.0)) return -1;
    if (worst <= 64.0 * std::numeric_limits<double>::epsilon() * scale) return -1;
    return worst_row;
  };

  auto first_unused = [&]() -> Index {
    for (Index i = 0; i < rows; ++i) {
      if (!row_used[static_cast<std::size_t>(i)]) return i;
    }
    return -1;
  };

  while (static_cast<Index>(us.size()) < cap) {
    const Index i = next_row;
    row_used[static_cast<std::size_t>(i)] = true;

    Vector row(cols);
    for (Index j = 0; j < cols; ++j) row(j) = entry(i, j);
    scale = std::max(scale, row.cwiseAbs().maxCoeff());
    for (std::size_t l = 0; l < us.size(); ++l) row -= us[l](i) * vs[l];

    Index jp = 0;
    const double pivot_abs = row.cwiseAbs().maxCoeff(&jp);
    if (pivot_abs <= 64.0 * std::numeric_limits<double>::epsilon() * scale ||
        pivot_abs == 0.0) {
      // degenerate row: fall back to another unused row
      next_row = first_unused();
      if (next_row < 0) {
        converged = true;
        break;
      }
      continue;
    }

    Vector col(rows);
    for (Index r = 0; r < rows; ++r) col(r) = entry(r, jp);
    scale = std::max(scale, col.cwiseAbs().maxCoeff());
    for (std::size_t l = 0; l < us.size(); ++l) col -= vs[l](jp) * us[l];

    const Complex pivot = row(jp);
    Vector u = col / pivot;
    const double uu = u.squaredNorm();
    const double vv = row.squaredNorm();
    Complex cross = 0.0;
    for (std::size_t l = 0; l < us.size(); ++l) {
      cross += us[l].dot(u) * vs[l].dot(row);
    }
    norm2 += uu * vv + 2.0 * cross.real();
    us.push_back(std::move(u));
    vs.push_back(std::move(row));

    if (std::sqrt(uu * vv) <= eps * std::sqrt(std::max(norm2, 0.0))) {
      next_row = verify();
      if (next_row < 0) {
        converged = true;
        break;
      }
      continue;
    }

    // next pivot row: largest entry of the new column among unused rows
    const Vector& last = us.back();
    double best = -1.0;
    next_row = -1;
    for (Index r = 0; r < rows; ++r) {
      if (row_used[static_cast<std::size_t>(r)]) continue;
      const double m = std::abs(last(r));
      if (m > best) {
        best = m;
        next_row = r;
      }
    }
    if (next_row < 0) {
      converged = true;
      break;
    }
  }

  const Index k = static_cast<Index>(us.size());
  LowRankFactor f(DenseMatrix(rows, k), DenseMatrix(cols, k));
  for (Index l = 0; l < k; ++l) {
    f.a.col(l) = us[static_cast<std::size_t>(l)];
    f.b.col(l) = vs[static_cast<std::size_t>(l)];
  }
  if (!converged && k >= cap && cap < full) {
    throw RankOverflowError("aca_factorize: rank cap " + std::to_string(cap) +
                                " reached before tolerance",
                            std::move(f));
  }
  return f;
}

namespace {

// Thin QR: returns (Q, R) with Q m x min(m,k) and R min(m,k) x k.
std::pair<DenseMatrix, DenseMatrix> thin_qr(const DenseMatrix& x) {
  const Index m = x.rows();
  const Index q = std::min(m, x.cols());
  Eigen::HouseholderQR<DenseMatrix> qr(x);
  DenseMatrix qmat = qr.householderQ() * DenseMatrix::Identity(m, q);
  DenseMatrix r = qr.matrixQR().topRows(q).triangularView<Eigen::Upper>();
  return {std::move(qmat), std::move(r)};
}

}  // namespace

LowRankFactor recompress_lowrank(const LowRankFactor& f, double eps) {
  if (f.rank() == 0 || f.rows() == 0 || f.cols() == 0) {
    return LowRankFactor(f.rows(), f.cols());
  }
  auto [qa, ra] = thin_qr(f.a);
  auto [qb, rb] = thin_qr(f.b);
  const DenseMatrix core = ra * rb.transpose();
  Eigen::JacobiSVD<DenseMatrix> svd(core, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sigma = svd.singularValues();

  // Keep sigma_i above eps sigma_1. sigma_1 survives truncation, so a second
  // pass keeps every retained value.
  const double threshold = eps * sigma(0);
  Index k = 0;
  while (k < sigma.size() && sigma(k) > threshold) ++k;

  DenseMatrix a = qa * (svd.matrixU().leftCols(k) * sigma.head(k).asDiagonal());
  DenseMatrix b = qb * svd.matrixV().leftCols(k).conjugate();
  return LowRankFactor(std::move(a), std::move(b));
}

TruncatedEig trunc_eig_hermitian(const DenseMatrix& g, double eps) {
  if (g.rows() != g.cols()) {
    throw Error("trunc_eig_hermitian: matrix is not square");
  }
  const Index n = g.rows();
  TruncatedEig out;
  if (n == 0) {
    out.p = DenseMatrix(0, 0);
    return out;
  }
  const double gnorm = g.norm();
  if ((g - g.adjoint()).norm() > 1e-12 * std::max(gnorm, 1e-300) && gnorm > 0.0) {
    throw Error("trunc_eig_hermitian: matrix is not Hermitian");
  }
  if (gnorm == 0.0) {
    out.p = DenseMatrix(n, 0);
    return out;
  }
  const DenseMatrix h = 0.5 * (g + g.adjoint());
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(h);
  // ascending from Eigen; reorder descending and clamp round-off negatives
  Eigen::VectorXd lam = es.eigenvalues().reverse().cwiseMax(0.0);
  const double lam1 = lam(0);

  // tail2[k] = sum_{i >= k} lambda_i^2
  std::vector<double> tail2(static_cast<std::size_t>(n) + 1, 0.0);
  for (Index i = n - 1; i >= 0; --i) {
    tail2[static_cast<std::size_t>(i)] = tail2[static_cast<std::size_t>(i) + 1] + lam(i) * lam(i);
  }
  const double frob_budget = eps * eps * gnorm;
  Index k = eps == 0.0 ? n : 0;
  if (lam1 > 0.0 && eps > 0.0) {
    for (k = 0; k < n; ++k) {
      const bool spectral_ok = std::sqrt(lam(k) / lam1) <= eps;
      const bool frob_ok = std::sqrt(tail2[static_cast<std::size_t>(k)]) <= frob_budget;
      if (spectral_ok && frob_ok) break;
    }
  }
  out.p = es.eigenvectors().rowwise().reverse().leftCols(k);
  out.lambda = lam.head(k);
  return out;
}

DenseMatrix dense_lu_invert(const DenseMatrix& m) {
  if (m.rows() != m.cols()) {
    throw Error("dense_lu_invert: matrix is not square");
  }
  const Index n = m.rows();
  if (n == 0) return DenseMatrix(0, 0);
  const double mnorm = m.cwiseAbs().rowwise().sum().maxCoeff();
  Eigen::PartialPivLU<DenseMatrix> lu(m);
  const DenseMatrix& packed = lu.matrixLU();
  for (Index i = 0; i < n; ++i) {
    if (std::abs(packed(i, i)) < 1e-14 * mnorm || mnorm == 0.0) {
      throw SingularMatrixError(
          "dense_lu_invert: pivot " + std::to_string(i) + " below singularity threshold", i);
    }
  }
  return lu.inverse();
}

Eigen::VectorXd singular_values(const DenseMatrix& m) {
  const Index mn = std::min(m.rows(), m.cols());
  Eigen::VectorXd s(mn);
  if (mn == 0) return s;
  DenseMatrix work = m;
  const lapack_int info = LAPACKE_zgesdd(
      LAPACK_COL_MAJOR, 'N', static_cast<lapack_int>(work.rows()),
      static_cast<lapack_int>(work.cols()),
      reinterpret_cast<lapack_complex_double*>(work.data()),
      static_cast<lapack_int>(work.rows()), s.data(), nullptr, 1, nullptr, 1);
  if (info != 0) {
    throw Error("singular_values: zgesdd failed with info " + std::to_string(info));
  }
  return s;
}

Index eps_rank(const Eigen::VectorXd& sigma, double eps) {
  if (sigma.size() == 0 || sigma(0) == 0.0) return 0;
  Index k = 0;
  while (k < sigma.size() && sigma(k) > eps * sigma(0)) ++k;
  return k;
}

}  // namespace mrh2
