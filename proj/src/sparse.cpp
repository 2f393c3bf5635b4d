#include "maxhmm/sparse.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

namespace maxhmm {

namespace {

double norm2(const CVector& x) {
  double s = 0.0;
  for (const Complex& v : x) s += std::norm(v);
  return std::sqrt(s);
}

Complex dot_h(const CVector& x, const CVector& y) {  // conj(x) . y
  Complex s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::conj(x[i]) * y[i];
  return s;
}

using ESpMat = Eigen::SparseMatrix<Complex>;

ESpMat to_eigen(const SparseMatrix& A) {
  std::vector<Eigen::Triplet<Complex>> ts;
  ts.reserve(A.nnz());
  for (int i = 0; i < A.rows; ++i)
    for (int p = A.row_ptr[i]; p < A.row_ptr[i + 1]; ++p)
      ts.emplace_back(i, A.col[p], A.val[p]);
  ESpMat M(A.rows, A.cols);
  M.setFromTriplets(ts.begin(), ts.end());
  M.makeCompressed();
  return M;
}

void check_square_nonempty_rows(const SparseMatrix& A) {
  if (A.rows != A.cols) throw SolverError("direct_solve: matrix must be square");
  for (int i = 0; i < A.rows; ++i) {
    bool nonzero = false;
    for (int p = A.row_ptr[i]; p < A.row_ptr[i + 1]; ++p)
      if (A.val[p] != Complex(0.0)) {
        nonzero = true;
        break;
      }
    if (!nonzero)
      throw SingularMatrixError(
          "direct_solve: matrix is singular, row " + std::to_string(i) + " is zero", i);
  }
}

}  // namespace

Complex SparseMatrix::coeff(int i, int j) const {
  for (int p = row_ptr[i]; p < row_ptr[i + 1]; ++p)
    if (col[p] == j) return val[p];
  return Complex(0.0);
}

SparseMatrix SparseMatrix::from_triplets(int rows, int cols, std::vector<Triplet>& ts,
                                         bool keep_zeros) {
  std::sort(ts.begin(), ts.end(), [](const Triplet& a, const Triplet& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });

  SparseMatrix A;
  A.rows = rows;
  A.cols = cols;
  A.row_ptr.assign(rows + 1, 0);
  A.col.reserve(ts.size());
  A.val.reserve(ts.size());

  std::size_t p = 0;
  for (int i = 0; i < rows; ++i) {
    while (p < ts.size() && ts[p].i == i) {
      const int j = ts[p].j;
      Complex v = 0.0;
      while (p < ts.size() && ts[p].i == i && ts[p].j == j) v += ts[p++].v;
      if (keep_zeros || v != Complex(0.0)) {
        A.col.push_back(j);
        A.val.push_back(v);
      }
    }
    A.row_ptr[i + 1] = static_cast<int>(A.col.size());
  }
  return A;
}

void spmv(const SparseMatrix& A, const CVector& x, CVector& y) {
  y.assign(A.rows, Complex(0.0));
  for (int i = 0; i < A.rows; ++i) {
    Complex s = 0.0;
    for (int p = A.row_ptr[i]; p < A.row_ptr[i + 1]; ++p) s += A.val[p] * x[A.col[p]];
    y[i] = s;
  }
}

CVector spmv(const SparseMatrix& A, const CVector& x) {
  CVector y;
  spmv(A, x, y);
  return y;
}

SparseMatrix linear_combination(Complex a, const SparseMatrix& A, Complex b,
                                const SparseMatrix& B) {
  if (A.rows != B.rows || A.cols != B.cols || A.row_ptr != B.row_ptr || A.col != B.col)
    throw SolverError("linear_combination: sparsity patterns differ");
  SparseMatrix C = A;
  for (std::size_t p = 0; p < C.val.size(); ++p) C.val[p] = a * A.val[p] + b * B.val[p];
  return C;
}

SparseMatrix matrix_sum(Complex a, const SparseMatrix& A, Complex b,
                        const SparseMatrix& B) {
  if (A.rows != B.rows || A.cols != B.cols)
    throw SolverError("matrix_sum: shapes differ");
  std::vector<Triplet> ts;
  ts.reserve(A.val.size() + B.val.size());
  for (int i = 0; i < A.rows; ++i)
    for (int p = A.row_ptr[i]; p < A.row_ptr[i + 1]; ++p)
      ts.push_back({i, A.col[p], a * A.val[p]});
  for (int i = 0; i < B.rows; ++i)
    for (int p = B.row_ptr[i]; p < B.row_ptr[i + 1]; ++p)
      ts.push_back({i, B.col[p], b * B.val[p]});
  return SparseMatrix::from_triplets(A.rows, A.cols, ts, true);
}

struct SparseLUFactor::Impl {
  SparseMatrix A;
  Eigen::SparseLU<ESpMat, Eigen::COLAMDOrdering<int>> lu;
};

SparseLUFactor::SparseLUFactor(const SparseMatrix& A) : impl_(new Impl) {
  check_square_nonempty_rows(A);
  impl_->A = A;
  const ESpMat M = to_eigen(A);
  impl_->lu.analyzePattern(M);
  impl_->lu.factorize(M);
  if (impl_->lu.info() != Eigen::Success)
    throw SingularMatrixError("direct_solve: factorization failed (matrix singular "
                              "to working precision)", -1);
}

SparseLUFactor::~SparseLUFactor() = default;
SparseLUFactor::SparseLUFactor(SparseLUFactor&&) noexcept = default;
SparseLUFactor& SparseLUFactor::operator=(SparseLUFactor&&) noexcept = default;

CVector SparseLUFactor::solve(const CVector& b, SolverReport* report) const {
  const double bnorm = norm2(b);
  if (bnorm == 0.0) {
    if (report) *report = {true, 0, 0.0};
    return CVector(b.size(), Complex(0.0));
  }

  const Eigen::Map<const Eigen::VectorXcd> bmap(b.data(), static_cast<Eigen::Index>(b.size()));
  Eigen::VectorXcd x = impl_->lu.solve(bmap);

  CVector xs(x.data(), x.data() + x.size());
  CVector r = spmv(impl_->A, xs);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
  double rel = norm2(r) / bnorm;
  int passes = 0;

  if (rel > 1e-10) {
    const Eigen::Map<const Eigen::VectorXcd> rmap(r.data(), static_cast<Eigen::Index>(r.size()));
    const Eigen::VectorXcd dx = impl_->lu.solve(rmap);
    x += dx;
    passes = 1;
    xs.assign(x.data(), x.data() + x.size());
    r = spmv(impl_->A, xs);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
    rel = norm2(r) / bnorm;
  }

  if (report) *report = {rel <= 1e-10, passes, rel};
  return xs;
}

CVector direct_solve(const SparseMatrix& A, const CVector& b, SolverReport* report) {
  return SparseLUFactor(A).solve(b, report);
}

namespace {

void dissect_block(const std::vector<Vec3>& pts, const Vec3& h, const Vec3& grid_min,
                   std::vector<int>& idx, int lo, int hi, std::vector<int>& order) {
  const int m = hi - lo;
  Vec3 mn = Vec3::Constant(std::numeric_limits<double>::max());
  Vec3 mx = -mn;
  for (int i = lo; i < hi; ++i) {
    mn = mn.cwiseMin(pts[idx[i]]);
    mx = mx.cwiseMax(pts[idx[i]]);
  }
  int axis = 0;
  (mx - mn).cwiseQuotient(h).maxCoeff(&axis);
  if (m <= 64 || mx[axis] - mn[axis] <= 2.01 * h[axis]) {
    for (int i = lo; i < hi; ++i) order.push_back(idx[i]);
    return;
  }
  std::sort(idx.begin() + lo, idx.begin() + hi,
            [&](int a, int b) { return pts[a][axis] < pts[b][axis]; });
  // snap the median cut to the structured grid so a single point layer
  // (edges lying in the cut plane) separates the two halves
  const double median = pts[idx[lo + m / 2]][axis];
  const double cut = grid_min[axis] +
                     std::round((median - grid_min[axis]) / h[axis]) * h[axis];
  const double band = 0.26 * h[axis];
  std::vector<int> left, sep, right;
  for (int i = lo; i < hi; ++i) {
    const double d = pts[idx[i]][axis] - cut;
    if (std::abs(d) <= band)
      sep.push_back(idx[i]);
    else if (d < 0)
      left.push_back(idx[i]);
    else
      right.push_back(idx[i]);
  }
  if (left.empty() || right.empty()) {
    for (int i = lo; i < hi; ++i) order.push_back(idx[i]);
    return;
  }
  int p = lo;
  for (int v : left) idx[p++] = v;
  const int mid1 = p;
  for (int v : right) idx[p++] = v;
  const int mid2 = p;
  for (int v : sep) idx[p++] = v;
  dissect_block(pts, h, grid_min, idx, lo, mid1, order);
  dissect_block(pts, h, grid_min, idx, mid1, mid2, order);
  for (int i = mid2; i < hi; ++i) order.push_back(idx[i]);
}

}  // namespace

std::vector<int> nested_dissection_order(const std::vector<Vec3>& points, const Vec3& h) {
  const int n = static_cast<int>(points.size());
  std::vector<int> perm(n);
  if (n == 0) return perm;
  Vec3 grid_min = Vec3::Constant(std::numeric_limits<double>::max());
  for (const Vec3& p : points) grid_min = grid_min.cwiseMin(p);
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<int> order;
  order.reserve(n);
  dissect_block(points, h, grid_min, idx, 0, n, order);
  for (int i = 0; i < n; ++i) perm[order[i]] = i;
  return perm;
}

// Up-looking simplicial LDL^T without conjugation.  The permuted matrix is
// stored as its lower triangle in row-major order; by symmetry, row k of the
// lower triangle is also column k of the upper triangle, which is what the
// factorization consumes.
struct SymmetricLDLTFactor::Impl {
  SparseMatrix A;          // original matrix, for residual checks
  std::vector<int> perm;   // perm[old] = new; empty means identity
  int n = 0;
  std::vector<int> Lp, Li;
  CVector Lx;
  CVector D;

  void factorize(const SparseMatrix& lower) {
    // symbolic: elimination tree and column counts
    std::vector<int> parent(n, -1), flag(n, -1), lnz(n, 0);
    for (int k = 0; k < n; ++k) {
      flag[k] = k;
      for (int p = lower.row_ptr[k]; p < lower.row_ptr[k + 1]; ++p) {
        int i = lower.col[p];
        while (i < k && flag[i] != k) {
          if (parent[i] == -1) parent[i] = k;
          ++lnz[i];
          flag[i] = k;
          i = parent[i];
        }
      }
    }
    Lp.assign(n + 1, 0);
    for (int i = 0; i < n; ++i) Lp[i + 1] = Lp[i] + lnz[i];
    Li.assign(Lp[n], 0);
    Lx.assign(Lp[n], Complex(0.0));
    D.assign(n, Complex(0.0));

    // numeric: for each row k, sparse solve against the finished columns
    std::vector<int> pattern(n), nz_done(n, 0);
    CVector y(n, Complex(0.0));
    std::fill(flag.begin(), flag.end(), -1);
    for (int k = 0; k < n; ++k) {
      int top = n;
      flag[k] = k;
      Complex dk(0.0);
      for (int p = lower.row_ptr[k]; p < lower.row_ptr[k + 1]; ++p) {
        const int j = lower.col[p];
        if (j == k) {
          dk = lower.val[p];
          continue;
        }
        y[j] += lower.val[p];
        int len = 0;
        for (int i = j; flag[i] != k; i = parent[i]) {
          pattern[len++] = i;
          flag[i] = k;
        }
        while (len > 0) pattern[--top] = pattern[--len];
      }
      for (int s = top; s < n; ++s) {
        const int i = pattern[s];
        const Complex yi = y[i];
        y[i] = Complex(0.0);
        const Complex lki = yi / D[i];
        for (int p = Lp[i]; p < Lp[i] + nz_done[i]; ++p) y[Li[p]] -= Lx[p] * yi;
        dk -= lki * yi;
        const int slot = Lp[i] + nz_done[i]++;
        Li[slot] = k;
        Lx[slot] = lki;
      }
      if (dk == Complex(0.0)) {
        const int row = perm.empty() ? k : original_row(k);
        throw SingularMatrixError(
            "symmetric factorization: zero pivot at row " + std::to_string(row), row);
      }
      D[k] = dk;
    }
  }

  int original_row(int permuted) const {
    for (int i = 0; i < n; ++i)
      if (perm[i] == permuted) return i;
    return permuted;
  }

  CVector solve_once(const CVector& b) const {
    CVector z(n);
    if (perm.empty())
      z = b;
    else
      for (int i = 0; i < n; ++i) z[perm[i]] = b[i];
    for (int j = 0; j < n; ++j) {
      const Complex zj = z[j];
      for (int p = Lp[j]; p < Lp[j + 1]; ++p) z[Li[p]] -= Lx[p] * zj;
    }
    for (int j = 0; j < n; ++j) z[j] /= D[j];
    for (int j = n - 1; j >= 0; --j) {
      Complex s = z[j];
      for (int p = Lp[j]; p < Lp[j + 1]; ++p) s -= Lx[p] * z[Li[p]];
      z[j] = s;
    }
    if (perm.empty()) return z;
    CVector x(n);
    for (int i = 0; i < n; ++i) x[i] = z[perm[i]];
    return x;
  }
};

SymmetricLDLTFactor::SymmetricLDLTFactor(const SparseMatrix& A,
                                         const std::vector<int>* perm)
    : impl_(new Impl) {
  check_square_nonempty_rows(A);
  if (perm != nullptr && static_cast<int>(perm->size()) != A.rows)
    throw SolverError("symmetric factorization: permutation size mismatch");
  impl_->A = A;
  impl_->n = A.rows;
  if (perm != nullptr) impl_->perm = *perm;

  std::vector<Triplet> lower;
  lower.reserve(A.nnz() / 2 + A.rows);
  for (int i = 0; i < A.rows; ++i) {
    const int pi = perm ? (*perm)[i] : i;
    for (int p = A.row_ptr[i]; p < A.row_ptr[i + 1]; ++p) {
      const int pj = perm ? (*perm)[A.col[p]] : A.col[p];
      if (pj <= pi) lower.push_back({pi, pj, A.val[p]});
    }
  }
  impl_->factorize(SparseMatrix::from_triplets(A.rows, A.cols, lower, true));
}

SymmetricLDLTFactor::~SymmetricLDLTFactor() = default;
SymmetricLDLTFactor::SymmetricLDLTFactor(SymmetricLDLTFactor&&) noexcept = default;
SymmetricLDLTFactor& SymmetricLDLTFactor::operator=(SymmetricLDLTFactor&&) noexcept =
    default;

CVector SymmetricLDLTFactor::solve(const CVector& b, SolverReport* report) const {
  const double bnorm = norm2(b);
  if (bnorm == 0.0) {
    if (report) *report = {true, 0, 0.0};
    return CVector(b.size(), Complex(0.0));
  }
  CVector x = impl_->solve_once(b);
  CVector r = spmv(impl_->A, x);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
  double rel = norm2(r) / bnorm;
  int passes = 0;
  while (rel > 1e-10 && passes < 2) {
    const CVector dx = impl_->solve_once(r);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += dx[i];
    r = spmv(impl_->A, x);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
    rel = norm2(r) / bnorm;
    ++passes;
  }
  if (report) *report = {rel <= 1e-10, passes, rel};
  return x;
}

SymmetricDirectSolver::SymmetricDirectSolver(const SparseMatrix& A,
                                             const std::vector<int>* perm) {
  try {
    ldlt_ = std::make_unique<SymmetricLDLTFactor>(A, perm);
  } catch (const SingularMatrixError&) {
    lu_ = std::make_unique<SparseLUFactor>(A);
  }
}

CVector SymmetricDirectSolver::solve(const CVector& b, SolverReport* report) const {
  return ldlt_ ? ldlt_->solve(b, report) : lu_->solve(b, report);
}

Projector make_orthogonal_projector(std::vector<CVector> kernel_basis) {
  // Gram-Schmidt orthonormalization of the kernel vectors
  std::vector<CVector> q;
  for (CVector v : kernel_basis) {
    for (const CVector& u : q) {
      const Complex c = dot_h(u, v);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * u[i];
    }
    const double n = norm2(v);
    if (n > 1e-14) {
      for (Complex& vi : v) vi /= n;
      q.push_back(std::move(v));
    }
  }
  return [q = std::move(q)](CVector& x) {
    for (const CVector& u : q) {
      const Complex c = dot_h(u, x);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] -= c * u[i];
    }
  };
}

CVector cg_projected(const SparseMatrix& A, const CVector& b, const Projector& projector,
                     double tol, int maxit, SolverReport* report,
                     const std::vector<double>* jacobi,
                     const std::function<void(int, const CVector&)>& observer) {
  const std::size_t n = b.size();
  CVector x(n, Complex(0.0));
  CVector r = b;
  if (projector) projector(r);

  const double bnorm = norm2(r);
  if (bnorm == 0.0) {
    if (report) *report = {true, 0, 0.0};
    return x;
  }

  auto precond = [&](const CVector& rr) {
    CVector z = rr;
    if (jacobi)
      for (std::size_t i = 0; i < n; ++i) z[i] /= (*jacobi)[i];
    return z;
  };

  CVector z = precond(r);
  CVector p = z;
  double rz = dot_h(r, z).real();
  CVector Ap;

  for (int it = 0; it < maxit; ++it) {
    spmv(A, p, Ap);
    const double pAp = dot_h(p, Ap).real();
    if (!(pAp > 0.0)) {
      if (report) *report = {false, it, norm2(r) / bnorm};
      return x;
    }
    const double alpha = rz / pAp;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
    }
    if (projector) projector(r);
    if (observer) observer(it + 1, x);

    const double rel = norm2(r) / bnorm;
    if (rel <= tol) {
      if (projector) projector(x);
      if (report) *report = {true, it + 1, rel};
      return x;
    }
    z = precond(r);
    const double rz_new = dot_h(r, z).real();
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }

  if (projector) projector(x);
  if (report) *report = {false, maxit, norm2(r) / bnorm};
  return x;
}

CVector gmres_diag(const SparseMatrix& A, const CVector& b, int restart, double tol,
                   int maxit, SolverReport* report) {
  const std::size_t n = b.size();
  CVector x(n, Complex(0.0));

  std::vector<double> dinv(n, 1.0);
  for (int i = 0; i < A.rows; ++i) {
    const double d = std::abs(A.coeff(i, i));
    if (d > 0.0) dinv[i] = 1.0 / d;
  }
  auto apply_prec = [&](CVector& v) {
    for (std::size_t i = 0; i < n; ++i) v[i] *= dinv[i];
  };

  CVector Mb = b;
  apply_prec(Mb);
  const double bnorm = norm2(Mb);
  if (bnorm == 0.0) {
    if (report) *report = {true, 0, 0.0};
    return x;
  }

  const int m = restart;
  std::vector<CVector> V(m + 1, CVector(n));
  std::vector<CVector> H(m + 1, CVector(m, Complex(0.0)));
  CVector cs(m), sn(m), g(m + 1);

  int total_it = 0;
  double rel = 1.0;

  while (total_it < maxit) {
    CVector r = spmv(A, x);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
    apply_prec(r);
    const double beta = norm2(r);
    rel = beta / bnorm;
    if (rel <= tol) break;

    for (std::size_t i = 0; i < n; ++i) V[0][i] = r[i] / beta;
    std::fill(g.begin(), g.end(), Complex(0.0));
    g[0] = beta;

    int j = 0;
    for (; j < m && total_it < maxit; ++j, ++total_it) {
      CVector w = spmv(A, V[j]);
      apply_prec(w);
      for (int i = 0; i <= j; ++i) {
        H[i][j] = dot_h(V[i], w);
        for (std::size_t q = 0; q < n; ++q) w[q] -= H[i][j] * V[i][q];
      }
      H[j + 1][j] = norm2(w);
      if (std::abs(H[j + 1][j]) > 0.0)
        for (std::size_t q = 0; q < n; ++q) V[j + 1][q] = w[q] / H[j + 1][j].real();

      for (int i = 0; i < j; ++i) {  // apply stored Givens rotations
        const Complex t = cs[i] * H[i][j] + sn[i] * H[i + 1][j];
        H[i + 1][j] = -std::conj(sn[i]) * H[i][j] + std::conj(cs[i]) * H[i + 1][j];
        H[i][j] = t;
      }
      const double denom = std::sqrt(std::norm(H[j][j]) + std::norm(H[j + 1][j]));
      if (denom > 0.0) {
        cs[j] = std::conj(H[j][j]) / denom;
        sn[j] = std::conj(H[j + 1][j]) / denom;
        H[j][j] = denom;
        H[j + 1][j] = 0.0;
        const Complex t = cs[j] * g[j];
        g[j + 1] = -std::conj(sn[j]) * g[j];
        g[j] = t;
      }
      rel = std::abs(g[j + 1]) / bnorm;
      if (rel <= tol) {
        ++j;
        break;
      }
    }

    // back substitution and update
    CVector y(j, Complex(0.0));
    for (int i = j - 1; i >= 0; --i) {
      Complex s = g[i];
      for (int q = i + 1; q < j; ++q) s -= H[i][q] * y[q];
      y[i] = s / H[i][i];
    }
    for (int i = 0; i < j; ++i)
      for (std::size_t q = 0; q < n; ++q) x[q] += y[i] * V[i][q];

    if (rel <= tol) break;
  }

  // true (preconditioned) residual
  CVector r = spmv(A, x);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
  apply_prec(r);
  rel = norm2(r) / bnorm;
  if (report) *report = {rel <= tol, total_it, rel};
  return x;
}

void write_matrix_market(const std::string& path, const SparseMatrix& A) {
  std::ofstream os(path);
  if (!os) throw ConfigError("write_matrix_market: cannot open " + path);
  os << "%%MatrixMarket matrix coordinate complex general\n";
  os << A.rows << " " << A.cols << " " << A.nnz() << "\n";
  char buf[96];
  for (int i = 0; i < A.rows; ++i)
    for (int p = A.row_ptr[i]; p < A.row_ptr[i + 1]; ++p) {
      std::snprintf(buf, sizeof(buf), "%d %d %.16g %.16g\n", i + 1, A.col[p] + 1,
                    A.val[p].real(), A.val[p].imag());
      os << buf;
    }
}

}  // namespace maxhmm
