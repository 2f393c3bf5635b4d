#pragma once

#include "maxhmm/core.hpp"

#include <functional>
#include <memory>

namespace maxhmm {

struct Triplet {
  int i;
  int j;
  Complex v;
};

// Compressed-row complex sparse matrix with sorted unique column indices per row.
struct SparseMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> row_ptr;  // size rows + 1
  std::vector<int> col;
  CVector val;

  std::size_t nnz() const { return col.size(); }
  Complex coeff(int i, int j) const;

  // Sums duplicate entries.  Exact zeros are dropped unless keep_zeros is set
  // (assembly keeps them so that matrices built over the same space share a
  // sparsity pattern and can be combined entrywise).
  static SparseMatrix from_triplets(int rows, int cols, std::vector<Triplet>& ts,
                                    bool keep_zeros = false);
};

void spmv(const SparseMatrix& A, const CVector& x, CVector& y);
CVector spmv(const SparseMatrix& A, const CVector& x);

// a*A + b*B for matrices with identical sparsity patterns.
SparseMatrix linear_combination(Complex a, const SparseMatrix& A, Complex b,
                                const SparseMatrix& B);

// a*A + b*B for arbitrary patterns of the same shape (rebuilds the pattern).
SparseMatrix matrix_sum(Complex a, const SparseMatrix& A, Complex b,
                        const SparseMatrix& B);

struct SolverReport {
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;  // relative to the rhs norm
};

// Sparse LU factorization (kept for reuse over multiple right-hand sides).
class SparseLUFactor {
 public:
  explicit SparseLUFactor(const SparseMatrix& A);
  ~SparseLUFactor();
  SparseLUFactor(SparseLUFactor&&) noexcept;
  SparseLUFactor& operator=(SparseLUFactor&&) noexcept;

  // Solves to a relative residual of 1e-10, applying at most one pass of
  // iterative refinement.
  CVector solve(const CVector& b, SolverReport* report = nullptr) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

CVector direct_solve(const SparseMatrix& A, const CVector& b,
                     SolverReport* report = nullptr);

// Fill-reducing ordering for dofs with spatial locations: recursive coordinate
// bisection with the separating slab ordered last.  Cut planes snap to the
// grid of spacing h so that one point layer separates the halves on
// structured meshes; for unstructured points the ordering is still valid,
// just less effective.  Returns perm with perm[old] = new.
std::vector<int> nested_dissection_order(const std::vector<Vec3>& points,
                                         const Vec3& h);

// LDL^T factorization (unconjugated transpose) of a complex symmetric matrix,
// optionally under a symmetric permutation.  Stores a single triangular
// factor, half the memory of an LU decomposition, but performs no pivoting:
// a zero pivot raises SingularMatrixError even for some invertible inputs.
class SymmetricLDLTFactor {
 public:
  explicit SymmetricLDLTFactor(const SparseMatrix& A,
                               const std::vector<int>* perm = nullptr);
  ~SymmetricLDLTFactor();
  SymmetricLDLTFactor(SymmetricLDLTFactor&&) noexcept;
  SymmetricLDLTFactor& operator=(SymmetricLDLTFactor&&) noexcept;

  // Solves to a relative residual of 1e-10 with at most two refinement passes.
  CVector solve(const CVector& b, SolverReport* report = nullptr) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Direct solver for complex symmetric systems: tries the memory-lean LDL^T
// factorization first and falls back to sparse LU if a pivot vanishes.
class SymmetricDirectSolver {
 public:
  explicit SymmetricDirectSolver(const SparseMatrix& A,
                                 const std::vector<int>* perm = nullptr);
  CVector solve(const CVector& b, SolverReport* report = nullptr) const;
  bool used_fallback() const { return lu_ != nullptr; }

 private:
  std::unique_ptr<SymmetricLDLTFactor> ldlt_;
  std::unique_ptr<SparseLUFactor> lu_;
};

using Projector = std::function<void(CVector&)>;

// Euclidean orthogonal projector onto the complement of span(kernel_basis).
Projector make_orthogonal_projector(std::vector<CVector> kernel_basis);

// Conjugate gradients for Hermitian positive semidefinite systems with a
// consistent right-hand side.  The projector is applied to the residual every
// iteration to keep the iterates out of the kernel.  An optional Jacobi
// preconditioner (real positive diagonal) may be supplied.  The observer, when
// given, sees every iterate (used by tests).
CVector cg_projected(const SparseMatrix& A, const CVector& b, const Projector& projector,
                     double tol, int maxit, SolverReport* report = nullptr,
                     const std::vector<double>* jacobi = nullptr,
                     const std::function<void(int, const CVector&)>& observer = {});

// Restarted GMRES with diagonal preconditioning; fallback solver for runs
// where the direct factorization does not fit in memory.
CVector gmres_diag(const SparseMatrix& A, const CVector& b, int restart, double tol,
                   int maxit, SolverReport* report = nullptr);

void write_matrix_market(const std::string& path, const SparseMatrix& A);

}  // namespace maxhmm
