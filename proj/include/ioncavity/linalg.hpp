#pragma once

// Sparse operator algebra on composite Hilbert spaces.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#include "ioncavity/error.hpp"

namespace ioncavity {

using Complex = std::complex<double>;
/// Row-major so stored entries iterate in (row, col) order.
using SparseMatrix = Eigen::SparseMatrix<Complex, Eigen::RowMajor>;
using DenseMatrix = Eigen::MatrixXcd;

struct Subsystem {
  std::string label;
  std::size_t dim = 0;
  bool operator==(const Subsystem&) const = default;
};

/// Ordered tensor product of labelled subsystems.
class HilbertSpace {
 public:
  HilbertSpace() = default;

  explicit HilbertSpace(std::vector<Subsystem> subsystems) : subsystems_(std::move(subsystems)) {
    if (subsystems_.empty()) throw DimensionError("Hilbert space needs at least one subsystem");
    total_ = 1;
    for (std::size_t i = 0; i < subsystems_.size(); ++i) {
      const auto& s = subsystems_[i];
      if (s.dim == 0) throw DimensionError("subsystem '" + s.label + "' has dimension 0", s.label);
      for (std::size_t j = 0; j < i; ++j)
        if (subsystems_[j].label == s.label)
          throw DimensionError("duplicate subsystem label '" + s.label + "'", s.label);
      total_ *= s.dim;
    }
  }

  static HilbertSpace single(std::string label, std::size_t dim) {
    return HilbertSpace({Subsystem{std::move(label), dim}});
  }

  const std::vector<Subsystem>& subsystems() const { return subsystems_; }
  std::size_t total_dim() const { return total_; }
  std::size_t size() const { return subsystems_.size(); }

  std::size_t index_of(const std::string& label) const {
    for (std::size_t i = 0; i < subsystems_.size(); ++i)
      if (subsystems_[i].label == label) return i;
    throw DimensionError("no subsystem labelled '" + label + "'", label);
  }

  /// Concatenation (this ⊗ other).
  HilbertSpace operator*(const HilbertSpace& other) const {
    auto all = subsystems_;
    all.insert(all.end(), other.subsystems_.begin(), other.subsystems_.end());
    return HilbertSpace(std::move(all));
  }

  /// Flat index of a product basis state; `digits` in subsystem order.
  std::size_t flat_index(std::span<const std::size_t> digits) const {
    if (digits.size() != subsystems_.size()) throw DimensionError("basis label has wrong arity");
    std::size_t idx = 0;
    for (std::size_t i = 0; i < digits.size(); ++i) {
      if (digits[i] >= subsystems_[i].dim)
        throw DimensionError("basis index out of range for '" + subsystems_[i].label + "'",
                             subsystems_[i].label);
      idx = idx * subsystems_[i].dim + digits[i];
    }
    return idx;
  }
  std::size_t flat_index(std::initializer_list<std::size_t> digits) const {
    return flat_index(std::span<const std::size_t>(digits.begin(), digits.size()));
  }

  std::vector<std::size_t> digits(std::size_t flat) const {
    std::vector<std::size_t> d(subsystems_.size());
    for (std::size_t i = subsystems_.size(); i-- > 0;) {
      d[i] = flat % subsystems_[i].dim;
      flat /= subsystems_[i].dim;
    }
    return d;
  }

  bool operator==(const HilbertSpace& o) const { return subsystems_ == o.subsystems_; }

 private:
  std::vector<Subsystem> subsystems_;
  std::size_t total_ = 0;
};

struct MatrixEntry {
  std::size_t row;
  std::size_t col;
  Complex value;
};

/// Immutable sparse complex operator on a HilbertSpace. Exact zeros are never stored.
class OperatorMatrix {
 public:
  OperatorMatrix() = default;

  OperatorMatrix(HilbertSpace space, SparseMatrix m) : space_(std::move(space)), m_(std::move(m)) {
    const auto n = static_cast<Eigen::Index>(space_.total_dim());
    if (m_.rows() != n || m_.cols() != n)
      throw DimensionError("matrix is " + std::to_string(m_.rows()) + "x" +
                           std::to_string(m_.cols()) + ", space has dimension " +
                           std::to_string(n));
    m_.prune([](Eigen::Index, Eigen::Index, const Complex& v) { return v != Complex(0.0); });
    m_.makeCompressed();
  }

  static OperatorMatrix zero(const HilbertSpace& space) {
    const auto n = static_cast<Eigen::Index>(space.total_dim());
    return OperatorMatrix(space, SparseMatrix(n, n));
  }

  static OperatorMatrix identity(const HilbertSpace& space) {
    const auto n = static_cast<Eigen::Index>(space.total_dim());
    SparseMatrix m(n, n);
    m.setIdentity();
    return OperatorMatrix(space, std::move(m));
  }

  static OperatorMatrix from_entries(const HilbertSpace& space, std::span<const MatrixEntry> entries) {
    const auto n = space.total_dim();
    std::vector<Eigen::Triplet<Complex>> t;
    t.reserve(entries.size());
    for (const auto& e : entries) {
      if (e.row >= n || e.col >= n) throw DimensionError("entry index out of range");
      t.emplace_back(static_cast<int>(e.row), static_cast<int>(e.col), e.value);
    }
    SparseMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    m.setFromTriplets(t.begin(), t.end());
    return OperatorMatrix(space, std::move(m));
  }

  /// |row><col| scaled by `value`.
  static OperatorMatrix outer(const HilbertSpace& space, std::size_t row, std::size_t col,
                              Complex value = 1.0) {
    const MatrixEntry e{row, col, value};
    return from_entries(space, std::span<const MatrixEntry>(&e, 1));
  }

  static OperatorMatrix from_dense(const HilbertSpace& space, const DenseMatrix& d) {
    return OperatorMatrix(space, d.sparseView(Complex(0.0), 0.0));
  }

  const HilbertSpace& space() const { return space_; }
  const SparseMatrix& matrix() const { return m_; }
  std::size_t dim() const { return space_.total_dim(); }
  std::size_t nonzeros() const { return static_cast<std::size_t>(m_.nonZeros()); }

  Complex operator()(std::size_t r, std::size_t c) const {
    return m_.coeff(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }

  DenseMatrix to_dense() const { return DenseMatrix(m_); }

  /// Stored entries sorted by (row, col).
  std::vector<MatrixEntry> entries() const {
    std::vector<MatrixEntry> out;
    out.reserve(nonzeros());
    for (Eigen::Index r = 0; r < m_.outerSize(); ++r)
      for (SparseMatrix::InnerIterator it(m_, r); it; ++it)
        out.push_back({static_cast<std::size_t>(it.row()), static_cast<std::size_t>(it.col()),
                       it.value()});
    return out;
  }

  double max_abs() const {
    double m = 0.0;
    for (Eigen::Index k = 0; k < m_.nonZeros(); ++k) m = std::max(m, std::abs(m_.valuePtr()[k]));
    return m;
  }

  /// M = M† within `rel_tol` relative to the largest entry.
  bool is_hermitian(double rel_tol = 1e-12) const {
    const SparseMatrix diff = m_ - SparseMatrix(m_.adjoint());
    double d = 0.0;
    for (Eigen::Index k = 0; k < diff.nonZeros(); ++k) d = std::max(d, std::abs(diff.valuePtr()[k]));
    return d <= rel_tol * std::max(1.0, max_abs());
  }

  OperatorMatrix operator+(const OperatorMatrix& o) const {
    require_same_space(o);
    return OperatorMatrix(space_, SparseMatrix(m_ + o.m_));
  }
  OperatorMatrix operator-(const OperatorMatrix& o) const {
    require_same_space(o);
    return OperatorMatrix(space_, SparseMatrix(m_ - o.m_));
  }
  OperatorMatrix operator*(const OperatorMatrix& o) const {
    require_same_space(o);
    return OperatorMatrix(space_, SparseMatrix(m_ * o.m_));
  }
  OperatorMatrix operator*(Complex s) const { return OperatorMatrix(space_, SparseMatrix(m_ * s)); }
  OperatorMatrix operator-() const { return *this * Complex(-1.0); }

  /// Exact equality of spaces and stored entries.
  bool operator==(const OperatorMatrix& o) const {
    if (!(space_ == o.space_) || nonzeros() != o.nonzeros()) return false;
    const auto a = entries();
    const auto b = o.entries();
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i].row != b[i].row || a[i].col != b[i].col || a[i].value != b[i].value) return false;
    return true;
  }

  void require_same_space(const OperatorMatrix& o) const {
    if (!(space_ == o.space_)) throw DimensionError("operators live on different Hilbert spaces");
  }

 private:
  HilbertSpace space_;
  SparseMatrix m_;
};

inline OperatorMatrix operator*(Complex s, const OperatorMatrix& op) { return op * s; }
inline OperatorMatrix operator*(double s, const OperatorMatrix& op) { return op * Complex(s); }

inline OperatorMatrix dagger(const OperatorMatrix& op) {
  return OperatorMatrix(op.space(), SparseMatrix(op.matrix().adjoint()));
}

inline OperatorMatrix commutator(const OperatorMatrix& a, const OperatorMatrix& b) {
  return a * b - b * a;
}

/// Kronecker product in the given order. `spaces[i]` is the space `ops[i]` is declared on.
inline OperatorMatrix tensor_product(std::span<const OperatorMatrix> ops,
                                     std::span<const HilbertSpace> spaces) {
  if (ops.empty()) throw DimensionError("tensor_product of zero operators");
  if (ops.size() != spaces.size())
    throw DimensionError("tensor_product: " + std::to_string(ops.size()) + " operators but " +
                         std::to_string(spaces.size()) + " spaces");
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (ops[i].dim() != spaces[i].total_dim()) {
      const auto& label = spaces[i].subsystems().front().label;
      throw DimensionError("tensor_product: operator " + std::to_string(i) + " has dimension " +
                               std::to_string(ops[i].dim()) + " but subsystem '" + label +
                               "' has dimension " + std::to_string(spaces[i].total_dim()),
                           label);
    }
  }
  HilbertSpace space = spaces[0];
  std::vector<MatrixEntry> acc = ops[0].entries();
  std::size_t acc_dim = spaces[0].total_dim();
  for (std::size_t i = 1; i < ops.size(); ++i) {
    space = space * spaces[i];
    const auto rhs = ops[i].entries();
    const std::size_t n = spaces[i].total_dim();
    std::vector<MatrixEntry> next;
    next.reserve(acc.size() * rhs.size());
    for (const auto& a : acc)
      for (const auto& b : rhs) next.push_back({a.row * n + b.row, a.col * n + b.col, a.value * b.value});
    acc = std::move(next);
    acc_dim *= n;
  }
  return OperatorMatrix::from_entries(space, acc);
}

inline OperatorMatrix tensor_product(std::initializer_list<OperatorMatrix> ops) {
  std::vector<OperatorMatrix> v(ops);
  std::vector<HilbertSpace> s;
  for (const auto& o : v) s.push_back(o.space());
  return tensor_product(v, s);
}

/// Lift an operator on one subsystem to the full space (identity elsewhere).
inline OperatorMatrix embed(const OperatorMatrix& local, const std::string& label,
                            const HilbertSpace& full) {
  const std::size_t k = full.index_of(label);
  std::vector<OperatorMatrix> ops;
  std::vector<HilbertSpace> spaces;
  for (std::size_t i = 0; i < full.size(); ++i) {
    const auto& sub = full.subsystems()[i];
    HilbertSpace s = HilbertSpace::single(sub.label, sub.dim);
    if (i == k) {
      if (local.dim() != sub.dim)
        throw DimensionError("embed: operator dimension does not match subsystem '" + label + "'",
                             label);
      ops.push_back(OperatorMatrix(s, local.matrix()));
    } else {
      ops.push_back(OperatorMatrix::identity(s));
    }
    spaces.push_back(std::move(s));
  }
  return tensor_product(ops, spaces);
}

/// Truncated bosonic annihilation operator on {|0>, ..., |n_max>}.
inline OperatorMatrix annihilation_operator(std::size_t n_max, const std::string& label = "mode") {
  if (n_max == 0) throw DomainError("annihilation_operator: photon cutoff must be at least 1");
  const auto space = HilbertSpace::single(label, n_max + 1);
  std::vector<MatrixEntry> e;
  for (std::size_t n = 1; n <= n_max; ++n) e.push_back({n - 1, n, std::sqrt(static_cast<double>(n))});
  return OperatorMatrix::from_entries(space, e);
}

/// Dense density matrix with trace-one normalisation.
class DensityMatrix {
 public:
  DensityMatrix() = default;
  DensityMatrix(HilbertSpace space, DenseMatrix rho) : space_(std::move(space)), rho_(std::move(rho)) {
    const auto n = static_cast<Eigen::Index>(space_.total_dim());
    if (rho_.rows() != n || rho_.cols() != n) throw DimensionError("density matrix has wrong shape");
  }

  /// |i><i| for a basis index.
  static DensityMatrix basis_state(const HilbertSpace& space, std::size_t index) {
    const auto n = static_cast<Eigen::Index>(space.total_dim());
    DenseMatrix r = DenseMatrix::Zero(n, n);
    r(static_cast<Eigen::Index>(index), static_cast<Eigen::Index>(index)) = 1.0;
    return DensityMatrix(space, std::move(r));
  }

  /// Incoherent mixture of basis states with the given (unnormalised) weights.
  static DensityMatrix mixture(const HilbertSpace& space,
                               std::span<const std::pair<std::size_t, double>> weights) {
    const auto n = static_cast<Eigen::Index>(space.total_dim());
    DenseMatrix r = DenseMatrix::Zero(n, n);
    double total = 0.0;
    for (auto [i, w] : weights) {
      r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += w;
      total += w;
    }
    if (!(total > 0.0)) throw DomainError("mixture weights must sum to a positive value");
    return DensityMatrix(space, r / total);
  }

  const HilbertSpace& space() const { return space_; }
  const DenseMatrix& matrix() const { return rho_; }
  std::size_t dim() const { return space_.total_dim(); }

  Complex trace() const { return rho_.trace(); }
  double hermiticity_error() const { return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff(); }
  double min_eigenvalue() const {
    const DenseMatrix h = 0.5 * (rho_ + rho_.adjoint());
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

  /// Checks trace, hermiticity and positivity against the given tolerances.
  bool is_valid(double trace_tol = 1e-9, double herm_tol = 1e-12, double pos_tol = 1e-9) const {
    return std::abs(trace() - 1.0) <= trace_tol && hermiticity_error() <= herm_tol &&
           min_eigenvalue() >= -pos_tol;
  }

  /// Reduced state of the named subsystems (in the order given).
  DensityMatrix partial_trace_keep(const std::vector<std::string>& keep) const;

 private:
  HilbertSpace space_;
  DenseMatrix rho_;
};

inline DensityMatrix DensityMatrix::partial_trace_keep(const std::vector<std::string>& keep) const {
  std::vector<std::size_t> idx;
  std::vector<Subsystem> kept;
  for (const auto& k : keep) {
    idx.push_back(space_.index_of(k));
    kept.push_back(space_.subsystems()[idx.back()]);
  }
  HilbertSpace reduced(kept);
  const auto n = static_cast<Eigen::Index>(reduced.total_dim());
  DenseMatrix out = DenseMatrix::Zero(n, n);
  const std::size_t N = dim();
  for (std::size_t a = 0; a < N; ++a) {
    const auto da = space_.digits(a);
    for (std::size_t b = 0; b < N; ++b) {
      const auto db = space_.digits(b);
      bool traced_equal = true;
      for (std::size_t s = 0; s < da.size() && traced_equal; ++s) {
        if (std::find(idx.begin(), idx.end(), s) == idx.end() && da[s] != db[s]) traced_equal = false;
      }
      if (!traced_equal) continue;
      std::size_t ra = 0, rb = 0;
      for (std::size_t s = 0; s < idx.size(); ++s) {
        ra = ra * kept[s].dim + da[idx[s]];
        rb = rb * kept[s].dim + db[idx[s]];
      }
      out(static_cast<Eigen::Index>(ra), static_cast<Eigen::Index>(rb)) +=
          rho_(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
  }
  return DensityMatrix(reduced, out);
}

/// Tr(ρ·op).
inline Complex expectation(const DensityMatrix& rho, const OperatorMatrix& op) {
  if (!(rho.space() == op.space())) throw DimensionError("expectation: state and operator spaces differ");
  Complex acc = 0.0;
  const auto& m = op.matrix();
  const auto& r = rho.matrix();
  for (Eigen::Index i = 0; i < m.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(m, i); it; ++it) acc += it.value() * r(it.col(), it.row());
  return acc;
}

}  // namespace ioncavity
