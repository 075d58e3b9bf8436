#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "poquim/exec.hpp"
#include "poquim/likelihood.hpp"
#include "poquim/model.hpp"

namespace poquim {

/// Functional value of the moment-coefficient map for an index tuple,
/// viewed as a function of the kurtoses (order 4) or third moments
/// (order 3): one real coefficient per variance term, error term first.
/// Keys compare through a mantissa-rounded encoding at roughly 1e-9
/// relative precision, so functionally identical tuples land in one
/// class while integer-valued (0/1 design) keys compare exactly.
struct ClassKey {
  VectorXd coeff;                    // s+1 coefficients
  std::vector<std::int64_t> code;    // quantized comparison form
};

struct IndexClass {
  ClassKey key;
  std::int64_t cardinality = 0;  // ordered tuples
};

struct ClassifyOptions {
  /// Cap on the candidate enumeration size sum_groups |G|^order + N.
  std::int64_t budget = 2'000'000'000;
};

/// Disjoint classes of the index tuples with nonzero key, plus a replay
/// stream that lets evaluation passes revisit every tuple in the same
/// deterministic order without re-deriving ownership. Classes are sorted
/// by quantized key; cardinalities count ordered tuples.
class IndexClassPartition {
 public:
  int order() const { return order_; }
  int n_classes() const { return static_cast<int>(classes_.size()); }
  const std::vector<IndexClass>& classes() const { return classes_; }
  std::int64_t total_ordered_tuples() const;

  // Replay structure (consumed by the sweep kernels).
  static constexpr std::uint32_t kSkip = 0xFFFFFFFFu;
  int n_units() const { return static_cast<int>(units_.size()); }
  const std::vector<int>& unit_members(int u) const { return units_[u]; }
  std::span<const std::uint32_t> unit_stream(int u) const;
  int n_obs() const { return n_obs_; }
  const std::vector<std::uint32_t>& diagonal_classes() const { return diag_ids_; }

 private:
  friend IndexClassPartition classify_impl(const ModelSpec&, int,
                                           const ClassifyOptions&);
  int order_ = 4;
  int n_obs_ = 0;
  std::vector<IndexClass> classes_;
  std::vector<std::vector<int>> units_;      // nonzero-support groups, size >= 2
  std::vector<std::uint32_t> diag_ids_;      // class of (i,...,i) per observation
  std::vector<std::uint32_t> stream_;        // per-unit canonical tuple classes
  std::vector<std::size_t> unit_offsets_;    // into stream_, size n_units+1
};

/// Classes of index quadruples under the fourth-moment coefficient map.
/// Throws EnumerationBudgetError when the candidate count exceeds the
/// budget (the design is too dense for exact evaluation).
IndexClassPartition classify_quadruples(const ModelSpec& model,
                                        const ClassifyOptions& options = {});

/// Classes of index triples under the third-moment coefficient map.
IndexClassPartition classify_triples(const ModelSpec& model,
                                     const ClassifyOptions& options = {});

struct EnumerationBudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Read access to a family of symmetric N x N forms without committing
/// to a storage scheme (dense matrices, factored projections, ...).
class SymmetricForms {
 public:
  virtual ~SymmetricForms() = default;
  virtual int count() const = 0;
  virtual int n_obs() const = 0;
  /// out(r, c) = F_j[rows[r], rows[c]] for r, c over the block.
  virtual void fill_block(int j, std::span<const int> rows, MatrixXd& out) const = 0;
  virtual VectorXd diagonal(int j) const = 0;
};

class DenseSymmetricForms final : public SymmetricForms {
 public:
  explicit DenseSymmetricForms(std::vector<const MatrixXd*> mats)
      : mats_(std::move(mats)) {}
  int count() const override { return static_cast<int>(mats_.size()); }
  int n_obs() const override { return static_cast<int>(mats_[0]->rows()); }
  void fill_block(int j, std::span<const int> rows, MatrixXd& out) const override;
  VectorXd diagonal(int j) const override { return mats_[j]->diagonal(); }

 private:
  std::vector<const MatrixXd*> mats_;
};

/// Per-class accumulations over ordered quadruples:
///   pair_sums(l, jk)      = sum F_j[i1,i2] F_k[i3,i4]   (jk packs j <= k)
///   kernel_pair_sums(l)   = sum G[i1,i3] G[i2,i4]
///   weight_sums(l)        = sum u_{i1} u_{i2} u_{i3} u_{i4}
/// Any of forms/kernel/u may be null to skip that accumulation. The
/// reduction merges fixed-size unit blocks in index order, so results are
/// bit-identical across thread counts and to the serial policy.
struct QuadrupleSums {
  MatrixXd pair_sums;
  VectorXd kernel_pair_sums;
  VectorXd weight_sums;
};
QuadrupleSums sweep_quadruples(const IndexClassPartition& partition,
                               const SymmetricForms* forms,
                               const SymmetricForms* kernel, const VectorXd* u,
                               Exec exec = default_exec());

/// Per-class accumulations over ordered triples:
///   vec_form_sums(l, v*nf+f) = sum vecs(i1, v) F_f[i2,i3]
///   weight_sums(l)           = sum u_{i1} u_{i2} u_{i3}
struct TripleSums {
  MatrixXd vec_form_sums;
  VectorXd weight_sums;
};
TripleSums sweep_triples(const IndexClassPartition& partition,
                         const MatrixXd* vecs, const SymmetricForms* forms,
                         const VectorXd* u, Exec exec = default_exec());

inline int packed_pair_index(int j, int k, int nf) {
  // j <= k; row-major upper triangle.
  return j * nf - j * (j - 1) / 2 + (k - j);
}

/// Class-average coefficients of the restricted-score pair products:
/// c_{j,k,l} = (1/h_l) sum_{class l} B_j[i1,i2] B_k[i3,i4].
VectorXd class_coefficients_reml(const IndexClassPartition& partition,
                                 const RemlScoreParts& parts, int j, int k);

/// Full-likelihood analogues: c1 averages q_j[i1] C_k[i2,i3] over triple
/// classes, c2 averages C_j[i1,i2] C_k[i3,i4] over quadruple classes.
struct MlClassCoefficients {
  VectorXd c1;  // per triple class
  VectorXd c2;  // per quadruple class
};
MlClassCoefficients class_coefficients_ml(const IndexClassPartition& triples,
                                          const IndexClassPartition& quadruples,
                                          const MlScoreParts& parts, int j,
                                          int k);

}  // namespace poquim
