#include "poquim/index_classes.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <stdexcept>
#include <unordered_map>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace poquim {

namespace {

// Mantissa-rounded encoding giving ~1e-9 relative comparison precision;
// exact doubles (0/1 design algebra) encode exactly.
std::int64_t encode_coefficient(double x) {
  if (x == 0.0) return 0;
  int e = 0;
  const double m = std::frexp(x, &e);
  const auto qm = static_cast<std::int64_t>(std::llround(m * 1073741824.0));
  return (static_cast<std::int64_t>(e) << 32) ^ (qm & 0xFFFFFFFFLL);
}

struct Unit {
  int term = 0;
  std::vector<int> members;   // sorted row indices
  std::vector<double> zvals;  // z value per member in this column
};

struct RowAdjacency {
  // Per row: unit ids (ascending) and the z value in that unit's column.
  std::vector<std::vector<int>> units;
  std::vector<std::vector<double>> zvals;
};

// Walk the sorted adjacency lists of the tuple rows; report every unit
// containing all rows along with the product of its z values.
template <int Order>
void common_units(const RowAdjacency& adj, const int* rows,
                  std::vector<std::pair<int, double>>& out) {
  out.clear();
  std::size_t pos[Order];
  for (int k = 0; k < Order; ++k) pos[k] = 0;
  const std::vector<int>* lists[Order];
  for (int k = 0; k < Order; ++k) lists[k] = &adj.units[rows[k]];
  while (true) {
    int maxid = -1;
    bool done = false;
    for (int k = 0; k < Order; ++k) {
      if (pos[k] >= lists[k]->size()) {
        done = true;
        break;
      }
      maxid = std::max(maxid, (*lists[k])[pos[k]]);
    }
    if (done) break;
    bool all_match = true;
    for (int k = 0; k < Order; ++k) {
      while (pos[k] < lists[k]->size() && (*lists[k])[pos[k]] < maxid) ++pos[k];
      if (pos[k] >= lists[k]->size() || (*lists[k])[pos[k]] != maxid) {
        all_match = false;
        if (pos[k] >= lists[k]->size()) done = true;
      }
    }
    if (done) break;
    if (all_match) {
      double prod = 1.0;
      for (int k = 0; k < Order; ++k) prod *= adj.zvals[rows[k]][pos[k]];
      out.emplace_back(maxid, prod);
      for (int k = 0; k < Order; ++k) ++pos[k];
    }
  }
}

// Number of distinct orderings of a sorted position tuple divided out:
// rep = product of factorials of tie-run lengths.
template <int Order>
int tie_rep(const int* p) {
  int rep = 1;
  int run = 1;
  for (int k = 1; k < Order; ++k) {
    if (p[k] == p[k - 1]) {
      ++run;
      rep *= run;
    } else {
      run = 1;
    }
  }
  return rep;
}

struct KeyHash {
  std::size_t operator()(const std::vector<std::int64_t>& v) const {
    std::size_t h = 1469598103934665603ull;
    for (auto x : v) {
      h ^= static_cast<std::size_t>(x);
      h *= 1099511628211ull;
    }
    return h;
  }
};

struct ClassTable {
  std::unordered_map<std::vector<std::int64_t>, std::uint32_t, KeyHash> ids;
  std::vector<IndexClass> classes;

  std::uint32_t intern(const VectorXd& coeff,
                       const std::vector<std::int64_t>& code) {
    auto it = ids.find(code);
    if (it != ids.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(classes.size());
    ids.emplace(code, id);
    IndexClass cls;
    cls.key.coeff = coeff;
    cls.key.code = code;
    classes.push_back(std::move(cls));
    return id;
  }
};

// Zero out coefficients that are pure cancellation residue, then encode.
bool clean_and_encode(VectorXd& coeff, const VectorXd& abs_sum,
                      std::vector<std::int64_t>& code) {
  bool nonzero = false;
  for (int t = 0; t < coeff.size(); ++t) {
    if (std::fabs(coeff[t]) <= 1e-12 * abs_sum[t]) coeff[t] = 0.0;
    code[t] = encode_coefficient(coeff[t]);
    nonzero = nonzero || code[t] != 0;
  }
  return nonzero;
}

}  // namespace

std::span<const std::uint32_t> IndexClassPartition::unit_stream(int u) const {
  return {stream_.data() + unit_offsets_[u], unit_offsets_[u + 1] - unit_offsets_[u]};
}

std::int64_t IndexClassPartition::total_ordered_tuples() const {
  std::int64_t total = 0;
  for (const auto& c : classes_) total += c.cardinality;
  return total;
}

IndexClassPartition classify_impl(const ModelSpec& model, int order,
                                  const ClassifyOptions& options) {
  const int N = model.n_obs();
  const int s = model.n_random_terms();

  IndexClassPartition part;
  part.order_ = order;
  part.n_obs_ = N;

  // Support groups: one unit per random-design column with >= 2 nonzeros
  // (smaller columns cannot host an off-diagonal tuple).
  std::vector<Unit> units;
  for (int t = 0; t < s; ++t) {
    const MatrixXd& Zt = model.Z[t];
    for (int l = 0; l < Zt.cols(); ++l) {
      Unit u;
      u.term = t;
      for (int i = 0; i < N; ++i) {
        if (Zt(i, l) != 0.0) {
          u.members.push_back(i);
          u.zvals.push_back(Zt(i, l));
        }
      }
      if (u.members.size() >= 2) units.push_back(std::move(u));
    }
  }

  std::int64_t cost = N;
  for (const auto& u : units) {
    std::int64_t g = static_cast<std::int64_t>(u.members.size());
    std::int64_t c = 1;
    for (int k = 0; k < order; ++k) c *= g;
    cost += c;
    if (cost > options.budget) {
      throw EnumerationBudgetError(
          "index classification: candidate enumeration exceeds budget (" +
          std::to_string(options.budget) + "); design too dense for exact "
          "evaluation");
    }
  }

  RowAdjacency adj;
  adj.units.resize(N);
  adj.zvals.resize(N);
  for (std::size_t g = 0; g < units.size(); ++g) {
    for (std::size_t k = 0; k < units[g].members.size(); ++k) {
      adj.units[units[g].members[k]].push_back(static_cast<int>(g));
      adj.zvals[units[g].members[k]].push_back(units[g].zvals[k]);
    }
  }

  ClassTable table;
  VectorXd coeff(s + 1), abs_sum(s + 1);
  std::vector<std::int64_t> code(s + 1);

  // Diagonal tuples (i, ..., i): always a nonzero key through the error
  // term; term coefficients are row power sums.
  part.diag_ids_.resize(N);
  for (int i = 0; i < N; ++i) {
    coeff[0] = 1.0;
    abs_sum[0] = 1.0;
    for (int t = 0; t < s; ++t) {
      double sum = 0.0, asum = 0.0;
      for (int l = 0; l < model.Z[t].cols(); ++l) {
        const double z = model.Z[t](i, l);
        if (z != 0.0) {
          const double z2 = z * z;
          const double zp = order == 4 ? z2 * z2 : z2 * z;
          sum += zp;
          asum += std::fabs(zp);
        }
      }
      coeff[t + 1] = sum;
      abs_sum[t + 1] = asum;
    }
    clean_and_encode(coeff, abs_sum, code);
    const auto id = table.intern(coeff, code);
    table.classes[id].cardinality += 1;
    part.diag_ids_[i] = id;
  }

  std::vector<std::pair<int, double>> commons;
  part.unit_offsets_.push_back(0);
  const int full_perms = order == 4 ? 24 : 6;

  for (std::size_t g = 0; g < units.size(); ++g) {
    const auto& mem = units[g].members;
    const int n = static_cast<int>(mem.size());
    if (order == 4) {
      int pos[4];
      int rows[4];
      for (pos[0] = 0; pos[0] < n; ++pos[0]) {
        for (pos[1] = pos[0]; pos[1] < n; ++pos[1]) {
          for (pos[2] = pos[1]; pos[2] < n; ++pos[2]) {
            for (pos[3] = pos[2]; pos[3] < n; ++pos[3]) {
              if (pos[0] == pos[3]) continue;  // diagonal handled above
              for (int k = 0; k < 4; ++k) rows[k] = mem[pos[k]];
              common_units<4>(adj, rows, commons);
              if (commons.front().first != static_cast<int>(g)) {
                part.stream_.push_back(IndexClassPartition::kSkip);
                continue;
              }
              coeff.setZero();
              abs_sum.setZero();
              for (const auto& [uid, prod] : commons) {
                coeff[units[uid].term + 1] += prod;
                abs_sum[units[uid].term + 1] += std::fabs(prod);
              }
              if (!clean_and_encode(coeff, abs_sum, code)) {
                part.stream_.push_back(IndexClassPartition::kSkip);
                continue;
              }
              const auto id = table.intern(coeff, code);
              table.classes[id].cardinality += full_perms / tie_rep<4>(pos);
              part.stream_.push_back(id);
            }
          }
        }
      }
    } else {
      int pos[3];
      int rows[3];
      for (pos[0] = 0; pos[0] < n; ++pos[0]) {
        for (pos[1] = pos[0]; pos[1] < n; ++pos[1]) {
          for (pos[2] = pos[1]; pos[2] < n; ++pos[2]) {
            if (pos[0] == pos[2]) continue;
            for (int k = 0; k < 3; ++k) rows[k] = mem[pos[k]];
            common_units<3>(adj, rows, commons);
            if (commons.front().first != static_cast<int>(g)) {
              part.stream_.push_back(IndexClassPartition::kSkip);
              continue;
            }
            coeff.setZero();
            abs_sum.setZero();
            for (const auto& [uid, prod] : commons) {
              coeff[units[uid].term + 1] += prod;
              abs_sum[units[uid].term + 1] += std::fabs(prod);
            }
            if (!clean_and_encode(coeff, abs_sum, code)) {
              part.stream_.push_back(IndexClassPartition::kSkip);
              continue;
            }
            const auto id = table.intern(coeff, code);
            table.classes[id].cardinality += full_perms / tie_rep<3>(pos);
            part.stream_.push_back(id);
          }
        }
      }
    }
    part.unit_offsets_.push_back(part.stream_.size());
  }

  // Deterministic class order: sort by quantized key, remap the streams.
  const auto n_cls = table.classes.size();
  std::vector<std::uint32_t> perm(n_cls);
  for (std::uint32_t i = 0; i < n_cls; ++i) perm[i] = i;
  std::sort(perm.begin(), perm.end(), [&](std::uint32_t a, std::uint32_t b) {
    return table.classes[a].key.code < table.classes[b].key.code;
  });
  std::vector<std::uint32_t> remap(n_cls);
  part.classes_.resize(n_cls);
  for (std::uint32_t newid = 0; newid < n_cls; ++newid) {
    remap[perm[newid]] = newid;
    part.classes_[newid] = std::move(table.classes[perm[newid]]);
  }
  for (auto& id : part.diag_ids_) id = remap[id];
  for (auto& id : part.stream_) {
    if (id != IndexClassPartition::kSkip) id = remap[id];
  }

  // Move the units into the partition for replay.
  part.units_.resize(units.size());
  for (std::size_t g = 0; g < units.size(); ++g) {
    part.units_[g] = std::move(units[g].members);
  }
  return part;
}

IndexClassPartition classify_quadruples(const ModelSpec& model,
                                        const ClassifyOptions& options) {
  model.validate();
  return classify_impl(model, 4, options);
}

IndexClassPartition classify_triples(const ModelSpec& model,
                                     const ClassifyOptions& options) {
  model.validate();
  return classify_impl(model, 3, options);
}

void DenseSymmetricForms::fill_block(int j, std::span<const int> rows,
                                     MatrixXd& out) const {
  const MatrixXd& M = *mats_[j];
  const int n = static_cast<int>(rows.size());
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) out(r, c) = M(rows[r], rows[c]);
  }
}

// --- sweeps ------------------------------------------------------------------

namespace {

constexpr int kUnitBlock = 32;

struct QuadAccum {
  MatrixXd pair;   // L x npairs
  VectorXd kern;   // L
  VectorXd weight;  // L

  void init(int L, int npairs, bool has_forms, bool has_kernel, bool has_u) {
    if (has_forms) pair = MatrixXd::Zero(L, npairs);
    if (has_kernel) kern = VectorXd::Zero(L);
    if (has_u) weight = VectorXd::Zero(L);
  }
  void add(const QuadAccum& o) {
    if (pair.size() > 0) pair += o.pair;
    if (kern.size() > 0) kern += o.kern;
    if (weight.size() > 0) weight += o.weight;
  }
};

}  // namespace

QuadrupleSums sweep_quadruples(const IndexClassPartition& part,
                               const SymmetricForms* forms,
                               const SymmetricForms* kernel, const VectorXd* u,
                               Exec exec) {
  if (part.order() != 4) {
    throw std::invalid_argument("sweep_quadruples: partition order != 4");
  }
  const int L = part.n_classes();
  const int nf = forms ? forms->count() : 0;
  const int npairs = nf * (nf + 1) / 2;
  const int N = part.n_obs();
  if (nf > 16) {
    throw std::invalid_argument("sweep_quadruples: more than 16 forms");
  }

  QuadAccum total;
  total.init(L, npairs, forms != nullptr, kernel != nullptr, u != nullptr);

  // Diagonal segment, fixed order.
  {
    std::vector<VectorXd> fd(nf);
    for (int j = 0; j < nf; ++j) fd[j] = forms->diagonal(j);
    VectorXd kd;
    if (kernel) kd = kernel->diagonal(0);
    const auto& ids = part.diagonal_classes();
    for (int i = 0; i < N; ++i) {
      const auto id = ids[i];
      if (forms) {
        for (int j = 0, pk = 0; j < nf; ++j) {
          for (int k = j; k < nf; ++k, ++pk) {
            total.pair(id, pk) += fd[j][i] * fd[k][i];
          }
        }
      }
      if (kernel) total.kern[id] += kd[i] * kd[i];
      if (u) {
        const double ui = (*u)[i];
        total.weight[id] += ui * ui * ui * ui;
      }
    }
  }

  const int n_units = part.n_units();
  const int n_blocks = (n_units + kUnitBlock - 1) / kUnitBlock;
  std::vector<QuadAccum> partials(n_blocks);

  [[maybe_unused]] const bool par = exec == Exec::parallel;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) if (par)
#endif
  for (int b = 0; b < n_blocks; ++b) {
    QuadAccum& acc = partials[b];
    acc.init(L, npairs, forms != nullptr, kernel != nullptr, u != nullptr);
    std::vector<MatrixXd> FB(nf);
    MatrixXd GB;
    VectorXd uv;
    double fvals[16][6];  // per-form entries at the six index pairs
    const int g_end = std::min((b + 1) * kUnitBlock, n_units);
    for (int g = b * kUnitBlock; g < g_end; ++g) {
      const auto& mem = part.unit_members(g);
      const int n = static_cast<int>(mem.size());
      const auto stream = part.unit_stream(g);
      std::size_t sp = 0;
      for (int j = 0; j < nf; ++j) {
        FB[j].resize(n, n);
        forms->fill_block(j, mem, FB[j]);
      }
      if (kernel) {
        GB.resize(n, n);
        kernel->fill_block(0, mem, GB);
      }
      if (u) {
        uv.resize(n);
        for (int i = 0; i < n; ++i) uv[i] = (*u)[mem[i]];
      }
      int pos[4];
      for (pos[0] = 0; pos[0] < n; ++pos[0]) {
        for (pos[1] = pos[0]; pos[1] < n; ++pos[1]) {
          for (pos[2] = pos[1]; pos[2] < n; ++pos[2]) {
            for (pos[3] = pos[2]; pos[3] < n; ++pos[3]) {
              if (pos[0] == pos[3]) continue;
              const auto id = stream[sp++];
              if (id == IndexClassPartition::kSkip) continue;
              const double inv_rep = 1.0 / tie_rep<4>(pos);
              const int a = pos[0], bb = pos[1], c = pos[2], d = pos[3];
              if (u) {
                acc.weight[id] +=
                    24.0 * inv_rep * uv[a] * uv[bb] * uv[c] * uv[d];
              }
              if (kernel) {
                acc.kern[id] += 8.0 * inv_rep *
                                (GB(a, bb) * GB(c, d) + GB(a, c) * GB(bb, d) +
                                 GB(a, d) * GB(bb, c));
              }
              if (forms) {
                for (int j = 0; j < nf; ++j) {
                  fvals[j][0] = FB[j](a, bb);
                  fvals[j][1] = FB[j](c, d);
                  fvals[j][2] = FB[j](a, c);
                  fvals[j][3] = FB[j](bb, d);
                  fvals[j][4] = FB[j](a, d);
                  fvals[j][5] = FB[j](bb, c);
                }
                const double w = 4.0 * inv_rep;
                for (int j = 0, pk = 0; j < nf; ++j) {
                  for (int k = j; k < nf; ++k, ++pk) {
                    acc.pair(id, pk) +=
                        w * (fvals[j][0] * fvals[k][1] + fvals[j][1] * fvals[k][0] +
                             fvals[j][2] * fvals[k][3] + fvals[j][3] * fvals[k][2] +
                             fvals[j][4] * fvals[k][5] + fvals[j][5] * fvals[k][4]);
                  }
                }
              }
            }
          }
        }
      }
    }
  }

  for (int b = 0; b < n_blocks; ++b) total.add(partials[b]);

  QuadrupleSums sums;
  sums.pair_sums = std::move(total.pair);
  sums.kernel_pair_sums = std::move(total.kern);
  sums.weight_sums = std::move(total.weight);
  return sums;
}

TripleSums sweep_triples(const IndexClassPartition& part, const MatrixXd* vecs,
                         const SymmetricForms* forms, const VectorXd* u,
                         Exec exec) {
  if (part.order() != 3) {
    throw std::invalid_argument("sweep_triples: partition order != 3");
  }
  const int L = part.n_classes();
  const int nf = forms ? forms->count() : 0;
  const int nv = vecs ? static_cast<int>(vecs->cols()) : 0;
  const int N = part.n_obs();
  const bool has_vf = vecs && forms;

  MatrixXd total_vf;
  VectorXd total_w;
  if (has_vf) total_vf = MatrixXd::Zero(L, nv * nf);
  if (u) total_w = VectorXd::Zero(L);

  {
    std::vector<VectorXd> fd(nf);
    for (int j = 0; j < nf; ++j) fd[j] = forms->diagonal(j);
    const auto& ids = part.diagonal_classes();
    for (int i = 0; i < N; ++i) {
      const auto id = ids[i];
      if (has_vf) {
        for (int v = 0; v < nv; ++v) {
          for (int f = 0; f < nf; ++f) {
            total_vf(id, v * nf + f) += (*vecs)(i, v) * fd[f][i];
          }
        }
      }
      if (u) {
        const double ui = (*u)[i];
        total_w[id] += ui * ui * ui;
      }
    }
  }

  const int n_units = part.n_units();
  const int n_blocks = (n_units + kUnitBlock - 1) / kUnitBlock;
  std::vector<MatrixXd> pvf(n_blocks);
  std::vector<VectorXd> pw(n_blocks);

  [[maybe_unused]] const bool par = exec == Exec::parallel;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) if (par)
#endif
  for (int b = 0; b < n_blocks; ++b) {
    if (has_vf) pvf[b] = MatrixXd::Zero(L, nv * nf);
    if (u) pw[b] = VectorXd::Zero(L);
    std::vector<MatrixXd> FB(nf);
    MatrixXd VB;
    VectorXd uv;
    const int g_end = std::min((b + 1) * kUnitBlock, n_units);
    for (int g = b * kUnitBlock; g < g_end; ++g) {
      const auto& mem = part.unit_members(g);
      const int n = static_cast<int>(mem.size());
      const auto stream = part.unit_stream(g);
      std::size_t sp = 0;
      for (int j = 0; j < nf; ++j) {
        FB[j].resize(n, n);
        forms->fill_block(j, mem, FB[j]);
      }
      if (vecs) {
        VB.resize(n, nv);
        for (int i = 0; i < n; ++i) VB.row(i) = vecs->row(mem[i]);
      }
      if (u) {
        uv.resize(n);
        for (int i = 0; i < n; ++i) uv[i] = (*u)[mem[i]];
      }
      int pos[3];
      for (pos[0] = 0; pos[0] < n; ++pos[0]) {
        for (pos[1] = pos[0]; pos[1] < n; ++pos[1]) {
          for (pos[2] = pos[1]; pos[2] < n; ++pos[2]) {
            if (pos[0] == pos[2]) continue;
            const auto id = stream[sp++];
            if (id == IndexClassPartition::kSkip) continue;
            const double inv_rep = 1.0 / tie_rep<3>(pos);
            const int a = pos[0], bb = pos[1], c = pos[2];
            if (u) pw[b][id] += 6.0 * inv_rep * uv[a] * uv[bb] * uv[c];
            if (has_vf) {
              const double w = 2.0 * inv_rep;
              for (int v = 0; v < nv; ++v) {
                for (int f = 0; f < nf; ++f) {
                  pvf[b](id, v * nf + f) +=
                      w * (VB(a, v) * FB[f](bb, c) + VB(bb, v) * FB[f](a, c) +
                           VB(c, v) * FB[f](a, bb));
                }
              }
            }
          }
        }
      }
    }
  }

  for (int b = 0; b < n_blocks; ++b) {
    if (has_vf) total_vf += pvf[b];
    if (u) total_w += pw[b];
  }

  TripleSums sums;
  sums.vec_form_sums = std::move(total_vf);
  sums.weight_sums = std::move(total_w);
  return sums;
}

// --- class-average coefficients ----------------------------------------------

VectorXd class_coefficients_reml(const IndexClassPartition& partition,
                                 const RemlScoreParts& parts, int j, int k) {
  if (j < 0 || k < 0 || j >= static_cast<int>(parts.B.size()) ||
      k >= static_cast<int>(parts.B.size())) {
    throw std::invalid_argument("class_coefficients_reml: index out of range");
  }
  const int L = partition.n_classes();
  VectorXd c(L);
  if (j == k) {
    DenseSymmetricForms forms({&parts.B[j]});
    const auto sums = sweep_quadruples(partition, &forms, nullptr, nullptr);
    for (int l = 0; l < L; ++l) {
      c[l] = sums.pair_sums(l, 0) / partition.classes()[l].cardinality;
    }
  } else {
    DenseSymmetricForms forms({&parts.B[j], &parts.B[k]});
    const auto sums = sweep_quadruples(partition, &forms, nullptr, nullptr);
    const int pk = packed_pair_index(0, 1, 2);
    for (int l = 0; l < L; ++l) {
      // The packed (0,1) sum counts both factor orders, which equals the
      // ordered-tuple sum of B_j[i1,i2] B_k[i3,i4] over the class.
      c[l] = sums.pair_sums(l, pk) / partition.classes()[l].cardinality;
    }
  }
  return c;
}

MlClassCoefficients class_coefficients_ml(const IndexClassPartition& triples,
                                          const IndexClassPartition& quadruples,
                                          const MlScoreParts& parts, int j,
                                          int k) {
  // c1 reads j as a fixed-effect column and k as a variance-term index;
  // c2 reads both as variance-term indices. A part whose index is out of
  // range stays empty.
  const int p = static_cast<int>(parts.q.cols());
  const int nf = static_cast<int>(parts.C.size());
  if (k < 0 || k >= nf || j < 0) {
    throw std::invalid_argument("class_coefficients_ml: index out of range");
  }
  MlClassCoefficients out;
  if (j < p) {
    DenseSymmetricForms forms({&parts.C[k]});
    const MatrixXd qj = parts.q.col(j);
    const auto sums = sweep_triples(triples, &qj, &forms, nullptr);
    out.c1.resize(triples.n_classes());
    for (int l = 0; l < triples.n_classes(); ++l) {
      out.c1[l] = sums.vec_form_sums(l, 0) / triples.classes()[l].cardinality;
    }
  }
  if (j < nf) {
    if (j == k) {
      DenseSymmetricForms forms({&parts.C[j]});
      const auto sums = sweep_quadruples(quadruples, &forms, nullptr, nullptr);
      out.c2.resize(quadruples.n_classes());
      for (int l = 0; l < quadruples.n_classes(); ++l) {
        out.c2[l] = sums.pair_sums(l, 0) / quadruples.classes()[l].cardinality;
      }
    } else {
      DenseSymmetricForms forms({&parts.C[j], &parts.C[k]});
      const auto sums = sweep_quadruples(quadruples, &forms, nullptr, nullptr);
      out.c2.resize(quadruples.n_classes());
      for (int l = 0; l < quadruples.n_classes(); ++l) {
        out.c2[l] = sums.pair_sums(l, 1) / quadruples.classes()[l].cardinality;
      }
    }
  }
  return out;
}

}  // namespace poquim
