#include "marl/mscore.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "marl/errors.hpp"

namespace marl::mscore {

DcmmModel::DcmmModel(MembershipMatrix g, Eigen::VectorXd theta,
                     Eigen::MatrixXd p)
    : gamma(std::move(g)), degrees(std::move(theta)), connectivity(std::move(p)) {
  if (degrees.size() != gamma.num_agents())
    throw ConfigError("DCMM: one degree parameter per node required");
  if ((degrees.array() <= 0.0).any())
    throw ConfigError("DCMM: degree parameters must be positive");
  if (connectivity.rows() != gamma.num_communities() ||
      connectivity.cols() != gamma.num_communities())
    throw ConfigError("DCMM: connectivity must be K x K");
  if ((connectivity - connectivity.transpose()).lpNorm<Eigen::Infinity>() >
      1e-12)
    throw ConfigError("DCMM: connectivity must be symmetric");
}

Eigen::MatrixXd DcmmModel::edge_probabilities(double* max_excess) const {
  const Eigen::MatrixXd mixed = gamma.matrix() * connectivity *
                                gamma.matrix().transpose();
  Eigen::MatrixXd omega =
      degrees.asDiagonal() * mixed * degrees.asDiagonal();
  double excess = 0.0;
  for (Eigen::Index i = 0; i < omega.rows(); ++i)
    for (Eigen::Index j = 0; j < omega.cols(); ++j) {
      if (omega(i, j) > 1.0) excess = std::max(excess, omega(i, j) - 1.0);
      if (omega(i, j) < 0.0) excess = std::max(excess, -omega(i, j));
      omega(i, j) = std::clamp(omega(i, j), 0.0, 1.0);
    }
  if (max_excess) *max_excess = excess;
  return omega;
}

Eigen::MatrixXd generate_dcmm(const DcmmModel& model, std::uint64_t seed) {
  const Eigen::MatrixXd omega = model.edge_probabilities();
  const Eigen::Index n = omega.rows();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  rng::Counter gen(seed, rng::kDcmmEdges);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double edge = gen.next_unit() < omega(i, j) ? 1.0 : 0.0;
      a(i, j) = edge;
      a(j, i) = edge;
    }
  return a;
}

namespace {

struct EigenPairs {
  Eigen::VectorXd values;   // top k by |lambda|, descending
  Eigen::MatrixXd vectors;  // n x k
  bool degenerate = false;
};

EigenPairs top_eigenpairs(const Eigen::MatrixXd& sym, int k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success)
    throw NumericError("symmetric eigendecomposition failed");
  const Eigen::VectorXd& all = solver.eigenvalues();
  const Eigen::Index n = all.size();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) {
                     return std::abs(all[a]) > std::abs(all[b]);
                   });
  EigenPairs out;
  out.values.resize(k);
  out.vectors.resize(sym.rows(), k);
  for (int i = 0; i < k; ++i) {
    out.values[i] = all[order[i]];
    out.vectors.col(i) = solver.eigenvectors().col(order[i]);
  }
  if (k < n &&
      std::abs(std::abs(all[order[k - 1]]) - std::abs(all[order[k]])) <=
          1e-12)
    out.degenerate = true;
  return out;
}

}  // namespace

ScoreRatios score_ratios(const Eigen::MatrixXd& adjacency, int k, double h) {
  const Eigen::Index n = adjacency.rows();
  if (adjacency.cols() != n) throw ConfigError("adjacency must be square");
  if ((adjacency - adjacency.transpose()).lpNorm<Eigen::Infinity>() > 1e-12)
    throw ConfigError("adjacency must be symmetric");
  if (k < 1) throw ConfigError("K must be >= 1");
  if (k > n) throw ConfigError("K exceeds node count");
  if (h <= 0.0) h = std::log(static_cast<double>(n));

  EigenPairs pairs = top_eigenpairs(adjacency, k);
  // Sign convention: leading eigenvector sums positive.
  if (pairs.vectors.col(0).sum() < 0.0) pairs.vectors.col(0) *= -1.0;

  ScoreRatios out;
  out.eigenvalues = pairs.values;
  out.eigenvectors = pairs.vectors;
  out.threshold = h;
  out.degenerate_spectrum = pairs.degenerate;
  out.ratios.resize(n, k - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lead = pairs.vectors(i, 0);
    for (int c = 1; c < k; ++c) {
      double r;
      if (lead == 0.0) {
        r = (pairs.vectors(i, c) >= 0.0 ? 1.0 : -1.0) * h;
      } else {
        const double ratio = pairs.vectors(i, c) / lead;
        r = (ratio >= 0.0 ? 1.0 : -1.0) * std::min(std::abs(ratio), h);
      }
      out.ratios(i, c - 1) = r;
    }
  }
  return out;
}

namespace {

bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return true;
    if (a[i] > b[i]) return false;
  }
  return false;
}

}  // namespace

Eigen::MatrixXd vertex_hunting(const Eigen::MatrixXd& ratios, int k,
                               std::uint64_t seed) {
  if (k < 2) throw ConfigError("vertex hunting requires K >= 2");
  const Eigen::Index n = ratios.rows();
  const Eigen::Index dim = ratios.cols();

  // Count distinct rows (exact comparison; the degenerate-input check).
  {
    std::vector<Eigen::Index> distinct;
    for (Eigen::Index i = 0; i < n && static_cast<int>(distinct.size()) < k;
         ++i) {
      bool seen = false;
      for (Eigen::Index j : distinct)
        if ((ratios.row(i) - ratios.row(j)).lpNorm<Eigen::Infinity>() == 0.0)
          seen = true;
      if (!seen) distinct.push_back(i);
    }
    if (static_cast<int>(distinct.size()) < k)
      throw ConfigError("vertex hunting: fewer than K distinct ratio rows");
  }

  constexpr int kRestarts = 10;
  constexpr int kIterations = 100;
  rng::Counter gen(seed, rng::kVertexHunt);
  Eigen::MatrixXd best_centers;
  double best_inertia = std::numeric_limits<double>::infinity();

  std::vector<int> assignment(n);
  for (int restart = 0; restart < kRestarts; ++restart) {
    // Greedy farthest-point init from a random seed row.
    Eigen::MatrixXd centers(k, dim);
    centers.row(0) = ratios.row(gen.uniform_index(static_cast<int>(n)));
    Eigen::VectorXd min_dist(n);
    for (Eigen::Index i = 0; i < n; ++i)
      min_dist[i] = (ratios.row(i) - centers.row(0)).squaredNorm();
    for (int c = 1; c < k; ++c) {
      Eigen::Index far = 0;
      min_dist.maxCoeff(&far);
      centers.row(c) = ratios.row(far);
      for (Eigen::Index i = 0; i < n; ++i)
        min_dist[i] = std::min(
            min_dist[i], (ratios.row(i) - centers.row(c)).squaredNorm());
    }

    for (int iter = 0; iter < kIterations; ++iter) {
      bool changed = iter == 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        int nearest = 0;
        double best = (ratios.row(i) - centers.row(0)).squaredNorm();
        for (int c = 1; c < k; ++c) {
          const double d = (ratios.row(i) - centers.row(c)).squaredNorm();
          if (d < best) {
            best = d;
            nearest = c;
          }
        }
        if (iter == 0 || assignment[i] != nearest) changed = true;
        assignment[i] = nearest;
      }
      if (!changed) break;
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, dim);
      Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
      for (Eigen::Index i = 0; i < n; ++i) {
        sums.row(assignment[i]) += ratios.row(i);
        counts[assignment[i]] += 1.0;
      }
      for (int c = 0; c < k; ++c) {
        if (counts[c] > 0.0) {
          centers.row(c) = sums.row(c) / counts[c];
        } else {
          // Re-seed an empty cluster at the point farthest from its center.
          Eigen::Index far = 0;
          double worst = -1.0;
          for (Eigen::Index i = 0; i < n; ++i) {
            const double d =
                (ratios.row(i) - centers.row(assignment[i])).squaredNorm();
            if (d > worst) {
              worst = d;
              far = i;
            }
          }
          centers.row(c) = ratios.row(far);
        }
      }
    }

    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      inertia += (ratios.row(i) - centers.row(assignment[i])).squaredNorm();
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_centers = centers;
    }
  }

  // Canonical lexicographic order.
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return lex_less(best_centers.row(a).transpose(),
                    best_centers.row(b).transpose());
  });
  Eigen::MatrixXd sorted(k, dim);
  for (int c = 0; c < k; ++c) sorted.row(c) = best_centers.row(order[c]);
  return sorted;
}

MembershipMatrix reconstruct_membership(const ScoreRatios& ratios,
                                        const Eigen::MatrixXd& vertices,
                                        ReconstructionFlags* flags) {
  const int k = static_cast<int>(vertices.rows());
  const Eigen::Index n = ratios.ratios.rows();
  if (vertices.cols() != k - 1)
    throw ConfigError("reconstruct: vertices must be K x (K-1)");

  ReconstructionFlags local;
  ReconstructionFlags* f = flags ? flags : &local;
  f->clamped_scale_entries = 0;
  f->fallback_rows.clear();

  // b_1(k) = (lambda_1 + v_k' diag(lambda_2..lambda_K) v_k)^{-1/2}
  Eigen::VectorXd b1(k);
  const Eigen::VectorXd tail =
      ratios.eigenvalues.segment(1, k - 1);
  for (int c = 0; c < k; ++c) {
    double arg = ratios.eigenvalues[0] +
                 vertices.row(c) * tail.asDiagonal() *
                     vertices.row(c).transpose();
    if (arg <= 0.0) {
      arg = 1e-12;
      ++f->clamped_scale_entries;
    }
    b1[c] = 1.0 / std::sqrt(arg);
  }

  // Barycentric system [V'; 1'] c = [r; 1].
  Eigen::MatrixXd system(k, k);
  system.topRows(k - 1) = vertices.transpose();
  system.row(k - 1).setOnes();
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(system);
  const bool invertible = qr.rank() == k;
  if (invertible) lu.compute(system);

  Eigen::MatrixXd gamma_hat(n, k);
  Eigen::VectorXd rhs(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    rhs.head(k - 1) = ratios.ratios.row(i).transpose();
    rhs[k - 1] = 1.0;
    const Eigen::VectorXd c =
        invertible ? Eigen::VectorXd(lu.solve(rhs))
                   : Eigen::VectorXd(qr.solve(rhs));
    Eigen::VectorXd tilde(k);
    for (int cc = 0; cc < k; ++cc)
      tilde[cc] = std::max(0.0, c[cc] / b1[cc]);
    const double mass = tilde.lpNorm<1>();
    if (mass <= 0.0) {
      gamma_hat.row(i).setConstant(1.0 / k);
      f->fallback_rows.push_back(static_cast<int>(i));
    } else {
      gamma_hat.row(i) = (tilde / mass).transpose();
    }
  }
  return MembershipMatrix(std::move(gamma_hat));
}

MembershipMatrix estimate(const Eigen::MatrixXd& adjacency, int k, double h,
                          std::uint64_t seed) {
  if (k == 1)
    return MembershipMatrix(Eigen::MatrixXd::Ones(adjacency.rows(), 1));
  const ScoreRatios ratios = score_ratios(adjacency, k, h);
  const Eigen::MatrixXd vertices = vertex_hunting(ratios.ratios, k, seed);
  return reconstruct_membership(ratios, vertices);
}

Alignment align(const MembershipMatrix& estimated,
                const MembershipMatrix& reference) {
  const int k = reference.num_communities();
  const Eigen::Index n = reference.num_agents();
  if (estimated.num_communities() != k || estimated.num_agents() != n)
    throw ConfigError("align: shape mismatch");

  // Pairwise column L1 distances summed over rows.
  Eigen::MatrixXd cost(k, k);
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b)
      cost(a, b) =
          (estimated.matrix().col(a) - reference.matrix().col(b)).lpNorm<1>();

  Alignment out;
  out.permutation.resize(k);
  if (k <= 8) {
    std::vector<int> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> best_perm = perm;
    do {
      double total = 0.0;
      for (int a = 0; a < k; ++a) total += cost(a, perm[a]);
      if (total < best) {
        best = total;
        best_perm = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    out.permutation = best_perm;
    out.mean_l1_error = best / static_cast<double>(n);
  } else {
    out.greedy = true;
    std::vector<bool> used(k, false);
    double total = 0.0;
    for (int a = 0; a < k; ++a) {
      int pick = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int b = 0; b < k; ++b)
        if (!used[b] && cost(a, b) < best) {
          best = cost(a, b);
          pick = b;
        }
      used[pick] = true;
      out.permutation[a] = pick;
      total += best;
    }
    out.mean_l1_error = total / static_cast<double>(n);
  }
  return out;
}

}  // namespace marl::mscore
