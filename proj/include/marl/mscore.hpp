#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "marl/membership.hpp"
#include "marl/rng.hpp"

namespace marl::mscore {

// Degree-corrected mixed-membership network model:
// Omega(i,j) = theta_i theta_j gamma_i' P gamma_j, clipped to [0,1].
struct DcmmModel {
  MembershipMatrix gamma;
  Eigen::VectorXd degrees;       // theta_i > 0
  Eigen::MatrixXd connectivity;  // symmetric K x K, entries in [0,1]

  DcmmModel(MembershipMatrix g, Eigen::VectorXd theta, Eigen::MatrixXd p);

  // Edge-probability matrix; `max_excess` reports how far raw entries
  // exceeded [0,1] before clipping (0 when none did).
  Eigen::MatrixXd edge_probabilities(double* max_excess = nullptr) const;
};

// Symmetric 0/1 adjacency with zero diagonal, upper triangle Bernoulli.
Eigen::MatrixXd generate_dcmm(const DcmmModel& model, std::uint64_t seed);

struct ScoreRatios {
  Eigen::MatrixXd ratios;       // N x (K-1)
  Eigen::VectorXd eigenvalues;  // top K by magnitude, descending
  Eigen::MatrixXd eigenvectors; // N x K, matching columns
  double threshold = 0.0;       // H
  bool degenerate_spectrum = false;  // |lambda_K| ~ |lambda_{K+1}| tie
};

// SCORE step: entrywise ratios of the top-K eigenvectors, thresholded at H
// (H = log N when h <= 0). The leading eigenvector's sign is normalized so
// its entries sum positive.
ScoreRatios score_ratios(const Eigen::MatrixXd& adjacency, int k,
                         double h = 0.0);

// Seeded k-means over the ratio rows: greedy farthest-point initialization,
// 10 restarts, 100 Lloyd iterations, best inertia; centers returned in
// lexicographic order.
Eigen::MatrixXd vertex_hunting(const Eigen::MatrixXd& ratios, int k,
                               std::uint64_t seed);

struct ReconstructionFlags {
  int clamped_scale_entries = 0;  // nonpositive b_1 square-root arguments
  std::vector<int> fallback_rows;  // rows that fell back to uniform 1/K
};

// Barycentric membership reconstruction from ratios and vertices.
MembershipMatrix reconstruct_membership(const ScoreRatios& ratios,
                                        const Eigen::MatrixXd& vertices,
                                        ReconstructionFlags* flags = nullptr);

// Full MSCORE pipeline. K = 1 returns the all-ones single-community matrix.
MembershipMatrix estimate(const Eigen::MatrixXd& adjacency, int k, double h,
                          std::uint64_t seed);

struct Alignment {
  std::vector<int> permutation;  // estimated column -> reference column
  double mean_l1_error = 0.0;
  bool greedy = false;  // K > 8 fallback, possibly suboptimal
};

// Resolves the column-label ambiguity against a reference membership.
Alignment align(const MembershipMatrix& estimated,
                const MembershipMatrix& reference);

}  // namespace marl::mscore
