#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "prefixrank/encoder.hpp"
#include "prefixrank/types.hpp"

namespace prefixrank::eval {

struct MauveOptions {
  /// 0 picks max(2, total / 10).
  std::size_t n_clusters = 0;
  double c = 5.0;
  /// Interior mixing weights i / (lambda_points + 1), i = 1..lambda_points.
  std::size_t lambda_points = 100;
  std::size_t kmeans_iterations = 25;
  /// Added to every histogram bin before renormalizing.
  double epsilon = 1e-6;
  std::uint64_t seed = 0;
};

struct MauveResult {
  /// Area under the divergence curve, in (0, 1].
  double score = 0.0;
  /// (exp(-c KL(Q||R)), exp(-c KL(P||R))) per mixing weight, plus the
  /// endpoints (0, 1) and (1, 0); sorted by x.
  std::vector<std::pair<double, double>> curve;
  /// Smoothed histograms: P from the human texts, Q from the model texts.
  std::vector<double> p;
  std::vector<double> q;
};

/// KL(a || b) in nats; entries of a equal to 0 contribute nothing.
double kl_divergence(std::span<const double> a, std::span<const double> b);

/// Curve and area for two already-normalized histograms. Where p[i] == q[i]
/// the mixture takes that value exactly, so identical histograms give 1.0.
MauveResult mauve_from_histograms(std::vector<double> p, std::vector<double> q, double c,
                                  std::size_t lambda_points);

/// Lloyd's algorithm with k-means++ seeding drawn from CounterRng(seed, 0).
/// Assignment ties go to the lowest cluster index; an empty cluster keeps its
/// previous center. Returns the cluster of each row.
std::vector<std::size_t> kmeans_assign(const Eigen::MatrixXd& points, std::size_t k, std::size_t iterations,
                                       std::uint64_t seed);

/// Quantizes the union of both feature sets (rows) with k-means, builds the
/// add-epsilon smoothed histograms and integrates the divergence curve.
MauveResult mauve_style(const Eigen::MatrixXd& human, const Eigen::MatrixXd& model, const MauveOptions& options = {});

/// Features are the encoder's suffix embeddings of each text.
MauveResult mauve_style(std::span<const Tokens> human, std::span<const Tokens> model,
                        const encoder::EncoderParams& embedder, const MauveOptions& options = {});

}  // namespace prefixrank::eval
