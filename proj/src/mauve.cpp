#include "prefixrank/mauve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prefixrank/rng.hpp"

namespace prefixrank::eval {

double kl_divergence(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("KL divergence needs histograms of equal size");
  double kl = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > 0.0) kl += a[i] * std::log(a[i] / b[i]);
  }
  return kl;
}

MauveResult mauve_from_histograms(std::vector<double> p, std::vector<double> q, double c, std::size_t lambda_points) {
  if (p.size() != q.size() || p.empty()) throw Error("histograms must be non-empty and of equal size");
  if (!(c > 0.0)) throw Error("MAUVE scaling constant c must be positive");
  if (lambda_points == 0) throw Error("need at least one mixing weight");
  MauveResult out;
  out.curve.reserve(lambda_points + 2);
  out.curve.emplace_back(0.0, 1.0);
  std::vector<double> r(p.size());
  for (std::size_t i = 1; i <= lambda_points; ++i) {
    const double lambda = static_cast<double>(i) / static_cast<double>(lambda_points + 1);
    for (std::size_t b = 0; b < p.size(); ++b) r[b] = p[b] == q[b] ? p[b] : lambda * p[b] + (1.0 - lambda) * q[b];
    out.curve.emplace_back(std::exp(-c * kl_divergence(q, r)), std::exp(-c * kl_divergence(p, r)));
  }
  out.curve.emplace_back(1.0, 0.0);
  std::stable_sort(out.curve.begin(), out.curve.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double area = 0.0;
  for (std::size_t i = 1; i < out.curve.size(); ++i) {
    const auto& [x0, y0] = out.curve[i - 1];
    const auto& [x1, y1] = out.curve[i];
    area += (x1 - x0) * (y0 + y1) / 2.0;
  }
  out.score = area;
  out.p = std::move(p);
  out.q = std::move(q);
  return out;
}

std::vector<std::size_t> kmeans_assign(const Eigen::MatrixXd& points, std::size_t k, std::size_t iterations,
                                       std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (k == 0 || k > n) throw Error("k-means needs 1 <= k <= number of points");
  const CounterRng rng(seed, 0);
  std::uint64_t counter = 0;

  Eigen::MatrixXd centers(static_cast<Eigen::Index>(k), points.cols());
  centers.row(0) = points.row(static_cast<Eigen::Index>(rng.below(counter++, n)));
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (points.row(static_cast<Eigen::Index>(i)) - centers.row(static_cast<Eigen::Index>(c - 1)))
                                  .squaredNorm());
      total += d2[i];
    }
    std::size_t pick = 0;
    const double u = rng.unit(counter++);
    if (total > 0.0) {
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i] / total;
        if (u < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(u * static_cast<double>(n));
    }
    centers.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(pick));
  }

  std::vector<std::size_t> assign(n, 0);
  auto assign_all = [&] {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d =
            (points.row(static_cast<Eigen::Index>(i)) - centers.row(static_cast<Eigen::Index>(c))).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      changed |= assign[i] != best;
      assign[i] = best;
    }
    return changed;
  };
  assign_all();
  for (std::size_t it = 0; it < iterations; ++it) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(centers.rows(), centers.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(static_cast<Eigen::Index>(assign[i])) += points.row(static_cast<Eigen::Index>(i));
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c] > 0) centers.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
    if (!assign_all()) break;
  }
  return assign;
}

MauveResult mauve_style(const Eigen::MatrixXd& human, const Eigen::MatrixXd& model, const MauveOptions& options) {
  if (human.rows() == 0 || model.rows() == 0) throw Error("MAUVE needs non-empty human and model corpora");
  if (human.cols() != model.cols()) throw Error("human and model features differ in dimension");
  if (!(options.epsilon >= 0.0)) throw Error("histogram smoothing epsilon must be >= 0");
  const auto total = static_cast<std::size_t>(human.rows() + model.rows());
  const std::size_t k = options.n_clusters == 0 ? std::max<std::size_t>(2, total / 10) : options.n_clusters;
  if (k < 2) throw Error("MAUVE needs at least 2 clusters");
  if (k > total) {
    throw Error("n_clusters (" + std::to_string(k) + ") exceeds the number of samples (" + std::to_string(total) + ")");
  }

  Eigen::MatrixXd all(static_cast<Eigen::Index>(total), human.cols());
  all << human, model;
  const auto assign = kmeans_assign(all, k, options.kmeans_iterations, options.seed);

  std::vector<double> p(k, 0.0);
  std::vector<double> q(k, 0.0);
  const auto nh = static_cast<std::size_t>(human.rows());
  for (std::size_t i = 0; i < total; ++i) (i < nh ? p : q)[assign[i]] += 1.0;
  auto smooth = [&](std::vector<double>& h, double count) {
    const double denom = count + options.epsilon * static_cast<double>(k) * count;
    for (double& x : h) x = (x + options.epsilon * count) / denom;
  };
  smooth(p, static_cast<double>(nh));
  smooth(q, static_cast<double>(total - nh));
  return mauve_from_histograms(std::move(p), std::move(q), options.c, options.lambda_points);
}

MauveResult mauve_style(std::span<const Tokens> human, std::span<const Tokens> model,
                        const encoder::EncoderParams& embedder, const MauveOptions& options) {
  auto features = [&](std::span<const Tokens> texts) {
    Eigen::MatrixXd f(static_cast<Eigen::Index>(texts.size()), static_cast<Eigen::Index>(embedder.d_out()));
    for (std::size_t i = 0; i < texts.size(); ++i)
      f.row(static_cast<Eigen::Index>(i)) = encoder::encode(embedder, texts[i], encoder::Role::suffix).transpose();
    return f;
  };
  return mauve_style(features(human), features(model), options);
}

}  // namespace prefixrank::eval
