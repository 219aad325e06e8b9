#include "prefixrank/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prefixrank/types.hpp"

namespace prefixrank {
namespace {

// Cumulative-mass comparisons tolerate accumulated rounding of this size, so
// that e.g. ten entries of 0.1 reach a 0.9 threshold after nine of them.
constexpr double kMassSlack = 1e-12;

double parse_number(std::string_view text, std::string_view what) {
  try {
    std::size_t used = 0;
    const std::string s(text);
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw Error("invalid " + std::string(what) + " parameter '" + std::string(text) + "'");
  }
}

NextTokenDistribution keep_order_prefix(const NextTokenDistribution& dist,
                                        const std::vector<std::size_t>& order,
                                        double mass) {
  NextTokenDistribution out;
  out.probs.assign(dist.size(), 0.0);
  double kept = 0.0;
  for (std::size_t id : order) {
    if (dist.probs[id] <= 0.0) break;
    out.probs[id] = dist.probs[id];
    kept += dist.probs[id];
    if (kept + kMassSlack >= mass) break;
  }
  for (double& p : out.probs) p /= kept;
  return out;
}

/// Probability descending, ties by id ascending.
struct ByProbability {
  const std::vector<double>* probs;
  bool operator()(std::size_t a, std::size_t b) const {
    const double pa = (*probs)[a];
    const double pb = (*probs)[b];
    return pa > pb || (pa == pb && a < b);
  }
};

std::vector<std::size_t> by_probability(const NextTokenDistribution& dist) {
  std::vector<std::size_t> order(dist.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), ByProbability{&dist.probs});
  return order;
}

/// The first `head` entries of by_probability(), or the full order when
/// those entries do not reach `mass`.
std::vector<std::size_t> by_probability_until(const NextTokenDistribution& dist, std::size_t head, double mass) {
  head = std::min(head, dist.size());
  std::vector<std::size_t> order(dist.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(head), order.end(),
                    ByProbability{&dist.probs});
  double kept = 0.0;
  for (std::size_t r = 0; r < head; ++r) {
    const double p = dist.probs[order[r]];
    if (p <= 0.0) return order;
    kept += p;
    if (kept + kMassSlack >= mass) return order;
  }
  std::sort(order.begin() + static_cast<std::ptrdiff_t>(head), order.end(), ByProbability{&dist.probs});
  return order;
}

}  // namespace

double NextTokenDistribution::sum() const noexcept {
  return std::accumulate(probs.begin(), probs.end(), 0.0);
}

SamplingStrategy SamplingStrategy::parse(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view name = text.substr(0, colon);
  const bool has_param = colon != std::string_view::npos;
  const std::string_view arg = has_param ? text.substr(colon + 1) : std::string_view{};

  SamplingStrategy s;
  if (name == "greedy") {
    s = greedy();
  } else if (name == "ancestral") {
    s = ancestral();
  } else if (name == "nucleus" || name == "top_p" || name == "top-p") {
    s = nucleus(has_param ? parse_number(arg, "nucleus") : 0.9);
  } else if (name == "top_k" || name == "top-k" || name == "topk") {
    s = {Kind::top_k, has_param ? parse_number(arg, "top_k") : 40.0};
  } else if (name == "typical") {
    s = typical(has_param ? parse_number(arg, "typical") : 0.9);
  } else {
    throw Error("unknown sampling strategy '" + std::string(text) + "'");
  }
  s.validate();
  return s;
}

void SamplingStrategy::validate() const {
  switch (kind) {
    case Kind::nucleus:
      if (!(param > 0.0 && param <= 1.0)) throw Error("nucleus p must be in (0, 1]");
      break;
    case Kind::typical:
      if (!(param > 0.0 && param <= 1.0)) throw Error("typical tau must be in (0, 1]");
      break;
    case Kind::top_k:
      if (!(param >= 1.0) || param != std::floor(param)) throw Error("top_k k must be an integer >= 1");
      break;
    default:
      break;
  }
}

std::string SamplingStrategy::to_string() const {
  auto fmt = [](double v) {
    std::string s = std::to_string(v);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  };
  switch (kind) {
    case Kind::greedy: return "greedy";
    case Kind::ancestral: return "ancestral";
    case Kind::nucleus: return "nucleus:" + fmt(param);
    case Kind::top_k: return "top_k:" + fmt(param);
    case Kind::typical: return "typical:" + fmt(param);
  }
  return "unknown";
}

NextTokenDistribution truncate_distribution(const NextTokenDistribution& dist,
                                            const SamplingStrategy& strategy) {
  strategy.validate();
  if (dist.probs.empty()) return dist;

  switch (strategy.kind) {
    case SamplingStrategy::Kind::ancestral:
      return dist;

    case SamplingStrategy::Kind::greedy: {
      std::size_t best = 0;
      for (std::size_t i = 1; i < dist.size(); ++i) {
        if (dist.probs[i] > dist.probs[best]) best = i;
      }
      NextTokenDistribution out;
      out.probs.assign(dist.size(), 0.0);
      out.probs[best] = 1.0;
      return out;
    }

    case SamplingStrategy::Kind::top_k: {
      const auto k = static_cast<std::size_t>(strategy.param);
      NextTokenDistribution out;
      out.probs.assign(dist.size(), 0.0);
      std::size_t positive = 0;
      for (double p : dist.probs) positive += p > 0.0 ? 1 : 0;
      if (k >= positive) return dist;
      std::vector<std::size_t> order(dist.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                        ByProbability{&dist.probs});
      double kept = 0.0;
      for (std::size_t r = 0; r < k; ++r) {
        out.probs[order[r]] = dist.probs[order[r]];
        kept += dist.probs[order[r]];
      }
      for (double& p : out.probs) p /= kept;
      return out;
    }

    case SamplingStrategy::Kind::nucleus: {
      if (strategy.param >= 1.0) return dist;
      return keep_order_prefix(dist, by_probability_until(dist, 64, strategy.param), strategy.param);
    }

    case SamplingStrategy::Kind::typical: {
      if (strategy.param >= 1.0) return dist;
      double entropy = 0.0;
      for (double q : dist.probs) {
        if (q > 0.0) entropy -= q * std::log(q);
      }
      std::vector<double> deviation(dist.size());
      for (std::size_t i = 0; i < dist.size(); ++i) {
        const double q = dist.probs[i];
        deviation[i] = q > 0.0 ? std::abs(-std::log(q) - entropy)
                               : std::numeric_limits<double>::infinity();
      }
      std::vector<std::size_t> order(dist.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (deviation[a] != deviation[b]) return deviation[a] < deviation[b];
        return dist.probs[a] > dist.probs[b];
      });
      return keep_order_prefix(dist, order, strategy.param);
    }
  }
  return dist;
}

std::size_t sample_inverse_cdf(std::span<const double> probs, double u) {
  if (probs.empty()) throw Error("cannot sample from an empty distribution");
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cum += probs[i];
    last_positive = i;
    if (u < cum) return i;
  }
  return last_positive;
}

}  // namespace prefixrank
