#include "wood/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "wood/error.hpp"

namespace wood {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogFloor = 1e-300;

void require_same_size(const ProbVector& r1, const ProbVector& r2, const CostMatrix& m) {
  if (r1.size() != r2.size() || r1.size() != m.size()) {
    throw DimensionError("marginals of size " + std::to_string(r1.size()) + " and " +
                         std::to_string(r2.size()) + " against a " +
                         std::to_string(m.size()) + "x" + std::to_string(m.size()) +
                         " cost matrix");
  }
}

// Largest relative change between successive scaling vectors. Entries that
// stay at zero do not move.
double relative_change(std::span<const double> prev, std::span<const double> next) {
  double worst = 0.0;
  for (std::size_t j = 0; j < prev.size(); ++j) {
    const double scale = std::max(std::abs(prev[j]), std::abs(next[j]));
    if (scale == 0.0) continue;
    worst = std::max(worst, std::abs(next[j] - prev[j]) / scale);
  }
  return worst;
}

double log_change(std::span<const double> prev, std::span<const double> next) {
  double worst = 0.0;
  for (std::size_t j = 0; j < prev.size(); ++j) {
    if (prev[j] == -kInf && next[j] == -kInf) continue;
    worst = std::max(worst, std::abs(next[j] - prev[j]));
  }
  return worst;
}

// Transport and entropic terms of a plan given log P entries.
void finish_plan(TransportResult& res, const CostMatrix& m, std::span<const double> log_plan) {
  const std::size_t k = m.size();
  res.plan.assign(k * k, 0.0);
  double transport = 0.0;
  double neg_entropy = 0.0;
  for (std::size_t idx = 0; idx < k * k; ++idx) {
    if (log_plan[idx] == -kInf) continue;
    const double p = std::exp(log_plan[idx]);
    res.plan[idx] = p;
    transport += p * m.entries()[idx];
    if (p > 0.0) neg_entropy += p * log_plan[idx];
  }
  res.value = transport;
  res.regularized_value = transport + neg_entropy / res.lambda;
}

// Returns nullopt when the scaled iterations overflow or underflow.
std::optional<TransportResult> sinkhorn_scaled(const ProbVector& r1, const ProbVector& r2,
                                               const CostMatrix& m, const SinkhornConfig& cfg) {
  const std::size_t k = m.size();
  std::vector<double> kernel(k * k);
  for (std::size_t idx = 0; idx < k * k; ++idx) {
    kernel[idx] = std::exp(-cfg.lambda * m.entries()[idx]);
  }

  // 0/x and 0/0 are zero; positive/0 means the kernel underflowed.
  auto divide = [](double num, double den) -> std::optional<double> {
    if (num == 0.0) return 0.0;
    if (den == 0.0 || !std::isfinite(den)) return std::nullopt;
    const double q = num / den;
    if (!std::isfinite(q)) return std::nullopt;
    return q;
  };

  auto update_u = [&](std::span<const double> v, std::vector<double>& u) -> bool {
    for (std::size_t i = 0; i < k; ++i) {
      double kv = 0.0;
      for (std::size_t j = 0; j < k; ++j) kv += kernel[i * k + j] * v[j];
      const auto q = divide(r1[i], kv);
      if (!q) return false;
      u[i] = *q;
    }
    return true;
  };

  TransportResult res;
  res.lambda = cfg.lambda;
  std::vector<double> u(k, 0.0);
  std::vector<double> v(k, 1.0);
  std::vector<double> next(k, 0.0);

  for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
    if (!update_u(v, u)) return std::nullopt;
    for (std::size_t j = 0; j < k; ++j) {
      double ktu = 0.0;
      for (std::size_t i = 0; i < k; ++i) ktu += kernel[i * k + j] * u[i];
      const auto q = divide(r2[j], ktu);
      if (!q) return std::nullopt;
      next[j] = *q;
    }
    const double change = relative_change(v, next);
    v.swap(next);
    res.iterations = it;
    if (change < cfg.tol) {
      res.converged = true;
      break;
    }
  }
  if (!update_u(v, u)) return std::nullopt;

  std::vector<double> log_plan(k * k, -kInf);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (u[i] > 0.0 && v[j] > 0.0 && kernel[i * k + j] > 0.0) {
        log_plan[i * k + j] = std::log(u[i]) - cfg.lambda * m(i, j) + std::log(v[j]);
      }
    }
  }
  finish_plan(res, m, log_plan);
  if (!std::isfinite(res.value)) return std::nullopt;
  res.u = std::move(u);
  res.v = std::move(v);
  return res;
}

double log_sum_exp(std::span<const double> terms) {
  double hi = -kInf;
  for (double t : terms) hi = std::max(hi, t);
  if (hi == -kInf) return -kInf;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - hi);
  return hi + std::log(acc);
}

TransportResult sinkhorn_log(const ProbVector& r1, const ProbVector& r2, const CostMatrix& m,
                             const SinkhornConfig& cfg) {
  const std::size_t k = m.size();
  std::vector<double> log_kernel(k * k);
  for (std::size_t idx = 0; idx < k * k; ++idx) {
    log_kernel[idx] = -cfg.lambda * m.entries()[idx];
  }

  auto log_div = [](double num, double log_den, const char* side, std::size_t index) {
    if (num == 0.0) return -kInf;
    if (log_den == -kInf) {
      throw NumericError(std::string("positive mass over an empty ") + side +
                         " kernel sum at index " + std::to_string(index));
    }
    return std::log(num) - log_den;
  };

  std::vector<double> terms(k);
  auto update_u = [&](std::span<const double> log_v, std::vector<double>& log_u) {
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) terms[j] = log_kernel[i * k + j] + log_v[j];
      log_u[i] = log_div(r1[i], log_sum_exp(terms), "row", i);
    }
  };

  TransportResult res;
  res.lambda = cfg.lambda;
  res.log_domain = true;
  std::vector<double> log_u(k, 0.0);
  std::vector<double> log_v(k, 0.0);
  std::vector<double> next(k, 0.0);

  for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
    update_u(log_v, log_u);
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t i = 0; i < k; ++i) terms[i] = log_kernel[i * k + j] + log_u[i];
      next[j] = log_div(r2[j], log_sum_exp(terms), "column", j);
    }
    const double change = log_change(log_v, next);
    log_v.swap(next);
    res.iterations = it;
    if (change < cfg.tol) {
      res.converged = true;
      break;
    }
  }
  update_u(log_v, log_u);

  std::vector<double> log_plan(k * k, -kInf);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (log_u[i] == -kInf || log_v[j] == -kInf) continue;
      log_plan[i * k + j] = log_u[i] + log_kernel[i * k + j] + log_v[j];
    }
  }
  finish_plan(res, m, log_plan);
  res.u = std::move(log_u);
  res.v = std::move(log_v);
  return res;
}

// Successive shortest paths on the bipartite transport network. Row nodes
// carry supply r1, column nodes demand r2, and row->column arcs are
// uncapacitated with cost M[i][j].
double min_cost_flow(const ProbVector& r1, const ProbVector& r2, const CostMatrix& m) {
  constexpr double kMassEps = 1e-14;
  const std::size_t k = m.size();
  std::vector<double> supply(r1.values().begin(), r1.values().end());
  std::vector<double> demand(r2.values().begin(), r2.values().end());
  std::vector<double> flow(k * k, 0.0);

  // Node ids: rows [0, k), columns [k, 2k).
  const std::size_t nodes = 2 * k;
  std::vector<double> dist(nodes);
  std::vector<std::size_t> pred(nodes);

  for (std::size_t round = 0; round < 4 * k * k + 8; ++round) {
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(pred.begin(), pred.end(), nodes);
    bool any_supply = false;
    for (std::size_t i = 0; i < k; ++i) {
      if (supply[i] > kMassEps) {
        dist[i] = 0.0;
        any_supply = true;
      }
    }
    if (!any_supply) break;

    // Bellman-Ford over forward arcs and residual backward arcs.
    for (std::size_t pass = 0; pass < nodes; ++pass) {
      bool relaxed = false;
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          const double c = m(i, j);
          if (dist[i] + c < dist[k + j] - 1e-15) {
            dist[k + j] = dist[i] + c;
            pred[k + j] = i;
            relaxed = true;
          }
          if (flow[i * k + j] > kMassEps && dist[k + j] - c < dist[i] - 1e-15) {
            dist[i] = dist[k + j] - c;
            pred[i] = k + j;
            relaxed = true;
          }
        }
      }
      if (!relaxed) break;
    }

    std::size_t sink = nodes;
    for (std::size_t j = 0; j < k; ++j) {
      if (demand[j] > kMassEps && dist[k + j] < kInf &&
          (sink == nodes || dist[k + j] < dist[sink])) {
        sink = k + j;
      }
    }
    if (sink == nodes) break;

    // Bottleneck along the path back to a source row.
    double amount = demand[sink - k];
    std::size_t node = sink;
    while (pred[node] != nodes) {
      const std::size_t prev = pred[node];
      if (prev >= k) amount = std::min(amount, flow[node * k + (prev - k)]);
      node = prev;
    }
    amount = std::min(amount, supply[node]);

    supply[node] -= amount;
    demand[sink - k] -= amount;
    node = sink;
    while (pred[node] != nodes) {
      const std::size_t prev = pred[node];
      if (prev < k) {
        flow[prev * k + (node - k)] += amount;
      } else {
        flow[node * k + (prev - k)] -= amount;
      }
      node = prev;
    }
  }

  double cost = 0.0;
  for (std::size_t idx = 0; idx < k * k; ++idx) cost += flow[idx] * m.entries()[idx];
  return cost;
}

}  // namespace

CostMatrix::CostMatrix(std::size_t k, std::vector<double> entries, CostKind kind)
    : k_(k), entries_(std::move(entries)), kind_(kind) {
  if (k_ < 2) throw DimensionError("cost matrix needs K >= 2");
  if (entries_.size() != k_ * k_) {
    throw DimensionError("cost matrix has " + std::to_string(entries_.size()) +
                         " entries, expected " + std::to_string(k_ * k_));
  }
  for (double c : entries_) {
    if (!std::isfinite(c) || c < 0.0) throw InputError("cost entries must be finite and >= 0");
  }
  if (kind_ == CostKind::Binary) {
    for (std::size_t i = 0; i < k_; ++i) {
      for (std::size_t j = 0; j < k_; ++j) {
        if ((*this)(i, j) != (i == j ? 0.0 : 1.0)) {
          throw InputError("binary cost matrix must be 0 on the diagonal and 1 elsewhere");
        }
      }
    }
  }
}

double CostMatrix::max_entry() const noexcept {
  return *std::max_element(entries_.begin(), entries_.end());
}

CostMatrix CostMatrix::transposed() const {
  std::vector<double> t(k_ * k_);
  for (std::size_t i = 0; i < k_; ++i) {
    for (std::size_t j = 0; j < k_; ++j) t[j * k_ + i] = entries_[i * k_ + j];
  }
  return CostMatrix(k_, std::move(t), kind_);
}

void SinkhornConfig::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be > 0");
  if (max_iter < 1) throw ConfigError("max_iter must be >= 1");
  if (!(tol > 0.0)) throw ConfigError("tol must be > 0");
}

double exact_wasserstein(const ProbVector& r1, const ProbVector& r2, const CostMatrix& m,
                         std::size_t max_k) {
  require_same_size(r1, r2, m);
  const std::size_t k = m.size();

  // One-hot marginal: the coupling is forced onto a single row or column.
  if (const std::size_t hot = r2.one_hot_index(); hot < k) {
    double cost = 0.0;
    for (std::size_t i = 0; i < k; ++i) cost += m(i, hot) * r1[i];
    return cost;
  }
  if (const std::size_t hot = r1.one_hot_index(); hot < k) {
    double cost = 0.0;
    for (std::size_t j = 0; j < k; ++j) cost += m(hot, j) * r2[j];
    return cost;
  }
  if (k > max_k) {
    throw CapacityError("exact transport limited to K <= " + std::to_string(max_k) +
                        ", got K=" + std::to_string(k));
  }
  return min_cost_flow(r1, r2, m);
}

TransportResult sinkhorn_distance(const ProbVector& r1, const ProbVector& r2,
                                  const CostMatrix& m, const SinkhornConfig& cfg) {
  require_same_size(r1, r2, m);
  cfg.validate();
  if (cfg.domain == SinkhornDomain::Log) return sinkhorn_log(r1, r2, m, cfg);
  if (auto scaled = sinkhorn_scaled(r1, r2, m, cfg)) return *std::move(scaled);
  if (cfg.domain == SinkhornDomain::Scaled) {
    throw NumericError("scaled Sinkhorn iterations overflowed at lambda=" +
                       std::to_string(cfg.lambda));
  }
  return sinkhorn_log(r1, r2, m, cfg);
}

std::vector<double> sinkhorn_gradient(const TransportResult& result, const SinkhornConfig& cfg) {
  if (!result.converged) {
    throw NumericError("gradient requested from an unconverged Sinkhorn result after " +
                       std::to_string(result.iterations) + " iterations");
  }
  const double lambda = result.lambda > 0.0 ? result.lambda : cfg.lambda;
  std::vector<double> grad(result.v.size());
  for (std::size_t j = 0; j < grad.size(); ++j) {
    double log_v = 0.0;
    if (result.log_domain) {
      if (std::isnan(result.v[j]) || result.v[j] == kInf) {
        throw NumericError("non-finite log scaling entry at index " + std::to_string(j));
      }
      log_v = std::max(result.v[j], std::log(kLogFloor));
    } else {
      if (!(result.v[j] >= 0.0) || !std::isfinite(result.v[j])) {
        throw NumericError("scaling entry v[" + std::to_string(j) + "] is not positive");
      }
      log_v = std::log(std::max(result.v[j], kLogFloor));
    }
    grad[j] = (log_v + 0.5) / lambda;
  }
  return grad;
}

AxiomReport metric_axioms_check(std::span<const ProbTriple> samples, const CostMatrix& m,
                                double tolerance) {
  if (m.kind() != CostKind::Binary) {
    throw InputError("metric axioms hold only for the binary cost matrix");
  }
  AxiomReport report;
  auto flag = [&](std::size_t s, Axiom a, double excess) {
    if (excess > tolerance) report.violations.push_back({s, a, excess});
  };
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& [a, b, c] = samples[s];
    const double ab = exact_wasserstein(a, b, m);
    const double ba = exact_wasserstein(b, a, m);
    const double bc = exact_wasserstein(b, c, m);
    const double ac = exact_wasserstein(a, c, m);
    const double aa = exact_wasserstein(a, a, m);

    flag(s, Axiom::NonNegativity, -std::min({ab, bc, ac}));
    flag(s, Axiom::Identity, aa);
    double separation = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      separation = std::max(separation, std::abs(a[i] - b[i]));
    }
    if (separation > 2.0 * tolerance && ab <= tolerance) {
      flag(s, Axiom::Identity, separation);
    }
    flag(s, Axiom::Symmetry, std::abs(ab - ba));
    flag(s, Axiom::Triangle, ac - (ab + bc));
    ++report.checked;
  }
  return report;
}

std::string to_string(Axiom axiom) {
  switch (axiom) {
    case Axiom::NonNegativity: return "non-negativity";
    case Axiom::Identity: return "identity";
    case Axiom::Symmetry: return "symmetry";
    case Axiom::Triangle: return "triangle";
  }
  return "unknown";
}

}  // namespace wood
