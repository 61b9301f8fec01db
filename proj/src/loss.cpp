#include "wood/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "wood/error.hpp"

namespace wood {

namespace {

void require_label(const ProbVector& f, std::size_t k) {
  if (k >= f.size()) {
    throw IndexError("label " + std::to_string(k) + " out of range for K=" +
                     std::to_string(f.size()));
  }
}

}  // namespace

LossValue wood_loss(const BatchSlices& batch, const ScoreConfig& cfg) {
  LossValue out;
  if (!batch.ind.empty()) {
    double sum = 0.0;
    for (const auto& [f, k] : batch.ind) {
      require_label(f, k);
      sum += -std::log(std::max(f[k], kProbFloor));
    }
    out.ce_term = sum / static_cast<double>(batch.ind.size());
  }
  if (!batch.ood.empty()) {
    double sum = 0.0;
    for (const auto& f : batch.ood) sum += wood_score(f, cfg);
    out.ood_term = sum / static_cast<double>(batch.ood.size());
  }
  out.total = out.ce_term - batch.beta * out.ood_term;
  return out;
}

std::vector<double> grad_ind(const ProbVector& f, std::size_t k, std::size_t n_ind) {
  require_label(f, k);
  if (n_ind == 0) throw InputError("grad_ind needs n_ind >= 1");
  std::vector<double> g(f.size(), 0.0);
  g[k] = -1.0 / (static_cast<double>(n_ind) * std::max(f[k], kProbFloor));
  return g;
}

std::vector<double> grad_ood(const ProbVector& f, const ScoreConfig& cfg, std::size_t n_ood,
                             double beta) {
  if (n_ood == 0) throw InputError("grad_ood needs n_ood >= 1");
  const std::size_t dim = f.size();
  const double weight = beta / static_cast<double>(n_ood);
  // Gradient of W itself; the loss carries -weight * W.
  std::vector<double> dw(dim, 0.0);

  if (cfg.evaluation == ScoreEvaluation::ClosedForm) {
    if (cfg.matrix_kind == CostKind::Binary) {
      dw[f.argmax()] = -1.0;
    } else {
      for (std::size_t i = 0; i < dim; ++i) dw[i] = -2.0 * f[i];
    }
  } else {
    const std::size_t k_star = score_argmin_class(f, cfg);
    const TransportResult res = onehot_transport(f, k_star, cfg.matrix_kind, cfg.sinkhorn);
    if (!res.converged) {
      throw NumericError("Sinkhorn did not converge in grad_ood: class " +
                         std::to_string(k_star) + ", " + std::to_string(res.iterations) +
                         " iterations, lambda=" + std::to_string(res.lambda));
    }
    dw = sinkhorn_gradient(res, cfg.sinkhorn);
    if (cfg.matrix_kind == CostKind::Dynamic) {
      // The cost itself moves with f. Row k* of the label-oriented cost is
      // 1 - f and the other rows are f, so Σ P ∂C/∂f_j = f_j - 2 P[k*][j].
      for (std::size_t j = 0; j < dim; ++j) {
        double col = 0.0;
        for (std::size_t i = 0; i < dim; ++i) col += res.plan[i * dim + j];
        dw[j] += col - 2.0 * res.plan[k_star * dim + j];
      }
    }
  }

  for (double& x : dw) x *= -weight;
  return centered(dw);
}

BoundDiagnostics bound_diagnostics(const BatchSlices& batch, const ScoreConfig& cfg) {
  BoundDiagnostics out;
  if (cfg.matrix_kind == CostKind::Binary) {
    out.alpha_m = 1.0;
  } else {
    for (const auto& f : batch.ood) {
      for (double p : f.values()) out.alpha_m = std::max({out.alpha_m, p, 1.0 - p});
    }
  }
  for (const auto& [f, k] : batch.ind) {
    for (double p : f.values()) out.m = std::min(out.m, std::max(p, kProbFloor));
  }
  return out;
}

}  // namespace wood
