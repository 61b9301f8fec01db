#include "oracles.hpp"

#include <cmath>

namespace oracle {

namespace {

constexpr double kPivotEps = 1e-12;

// Tableau rows hold [coefficients | rhs]; `basis[r]` is the basic column of row r.
struct Tableau {
  std::size_t rows = 0;
  std::size_t cols = 0;  // variable columns, excluding rhs
  std::vector<std::vector<double>> a;
  std::vector<std::size_t> basis;

  double& rhs(std::size_t r) { return a[r][cols]; }

  void pivot(std::size_t pr, std::size_t pc) {
    const double p = a[pr][pc];
    for (double& x : a[pr]) x /= p;
    for (std::size_t r = 0; r < rows; ++r) {
      if (r == pr) continue;
      const double factor = a[r][pc];
      if (factor == 0.0) continue;
      for (std::size_t c = 0; c <= cols; ++c) a[r][c] -= factor * a[pr][c];
    }
    basis[pr] = pc;
  }

  // Minimizes cost·x over columns flagged in `allowed`. Bland's rule: the
  // lowest-index improving column enters, ties in the ratio test go to the
  // lowest basic index.
  void minimize(const std::vector<double>& cost, const std::vector<bool>& allowed) {
    for (;;) {
      std::size_t enter = cols;
      for (std::size_t c = 0; c < cols && enter == cols; ++c) {
        if (!allowed[c]) continue;
        double reduced = cost[c];
        for (std::size_t r = 0; r < rows; ++r) reduced -= cost[basis[r]] * a[r][c];
        if (reduced < -1e-11) enter = c;
      }
      if (enter == cols) return;

      std::size_t leave = rows;
      double best = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        if (a[r][enter] <= kPivotEps) continue;
        const double ratio = rhs(r) / a[r][enter];
        if (leave == rows || ratio < best - 1e-15 ||
            (std::abs(ratio - best) <= 1e-15 && basis[r] < basis[leave])) {
          leave = r;
          best = ratio;
        }
      }
      if (leave == rows) throw std::logic_error("unbounded transport LP");
      pivot(leave, enter);
    }
  }
};

}  // namespace

LpSolution lp_transport(const std::vector<double>& r1, const std::vector<double>& r2,
                        const std::vector<double>& m) {
  const std::size_t k = r1.size();
  if (k > kMaxLpClasses) throw CapacityError("lp_transport supports at most 16 classes");
  if (k == 0 || r2.size() != k || m.size() != k * k) throw InputError("lp_transport shape mismatch");

  // Variables: x[i*k + j] for the coupling, then one artificial per row.
  // Row i < k: Σ_j x_ij = r1[i]. Row k + j (j < k-1): Σ_i x_ij = r2[j]. The
  // last column constraint is implied by the others and dropped.
  const std::size_t n_constraints = 2 * k - 1;
  const std::size_t n_vars = k * k;
  Tableau t;
  t.rows = n_constraints;
  t.cols = n_vars + n_constraints;
  t.a.assign(t.rows, std::vector<double>(t.cols + 1, 0.0));
  t.basis.resize(t.rows);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      t.a[i][i * k + j] = 1.0;
      if (j + 1 < k) t.a[k + j][i * k + j] = 1.0;
    }
    t.rhs(i) = r1[i];
  }
  for (std::size_t j = 0; j + 1 < k; ++j) t.rhs(k + j) = r2[j];
  for (std::size_t r = 0; r < t.rows; ++r) {
    t.a[r][n_vars + r] = 1.0;
    t.basis[r] = n_vars + r;
  }

  // Phase 1: drive the artificials to zero.
  std::vector<double> phase1(t.cols, 0.0);
  for (std::size_t r = 0; r < n_constraints; ++r) phase1[n_vars + r] = 1.0;
  t.minimize(phase1, std::vector<bool>(t.cols, true));
  for (std::size_t r = 0; r < t.rows; ++r) {
    if (t.basis[r] < n_vars) continue;
    if (t.rhs(r) > 1e-9) throw InputError("marginals are infeasible");
    for (std::size_t c = 0; c < n_vars; ++c) {
      if (std::abs(t.a[r][c]) > kPivotEps) {
        t.pivot(r, c);
        break;
      }
    }
  }

  // Phase 2 over the coupling variables only.
  std::vector<double> phase2(t.cols, 0.0);
  for (std::size_t c = 0; c < n_vars; ++c) phase2[c] = m[c];
  std::vector<bool> allowed(t.cols, false);
  for (std::size_t c = 0; c < n_vars; ++c) allowed[c] = true;
  t.minimize(phase2, allowed);

  LpSolution sol;
  sol.coupling.assign(n_vars, 0.0);
  for (std::size_t r = 0; r < t.rows; ++r) {
    if (t.basis[r] < n_vars) sol.coupling[t.basis[r]] = std::max(0.0, t.rhs(r));
  }
  for (std::size_t c = 0; c < n_vars; ++c) sol.value += sol.coupling[c] * m[c];
  return sol;
}

std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& fn,
                                const std::vector<double>& point, double step) {
  if (!(step > 0.0)) throw InputError("finite-difference step must be positive");
  const std::size_t k = point.size();
  if (k < 2) throw InputError("need at least two coordinates");

  std::vector<double> grad(k, 0.0);
  // Helmert basis: b_j = (1, ..., 1, -j, 0, ..., 0) / sqrt(j (j + 1)) with j ones.
  for (std::size_t j = 1; j < k; ++j) {
    const double norm = std::sqrt(static_cast<double>(j * (j + 1)));
    std::vector<double> dir(k, 0.0);
    for (std::size_t i = 0; i < j; ++i) dir[i] = 1.0 / norm;
    dir[j] = -static_cast<double>(j) / norm;

    std::vector<double> plus = point;
    std::vector<double> minus = point;
    for (std::size_t i = 0; i < k; ++i) {
      plus[i] += step * dir[i];
      minus[i] -= step * dir[i];
    }
    const double slope = (fn(plus) - fn(minus)) / (2.0 * step);
    for (std::size_t i = 0; i < k; ++i) grad[i] += slope * dir[i];
  }
  return grad;
}

double pairwise_auroc(const std::vector<double>& ind_scores, const std::vector<double>& ood_scores) {
  if (ind_scores.empty() || ood_scores.empty()) throw InputError("pairwise_auroc needs two non-empty lists");
  double wins = 0.0;
  for (double o : ood_scores) {
    for (double i : ind_scores) {
      if (o > i) wins += 1.0;
      else if (o == i) wins += 0.5;
    }
  }
  return wins / (static_cast<double>(ind_scores.size()) * static_cast<double>(ood_scores.size()));
}

}  // namespace oracle
