#include "radloc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace radloc {

namespace {

constexpr double kInfeasible = 1e15;

// Hungarian algorithm (Jonker-Volgenant potentials), minimizing total
// cost over a rows <= cols matrix. Returns col index per row.
std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, std::numeric_limits<double>::infinity());
    std::vector<char> used(m + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = std::numeric_limits<double>::infinity();
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> assignment(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) assignment[p[j] - 1] = j - 1;
  return assignment;
}

}  // namespace

MatchReport match_sources(std::span<const SourceParams> estimates,
                          std::span<const SourceParams> truth,
                          double match_radius) {
  if (match_radius <= 0.0)
    throw std::invalid_argument("match_sources: radius must be > 0");

  MatchReport report;
  report.match_radius = match_radius;
  const std::size_t ne = estimates.size(), nt = truth.size();
  std::vector<char> est_matched(ne, false), truth_matched(nt, false);

  if (ne > 0 && nt > 0) {
    // Infeasible pairs carry a cost large enough that any assignment
    // with fewer of them always wins, so feasible matches are maximized.
    const bool transpose = ne > nt;
    const std::size_t rows = transpose ? nt : ne;
    const std::size_t cols = transpose ? ne : nt;
    Eigen::MatrixXd cost(rows, cols);
    for (std::size_t i = 0; i < ne; ++i) {
      for (std::size_t j = 0; j < nt; ++j) {
        const double d = (estimates[i].position - truth[j].position).norm();
        const double c = d <= match_radius ? d : kInfeasible;
        if (transpose)
          cost(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = c;
        else
          cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c;
      }
    }
    const std::vector<int> assign = hungarian(cost);
    for (std::size_t r = 0; r < rows; ++r) {
      const int c = assign[r];
      if (c < 0) continue;
      const std::size_t e = transpose ? static_cast<std::size_t>(c) : r;
      const std::size_t t = transpose ? r : static_cast<std::size_t>(c);
      const double d = (estimates[e].position - truth[t].position).norm();
      if (d <= match_radius) {
        report.pairs.push_back({e, t, d});
        est_matched[e] = true;
        truth_matched[t] = true;
      }
    }
    std::sort(report.pairs.begin(), report.pairs.end(),
              [](const MatchReport::Pair& a, const MatchReport::Pair& b) {
                return a.estimate < b.estimate;
              });
  }
  for (std::size_t i = 0; i < ne; ++i)
    if (!est_matched[i]) report.unmatched_estimates.push_back(i);
  for (std::size_t j = 0; j < nt; ++j)
    if (!truth_matched[j]) report.unmatched_truths.push_back(j);
  return report;
}

void prf1(const MatchReport& report, std::size_t n_estimates,
          std::size_t n_truths, double& precision, double& recall,
          double& f1) {
  const double pairs = static_cast<double>(report.pairs.size());
  precision = n_estimates == 0 ? 1.0 : pairs / static_cast<double>(n_estimates);
  recall = n_truths == 0 ? 1.0 : pairs / static_cast<double>(n_truths);
  f1 = (precision + recall) > 0.0
           ? 2.0 * precision * recall / (precision + recall)
           : 0.0;
}

std::optional<double> localization_error(const MatchReport& report,
                                         std::span<const SourceParams> estimates,
                                         std::span<const SourceParams> truth,
                                         double position_scale,
                                         double strength_scale) {
  if (report.pairs.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& pr : report.pairs) {
    const double dp = (estimates[pr.estimate].position -
                       truth[pr.truth].position)
                          .norm() /
                      position_scale;
    const double ds =
        (estimates[pr.estimate].strength - truth[pr.truth].strength) /
        strength_scale;
    sum += std::sqrt(dp * dp + ds * ds);
  }
  return sum / static_cast<double>(report.pairs.size());
}

AggregateRow aggregate_runs(std::span<const RunSummary> summaries) {
  if (summaries.empty())
    throw std::invalid_argument("aggregate_runs: no summaries");

  AggregateRow row;
  row.runs = summaries.size();
  const double n = static_cast<double>(summaries.size());

  auto accumulate = [&](auto field) {
    double mean = 0.0;
    for (const auto& s : summaries) mean += s.*field;
    mean /= n;
    double var = 0.0;
    for (const auto& s : summaries) {
      const double d = s.*field - mean;
      var += d * d;
    }
    row.mean.*field = mean;
    row.stddev.*field = std::sqrt(var / n);
  };
  accumulate(&RunSummary::precision);
  accumulate(&RunSummary::recall);
  accumulate(&RunSummary::f1);
  accumulate(&RunSummary::iterations);
  accumulate(&RunSummary::time_steps);
  accumulate(&RunSummary::wall_seconds);

  auto accumulate_opt = [&](auto field, std::size_t* count_out) {
    double mean = 0.0;
    std::size_t k = 0;
    for (const auto& s : summaries)
      if (s.*field) {
        mean += **(&(s.*field));
        ++k;
      }
    if (count_out) *count_out = k;
    if (k == 0) return;
    mean /= static_cast<double>(k);
    double var = 0.0;
    for (const auto& s : summaries)
      if (s.*field) {
        const double d = **(&(s.*field)) - mean;
        var += d * d;
      }
    row.mean.*field = mean;
    row.stddev.*field = std::sqrt(var / static_cast<double>(k));
  };
  accumulate_opt(&RunSummary::eps_l, &row.runs_with_error);
  accumulate_opt(&RunSummary::eps_l_norm, nullptr);
  return row;
}

}  // namespace radloc
