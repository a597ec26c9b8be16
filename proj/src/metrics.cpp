#include "hetrisk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "hetrisk/error.hpp"

namespace hetrisk {

namespace {

constexpr double kZ = 1.959963984540054;

/// Twice the mid-rank (1-based) of every value, as exact integers.
std::vector<std::int64_t> doubled_midranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<std::int64_t> r(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    // positions i..j (0-based) share rank ((i+1) + (j+1)) / 2
    const auto twice = static_cast<std::int64_t>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = twice;
    i = j + 1;
  }
  return r;
}

void count_classes(std::span<const int> outcome, std::size_t& n1, std::size_t& n0) {
  n1 = static_cast<std::size_t>(std::count(outcome.begin(), outcome.end(), 1));
  n0 = outcome.size() - n1;
}

}  // namespace

void check_pairs(std::span<const double> predicted, std::span<const int> outcome) {
  if (predicted.size() != outcome.size()) {
    throw DataError("predictions and outcomes differ in length");
  }
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (!std::isfinite(predicted[i]) || predicted[i] < 0.0 || predicted[i] > 1.0) {
      throw DataError("prediction " + std::to_string(i) + " is not a probability");
    }
    if (outcome[i] != 0 && outcome[i] != 1) {
      throw DataError("outcome " + std::to_string(i) + " is not 0/1");
    }
  }
}

double auc(std::span<const double> predicted, std::span<const int> outcome) {
  check_pairs(predicted, outcome);
  std::size_t n1 = 0;
  std::size_t n0 = 0;
  count_classes(outcome, n1, n0);
  if (n1 == 0 || n0 == 0) throw DataError("AUC needs at least one case and one non-case");
  const auto r = doubled_midranks(predicted);
  std::int64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (outcome[i] == 1) twice_rank_sum += r[i];
  }
  const auto m = static_cast<std::int64_t>(n1);
  const std::int64_t twice_u = twice_rank_sum - m * (m + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n1) * static_cast<double>(n0));
}

AucInterval auc_ci(std::span<const double> predicted, std::span<const int> outcome) {
  check_pairs(predicted, outcome);
  std::size_t n1 = 0;
  std::size_t n0 = 0;
  count_classes(outcome, n1, n0);
  if (n1 < 2 || n0 < 2) throw DataError("AUC interval needs at least two cases and two non-cases");
  std::vector<double> pos;
  std::vector<double> neg;
  std::vector<std::size_t> pos_index;
  std::vector<std::size_t> neg_index;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (outcome[i] == 1) {
      pos_index.push_back(i);
      pos.push_back(predicted[i]);
    } else {
      neg_index.push_back(i);
      neg.push_back(predicted[i]);
    }
  }
  const auto all = doubled_midranks(predicted);
  const auto rp = doubled_midranks(pos);
  const auto rn = doubled_midranks(neg);
  AucInterval out;
  out.auc = auc(predicted, outcome);
  // placement values
  std::vector<double> v10(n1);
  std::vector<double> v01(n0);
  for (std::size_t k = 0; k < n1; ++k) {
    v10[k] = 0.5 * static_cast<double>(all[pos_index[k]] - rp[k]) / static_cast<double>(n0);
  }
  for (std::size_t k = 0; k < n0; ++k) {
    v01[k] = 1.0 - 0.5 * static_cast<double>(all[neg_index[k]] - rn[k]) / static_cast<double>(n1);
  }
  const auto sample_var = [](const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / static_cast<double>(v.size() - 1);
  };
  const double var = sample_var(v10) / static_cast<double>(n1) + sample_var(v01) / static_cast<double>(n0);
  out.std_error = std::sqrt(std::max(0.0, var));
  if (!(out.std_error > 0.0)) {
    out.std_error = 0.0;
    out.lo = out.hi = out.auc;
    out.warning = "DeLong variance is zero; interval collapsed to the point estimate";
    return out;
  }
  out.lo = std::clamp(out.auc - kZ * out.std_error, 0.0, 1.0);
  out.hi = std::clamp(out.auc + kZ * out.std_error, 0.0, 1.0);
  return out;
}

CilInterval cil(std::span<const double> predicted, std::span<const int> outcome) {
  check_pairs(predicted, outcome);
  const std::size_t n = predicted.size();
  if (n < 2) throw DataError("calibration in the large needs at least two records");
  double sp = 0.0;
  double sy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sp += predicted[i];
    sy += outcome[i];
  }
  const double nd = static_cast<double>(n);
  CilInterval out;
  out.value = sp / nd - sy / nd;
  const double mean_d = (sp - sy) / nd;
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = predicted[i] - outcome[i] - mean_d;
    ss += d * d;
  }
  const double half = kZ * std::sqrt(ss / (nd - 1.0)) / std::sqrt(nd);
  out.lo = out.value - half;
  out.hi = out.value + half;
  return out;
}

WilsonInterval wilson_interval(std::size_t successes, std::size_t n, double z) {
  if (n == 0) return {0.0, 1.0};
  const double nd = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nd;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nd;
  const double center = (p + z2 / (2.0 * nd)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nd + z2 / (4.0 * nd * nd)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

std::vector<CalibrationBin> calibration_deciles(std::span<const double> predicted,
                                                std::span<const int> outcome) {
  check_pairs(predicted, outcome);
  const std::size_t n = predicted.size();
  if (n < 10) throw DataError("calibration deciles need at least 10 records");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return predicted[a] < predicted[b]; });
  std::vector<CalibrationBin> bins(10);
  const std::size_t base = n / 10;
  const std::size_t extra = n % 10;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < 10; ++b) {
    const std::size_t size = base + (b < extra ? 1 : 0);
    double sp = 0.0;
    std::size_t events = 0;
    for (std::size_t k = pos; k < pos + size; ++k) {
      sp += predicted[order[k]];
      events += static_cast<std::size_t>(outcome[order[k]]);
    }
    pos += size;
    auto& bin = bins[b];
    bin.n = size;
    bin.mean_predicted = sp / static_cast<double>(size);
    bin.observed = static_cast<double>(events) / static_cast<double>(size);
    const auto ci = wilson_interval(events, size);
    bin.ci_low = ci.lo;
    bin.ci_high = ci.hi;
  }
  return bins;
}

}  // namespace hetrisk
