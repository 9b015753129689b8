#include "fmc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fmc/csv.hpp"
#include "fmc/rng.hpp"

namespace fmc {

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> truths) {
  if (predictions.size() != truths.size()) throw LengthMismatch("predictions and truths differ in length");
  if (truths.empty()) throw EmptyDataset("nothing to evaluate");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i] < 0 || truths[i] >= kNumModes || predictions[i] < 0 || predictions[i] >= kNumModes) {
      throw Error("class index out of range");
    }
    ++cm.counts(truths[i], predictions[i]);
  }
  return cm;
}

template <typename Count>
Metrics metrics(const ConfusionCounts<Count>& cm) {
  const Eigen::Matrix<double, kNumModes, kNumModes> c = cm.template cast<double>();
  const double total = c.sum();
  if (!(total > 0.0)) throw EmptyMatrix("confusion matrix is empty");

  Metrics m;
  const ProbVector support = c.rowwise().sum().transpose();
  const ProbVector predicted = c.colwise().sum();
  m.support = support.cast<std::int64_t>();
  m.accuracy = c.trace() / total;

  int n_supported = 0, n_seen = 0;
  for (int k = 0; k < kNumModes; ++k) {
    const double tp = c(k, k);
    m.precision(k) = predicted(k) > 0 ? tp / predicted(k) : 0.0;
    m.recall(k) = support(k) > 0 ? tp / support(k) : 0.0;
    const double pr = m.precision(k) + m.recall(k);
    m.f1(k) = pr > 0 ? 2.0 * m.precision(k) * m.recall(k) / pr : 0.0;
    if (support(k) > 0) {
      m.balanced_accuracy += m.recall(k);
      ++n_supported;
    }
    if (support(k) > 0 || predicted(k) > 0) {
      m.precision_macro += m.precision(k);
      m.recall_macro += m.recall(k);
      m.f1_macro += m.f1(k);
      ++n_seen;
    }
  }
  m.balanced_accuracy /= n_supported;
  m.precision_macro /= n_seen;
  m.recall_macro /= n_seen;
  m.f1_macro /= n_seen;
  m.precision_w = m.precision.dot(support) / total;
  m.recall_w = m.recall.dot(support) / total;
  m.f1_w = m.f1.dot(support) / total;
  return m;
}

template Metrics metrics(const ConfusionCounts<std::int64_t>&);
template Metrics metrics(const ConfusionCounts<double>&);
template Metrics metrics(const ConfusionCounts<int>&);

RocCurve roc_curve(std::span<const double> scores, std::span<const int> truths, int cls) {
  if (scores.size() != truths.size()) throw LengthMismatch("scores and truths differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double pos = 0, neg = 0;
  for (int t : truths) (t == cls ? pos : neg) += 1;
  RocCurve curve;
  curve.mode = mode_from_index(cls);
  if (pos == 0 || neg == 0) {
    throw UndefinedAuc(std::string("class ") + std::string(mode_name(curve.mode)) +
                       (pos == 0 ? " has no positives" : " has no negatives"));
  }

  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (truths[order[i]] == cls ? tp : fp) += 1;
    const RocPoint p{s, fp / neg, tp / pos};
    const auto& q = curve.points.back();
    curve.auc += (p.fpr - q.fpr) * 0.5 * (p.tpr + q.tpr);
    curve.points.push_back(p);
  }
  return curve;
}

RocCurve roc_curve(const ProbMatrix& probabilities, std::span<const int> truths, ModeLabel mode) {
  const int cls = mode_index(mode);
  std::vector<double> scores(static_cast<std::size_t>(probabilities.rows()));
  for (Eigen::Index i = 0; i < probabilities.rows(); ++i) scores[static_cast<std::size_t>(i)] = probabilities(i, cls);
  return roc_curve(scores, truths, cls);
}

double bootstrap_se_accuracy(std::span<const int> predictions, std::span<const int> truths, int B,
                             std::uint64_t seed) {
  if (predictions.size() != truths.size()) throw LengthMismatch("predictions and truths differ in length");
  if (truths.empty()) throw EmptyDataset("nothing to resample");
  if (B < 2) throw ConfigError("bootstrap needs B >= 2");
  const auto n = truths.size();
  std::vector<double> acc(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    Rng rng(derive_seed(seed, "bootstrap", static_cast<std::uint64_t>(b)));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = static_cast<std::size_t>(rng.below(n));
      hits += predictions[j] == truths[j];
    }
    acc[static_cast<std::size_t>(b)] = static_cast<double>(hits) / static_cast<double>(n);
  }
  const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / B;
  double ss = 0.0;
  for (double a : acc) ss += (a - mean) * (a - mean);
  return std::sqrt(ss / (B - 1));
}

EvalReport evaluate(const ProbMatrix& probabilities, std::span<const int> truths, const EvalOptions& options) {
  if (static_cast<std::size_t>(probabilities.rows()) != truths.size()) {
    throw LengthMismatch("probabilities and truths differ in length");
  }
  EvalReport r;
  r.n = truths.size();
  std::vector<int> pred(truths.size());
  for (Eigen::Index i = 0; i < probabilities.rows(); ++i) pred[static_cast<std::size_t>(i)] = argmax(probabilities.row(i));
  r.cm = confusion(pred, truths);
  r.m = metrics(r.cm);
  r.auc.fill(std::numeric_limits<double>::quiet_NaN());
  if (options.roc) {
    int defined = 0;
    r.mean_auc = 0.0;
    for (auto mode : kAllModes) {
      try {
        auto curve = roc_curve(probabilities, truths, mode);
        r.auc[static_cast<std::size_t>(mode_index(mode))] = curve.auc;
        r.mean_auc += curve.auc;
        ++defined;
        r.roc.push_back(std::move(curve));
      } catch (const UndefinedAuc&) {
      }
    }
    r.mean_auc = defined ? r.mean_auc / defined : std::numeric_limits<double>::quiet_NaN();
  }
  if (options.bootstrap >= 2) r.se_accuracy = bootstrap_se_accuracy(pred, truths, options.bootstrap, options.seed);
  return r;
}

namespace {

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json to_json(const Metrics& m) {
  nlohmann::json per_class = nlohmann::json::array();
  for (int k = 0; k < kNumModes; ++k) {
    per_class.push_back({{"mode", mode_name(mode_from_index(k))},
                         {"precision", m.precision(k)},
                         {"recall", m.recall(k)},
                         {"f1", m.f1(k)},
                         {"support", m.support(k)}});
  }
  return {{"accuracy", m.accuracy},
          {"balanced_accuracy", m.balanced_accuracy},
          {"precision", m.precision_w},
          {"recall", m.recall_w},
          {"f1", m.f1_w},
          {"precision_macro", m.precision_macro},
          {"recall_macro", m.recall_macro},
          {"f1_macro", m.f1_macro},
          {"per_class", per_class}};
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json cm = nlohmann::json::array();
  for (int i = 0; i < kNumModes; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < kNumModes; ++j) row.push_back(r.cm.counts(i, j));
    cm.push_back(row);
  }
  nlohmann::json auc = nlohmann::json::object();
  for (int k = 0; k < kNumModes; ++k) auc[std::string(mode_name(mode_from_index(k)))] = finite_or_null(r.auc[static_cast<std::size_t>(k)]);
  auto j = to_json(r.m);
  j["n"] = r.n;
  j["confusion"] = cm;
  j["auc"] = auc;
  j["mean_auc"] = finite_or_null(r.mean_auc);
  j["se_accuracy"] = r.se_accuracy;
  return j;
}

void write_roc_csv(std::ostream& out, const RocCurve& curve) {
  out << "threshold,fpr,tpr\n";
  for (const auto& p : curve.points) {
    out << (std::isinf(p.threshold) ? std::string("inf") : csv::format_double(p.threshold)) << ','
        << csv::format_double(p.fpr) << ',' << csv::format_double(p.tpr) << '\n';
  }
}

}  // namespace fmc
