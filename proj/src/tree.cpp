#include "fmc/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include <nlohmann/json.hpp>

#include "fmc/rng.hpp"

namespace fmc {

// ---------------------------------------------------------------------------
// Tree<Outputs>

template <int Outputs>
int Tree<Outputs>::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> d(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (n.is_leaf()) continue;
    d[static_cast<std::size_t>(n.left)] = d[i] + 1;
    d[static_cast<std::size_t>(n.right)] = d[i] + 1;
    deepest = std::max(deepest, d[i] + 1);
  }
  return deepest;
}

template <int Outputs>
std::size_t Tree<Outputs>::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const auto& n) { return n.is_leaf(); }));
}

template <int Outputs>
int Tree<Outputs>::max_feature() const {
  int m = -1;
  for (const auto& n : nodes) m = std::max(m, n.feature);
  return m;
}

template <int Outputs>
nlohmann::json Tree<Outputs>::to_json() const {
  auto jn = nlohmann::json::array();
  auto jv = nlohmann::json::array();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    jn.push_back({n.feature, n.threshold, n.left, n.right, n.cover, n.gain});
    auto row = nlohmann::json::array();
    for (int c = 0; c < Outputs; ++c) row.push_back(values(static_cast<Eigen::Index>(i), c));
    jv.push_back(std::move(row));
  }
  return {{"nodes", std::move(jn)}, {"values", std::move(jv)}};
}

template <int Outputs>
Tree<Outputs> Tree<Outputs>::from_json(const nlohmann::json& j) {
  Tree t;
  const auto& jn = j.at("nodes");
  const auto& jv = j.at("values");
  if (jn.size() != jv.size() || jn.empty()) throw ParseError("tree: node/value count mismatch");
  t.values.resize(static_cast<Eigen::Index>(jv.size()), Outputs);
  for (std::size_t i = 0; i < jn.size(); ++i) {
    const auto& a = jn[i];
    TreeNode n;
    n.feature = a.at(0).get<int>();
    n.threshold = a.at(1).get<double>();
    n.left = a.at(2).get<int>();
    n.right = a.at(3).get<int>();
    n.cover = a.at(4).get<double>();
    n.gain = a.at(5).get<double>();
    const auto count = static_cast<int>(jn.size());
    if (!n.is_leaf() && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count)) {
      throw ParseError("tree: child index out of range");
    }
    t.nodes.push_back(n);
    if (jv[i].size() != static_cast<std::size_t>(Outputs)) throw ParseError("tree: bad value width");
    for (int c = 0; c < Outputs; ++c) t.values(static_cast<Eigen::Index>(i), c) = jv[i][static_cast<std::size_t>(c)].get<double>();
  }
  return t;
}

template class Tree<kNumModes>;
template class Tree<1>;

// ---------------------------------------------------------------------------
// BinnedMatrix

BinnedMatrix BinnedMatrix::build(const Eigen::MatrixXd& X, int max_bins) {
  if (max_bins < 2 || max_bins > 65535) throw ConfigError("max_bins must lie in [2, 65535]");
  BinnedMatrix b;
  b.rows_ = X.rows();
  const auto n = static_cast<std::size_t>(X.rows());
  b.bins_.resize(n * static_cast<std::size_t>(X.cols()));
  b.bin_min_.resize(static_cast<std::size_t>(X.cols()));
  b.bin_max_.resize(static_cast<std::size_t>(X.cols()));
  std::vector<double> sorted(n);
  for (Eigen::Index f = 0; f < X.cols(); ++f) {
    for (std::size_t i = 0; i < n; ++i) sorted[i] = X(static_cast<Eigen::Index>(i), f);
    std::sort(sorted.begin(), sorted.end());
    auto& lo = b.bin_min_[static_cast<std::size_t>(f)];
    auto& hi = b.bin_max_[static_cast<std::size_t>(f)];
    std::size_t distinct = 0;
    for (std::size_t i = 0; i < n; ++i) distinct += (i == 0 || sorted[i] != sorted[i - 1]);
    if (distinct <= static_cast<std::size_t>(max_bins)) {
      for (std::size_t i = 0; i < n; ++i) {
        if (i == 0 || sorted[i] != sorted[i - 1]) {
          lo.push_back(sorted[i]);
          hi.push_back(sorted[i]);
        }
      }
    } else {
      // Equal-frequency cuts on ranks; equal values always share a bin.
      const double per_bin = static_cast<double>(n) / max_bins;
      for (std::size_t i = 0; i < n; ++i) {
        if (i + 1 < n && sorted[i + 1] == sorted[i]) continue;
        // sorted[i] is the last copy of a distinct value; i + 1 rows are <= it.
        if (lo.size() == hi.size()) lo.push_back(sorted[i]);
        const bool last_bin = static_cast<int>(lo.size()) == max_bins;
        if (!last_bin && static_cast<double>(i + 1) >= per_bin * static_cast<double>(lo.size())) {
          hi.push_back(sorted[i]);
        }
      }
      if (hi.size() < lo.size()) hi.push_back(sorted[n - 1]);
    }
    auto* col = b.bins_.data() + static_cast<std::size_t>(f) * n;
    for (std::size_t r = 0; r < n; ++r) {
      const double v = X(static_cast<Eigen::Index>(r), f);
      col[r] = static_cast<std::uint16_t>(std::lower_bound(hi.begin(), hi.end(), v) - hi.begin());
    }
  }
  return b;
}

int BinnedMatrix::max_bin_count() const {
  int m = 0;
  for (const auto& v : bin_min_) m = std::max(m, static_cast<int>(v.size()));
  return m;
}

// ---------------------------------------------------------------------------
// Split search

namespace {

struct GiniCriterion {
  static constexpr int kWidth = kNumModes;
  static constexpr int kOutputs = kNumModes;
  using Stats = Eigen::Array<double, kWidth, 1>;

  std::span<const int> y;
  std::span<const double> w;
  double min_leaf = 1.0;
  double min_gain = 0.0;

  void add(Stats& s, std::size_t r) const { s(y[r]) += w[r]; }
  double cover(const Stats& s) const { return s.sum(); }
  static double impurity(const Stats& s) {
    const double t = s.sum();
    return t > 0.0 ? 1.0 - (s / t).square().sum() : 0.0;
  }
  bool splittable(const Stats& s) const { return impurity(s) > 0.0 && s.sum() >= 2.0 * min_leaf; }
  bool children_ok(const Stats& l, const Stats& r) const {
    const double wl = l.sum(), wr = r.sum();
    return wl > 0.0 && wr > 0.0 && wl >= min_leaf && wr >= min_leaf;
  }
  double gain(const Stats& p, const Stats& l, const Stats& r) const {
    const double wp = p.sum();
    return std::max(0.0, impurity(p) - l.sum() / wp * impurity(l) - r.sum() / wp * impurity(r));
  }
  bool accept(double g) const { return g >= min_gain; }
  Eigen::Matrix<double, 1, kOutputs> value(const Stats& s) const { return (s / s.sum()).matrix().transpose(); }
};

struct NewtonCriterion {
  static constexpr int kWidth = 3;  // G, H, n
  static constexpr int kOutputs = 1;
  using Stats = Eigen::Array<double, kWidth, 1>;

  std::span<const double> g;
  std::span<const double> h;
  double lambda = 1.0;
  double min_child_weight = 1.0;
  double min_gain = 0.0;

  void add(Stats& s, std::size_t r) const {
    s(0) += g[r];
    s(1) += h[r];
    s(2) += 1.0;
  }
  double cover(const Stats& s) const { return s(2); }
  bool splittable(const Stats& s) const { return s(2) >= 2.0 && s(1) >= 2.0 * min_child_weight; }
  bool children_ok(const Stats& l, const Stats& r) const {
    return l(2) > 0.0 && r(2) > 0.0 && l(1) >= min_child_weight && r(1) >= min_child_weight;
  }
  double score(const Stats& s) const { return s(0) * s(0) / (s(1) + lambda); }
  double gain(const Stats& p, const Stats& l, const Stats& r) const { return 0.5 * (score(l) + score(r) - score(p)); }
  bool accept(double gn) const { return gn > min_gain; }
  Eigen::Matrix<double, 1, 1> value(const Stats& s) const {
    return Eigen::Matrix<double, 1, 1>::Constant(-s(0) / (s(1) + lambda));
  }
};

template <class Criterion>
class Grower {
 public:
  using Stats = typename Criterion::Stats;
  using TreeT = Tree<Criterion::kOutputs>;

  Grower(const Criterion& crit, const Eigen::MatrixXd* X, const BinnedMatrix* binned, int n_features, int max_depth,
         int feature_subsample, bool random_thresholds, std::uint64_t seed)
      : crit_(crit),
        X_(X),
        binned_(binned),
        n_features_(n_features),
        max_depth_(max_depth),
        subsample_(feature_subsample <= 0 || feature_subsample >= n_features ? n_features : feature_subsample),
        random_thresholds_(random_thresholds),
        rng_(seed) {
    if (binned_) {
      const auto nb = static_cast<std::size_t>(binned_->max_bin_count());
      hist_.assign(nb, Stats::Zero());
      seen_.assign(nb, 0);
    }
    features_.resize(static_cast<std::size_t>(n_features_));
  }

  TreeT grow(std::vector<std::size_t> rows) {
    rows_ = std::move(rows);
    Stats total = Stats::Zero();
    for (auto r : rows_) crit_.add(total, r);
    build(0, rows_.size(), 0, total);
    TreeT tree;
    tree.nodes = std::move(nodes_);
    tree.values.resize(static_cast<Eigen::Index>(values_.size()), Criterion::kOutputs);
    for (std::size_t i = 0; i < values_.size(); ++i) tree.values.row(static_cast<Eigen::Index>(i)) = values_[i];
    return tree;
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    int cut_bin = -1;
    double gain = -1.0;
  };

  bool better(const Split& cand, const Split& best) const {
    if (best.feature < 0) return true;
    if (cand.gain != best.gain) return cand.gain > best.gain;
    if (cand.feature != best.feature) return cand.feature < best.feature;
    return cand.threshold < best.threshold;
  }

  // Returns false when the feature is constant over the node.
  bool scan_binned(int f, std::size_t begin, std::size_t end, const Stats& total, Split& best) {
    const auto* col = binned_->column(f);
    const int nb = binned_->bin_count(f);
    if (nb < 2) return false;
    present_.clear();
    for (std::size_t i = begin; i < end; ++i) {
      const auto r = rows_[i];
      const auto b = col[r];
      if (!seen_[b]) {
        seen_[b] = 1;
        present_.push_back(b);
      }
      crit_.add(hist_[b], r);
    }
    if (present_.size() < 2) {
      for (auto b : present_) {
        seen_[b] = 0;
        hist_[b] = Stats::Zero();
      }
      return false;
    }
    std::sort(present_.begin(), present_.end());
    Stats left = Stats::Zero();
    for (std::size_t k = 0; k + 1 < present_.size(); ++k) {
      left += hist_[present_[k]];
      const Stats right = total - left;
      if (!crit_.children_ok(left, right)) continue;
      Split cand;
      cand.feature = f;
      cand.cut_bin = present_[k];
      const double lo = binned_->bin_max(f, present_[k]);
      const double hi = binned_->bin_min(f, present_[k + 1]);
      cand.threshold = lo + (hi - lo) / 2.0;
      if (!(cand.threshold < hi)) cand.threshold = lo;
      cand.gain = crit_.gain(total, left, right);
      if (better(cand, best)) best = cand;
    }
    for (auto b : present_) {
      seen_[b] = 0;
      hist_[b] = Stats::Zero();
    }
    return true;
  }

  bool scan_random(int f, std::size_t begin, std::size_t end, const Stats& total, Split& best) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      const double v = (*X_)(static_cast<Eigen::Index>(rows_[i]), f);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (!(hi > lo)) return false;
    Split cand;
    cand.feature = f;
    cand.threshold = rng_.uniform(lo, hi);
    if (!(cand.threshold < hi)) cand.threshold = lo;
    Stats left = Stats::Zero();
    for (std::size_t i = begin; i < end; ++i) {
      const auto r = rows_[i];
      if ((*X_)(static_cast<Eigen::Index>(r), f) <= cand.threshold) crit_.add(left, r);
    }
    const Stats right = total - left;
    if (!crit_.children_ok(left, right)) return true;
    cand.gain = crit_.gain(total, left, right);
    if (better(cand, best)) best = cand;
    return true;
  }

  Split best_split(std::size_t begin, std::size_t end, const Stats& total) {
    std::iota(features_.begin(), features_.end(), 0);
    const bool sampled = subsample_ < n_features_;
    int visited = 0;
    Split best;
    for (int k = 0; k < n_features_ && visited < subsample_; ++k) {
      if (sampled) {
        const auto j = static_cast<std::size_t>(k) + static_cast<std::size_t>(rng_.below(static_cast<std::uint64_t>(n_features_ - k)));
        std::swap(features_[static_cast<std::size_t>(k)], features_[j]);
      }
      const int f = features_[static_cast<std::size_t>(k)];
      const bool informative = random_thresholds_ ? scan_random(f, begin, end, total, best)
                                                  : scan_binned(f, begin, end, total, best);
      visited += informative;
    }
    return best;
  }

  int build(std::size_t begin, std::size_t end, int depth, const Stats& total) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(TreeNode{});
    values_.push_back(crit_.value(total));
    nodes_.back().cover = crit_.cover(total);

    if ((max_depth_ >= 0 && depth >= max_depth_) || !crit_.splittable(total)) return id;
    const Split split = best_split(begin, end, total);
    if (split.feature < 0 || !crit_.accept(split.gain)) return id;

    const int f = split.feature;
    auto mid_it = random_thresholds_
                      ? std::partition(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                                       rows_.begin() + static_cast<std::ptrdiff_t>(end),
                                       [&](std::size_t r) { return (*X_)(static_cast<Eigen::Index>(r), f) <= split.threshold; })
                      : std::partition(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                                       rows_.begin() + static_cast<std::ptrdiff_t>(end),
                                       [&](std::size_t r) { return binned_->column(f)[r] <= split.cut_bin; });
    const auto mid = static_cast<std::size_t>(mid_it - rows_.begin());
    Stats left = Stats::Zero(), right = Stats::Zero();
    for (std::size_t i = begin; i < mid; ++i) crit_.add(left, rows_[i]);
    for (std::size_t i = mid; i < end; ++i) crit_.add(right, rows_[i]);

    const int l = build(begin, mid, depth + 1, left);
    const int r = build(mid, end, depth + 1, right);
    auto& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = f;
    node.threshold = split.threshold;
    node.left = l;
    node.right = r;
    node.gain = split.gain;
    return id;
  }

  Criterion crit_;
  const Eigen::MatrixXd* X_;
  const BinnedMatrix* binned_;
  int n_features_;
  int max_depth_;
  int subsample_;
  bool random_thresholds_;
  Rng rng_;

  std::vector<std::size_t> rows_;
  std::vector<TreeNode> nodes_;
  std::vector<typename TreeT::Value> values_;
  std::vector<Stats> hist_;
  std::vector<std::uint8_t> seen_;
  std::vector<std::uint16_t> present_;
  std::vector<int> features_;
};

}  // namespace

ClassTree fit_tree_weighted(const Eigen::MatrixXd& X, const BinnedMatrix* binned, std::span<const int> y,
                            std::span<const double> weights, const TreeParams& params) {
  if (static_cast<std::size_t>(X.rows()) != y.size() || y.size() != weights.size()) {
    throw LengthMismatch("fit_tree: X, y and weights disagree in length");
  }
  if (y.empty()) throw EmptyDataset("fit_tree: no rows");
  for (int label : y) {
    if (label < 0 || label >= kNumModes) throw Error("fit_tree: label out of range");
  }
  if (!params.random_thresholds && binned == nullptr) throw Error("fit_tree: binned matrix required");
  std::vector<std::size_t> rows;
  rows.reserve(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (weights[i] > 0.0) rows.push_back(i);
  }
  if (rows.empty()) throw EmptyDataset("fit_tree: all weights are zero");
  GiniCriterion crit{y, weights, params.min_leaf, params.min_gain};
  Grower<GiniCriterion> grower(crit, &X, binned, static_cast<int>(X.cols()), params.max_depth,
                               params.feature_subsample, params.random_thresholds, params.seed);
  return grower.grow(std::move(rows));
}

ClassTree fit_tree(const Eigen::MatrixXd& X, std::span<const int> y, const TreeParams& params) {
  std::vector<double> w(y.size(), 1.0);
  if (params.random_thresholds) return fit_tree_weighted(X, nullptr, y, w, params);
  const auto binned = BinnedMatrix::build(X, params.max_bins);
  return fit_tree_weighted(X, &binned, y, w, params);
}

RegressionTree fit_newton_tree(const BinnedMatrix& binned, std::span<const double> grad, std::span<const double> hess,
                               std::span<const std::size_t> rows, const NewtonTreeParams& params) {
  NewtonCriterion crit{grad, hess, params.lambda, params.min_child_weight, params.min_gain};
  Grower<NewtonCriterion> grower(crit, nullptr, &binned, static_cast<int>(binned.cols()), params.max_depth, 0, false,
                                 0);
  return grower.grow(std::vector<std::size_t>(rows.begin(), rows.end()));
}

}  // namespace fmc
