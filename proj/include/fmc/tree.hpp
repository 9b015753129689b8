#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "fmc/core.hpp"

namespace fmc {

/// 1 - sum p_c^2 over a vector of nonnegative class counts. Throws
/// DegenerateNode when every count is zero.
template <typename Derived>
typename Derived::Scalar gini(const Eigen::DenseBase<Derived>& counts) {
  using Scalar = typename Derived::Scalar;
  const Scalar total = counts.sum();
  if (!(total > Scalar(0))) throw DegenerateNode("gini of an empty node");
  return Scalar(1) - (counts.derived().array() / total).square().sum();
}

/// Flat node. Internal nodes route x[feature] <= threshold to `left`.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double cover = 0.0;  ///< training weight reaching the node
  double gain = 0.0;   ///< impurity (or loss) reduction of this node's split

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

/// Array-of-nodes tree whose nodes each carry an `Outputs`-wide value:
/// a class distribution for classification, a scalar leaf weight for
/// regression. Node 0 is the root.
template <int Outputs>
class Tree {
 public:
  static constexpr int kOutputs = Outputs;
  using Value = Eigen::Matrix<double, 1, Outputs>;
  using ValueMatrix =
      Eigen::Matrix<double, Eigen::Dynamic, Outputs, (Outputs == 1 ? Eigen::ColMajor : Eigen::RowMajor)>;

  std::vector<TreeNode> nodes;
  ValueMatrix values;  ///< one row per node

  template <typename Row>
  int leaf_of(const Row& x) const {
    int n = 0;
    while (!nodes[static_cast<std::size_t>(n)].is_leaf()) {
      const auto& node = nodes[static_cast<std::size_t>(n)];
      n = x(node.feature) <= node.threshold ? node.left : node.right;
    }
    return n;
  }

  template <typename Row>
  Value predict(const Row& x) const {
    return values.row(leaf_of(x));
  }

  /// Adds the prediction of every row of X into `out` (rows x Outputs).
  template <typename Out>
  void accumulate(const Eigen::MatrixXd& X, Out& out, double scale = 1.0) const {
    for (Eigen::Index i = 0; i < X.rows(); ++i) out.row(i) += scale * values.row(leaf_of(X.row(i)));
  }

  int depth() const;
  std::size_t leaf_count() const;
  int max_feature() const;

  nlohmann::json to_json() const;
  static Tree from_json(const nlohmann::json& j);

  bool operator==(const Tree& o) const { return nodes == o.nodes && values == o.values; }
};

using ClassTree = Tree<kNumModes>;
using RegressionTree = Tree<1>;

/// Per-feature rank-quantile bins. A feature with at most `max_bins`
/// distinct values gets one bin per value, so split search on it is exact.
class BinnedMatrix {
 public:
  static BinnedMatrix build(const Eigen::MatrixXd& X, int max_bins = 255);

  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return static_cast<Eigen::Index>(bin_min_.size()); }
  int bin_count(Eigen::Index f) const { return static_cast<int>(bin_min_[static_cast<std::size_t>(f)].size()); }
  std::uint16_t bin(Eigen::Index row, Eigen::Index f) const {
    return bins_[static_cast<std::size_t>(f * rows_ + row)];
  }
  const std::uint16_t* column(Eigen::Index f) const { return bins_.data() + f * rows_; }
  /// Smallest / largest observed value that fell into a bin.
  double bin_min(Eigen::Index f, int b) const { return bin_min_[static_cast<std::size_t>(f)][static_cast<std::size_t>(b)]; }
  double bin_max(Eigen::Index f, int b) const { return bin_max_[static_cast<std::size_t>(f)][static_cast<std::size_t>(b)]; }
  int max_bin_count() const;

 private:
  Eigen::Index rows_ = 0;
  std::vector<std::uint16_t> bins_;  // column-major
  std::vector<std::vector<double>> bin_min_;
  std::vector<std::vector<double>> bin_max_;
};

struct TreeParams {
  int max_depth = -1;        ///< -1: unbounded
  double min_leaf = 1.0;     ///< minimum training weight per child
  double min_gain = 0.0;     ///< splits with gain < min_gain are not made
  int feature_subsample = 0; ///< candidate features per node; 0 = all
  bool random_thresholds = false;  ///< Extra-trees: one uniform threshold per candidate
  int max_bins = 255;
  std::uint64_t seed = 0;
};

/// CART classification tree with Gini impurity. Ties between equally good
/// splits go to the lowest feature index, then the lowest threshold.
ClassTree fit_tree(const Eigen::MatrixXd& X, std::span<const int> y, const TreeParams& params);

/// Weighted variant used by forests; rows with zero weight are ignored.
/// `binned` may be null when params.random_thresholds is set.
ClassTree fit_tree_weighted(const Eigen::MatrixXd& X, const BinnedMatrix* binned, std::span<const int> y,
                            std::span<const double> weights, const TreeParams& params);

struct NewtonTreeParams {
  int max_depth = 6;
  double lambda = 1.0;
  double min_child_weight = 1.0;  ///< minimum hessian sum per child
  double min_gain = 0.0;          ///< splits need loss reduction > min_gain
};

/// Regression tree on gradient/hessian statistics: leaf = -G / (H + lambda),
/// split gain = 1/2 [GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)]. Node cover is the
/// number of rows reaching the node.
RegressionTree fit_newton_tree(const BinnedMatrix& binned, std::span<const double> grad, std::span<const double> hess,
                               std::span<const std::size_t> rows, const NewtonTreeParams& params);

}  // namespace fmc
