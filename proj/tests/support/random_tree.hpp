#pragma once

#include "fmc/rng.hpp"
#include "fmc/tree.hpp"

namespace fmc::testing {

/// Random tree over features [0, n_features) with depth <= max_depth.
/// Features may repeat along a path; child covers split the parent cover.
template <int Outputs>
Tree<Outputs> random_tree(Rng& rng, int n_features, int max_depth) {
  Tree<Outputs> t;
  std::vector<typename Tree<Outputs>::Value> values;
  auto grow = [&](auto&& self, double cover, int depth) -> int {
    const int id = static_cast<int>(t.nodes.size());
    t.nodes.push_back({});
    values.push_back(Tree<Outputs>::Value::Zero());
    t.nodes[static_cast<std::size_t>(id)].cover = cover;
    if (depth < max_depth && (depth == 0 || rng.uniform() < 0.75)) {
      const int f = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_features)));
      const double thr = rng.uniform();
      const double share = rng.uniform(0.05, 0.95);
      const int l = self(self, cover * share, depth + 1);
      const int r = self(self, cover * (1 - share), depth + 1);
      auto& n = t.nodes[static_cast<std::size_t>(id)];
      n.feature = f;
      n.threshold = thr;
      n.left = l;
      n.right = r;
    } else {
      auto& v = values[static_cast<std::size_t>(id)];
      for (int c = 0; c < Outputs; ++c) v(c) = Outputs == 1 ? rng.uniform(-2, 2) : rng.uniform();
      if (Outputs > 1) v /= v.sum();
    }
    return id;
  };
  grow(grow, 100.0 * (1 + rng.uniform()), 0);
  t.values.resize(static_cast<Eigen::Index>(values.size()), Outputs);
  for (std::size_t i = 0; i < values.size(); ++i) t.values.row(static_cast<Eigen::Index>(i)) = values[i];
  return t;
}

inline Eigen::RowVectorXd random_input(Rng& rng, int n_features) {
  Eigen::RowVectorXd x(n_features);
  for (int j = 0; j < n_features; ++j) x(j) = rng.uniform();
  return x;
}

}  // namespace fmc::testing
