#include "fmc/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "fmc/csv.hpp"
#include "fmc/parallel.hpp"

namespace fmc {
namespace {

Eigen::VectorXd normalized(Eigen::VectorXd v) {
  const double total = v.sum();
  if (total > 0) v /= total;
  return v;
}

void check_names(const std::vector<std::string>& features, Eigen::Index p) {
  if (static_cast<Eigen::Index>(features.size()) != p) {
    throw SchemaMismatch("expected " + std::to_string(p) + " feature names, got " + std::to_string(features.size()));
  }
}

std::vector<std::size_t> rank_desc(const Eigen::VectorXd& v) {
  std::vector<std::size_t> order(static_cast<std::size_t>(v.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v(static_cast<Eigen::Index>(a)) > v(static_cast<Eigen::Index>(b)); });
  return order;
}

// TreeSHAP path bookkeeping: each element is a split feature on the current
// root-to-node path with the fraction of "feature unknown" (zero) and
// "feature known" (one) flow through it, and the permutation weight.
struct PathElement {
  int feature;
  double zero;
  double one;
  double weight;
};

void extend_path(std::vector<PathElement>& path, int depth, double zero, double one, int feature) {
  path[static_cast<std::size_t>(depth)] = {feature, zero, one, depth == 0 ? 1.0 : 0.0};
  for (int i = depth - 1; i >= 0; --i) {
    path[static_cast<std::size_t>(i + 1)].weight += one * path[static_cast<std::size_t>(i)].weight * (i + 1) / (depth + 1);
    path[static_cast<std::size_t>(i)].weight = zero * path[static_cast<std::size_t>(i)].weight * (depth - i) / (depth + 1);
  }
}

void unwind_path(std::vector<PathElement>& path, int depth, int index) {
  const double one = path[static_cast<std::size_t>(index)].one;
  const double zero = path[static_cast<std::size_t>(index)].zero;
  double next = path[static_cast<std::size_t>(depth)].weight;
  for (int i = depth - 1; i >= 0; --i) {
    auto& e = path[static_cast<std::size_t>(i)];
    if (one != 0) {
      const double tmp = e.weight;
      e.weight = next * (depth + 1) / ((i + 1) * one);
      next = tmp - e.weight * zero * (depth - i) / (depth + 1);
    } else {
      e.weight = e.weight * (depth + 1) / (zero * (depth - i));
    }
  }
  for (int i = index; i < depth; ++i) {
    auto& e = path[static_cast<std::size_t>(i)];
    const auto& n = path[static_cast<std::size_t>(i + 1)];
    e.feature = n.feature;
    e.zero = n.zero;
    e.one = n.one;
  }
}

double unwound_path_sum(const std::vector<PathElement>& path, int depth, int index) {
  const double one = path[static_cast<std::size_t>(index)].one;
  const double zero = path[static_cast<std::size_t>(index)].zero;
  double next = path[static_cast<std::size_t>(depth)].weight;
  double total = 0;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0) {
      const double tmp = next * (depth + 1) / ((i + 1) * one);
      total += tmp;
      next = path[static_cast<std::size_t>(i)].weight - tmp * zero * (depth - i) / (depth + 1);
    } else if (zero != 0) {
      total += path[static_cast<std::size_t>(i)].weight / zero / (static_cast<double>(depth - i) / (depth + 1));
    }
  }
  return total;
}

template <int Outputs>
void shap_recurse(const Tree<Outputs>& tree, const Eigen::Ref<const Eigen::RowVectorXd>& x, PhiMatrix<Outputs>& phi,
                  double scale, int node, std::vector<PathElement> path, int depth, double zero, double one,
                  int feature) {
  if (static_cast<int>(path.size()) < depth + 2) path.resize(static_cast<std::size_t>(depth + 2));
  extend_path(path, depth, zero, one, feature);
  const auto& n = tree.nodes[static_cast<std::size_t>(node)];
  if (n.is_leaf()) {
    for (int i = 1; i <= depth; ++i) {
      const auto& e = path[static_cast<std::size_t>(i)];
      const double w = unwound_path_sum(path, depth, i);
      phi.row(e.feature) += scale * w * (e.one - e.zero) * tree.values.row(node);
    }
    return;
  }
  const int hot = x(n.feature) <= n.threshold ? n.left : n.right;
  const int cold = hot == n.left ? n.right : n.left;
  double in_zero = 1.0, in_one = 1.0;
  for (int k = 1; k <= depth; ++k) {
    if (path[static_cast<std::size_t>(k)].feature == n.feature) {
      in_zero = path[static_cast<std::size_t>(k)].zero;
      in_one = path[static_cast<std::size_t>(k)].one;
      unwind_path(path, depth, k);
      --depth;
      break;
    }
  }
  const double hot_frac = tree.nodes[static_cast<std::size_t>(hot)].cover / n.cover;
  const double cold_frac = tree.nodes[static_cast<std::size_t>(cold)].cover / n.cover;
  shap_recurse(tree, x, phi, scale, hot, path, depth + 1, hot_frac * in_zero, in_one, n.feature);
  shap_recurse(tree, x, phi, scale, cold, path, depth + 1, cold_frac * in_zero, 0.0, n.feature);
}

/// Output with the features in `known` fixed to x and the rest cover-weighted.
template <int Outputs>
typename Tree<Outputs>::Value coalition_value(const Tree<Outputs>& tree, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                                              std::uint32_t known, int node) {
  const auto& n = tree.nodes[static_cast<std::size_t>(node)];
  if (n.is_leaf()) return tree.values.row(node);
  if ((known >> n.feature) & 1U) return coalition_value(tree, x, known, x(n.feature) <= n.threshold ? n.left : n.right);
  const double l = tree.nodes[static_cast<std::size_t>(n.left)].cover / n.cover;
  const double r = tree.nodes[static_cast<std::size_t>(n.right)].cover / n.cover;
  return l * coalition_value(tree, x, known, n.left) + r * coalition_value(tree, x, known, n.right);
}

const DecisionTreeModel* as_tree(const Classifier& m) { return dynamic_cast<const DecisionTreeModel*>(&m); }
const ForestModel* as_forest(const Classifier& m) { return dynamic_cast<const ForestModel*>(&m); }
const BoostedModel* as_boosted(const Classifier& m) { return dynamic_cast<const BoostedModel*>(&m); }

[[noreturn]] void unsupported(const Classifier& m) {
  throw UnsupportedLearner("SHAP needs a tree-structured model, got '" + std::string(m.kind()) + "'");
}

/// Shared driver: `tree_phi` computes one tree's attributions into a p x O
/// accumulator with a scale.
template <class ClassTreeFn, class RegTreeFn>
ShapValues explain_with(const Classifier& model, const Eigen::Ref<const Eigen::RowVectorXd>& x, ClassTreeFn&& class_phi,
                        RegTreeFn&& reg_phi) {
  const auto p = model.n_features();
  if (x.size() != p) throw SchemaMismatch("record width differs from the model's feature count");
  ShapValues s;
  s.phi = PhiMatrix<kNumModes>::Zero(p, kNumModes);
  if (const auto* t = as_tree(model)) {
    s.scale = ShapScale::Probability;
    class_phi(t->tree(), s.phi, 1.0);
    s.base = expected_value(t->tree());
    s.output = t->tree().predict(x);
  } else if (const auto* f = as_forest(model)) {
    s.scale = ShapScale::Probability;
    const double w = 1.0 / static_cast<double>(f->trees().size());
    for (const auto& tree : f->trees()) {
      class_phi(tree, s.phi, w);
      s.base += w * expected_value(tree);
      s.output += w * tree.predict(x);
    }
  } else if (const auto* b = as_boosted(model)) {
    s.scale = ShapScale::Margin;
    const double lr = b->learning_rate();
    s.base = b->base_scores();
    s.output = b->base_scores();
    PhiMatrix<1> col(p, 1);
    for (int c = 0; c < kNumModes; ++c) {
      col.setZero();
      for (const auto& round : b->rounds()) {
        const auto& tree = round[static_cast<std::size_t>(c)];
        reg_phi(tree, col, lr);
        s.base(c) += lr * expected_value(tree)(0);
        s.output(c) += lr * tree.predict(x)(0);
      }
      s.phi.col(c) = col.col(0);
    }
  } else {
    unsupported(model);
  }
  return s;
}

std::string class_name(int c) { return std::string(mode_name(kAllModes[static_cast<std::size_t>(c)])); }

}  // namespace

// ---------------------------------------------------------------------------
// Importance

std::vector<std::size_t> ImportanceReport::ranking() const { return rank_desc(importance); }

nlohmann::json ImportanceReport::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (auto i : ranking()) j.push_back({{"feature", features[i]}, {"importance", importance(static_cast<Eigen::Index>(i))}});
  return j;
}

void ImportanceReport::write_csv(std::ostream& out) const {
  out << "feature,importance\n";
  for (auto i : ranking()) {
    out << csv::escape(features[i]) << ',' << csv::format_double(importance(static_cast<Eigen::Index>(i))) << '\n';
  }
}

template <int Outputs>
Eigen::VectorXd split_importance(const Tree<Outputs>& tree, Eigen::Index n_features) {
  Eigen::VectorXd imp = Eigen::VectorXd::Zero(n_features);
  if (tree.nodes.empty()) return imp;
  const double root = tree.nodes[0].cover;
  for (const auto& n : tree.nodes) {
    if (!n.is_leaf() && root > 0) imp(n.feature) += n.cover / root * n.gain;
  }
  return imp;
}

ImportanceReport impurity_importance(const DecisionTreeModel& model, std::vector<std::string> features) {
  check_names(features, model.n_features());
  return {std::move(features), normalized(split_importance(model.tree(), model.n_features()))};
}

ImportanceReport impurity_importance(const ForestModel& model, std::vector<std::string> features) {
  check_names(features, model.n_features());
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(model.n_features());
  for (const auto& t : model.trees()) sum += split_importance(t, model.n_features());
  if (!model.trees().empty()) sum /= static_cast<double>(model.trees().size());
  return {std::move(features), normalized(std::move(sum))};
}

ImportanceReport gain_importance(const BoostedModel& model, std::vector<std::string> features) {
  check_names(features, model.n_features());
  const auto p = model.n_features();
  Eigen::VectorXd gain = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd splits = Eigen::VectorXd::Zero(p);
  for (const auto& round : model.rounds()) {
    for (const auto& tree : round) {
      for (const auto& n : tree.nodes) {
        if (n.is_leaf()) continue;
        gain(n.feature) += n.gain;
        splits(n.feature) += 1;
      }
    }
  }
  Eigen::VectorXd avg = Eigen::VectorXd::Zero(p);
  for (Eigen::Index f = 0; f < p; ++f) {
    if (splits(f) > 0) avg(f) = gain(f) / splits(f);
  }
  return {std::move(features), normalized(std::move(avg))};
}

// ---------------------------------------------------------------------------
// Shapley attributions

template <int Outputs>
typename Tree<Outputs>::Value expected_value(const Tree<Outputs>& tree) {
  typename Tree<Outputs>::Value v = Tree<Outputs>::Value::Zero();
  const double root = tree.nodes.at(0).cover;
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    if (tree.nodes[i].is_leaf()) v += tree.nodes[i].cover / root * tree.values.row(static_cast<Eigen::Index>(i));
  }
  return v;
}

template <int Outputs>
void tree_shap(const Tree<Outputs>& tree, const Eigen::Ref<const Eigen::RowVectorXd>& x, PhiMatrix<Outputs>& phi,
               double scale) {
  if (tree.nodes.empty() || tree.nodes[0].is_leaf()) return;
  std::vector<PathElement> path(static_cast<std::size_t>(tree.depth() + 2));
  shap_recurse(tree, x, phi, scale, 0, std::move(path), 0, 1.0, 1.0, -1);
}

template <int Outputs>
PhiMatrix<Outputs> brute_force_shapley(const Tree<Outputs>& tree, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                                       Eigen::Index n_features) {
  if (n_features > kMaxBruteForceFeatures) {
    throw TooManyFeatures("brute-force Shapley enumerates 2^p coalitions; p=" + std::to_string(n_features));
  }
  const auto p = static_cast<int>(n_features);
  const std::uint32_t subsets = 1U << p;
  std::vector<typename Tree<Outputs>::Value> v(subsets);
  for (std::uint32_t s = 0; s < subsets; ++s) v[s] = coalition_value(tree, x, s, 0);
  // weight(|S|) = |S|! (p - |S| - 1)! / p!
  std::vector<double> weight(static_cast<std::size_t>(std::max(p, 1)));
  for (int k = 0; k < p; ++k) weight[static_cast<std::size_t>(k)] = std::exp(std::lgamma(k + 1) + std::lgamma(p - k) - std::lgamma(p + 1));
  PhiMatrix<Outputs> phi = PhiMatrix<Outputs>::Zero(n_features, Outputs);
  for (int i = 0; i < p; ++i) {
    const std::uint32_t bit = 1U << i;
    for (std::uint32_t s = 0; s < subsets; ++s) {
      if (s & bit) continue;
      phi.row(i) += weight[static_cast<std::size_t>(std::popcount(s))] * (v[s | bit] - v[s]);
    }
  }
  return phi;
}

template Eigen::VectorXd split_importance(const ClassTree&, Eigen::Index);
template Eigen::VectorXd split_importance(const RegressionTree&, Eigen::Index);
template ClassTree::Value expected_value(const ClassTree&);
template RegressionTree::Value expected_value(const RegressionTree&);
template void tree_shap(const ClassTree&, const Eigen::Ref<const Eigen::RowVectorXd>&, PhiMatrix<kNumModes>&, double);
template void tree_shap(const RegressionTree&, const Eigen::Ref<const Eigen::RowVectorXd>&, PhiMatrix<1>&, double);
template PhiMatrix<kNumModes> brute_force_shapley(const ClassTree&, const Eigen::Ref<const Eigen::RowVectorXd>&,
                                                  Eigen::Index);
template PhiMatrix<1> brute_force_shapley(const RegressionTree&, const Eigen::Ref<const Eigen::RowVectorXd>&,
                                          Eigen::Index);

std::string_view shap_scale_name(ShapScale s) { return s == ShapScale::Margin ? "margin" : "probability"; }

ShapValues tree_shap(const Classifier& model, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  return explain_with(
      model, x, [&](const ClassTree& t, PhiMatrix<kNumModes>& phi, double w) { tree_shap(t, x, phi, w); },
      [&](const RegressionTree& t, PhiMatrix<1>& phi, double w) { tree_shap(t, x, phi, w); });
}

ShapValues brute_force_shapley(const Classifier& model, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  const auto p = model.n_features();
  return explain_with(
      model, x, [&](const ClassTree& t, PhiMatrix<kNumModes>& phi, double w) { phi += w * brute_force_shapley(t, x, p); },
      [&](const RegressionTree& t, PhiMatrix<1>& phi, double w) { phi += w * brute_force_shapley(t, x, p); });
}

double ShapMatrix::local_accuracy_error() const {
  double worst = 0;
  for (std::size_t i = 0; i < records(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (int c = 0; c < kNumModes; ++c) {
      worst = std::max(worst, std::abs(base(c) + phi[static_cast<std::size_t>(c)].row(r).sum() - output(r, c)));
    }
  }
  return worst;
}

ShapMatrix explain_records(const Classifier& model, std::vector<std::string> features, const Eigen::MatrixXd& X,
                           std::vector<std::string> ids, int threads) {
  check_names(features, model.n_features());
  if (static_cast<Eigen::Index>(ids.size()) != X.rows()) throw LengthMismatch("one id per explained record");
  ShapMatrix out;
  out.features = std::move(features);
  out.ids = std::move(ids);
  out.X = X;
  out.output.resize(X.rows(), kNumModes);
  for (auto& m : out.phi) m.resize(X.rows(), X.cols());
  std::vector<ShapValues> rows(static_cast<std::size_t>(X.rows()));
  parallel_for(rows.size(), threads, [&](std::size_t i) { rows[i] = tree_shap(model, X.row(static_cast<Eigen::Index>(i))); });
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.output.row(r) = rows[i].output;
    for (int c = 0; c < kNumModes; ++c) out.phi[static_cast<std::size_t>(c)].row(r) = rows[i].phi.col(c).transpose();
  }
  if (!rows.empty()) {
    out.scale = rows[0].scale;
    out.base = rows[0].base;
  } else {
    out.scale = as_boosted(model) ? ShapScale::Margin : ShapScale::Probability;
  }
  return out;
}

ShapSummary shap_summary(const ShapMatrix& shap) {
  if (shap.records() == 0) throw EmptyDataset("no records to summarize");
  ShapSummary s;
  s.features = shap.features;
  s.mean_abs.resize(static_cast<Eigen::Index>(shap.features.size()), kNumModes);
  for (int c = 0; c < kNumModes; ++c) {
    s.mean_abs.col(c) = shap.phi[static_cast<std::size_t>(c)].cwiseAbs().colwise().mean().transpose();
  }
  s.ranking = rank_desc(s.mean_abs.rowwise().sum());
  return s;
}

std::vector<DependencePoint> shap_dependence_export(const ShapMatrix& shap, const std::string& feature,
                                                   const std::string& interaction, int cls) {
  auto index = [&](const std::string& name) {
    const auto it = std::find(shap.features.begin(), shap.features.end(), name);
    if (it == shap.features.end()) throw UnknownFeature("unknown feature '" + name + "'");
    return static_cast<Eigen::Index>(it - shap.features.begin());
  };
  const auto f = index(feature);
  const auto g = index(interaction);
  if (cls < 0 || cls >= kNumModes) throw ConfigError("class index out of range");
  std::vector<DependencePoint> out;
  out.reserve(shap.records());
  for (std::size_t i = 0; i < shap.records(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.push_back({shap.ids[i], shap.X(r, f), shap.phi[static_cast<std::size_t>(cls)](r, f), shap.X(r, g)});
  }
  return out;
}

void write_summary_csv(std::ostream& out, const ShapSummary& summary) {
  out << "class,feature,mean_abs_phi\n";
  for (int c = 0; c < kNumModes; ++c) {
    for (auto f : summary.ranking) {
      out << class_name(c) << ',' << csv::escape(summary.features[f]) << ','
          << csv::format_double(summary.mean_abs(static_cast<Eigen::Index>(f), c)) << '\n';
    }
  }
}

void write_swarm_csv(std::ostream& out, const ShapMatrix& shap) {
  out << "record,class,feature,phi,feature_value\n";
  for (std::size_t i = 0; i < shap.records(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (int c = 0; c < kNumModes; ++c) {
      for (std::size_t f = 0; f < shap.features.size(); ++f) {
        const auto col = static_cast<Eigen::Index>(f);
        out << csv::escape(shap.ids[i]) << ',' << class_name(c) << ',' << csv::escape(shap.features[f]) << ','
            << csv::format_double(shap.phi[static_cast<std::size_t>(c)](r, col)) << ','
            << csv::format_double(shap.X(r, col)) << '\n';
      }
    }
  }
}

void write_dependence_csv(std::ostream& out, const std::vector<DependencePoint>& points) {
  out << "record,value,phi,interaction\n";
  for (const auto& p : points) {
    out << csv::escape(p.id) << ',' << csv::format_double(p.value) << ',' << csv::format_double(p.phi) << ','
        << csv::format_double(p.interaction) << '\n';
  }
}

std::vector<DependencePoint> read_dependence_csv(std::istream& in) {
  const auto header = csv::read_record(in);
  if (!header) throw ParseError("empty dependence CSV");
  const auto cols = csv::locate_columns(*header, {"record", "value", "phi", "interaction"});
  std::vector<DependencePoint> out;
  while (auto rec = csv::read_record(in)) {
    if (rec->size() != header->size()) throw ParseError("ragged dependence CSV row");
    auto num = [&](std::size_t k) {
      const auto v = csv::parse_double((*rec)[cols[k]]);
      if (!v) throw ParseError("bad number '" + (*rec)[cols[k]] + "' in dependence CSV");
      return *v;
    };
    out.push_back({(*rec)[cols[0]], num(1), num(2), num(3)});
  }
  return out;
}

nlohmann::json force_json(const ShapMatrix& shap, std::size_t record) {
  if (record >= shap.records()) throw LengthMismatch("record index out of range");
  const auto r = static_cast<Eigen::Index>(record);
  nlohmann::json base, output, phi;
  for (int c = 0; c < kNumModes; ++c) {
    const auto name = class_name(c);
    base[name] = shap.base(c);
    output[name] = shap.output(r, c);
    nlohmann::json per_feature = nlohmann::json::object();
    for (std::size_t f = 0; f < shap.features.size(); ++f) {
      per_feature[shap.features[f]] = shap.phi[static_cast<std::size_t>(c)](r, static_cast<Eigen::Index>(f));
    }
    phi[name] = std::move(per_feature);
  }
  return {{"id", shap.ids[record]},
          {"scale", shap_scale_name(shap.scale)},
          {"base", std::move(base)},
          {"output", std::move(output)},
          {"phi", std::move(phi)}};
}

}  // namespace fmc
