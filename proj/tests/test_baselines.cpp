#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nodepfn/baselines.hpp"
#include "nodepfn/prior.hpp"
#include "test_support.hpp"

using namespace nodepfn;

namespace {

HypothesisSet two_hypothesis_pair(int d = 2, double p_in = 0.55, double mean_sep = 1.0,
                                  double feature_std = 1.4) {
  HypothesisSet set;
  for (double h : {0.1, 0.9}) {
    CsbmHypothesis hyp;
    hyp.weight = 0.5;
    hyp.h = h;
    hyp.p_in = p_in;
    hyp.class_means = Tensor::zeros({2, d});
    for (int j = 0; j < d; ++j) {
      hyp.class_means(0, j) = static_cast<real>(-mean_sep);
      hyp.class_means(1, j) = static_cast<real>(mean_sep);
    }
    hyp.feature_std = feature_std;
    hyp.class_prior = {0.5, 0.5};
    set.hypotheses.push_back(hyp);
  }
  return set;
}

// Independent log-likelihood of a full label assignment under one
// hypothesis, written with its own loops for the Monte-Carlo oracle.
double assignment_loglik(const Task& task, const CsbmHypothesis& hyp, const std::vector<int>& labels) {
  const Graph& g = task.graph;
  const int d = g.feature_dim();
  const double p_out = hyp.p_in * (1.0 - hyp.h);
  double ll = 0;
  for (int v = 0; v < g.n; ++v) {
    ll += std::log(hyp.class_prior[labels[v]]);
    for (int j = 0; j < d; ++j) {
      const double diff = static_cast<double>(g.x(v, j)) - hyp.class_means(labels[v], j);
      ll += -0.5 * diff * diff / (hyp.feature_std * hyp.feature_std) -
            0.5 * std::log(2 * 3.14159265358979323846 * hyp.feature_std * hyp.feature_std);
    }
  }
  std::vector<std::vector<char>> adj(static_cast<std::size_t>(g.n), std::vector<char>(static_cast<std::size_t>(g.n), 0));
  for (const auto& [u, v] : g.edges) adj[u][v] = adj[v][u] = 1;
  for (int u = 0; u < g.n; ++u)
    for (int v = u + 1; v < g.n; ++v) {
      const double p = labels[u] == labels[v] ? hyp.p_in : p_out;
      ll += adj[u][v] ? std::log(p) : std::log1p(-p);
    }
  return ll;
}

}  // namespace

TEST_CASE("label propagation: components inherit their labeled node") {
  Graph g;
  g.n = 6;
  g.n_classes = 2;
  g.y = {0, 0, 0, 1, 1, 1};
  g.edges = {{0, 1}, {1, 2}, {3, 4}, {4, 5}};  // two disconnected paths
  PpdMatrix ppd = label_propagation(g, {0, 3}, {0, 1});
  // test rows in ascending complement order: 1, 2, 4, 5
  const std::vector<int> expected = {0, 0, 1, 1};
  const std::vector<int> pred = ppd.argmax_labels();
  CHECK(pred == expected);
}

TEST_CASE("label propagation: alpha near zero leaves unlabeled rows uniform") {
  Graph g;
  g.n = 4;
  g.n_classes = 2;
  g.y = {0, 1, 0, 1};
  g.edges = {{0, 1}, {1, 2}, {2, 3}};
  PpdMatrix ppd = label_propagation(g, {0, 3}, {0, 1}, 1e-12, 50);
  for (int i = 0; i < ppd.probs.rows(); ++i)
    for (int c = 0; c < 2; ++c) CHECK(ppd.probs(i, c) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("label propagation: 4-node path matches an independent dense iteration") {
  Graph g;
  g.n = 4;
  g.n_classes = 2;
  g.y = {0, -1, -1, 1};
  g.edges = {{0, 1}, {1, 2}, {2, 3}};
  const double alpha = 0.9;
  const int iters = 20;
  PpdMatrix ppd = label_propagation(g, {0, 3}, {0, 1}, alpha, iters);

  // independent dense reference
  const double w01 = 1.0 / std::sqrt(1.0 * 2.0), w12 = 1.0 / 2.0, w23 = w01;
  std::vector<std::vector<double>> f(4, std::vector<double>(2, 0.0));
  f[0][0] = 1;
  f[3][1] = 1;
  for (int it = 0; it < iters; ++it) {
    std::vector<std::vector<double>> next(4, std::vector<double>(2, 0.0));
    for (int c = 0; c < 2; ++c) {
      next[0][c] = alpha * w01 * f[1][c] + (1 - alpha) * (c == 0 ? 1 : 0);
      next[1][c] = alpha * (w01 * f[0][c] + w12 * f[2][c]);
      next[2][c] = alpha * (w12 * f[1][c] + w23 * f[3][c]);
      next[3][c] = alpha * w23 * f[2][c] + (1 - alpha) * (c == 1 ? 1 : 0);
    }
    next[0] = {1, 0};
    next[3] = {0, 1};
    f = next;
  }
  for (int row : {1, 2}) {
    const double z = f[row][0] + f[row][1];
    CHECK(ppd.probs(row - 1, 0) == doctest::Approx(f[row][0] / z).epsilon(1e-9));
  }
  // inner nodes take the nearer end's label
  const std::vector<int> pred = ppd.argmax_labels();
  CHECK(pred[0] == 0);
  CHECK(pred[1] == 1);
}

TEST_CASE("label propagation: fixed point independent of extra iterations") {
  Rng rng(3);
  Graph g;
  g.n = 30;
  g.n_classes = 3;
  g.edges = sample_er_edges(30, 0.15, rng);
  g.y.resize(30);
  for (int i = 0; i < 30; ++i) g.y[i] = i % 3;
  std::vector<int> train = {0, 1, 2, 3, 4, 5};
  std::vector<int> labels = {0, 1, 2, 0, 1, 2};
  PpdMatrix a = label_propagation(g, train, labels, 0.9, 300);
  PpdMatrix b = label_propagation(g, train, labels, 0.9, 600);
  CHECK(max_abs_diff(a.probs, b.probs) < 1e-7);
}

TEST_CASE("closed form: linearly separable features classify perfectly") {
  Graph g;
  g.n = 10;
  g.n_classes = 2;
  g.x = Tensor::zeros({10, 1});
  g.y.resize(10);
  for (int i = 0; i < 10; ++i) {
    g.x(i, 0) = static_cast<real>(i < 5 ? -1.0 - 0.1 * i : 1.0 + 0.1 * i);
    g.y[i] = i < 5 ? 0 : 1;
  }
  FilterMatrix identity;
  const std::vector<int> pred =
      closed_form_classify(g, {0, 1, 5, 6}, {0, 0, 1, 1}, identity, 1e-6);
  const std::vector<int> expected = {0, 0, 0, 1, 1, 1};  // test nodes 2,3,4,7,8,9
  CHECK(pred == expected);
}

TEST_CASE("closed form: high-pass of constant features degenerates to class 0") {
  // 4-cycle is degree-regular, so I - Adj annihilates constant features
  Graph g;
  g.n = 4;
  g.n_classes = 2;
  g.x = Tensor::from({4, 1}, {3, 3, 3, 3});
  g.y = {0, 1, -1, -1};
  g.edges = {{0, 1}, {0, 3}, {1, 2}, {2, 3}};
  FilterMatrix high_pass;
  high_pass.kind = FilterKind::high_pass;
  Tensor filtered = apply_filter(g.x, g, high_pass);
  for (real v : filtered.values()) CHECK(std::abs(v) < 1e-12);
  const std::vector<int> pred = closed_form_classify(g, {0, 1}, {0, 1}, high_pass, 1e-4);
  CHECK(pred == std::vector<int>{0, 0});  // uniform tie resolves to class 0
}

TEST_CASE("closed form: 6-node instance matches a dense Gauss-Jordan oracle") {
  Rng rng(7);
  Graph g;
  g.n = 6;
  g.n_classes = 2;
  g.x = test_support::random_tensor({6, 3}, rng);
  g.y = {0, 1, 0, 1, -1, -1};
  g.edges = {{0, 1}, {2, 3}, {4, 5}};
  const std::vector<int> train = {0, 1, 2, 3};
  const std::vector<int> labels = {0, 1, 0, 1};
  const double ridge = 1e-4;
  FilterMatrix identity;
  Tensor w = closed_form_weights(g, train, labels, identity, ridge);

  // oracle: explicit normal equations solved by Gauss-Jordan elimination
  const int d = 3, c = 2;
  std::vector<double> a(d * d, 0.0), b(d * c, 0.0);
  for (int t = 0; t < 4; ++t) {
    for (int p = 0; p < d; ++p) {
      for (int q = 0; q < d; ++q) a[p * d + q] += static_cast<double>(g.x(train[t], p)) * g.x(train[t], q);
      b[p * c + labels[t]] += static_cast<double>(g.x(train[t], p));
    }
  }
  for (int p = 0; p < d; ++p) a[p * d + p] += ridge;
  std::vector<double> aug(a);
  std::vector<double> sol(b);
  for (int col = 0; col < d; ++col) {
    int pivot = col;
    for (int r = col + 1; r < d; ++r)
      if (std::abs(aug[r * d + col]) > std::abs(aug[pivot * d + col])) pivot = r;
    for (int q = 0; q < d; ++q) std::swap(aug[col * d + q], aug[pivot * d + q]);
    for (int q = 0; q < c; ++q) std::swap(sol[col * c + q], sol[pivot * c + q]);
    const double diag = aug[col * d + col];
    for (int q = 0; q < d; ++q) aug[col * d + q] /= diag;
    for (int q = 0; q < c; ++q) sol[col * c + q] /= diag;
    for (int r = 0; r < d; ++r) {
      if (r == col) continue;
      const double factor = aug[r * d + col];
      for (int q = 0; q < d; ++q) aug[r * d + q] -= factor * aug[col * d + q];
      for (int q = 0; q < c; ++q) sol[r * c + q] -= factor * sol[col * c + q];
    }
  }
  for (int i = 0; i < d * c; ++i)
    CHECK(std::abs(static_cast<double>(w.values()[i]) - sol[i]) < 1e-8);
}

TEST_CASE("closed form: singular system with ridge=0 signals, pinv route works") {
  Graph g;
  g.n = 4;
  g.n_classes = 2;
  g.x = Tensor::from({4, 2}, {1, 1, 2, 2, 3, 3, 4, 4});  // rank-1 features
  g.y = {0, 1, -1, -1};
  FilterMatrix identity;
  CHECK_THROWS_AS(closed_form_classify(g, {0, 1}, {0, 1}, identity, 0.0, false), NumericalError);
  const std::vector<int> pred = closed_form_classify(g, {0, 1}, {0, 1}, identity, 0.0, true);
  CHECK(pred.size() == 2);
}

TEST_CASE("closed form: invariant to train-row ordering with ridge > 0") {
  Rng rng(11);
  Graph g;
  g.n = 12;
  g.n_classes = 3;
  g.x = test_support::random_tensor({12, 4}, rng);
  g.y.resize(12);
  for (int i = 0; i < 12; ++i) g.y[i] = i % 3;
  FilterMatrix identity;
  const std::vector<int> a = closed_form_classify(g, {0, 1, 2, 3, 4, 5}, {0, 1, 2, 0, 1, 2}, identity);
  const std::vector<int> b = closed_form_classify(g, {5, 3, 1, 4, 0, 2}, {2, 0, 1, 1, 0, 2}, identity);
  CHECK(a == b);
}

TEST_CASE("exact_ppd: single hypothesis matches independent brute force") {
  Rng rng(13);
  HypothesisSet set;
  set.hypotheses.push_back(two_hypothesis_pair().hypotheses[1]);  // h = 0.9 alone
  set.hypotheses[0].weight = 1.0;
  Task task = sample_hypothesis_task(set, 8, 0.4, 0.6, rng);

  PpdMatrix ppd = exact_ppd(task, set);

  // brute force in test code: enumerate all test assignments directly
  const CsbmHypothesis& hyp = set.hypotheses[0];
  const int n_test = static_cast<int>(task.test_ids.size());
  std::vector<int> labels = task.graph.y;
  std::vector<std::vector<double>> mass(static_cast<std::size_t>(n_test), std::vector<double>(2, 0.0));
  const int64_t states = 1ll << n_test;
  std::vector<double> lls;
  for (int64_t code = 0; code < states; ++code) {
    for (int t = 0; t < n_test; ++t) labels[task.test_ids[t]] = static_cast<int>((code >> t) & 1);
    lls.push_back(assignment_loglik(task, hyp, labels));
  }
  const double mx = *std::max_element(lls.begin(), lls.end());
  for (int64_t code = 0; code < states; ++code) {
    const double w = std::exp(lls[static_cast<std::size_t>(code)] - mx);
    for (int t = 0; t < n_test; ++t) mass[t][(code >> t) & 1] += w;
  }
  for (int t = 0; t < n_test; ++t) {
    const double z = mass[t][0] + mass[t][1];
    for (int c = 0; c < 2; ++c)
      CHECK(static_cast<double>(ppd.probs(t, c)) == doctest::Approx(mass[t][c] / z).epsilon(1e-9));
  }
}

TEST_CASE("exact_ppd: identical hypotheses behave like one and rescaling is absorbed") {
  Rng rng(17);
  HypothesisSet one;
  one.hypotheses.push_back(two_hypothesis_pair().hypotheses[0]);
  one.hypotheses[0].weight = 1.0;
  Task task = sample_hypothesis_task(one, 8, 0.4, 0.6, rng);

  HypothesisSet duplicated;
  duplicated.hypotheses = {one.hypotheses[0], one.hypotheses[0]};
  duplicated.hypotheses[0].weight = 0.5;
  duplicated.hypotheses[1].weight = 0.5;
  CHECK(max_abs_diff(exact_ppd(task, one).probs, exact_ppd(task, duplicated).probs) < 1e-12);

  HypothesisSet rescaled = two_hypothesis_pair();
  HypothesisSet scaled_up = rescaled;
  scaled_up.hypotheses[0].weight *= 37;
  scaled_up.hypotheses[1].weight *= 37;
  CHECK(max_abs_diff(exact_ppd(task, rescaled).probs, exact_ppd(task, scaled_up).probs) < 1e-12);
}

TEST_CASE("exact_ppd: matches a Monte-Carlo importance-sampling oracle") {
  Rng rng(19);
  const HypothesisSet set = two_hypothesis_pair();
  Task task = sample_hypothesis_task(set, 10, 0.4, 0.6, rng);
  const int n_test = static_cast<int>(task.test_ids.size());

  PpdMatrix exact = exact_ppd(task, set);

  // oracle: uniform-proposal importance sampling over test assignments,
  // 10^6 samples, combined across hypotheses in probability space
  Rng mc(23);
  const int samples = 1000000;
  std::vector<double> hyp_z(set.hypotheses.size(), 0.0);
  std::vector<std::vector<double>> hyp_mass(
      set.hypotheses.size(), std::vector<double>(static_cast<std::size_t>(n_test) * 2, 0.0));
  std::vector<int> labels = task.graph.y;
  // common log-scale reference per hypothesis for stable weights
  std::vector<double> ref(set.hypotheses.size());
  for (std::size_t hi = 0; hi < set.hypotheses.size(); ++hi)
    ref[hi] = assignment_loglik(task, set.hypotheses[hi], task.graph.y);
  for (int s = 0; s < samples; ++s) {
    for (int t = 0; t < n_test; ++t) labels[task.test_ids[t]] = static_cast<int>(mc.uniform_int(uint64_t(2)));
    for (std::size_t hi = 0; hi < set.hypotheses.size(); ++hi) {
      const double w = std::exp(assignment_loglik(task, set.hypotheses[hi], labels) - ref[hi]);
      hyp_z[hi] += w;
      for (int t = 0; t < n_test; ++t)
        hyp_mass[hi][static_cast<std::size_t>(t) * 2 + labels[task.test_ids[t]]] += w;
    }
  }
  // posterior over hypotheses: weight * Z_hyp * exp(ref) (proposal uniform)
  std::vector<double> post(set.hypotheses.size());
  double post_total = 0;
  const double ref_max = std::max(ref[0], ref[1]);
  for (std::size_t hi = 0; hi < set.hypotheses.size(); ++hi) {
    post[hi] = set.hypotheses[hi].weight * hyp_z[hi] * std::exp(ref[hi] - ref_max);
    post_total += post[hi];
  }
  double max_tv = 0;
  for (int t = 0; t < n_test; ++t) {
    double mixed[2] = {0, 0};
    for (std::size_t hi = 0; hi < set.hypotheses.size(); ++hi)
      for (int c = 0; c < 2; ++c)
        mixed[c] += (post[hi] / post_total) * (hyp_mass[hi][static_cast<std::size_t>(t) * 2 + c] / hyp_z[hi]);
    const double z = mixed[0] + mixed[1];
    double tv = 0;
    for (int c = 0; c < 2; ++c) tv += std::abs(mixed[c] / z - static_cast<double>(exact.probs(t, c)));
    max_tv = std::max(max_tv, 0.5 * tv);
  }
  CHECK(max_tv < 0.01);
}

TEST_CASE("exact_ppd: guards the enumeration size") {
  HypothesisSet set = two_hypothesis_pair();
  Rng rng(29);
  Task task = sample_hypothesis_task(set, 60, 0.05, 0.10, rng);  // ~54 test nodes
  CHECK_THROWS_AS(exact_ppd(task, set), ValidationError);
}

TEST_CASE("sample_hypothesis_task: determinism, coverage, validity") {
  const HypothesisSet set = two_hypothesis_pair();
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Rng r1(seed), r2(seed);
    Task a = sample_hypothesis_task(set, 12, 0.3, 0.7, r1);
    Task b = sample_hypothesis_task(set, 12, 0.3, 0.7, r2);
    a.validate();
    CHECK(a.graph.y == b.graph.y);
    CHECK(a.graph.edges == b.graph.edges);
    std::vector<char> covered(2, 0);
    for (int id : a.train_ids) covered[a.graph.y[id]] = 1;
    for (int id : a.test_ids) CHECK(covered[a.graph.y[id]] == 1);
  }
}

TEST_CASE("majority accuracy and total variation helpers") {
  Task task;
  task.graph.n = 5;
  task.graph.n_classes = 2;
  task.graph.y = {0, 0, 1, 0, 1};
  task.graph.x = Tensor::zeros({5, 1});
  task.train_ids = {0, 1, 2};
  task.test_ids = {3, 4};
  CHECK(majority_class_accuracy(task) == doctest::Approx(0.5));

  PpdMatrix a, b;
  a.probs = Tensor::from({2, 2}, {1, 0, real(0.5), real(0.5)});
  b.probs = Tensor::from({2, 2}, {0, 1, real(0.5), real(0.5)});
  a.class_labels = b.class_labels = {0, 1};
  CHECK(mean_total_variation(a, b) == doctest::Approx(0.5));
  CHECK(mean_total_variation(a, a) == doctest::Approx(0.0));
}
