#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "cfdro/policy.hpp"
#include "test_support.hpp"

using namespace cfdro;
using cfdro::testing::random_matrix;

namespace {

Eigen::VectorXd random_x(std::size_t d, Rng& rng) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = 2.0 * uniform01(rng) - 1.0;
  return x;
}

double prob_sum(const LinearPolicy& p, const Eigen::VectorXd& x) {
  double s = 0.0;
  for (std::uint64_t a = 0; a < p.action_space().num_actions(); ++a) s += p.action_prob(x, Action{a});
  return s;
}

}  // namespace

TEST_CASE("uniform policy at theta = 0") {
  Rng rng(1);
  const auto x = random_x(3, rng);
  const auto mc = LinearPolicy::zeros(3, ActionSpace::multiclass(5));
  const auto fl = LinearPolicy::zeros(3, ActionSpace::factorized(3));
  for (std::uint64_t a = 0; a < 5; ++a) CHECK(mc.action_prob(x, Action{a}) == doctest::Approx(0.2));
  for (std::uint64_t a = 0; a < 8; ++a) CHECK(fl.action_prob(x, Action{a}) == doctest::Approx(0.125));
  CHECK(mc.greedy_action(x).code == 0);
  CHECK(fl.greedy_action(x).code == 0);
}

TEST_CASE("probabilities normalize and log probabilities agree") {
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto x = random_x(4, rng);
    const LinearPolicy mc(random_matrix(5, 6, 2.0, rng), ActionSpace::multiclass(6), 0.7);
    const LinearPolicy fl(random_matrix(5, 4, 2.0, rng), ActionSpace::factorized(4), 1.5);
    CHECK(prob_sum(mc, x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(prob_sum(fl, x) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::uint64_t a = 0; a < 6; ++a)
      CHECK(std::exp(mc.log_action_prob(x, Action{a})) == doctest::Approx(mc.action_prob(x, Action{a})));
    const auto pl = fl.probabilities(x);
    for (std::uint64_t a = 0; a < 16; ++a) {
      double prod = 1.0;
      for (int j = 0; j < 4; ++j) prod *= ((a >> j) & 1U) ? pl(j) : 1.0 - pl(j);
      CHECK(fl.action_prob(x, Action{a}) == doctest::Approx(prod).epsilon(1e-12));
    }
  }
}

TEST_CASE("softmax is shift invariant") {
  Rng rng(3);
  const auto x = random_x(3, rng);
  Eigen::MatrixXd theta = random_matrix(4, 5, 1.0, rng);
  const LinearPolicy p(theta, ActionSpace::multiclass(5));
  theta.row(3).array() += 7.5;  // bias row: same constant added to every logit
  const LinearPolicy q(theta, ActionSpace::multiclass(5));
  for (std::uint64_t a = 0; a < 5; ++a)
    CHECK(p.action_prob(x, Action{a}) == doctest::Approx(q.action_prob(x, Action{a})).epsilon(1e-12));
}

TEST_CASE("extreme logits stay finite") {
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(2, 3);
  theta(1, 0) = 800.0;
  const LinearPolicy p(theta, ActionSpace::multiclass(3));
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  CHECK(p.action_prob(x, Action{0}) == 1.0);
  CHECK(p.log_action_prob(x, Action{1}) == doctest::Approx(-800.0));
  Eigen::MatrixXd tf = Eigen::MatrixXd::Zero(2, 2);
  tf(1, 0) = -900.0;
  const LinearPolicy f(tf, ActionSpace::factorized(2));
  CHECK(f.log_action_prob(x, Action{1}) == doctest::Approx(-900.0 - std::log(2.0)));
  CHECK(std::isfinite(f.log_action_prob(x, Action{2})));
}

TEST_CASE("sampling frequencies") {
  Rng rng(4);
  const auto x = random_x(2, rng);
  const auto p = LinearPolicy::zeros(2, ActionSpace::multiclass(4));
  std::vector<int> counts(4);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++counts[p.sample_action(x, rng).code];
  const double sd = std::sqrt(0.25 * 0.75 / draws);
  for (int c : counts) CHECK(std::abs(c / double(draws) - 0.25) <= 3 * sd);

  const LinearPolicy f(random_matrix(3, 2, 1.0, rng), ActionSpace::factorized(2));
  std::vector<int> fc(4);
  for (int i = 0; i < draws; ++i) ++fc[f.sample_action(x, rng).code];
  for (std::uint64_t a = 0; a < 4; ++a) {
    const double pa = f.action_prob(x, Action{a});
    CHECK(std::abs(fc[a] / double(draws) - pa) <= 3 * std::sqrt(pa * (1 - pa) / draws) + 1e-9);
  }

  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(3, 4);
  theta(2, 2) = 40.0;
  const LinearPolicy d(theta, ActionSpace::multiclass(4));
  for (int i = 0; i < 1000; ++i) CHECK(d.sample_action(x, rng).code == 2);
}

TEST_CASE("sampling is deterministic under a fixed seed") {
  Rng src(5);
  const LinearPolicy p(random_matrix(3, 3, 1.0, src), ActionSpace::factorized(3));
  const auto x = random_x(2, src);
  Rng a(99), b(99);
  for (int i = 0; i < 200; ++i) CHECK(p.sample_action(x, a) == p.sample_action(x, b));
}

TEST_CASE("greedy action") {
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    const auto x = random_x(3, rng);
    const LinearPolicy mc(random_matrix(4, 5, 2.0, rng), ActionSpace::multiclass(5));
    const LinearPolicy fl(random_matrix(4, 3, 2.0, rng), ActionSpace::factorized(3));
    for (const auto* p : {&mc, &fl}) {
      std::uint64_t best = 0;
      for (std::uint64_t a = 1; a < p->action_space().num_actions(); ++a)
        if (p->action_prob(x, Action{a}) > p->action_prob(x, Action{best})) best = a;
      CHECK(p->greedy_action(x).code == best);
      CHECK(p->with_temperature(3.7).greedy_action(x) == p->greedy_action(x));
      CHECK(p->with_temperature(0.2).greedy_action(x) == p->greedy_action(x));
    }
  }
  // tie between actions 1 and 3 goes to 1
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(2, 4);
  theta(1, 1) = theta(1, 3) = 2.0;
  CHECK(LinearPolicy(theta, ActionSpace::multiclass(4)).greedy_action(Eigen::VectorXd::Zero(1)).code == 1);
}

TEST_CASE("grad_log_prob matches finite differences") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_x(3, rng);
    for (auto space : {ActionSpace::multiclass(4), ActionSpace::factorized(3)}) {
      const LinearPolicy p(random_matrix(4, static_cast<Eigen::Index>(space.size), 1.5, rng), space, 1.3);
      const Action a{uniform_index(rng, space.num_actions())};
      const Eigen::MatrixXd g = p.grad_log_prob(x, a);
      Eigen::MatrixXd fd(g.rows(), g.cols());
      const double h = 1e-6;
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        Eigen::MatrixXd tp = p.theta(), tm = p.theta();
        tp.data()[i] += h;
        tm.data()[i] -= h;
        fd.data()[i] = (p.with_theta(tp).log_action_prob(x, a) - p.with_theta(tm).log_action_prob(x, a)) / (2 * h);
      }
      CHECK((g - fd).norm() <= 1e-6 * std::max(1.0, fd.norm()));
      Eigen::MatrixXd acc = Eigen::MatrixXd::Ones(g.rows(), g.cols());
      p.accumulate_grad_log_prob(x, a, 2.0, acc);
      CHECK((acc - (Eigen::MatrixXd::Ones(g.rows(), g.cols()) + 2.0 * g)).norm() <= 1e-12);
    }
  }
}

TEST_CASE("score has zero mean under the policy") {
  Rng rng(8);
  const auto x = random_x(3, rng);
  for (auto space : {ActionSpace::multiclass(5), ActionSpace::factorized(3)}) {
    for (double scale : {0.0, 1.0}) {
      const LinearPolicy p(random_matrix(4, static_cast<Eigen::Index>(space.size), scale, rng), space);
      Eigen::MatrixXd total = Eigen::MatrixXd::Zero(4, static_cast<Eigen::Index>(space.size));
      for (std::uint64_t a = 0; a < space.num_actions(); ++a)
        total += p.action_prob(x, Action{a}) * p.grad_log_prob(x, Action{a});
      CHECK(total.norm() <= 1e-12);
    }
  }
}

TEST_CASE("factorized gradient is the sum of per-label Bernoulli scores") {
  Rng rng(9);
  const auto x = random_x(2, rng);
  const LinearPolicy p(random_matrix(3, 3, 1.0, rng), ActionSpace::factorized(3));
  const Action a{0b101};
  const Eigen::MatrixXd g = p.grad_log_prob(x, a);
  Eigen::VectorXd xb(3);
  xb << x, 1.0;
  for (Eigen::Index j = 0; j < 3; ++j) {
    const double pj = 1.0 / (1.0 + std::exp(-xb.dot(p.theta().col(j))));
    const double aj = ((a.code >> j) & 1U) ? 1.0 : 0.0;
    CHECK((g.col(j) - (aj - pj) * xb).norm() <= 1e-12);
  }
}

TEST_CASE("log probability is concave in theta") {
  Rng rng(10);
  for (int i = 0; i < 100; ++i) {
    const auto x = random_x(3, rng);
    for (auto space : {ActionSpace::multiclass(4), ActionSpace::factorized(3)}) {
      const auto cols = static_cast<Eigen::Index>(space.size);
      const LinearPolicy p(random_matrix(4, cols, 3.0, rng), space);
      const auto q = p.with_theta(random_matrix(4, cols, 3.0, rng));
      const auto m = p.with_theta(0.5 * (p.theta() + q.theta()));
      const Action a{uniform_index(rng, space.num_actions())};
      CHECK(m.log_action_prob(x, a) >= 0.5 * (p.log_action_prob(x, a) + q.log_action_prob(x, a)) - 1e-12);
    }
  }
}

TEST_CASE("true risk") {
  Rng rng(11);
  LabeledDataset data;
  data.num_labels = 3;
  data.features = random_matrix(30, 2, 1.0, rng);
  for (int i = 0; i < 30; ++i) data.labels.push_back(uniform_index(rng, 8));

  CHECK(true_risk(LinearPolicy::zeros(2, ActionSpace::factorized(3)), data) == doctest::Approx(1.5));
  CHECK(true_risk(LinearPolicy::zeros(2, ActionSpace::multiclass(8)), data) == doctest::Approx(1.5));

  // Perfect deterministic policy on a single-row dataset.
  LabeledDataset one;
  one.num_labels = 3;
  one.features = Eigen::MatrixXd::Zero(1, 1);
  one.labels = {0b110};
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(2, 3);
  theta(1, 0) = -60;
  theta(1, 1) = theta(1, 2) = 60;
  CHECK(true_risk(LinearPolicy(theta, ActionSpace::factorized(3)), one) <= 1e-20);
  CHECK(greedy_risk(LinearPolicy(theta, ActionSpace::factorized(3)), one) == 0.0);

  // Monte-Carlo oracle
  for (auto space : {ActionSpace::factorized(3), ActionSpace::multiclass(8)}) {
    const LinearPolicy p(random_matrix(3, static_cast<Eigen::Index>(space.size), 1.5, rng), space);
    const int draws = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < draws; ++i) {
      const std::size_t r = uniform_index(rng, data.size());
      const double c = hamming(p.sample_action(data.row(r), rng).code, data.labels[r]);
      sum += c;
      sq += c * c;
    }
    const double m = sum / draws, sd = std::sqrt((sq / draws - m * m) / draws);
    CHECK(std::abs(true_risk(p, data) - m) <= 3 * sd);
  }
}

TEST_CASE("action space checks") {
  CHECK(ActionSpace::factorized(4).num_actions() == 16);
  CHECK(ActionSpace::factorized(4).contains(Action{15}));
  CHECK_FALSE(ActionSpace::factorized(4).contains(Action{16}));
  CHECK_FALSE(ActionSpace::multiclass(3).contains(Action{3}));
  CHECK(hamming(0b1010, 0b0110) == 2);
  CHECK_THROWS(LinearPolicy(Eigen::MatrixXd::Zero(3, 2), ActionSpace::multiclass(3)));
  CHECK_THROWS(LinearPolicy(Eigen::MatrixXd::Zero(3, 2), ActionSpace::multiclass(2), 0.0));
}

TEST_CASE("policy checkpoint round-trip") {
  Rng rng(12);
  for (auto space : {ActionSpace::multiclass(5), ActionSpace::factorized(3)}) {
    const LinearPolicy p(random_matrix(4, static_cast<Eigen::Index>(space.size), 3.0, rng), space, 1.75);
    std::stringstream ss;
    write_policy(ss, p);
    const LinearPolicy q = read_policy(ss);
    CHECK(q.action_space() == p.action_space());
    CHECK(q.temperature() == p.temperature());
    CHECK(q.theta() == p.theta());
  }
  std::stringstream bad("cfdro-policy 2\n");
  CHECK_THROWS(read_policy(bad));
  std::stringstream trunc("cfdro-policy 1\naction_space factorized 2\ntemperature 1\nshape 2 2\n1 2\n");
  CHECK_THROWS(read_policy(trunc));
}
