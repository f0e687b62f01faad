#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "rdgcn/error.hpp"
#include "gradcheck.hpp"
#include "rdgcn/gcn.hpp"

using namespace rdgcn;
using gcn::GCNModel;
using gcn::Mode;
using oracle::max_relative_gradient_error;
using oracle::random_matrix;
using oracle::random_propagation;

namespace {

GCNModel model_with(std::vector<Matrix> weights, double dropout = 0.0) {
  GCNModel m;
  m.weights = std::move(weights);
  m.dropout_rate = dropout;
  return m;
}

// Scalar reference for one layer: P H W.
Matrix reference_layer(const Matrix& p, const Matrix& h, const Matrix& w) {
  Matrix out(p.rows(), w.cols());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    for (std::size_t o = 0; o < w.cols(); ++o) {
      double s = 0;
      for (std::size_t j = 0; j < p.cols(); ++j) {
        for (std::size_t k = 0; k < h.cols(); ++k) s += p(i, j) * h(j, k) * w(k, o);
      }
      out(i, o) = s;
    }
  }
  return out;
}

std::vector<double> log_softmax(double a, double b) {
  const double m = std::max(a, b);
  const double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
  return {a - lse, b - lse};
}

std::vector<std::size_t> all_nodes(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

TEST(Glorot, DeterministicAndBounded) {
  EXPECT_EQ(gcn::glorot_init(16, 16, 5), gcn::glorot_init(16, 16, 5));
  EXPECT_NE(gcn::glorot_init(16, 16, 5), gcn::glorot_init(16, 16, 6));
  const double r = std::sqrt(6.0 / 20.0);
  const auto w = gcn::glorot_init(4, 16, 1);
  for (double v : w.data()) EXPECT_LE(std::abs(v), r);
}

TEST(Glorot, MeanNearZero) {
  const auto w = gcn::glorot_init(1000, 1000, 3);
  const double r = std::sqrt(6.0 / 2000.0);
  double mean = 0;
  for (double v : w.data()) mean += v;
  mean /= static_cast<double>(w.size());
  const double se = r / std::sqrt(3.0) / std::sqrt(static_cast<double>(w.size()));
  EXPECT_LE(std::abs(mean), 3 * se);
}

TEST(Forward, IdentityPropagationGivesLogSoftmaxOfInputs) {
  const Matrix x{{1, 2}, {-3, 0.5}, {10, 10}};
  const auto out = gcn::gcn_forward(Matrix::identity(3), x, model_with({Matrix::identity(2)}), Mode::Eval);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto want = log_softmax(x(i, 0), x(i, 1));
    EXPECT_NEAR(out.log_probs(i, 0), want[0], 1e-14);
    EXPECT_NEAR(out.log_probs(i, 1), want[1], 1e-14);
  }
}

TEST(Forward, HandComputedTwoLayer) {
  const Matrix p{{0.5, 0.5, 0}, {0.5, 0.25, 0.25}, {0, 0.25, 0.75}};
  const Matrix x{{1, 0}, {0, 2}, {1, 1}};
  const Matrix w0{{1, -1, 0.5}, {0.5, 1, -2}};
  const Matrix w1{{1, 0}, {0, 1}, {-1, 1}};
  const auto out = gcn::gcn_forward(p, x, model_with({w0, w1}), Mode::Eval);
  Matrix h = reference_layer(p, x, w0);
  for (double& v : h.data()) v = v > 0 ? v : 0;
  const Matrix z = reference_layer(p, h, w1);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto want = log_softmax(z(i, 0), z(i, 1));
    EXPECT_NEAR(out.log_probs(i, 0), want[0], 1e-12);
    EXPECT_NEAR(out.log_probs(i, 1), want[1], 1e-12);
  }
}

TEST(ForwardProperty, RowsNormalizeInBothModes) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_propagation(rng, 7);
    const auto x = random_matrix(rng, 7, 3, 0, 5);
    const auto model = GCNModel::create({3, 8, 8, 2}, 0.5, trial);
    for (auto mode : {Mode::Train, Mode::Eval}) {
      const auto lp = gcn::gcn_forward(p, x, model, mode, trial).log_probs;
      for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(std::exp(lp(i, 0)) + std::exp(lp(i, 1)), 1.0, 1e-12);
    }
  }
}

TEST(Forward, ShapeMismatch) {
  const auto model = GCNModel::create({3, 4, 2}, 0.5, 0);
  EXPECT_THROW(gcn::gcn_forward(Matrix::identity(2), Matrix(3, 3), model, Mode::Eval), std::invalid_argument);
  EXPECT_THROW(gcn::gcn_forward(Matrix::identity(3), Matrix(3, 2), model, Mode::Eval), std::invalid_argument);
}

TEST(Dropout, ExpectationMatchesUndropped) {
  std::mt19937_64 rng(2);
  const auto p = random_propagation(rng, 3);
  const auto x = random_matrix(rng, 3, 2, 0, 2);
  const double rate = 0.5;
  const auto model = GCNModel::create({2, 2, 2}, rate, 9);
  const auto clean = gcn::gcn_forward(p, x, model, Mode::Eval);
  Matrix expected = clean.inputs[1];
  const int trials = 10000;
  Matrix sum(3, 2);
  for (int s = 0; s < trials; ++s) {
    const auto dropped = gcn::gcn_forward(p, x, model, Mode::Train, static_cast<std::uint64_t>(s));
    for (std::size_t k = 0; k < sum.size(); ++k) sum.data()[k] += dropped.inputs[1].data()[k];
  }
  for (std::size_t k = 0; k < sum.size(); ++k) {
    const double a = expected.data()[k];
    const double sigma = a * std::sqrt(rate / (1 - rate)) / std::sqrt(static_cast<double>(trials));
    EXPECT_LE(std::abs(sum.data()[k] / trials - a), 3 * sigma + 1e-15) << k;
  }
}

TEST(NllLoss, Analytic) {
  auto model = model_with({Matrix{{1, 2}, {0, -1}}});
  const std::vector<int> labels{0, 1};
  const std::vector<std::size_t> mask{0, 1};
  const Matrix perfect{{0, -INFINITY}, {-INFINITY, 0}};
  EXPECT_DOUBLE_EQ(gcn::nll_loss(perfect, labels, mask, model, 0.1), 0.05 * 6.0);
  const Matrix uniform{{std::log(0.5), std::log(0.5)}, {std::log(0.5), std::log(0.5)}};
  EXPECT_NEAR(gcn::nll_loss(uniform, labels, mask, model, 0.0), 0.6931, 1e-4);
  EXPECT_THROW(gcn::nll_loss(uniform, labels, std::vector<std::size_t>{}, model, 0.0), std::invalid_argument);
}

TEST(NllLoss, RandomMatchesScalar) {
  std::mt19937_64 rng(6);
  const auto model = GCNModel::create({3, 4, 2}, 0.0, 1);
  const auto lp = gcn::gcn_forward(random_propagation(rng, 5), random_matrix(rng, 5, 3), model, Mode::Eval).log_probs;
  const std::vector<int> labels{1, 0, 0, 1, 1};
  const std::vector<std::size_t> mask{0, 2, 3};
  double want = -(lp(0, 1) + lp(2, 0) + lp(3, 1)) / 3.0;
  double sq = 0;
  for (double v : model.weights[0].data()) sq += v * v;
  want += 0.5 * 0.01 * sq;
  EXPECT_NEAR(gcn::nll_loss(lp, labels, mask, model, 0.01), want, 1e-14);
}


TEST(Backward, FiniteDifferencesTwoLayer) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_LT(max_relative_gradient_error(seed, 2, 0.0), 1e-4) << seed;
    EXPECT_LT(max_relative_gradient_error(seed, 2, 0.5), 1e-4) << seed;
  }
}

TEST(Backward, FiniteDifferencesDeeper) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_LT(max_relative_gradient_error(seed, 4, 0.3), 1e-4) << seed;
    EXPECT_LT(max_relative_gradient_error(seed, 1, 0.0), 1e-4) << seed;
  }
}

TEST(Backward, UnmaskedRowHasNoInfluence) {
  std::mt19937_64 rng(4);
  auto x = random_matrix(rng, 4, 3);
  const auto model = GCNModel::create({3, 5, 2}, 0.0, 3);
  const auto p = Matrix::identity(4);
  const std::vector<int> labels{0, 1, 1, 0};
  const std::vector<std::size_t> mask{0, 1, 3};
  const auto g1 = gcn::gcn_backward(gcn::gcn_forward(p, x, model, Mode::Train), p, labels, mask, model, 0.0);
  for (std::size_t c = 0; c < 3; ++c) x(2, c) += 10.0;
  const auto g2 = gcn::gcn_backward(gcn::gcn_forward(p, x, model, Mode::Train), p, labels, mask, model, 0.0);
  for (std::size_t l = 0; l < 2; ++l) EXPECT_EQ(g1[l], g2[l]);
}

TEST(Backward, NoSignalWhenAlreadyCorrect) {
  const Matrix x{{60, -60}, {-60, 60}};
  const auto model = model_with({Matrix::identity(2)});
  const std::vector<int> labels{0, 1};
  const auto grads = gcn::gcn_backward(gcn::gcn_forward(Matrix::identity(2), x, model, Mode::Train),
                                       Matrix::identity(2), labels, all_nodes(2), model, 0.0);
  for (double g : grads[0].data()) EXPECT_NEAR(g, 0.0, 1e-40);
}

TEST(Backward, StaleCacheRejected) {
  auto model = GCNModel::create({2, 3, 2}, 0.0, 1);
  const Matrix x{{1, 0}, {0, 1}};
  const auto cache = gcn::gcn_forward(Matrix::identity(2), x, model, Mode::Train);
  const std::vector<int> labels{0, 1};
  gcn::AdamState state;
  const auto grads = gcn::gcn_backward(cache, Matrix::identity(2), labels, all_nodes(2), model, 0.0);
  gcn::adam_step(model, grads, state, {});
  EXPECT_THROW(gcn::gcn_backward(cache, Matrix::identity(2), labels, all_nodes(2), model, 0.0), std::logic_error);
}

TEST(Adam, ZeroGradient) {
  std::vector<Matrix> w{Matrix{{1, 2}}};
  gcn::AdamState state;
  gcn::adam_step(w, {Matrix(1, 2)}, state, {});
  EXPECT_EQ(w[0], (Matrix{{1, 2}}));
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, FirstStepIsSignTimesLr) {
  std::vector<Matrix> w{Matrix{{0, 0, 0}}};
  gcn::AdamState state;
  gcn::adam_step(w, {Matrix{{0.3, -2, 5}}}, state, {0.01});
  EXPECT_NEAR(w[0](0, 0), -0.01, 1e-9);
  EXPECT_NEAR(w[0](0, 1), 0.01, 1e-9);
  EXPECT_NEAR(w[0](0, 2), -0.01, 1e-9);
}

TEST(Adam, ConstantGradientLimit) {
  std::vector<Matrix> w{Matrix{{0, 0}}};
  gcn::AdamState state;
  const Matrix g{{0.7, -0.02}};
  Matrix before = w[0];
  for (int i = 0; i < 2000; ++i) {
    before = w[0];
    gcn::adam_step(w, {g}, state, {0.01});
  }
  EXPECT_NEAR(w[0](0, 0) - before(0, 0), -0.01, 1e-3 * 0.01);
  EXPECT_NEAR(w[0](0, 1) - before(0, 1), 0.01, 1e-3 * 0.01);
  EXPECT_THROW(gcn::adam_step(w, {Matrix(2, 2)}, state, {}), std::invalid_argument);
}

namespace {

struct Separable {
  Matrix x;
  std::vector<int> labels;
  eval::SplitMasks masks;

  Separable() {
    std::mt19937_64 rng(10);
    std::normal_distribution<double> noise(0, 0.3);
    x = Matrix(40, 3);
    for (std::size_t i = 0; i < 40; ++i) {
      const int y = i % 2;
      labels.push_back(y);
      x(i, 0) = (y ? 2.0 : -2.0) + noise(rng);
      x(i, 1) = noise(rng);
      x(i, 2) = 1.0;
    }
    for (std::size_t i = 0; i < 40; ++i) (i < 30 ? masks.train : masks.validation).push_back(i);
  }
};

}  // namespace

TEST(Train, SeparableLogisticCase) {
  Separable d;
  gcn::TrainConfig cfg;
  cfg.num_layers = 1;
  cfg.dropout_rate = 0.0;
  cfg.patience = 0;
  const auto result = gcn::train(Matrix::identity(40), d.x, d.labels, d.masks, cfg);
  ASSERT_EQ(result.history.size(), 200u);
  for (std::size_t e = 1; e < 10; ++e) {
    EXPECT_LE(result.history[e].train_loss, result.history[e - 1].train_loss + 1e-6) << e;
  }
  const auto pred = gcn::predict(result.model, Matrix::identity(40), d.x);
  std::vector<double> s;
  std::vector<int> y;
  for (std::size_t i : d.masks.train) {
    s.push_back(pred.scores[i]);
    y.push_back(d.labels[i]);
  }
  EXPECT_EQ(eval::confusion_metrics(s, y, 0.5).f1, 1.0);
}

TEST(Train, BitwiseDeterministic) {
  Separable d;
  std::mt19937_64 rng(3);
  const auto p = random_propagation(rng, 40);
  gcn::TrainConfig cfg;
  cfg.epochs = 30;
  cfg.seed = 77;
  const auto a = gcn::train(p, d.x, d.labels, d.masks, cfg);
  const auto b = gcn::train(p, d.x, d.labels, d.masks, cfg);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
    EXPECT_EQ(a.history[e].val_loss, b.history[e].val_loss);
    EXPECT_EQ(a.history[e].val_f1, b.history[e].val_f1);
  }
  EXPECT_EQ(a.model.weights, b.model.weights);
}

TEST(Train, RejectsBadConfig) {
  Separable d;
  gcn::TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(gcn::train(Matrix::identity(40), d.x, d.labels, d.masks, cfg), ConfigError);
  cfg = {};
  cfg.learning_rate = 0;
  EXPECT_THROW(gcn::train(Matrix::identity(40), d.x, d.labels, d.masks, cfg), ConfigError);
}

TEST(Train, DivergenceIsNumericalError) {
  Separable d;
  Matrix x = d.x;
  x(0, 0) = INFINITY;
  gcn::TrainConfig cfg;
  cfg.epochs = 5;
  EXPECT_THROW(gcn::train(Matrix::identity(40), x, d.labels, d.masks, cfg), NumericalError);
}

TEST(Train, EarlyStoppingKeepsBestEpoch) {
  Separable d;
  gcn::TrainConfig cfg;
  cfg.patience = 3;
  cfg.learning_rate = 0.2;
  const auto r = gcn::train(Matrix::identity(40), d.x, d.labels, d.masks, cfg);
  double best = INFINITY;
  std::size_t best_epoch = 0;
  for (const auto& h : r.history) {
    if (h.val_loss < best) {
      best = h.val_loss;
      best_epoch = h.epoch;
    }
  }
  EXPECT_EQ(r.best_epoch, best_epoch);
  EXPECT_LE(r.history.size(), best_epoch + 3);
  const auto ev = gcn::gcn_forward(Matrix::identity(40), d.x, r.model, Mode::Eval);
  double val = 0;
  for (std::size_t i : d.masks.validation) val -= ev.log_probs(i, static_cast<std::size_t>(d.labels[i]));
  EXPECT_DOUBLE_EQ(val / static_cast<double>(d.masks.validation.size()), best);
}

TEST(Predict, ScoresInUnitIntervalAndHandModel) {
  const Matrix x{{1, 0}, {0, 1}, {2, 2}};
  const auto model = model_with({Matrix{{1, -1}, {-1, 2}}});
  const auto pred = gcn::predict(model, Matrix::identity(3), x);
  // logits (1,-1), (-1,2), (0,2)
  EXPECT_NEAR(pred.scores[0], 1 / (1 + std::exp(2.0)), 1e-15);
  EXPECT_NEAR(pred.scores[1], 1 / (1 + std::exp(-3.0)), 1e-15);
  EXPECT_NEAR(pred.scores[2], 1 / (1 + std::exp(-2.0)), 1e-15);
  EXPECT_EQ(pred.labels, (std::vector<int>{0, 1, 1}));
  for (double s : pred.scores) {
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Predict, LabelsInvariantToLogitShift) {
  std::mt19937_64 rng(12);
  auto x = random_matrix(rng, 6, 3);
  for (std::size_t i = 0; i < 6; ++i) x(i, 2) = 1.0;  // bias feature
  auto model = model_with({random_matrix(rng, 3, 2)});
  const auto before = gcn::predict(model, Matrix::identity(6), x).labels;
  for (double shift : {-5.0, 3.0, 40.0}) {
    auto shifted = model;
    shifted.weights[0](2, 0) += shift;
    shifted.weights[0](2, 1) += shift;
    EXPECT_EQ(gcn::predict(shifted, Matrix::identity(6), x).labels, before);
  }
}

TEST(GcnProperty, PermutationEquivariance) {
  std::mt19937_64 rng(21);
  const std::size_t n = 8;
  const auto p = random_propagation(rng, n);
  const auto x = random_matrix(rng, n, 3, 0, 4);
  const auto model = GCNModel::create({3, 6, 2}, 0.5, 4);
  std::vector<std::size_t> perm = all_nodes(n);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix pp(n, n), xp(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) pp(i, j) = p(perm[i], perm[j]);
    for (std::size_t c = 0; c < 3; ++c) xp(i, c) = x(perm[i], c);
  }
  const auto a = gcn::predict(model, p, x);
  const auto b = gcn::predict(model, pp, xp);
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_NEAR(b.scores[i], a.scores[perm[i]], 1e-12);
    EXPECT_EQ(b.labels[i], a.labels[perm[i]]);
  }
}

TEST(Checkpoint, RoundTrip) {
  const auto model = GCNModel::create({5, 16, 16, 2}, 0.25, 99);
  std::stringstream s;
  gcn::write_checkpoint(s, model);
  EXPECT_EQ(s.str().substr(0, 4), "RDGW");
  const auto back = gcn::read_checkpoint(s);
  EXPECT_EQ(back.weights, model.weights);
  EXPECT_EQ(back.dims(), (std::vector<std::size_t>{5, 16, 16, 2}));
  EXPECT_EQ(back.dropout_rate, 0.25);
  EXPECT_EQ(back.seed, 99u);
  std::stringstream junk("RDGM\x01");
  EXPECT_THROW(gcn::read_checkpoint(junk), DataError);
}

TEST(History, CsvHeader) {
  std::ostringstream out;
  const std::vector<gcn::EpochRecord> h{{1, 0.7, 0.69, 0.5}};
  gcn::write_history_csv(out, h);
  EXPECT_EQ(out.str(), "epoch,train_loss,val_loss,val_f1\n1,0.7,0.69,0.5\n");
}

TEST(ModelCreate, Validation) {
  EXPECT_THROW(GCNModel::create({3, 4, 3}, 0.5, 0), ConfigError);
  EXPECT_THROW(GCNModel::create({3}, 0.5, 0), ConfigError);
  EXPECT_THROW(GCNModel::create({3, 2}, 1.0, 0), ConfigError);
  EXPECT_EQ(gcn::layer_dims(7, 16, 2), (std::vector<std::size_t>{7, 16, 2}));
  EXPECT_EQ(gcn::layer_dims(7, 16, 4), (std::vector<std::size_t>{7, 16, 16, 16, 2}));
}
