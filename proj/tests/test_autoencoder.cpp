#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "hcaecs/autoencoder.hpp"
#include "oracles.hpp"

using namespace hcaecs;

namespace {

TimeSeriesDataset random_dataset(std::size_t m, std::size_t n, std::size_t d, std::uint64_t seed,
                                 bool variable_length = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> values(m * n * d, 0.0);
  std::vector<std::size_t> lengths;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t len = variable_length ? 2 + rng() % (n - 1) : n;
    lengths.push_back(len);
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t k = 0; k < d; ++k) values[(i * n + t) * d + k] = g(rng);
  }
  return TimeSeriesDataset("rand", n, d, values, lengths);
}

// Deterministic non-random parameters for oracle comparisons.
AutoencoderModel hand_set_model(ModelDims dims) {
  ParamLayout layout(dims);
  Vector p(layout.total);
  for (Eigen::Index k = 0; k < p.size(); ++k) p[k] = 0.35 * std::sin(1.7 * static_cast<double>(k) + 0.3);
  return AutoencoderModel(dims, 0, p);
}

std::vector<std::size_t> all_indices(const TimeSeriesDataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

TimeSeriesDataset sinusoids(std::size_t count, std::size_t n) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> r;
    const double freq = 1.0 + static_cast<double>(i % 4);
    const double phase = 0.4 * static_cast<double>(i);
    for (std::size_t t = 0; t < n; ++t)
      r.push_back(std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(t) / static_cast<double>(n) + phase));
    rows.push_back(r);
  }
  return z_normalize(TimeSeriesDataset::from_rows("sin", rows));
}

}  // namespace

TEST(Autoencoder, InitIsDeterministicPerSeed) {
  auto a = init_model(1, 16, 12, 176, 7);
  auto b = init_model(1, 16, 12, 176, 7);
  auto c = init_model(1, 16, 12, 176, 8);
  EXPECT_EQ(a.parameters(), b.parameters());
  EXPECT_NE(a.parameters(), c.parameters());
  EXPECT_EQ(a.dims(), (ModelDims{1, 16, 12, 176}));
  EXPECT_EQ(a.seed(), 7u);
}

TEST(Autoencoder, InitBoundsAndForgetBias) {
  auto m = init_model(2, 5, 3, 10, 1);
  const auto& L = m.layout();
  const double s = std::sqrt(6.0 / (2.0 + 20.0));
  EXPECT_LE(m.view(L.encoder1.w).cwiseAbs().maxCoeff(), s);
  auto b = m.view(L.encoder1.b);
  for (Eigen::Index r = 0; r < 5; ++r) {
    EXPECT_EQ(b(r, 0), 0.0);
    EXPECT_EQ(b(5 + r, 0), 1.0);
    EXPECT_EQ(b(10 + r, 0), 0.0);
  }
}

TEST(Autoencoder, InitRejectsNonUndercompleteDims) {
  EXPECT_THROW(init_model(1, 12, 12, 176, 0), ConfigError);
  EXPECT_THROW(init_model(1, 16, 12, 16, 0), ConfigError);
  EXPECT_THROW(init_model(0, 16, 12, 176, 0), ConfigError);
}

TEST(Autoencoder, ForwardMatchesScalarOracle) {
  auto model = hand_set_model({1, 3, 2, 4});
  auto ds = TimeSeriesDataset::from_rows("tiny", {{0.5, -1.0, 0.25, 2.0}, {1.0, 0.0, -0.5, 0.3}});
  const auto idx = all_indices(ds);
  auto result = forward(model, make_batch(ds, idx));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::vector<std::vector<double>> series;
    for (std::size_t t = 0; t < 4; ++t) series.push_back({ds.value(i, t, 0)});
    auto ref = oracle::scalar_forward(model, series);
    for (std::size_t t = 0; t < 4; ++t)
      EXPECT_NEAR(result.reconstruction[t](0, static_cast<Eigen::Index>(i)), ref.reconstruction[t][0], 1e-10);
    for (std::size_t k = 0; k < 2; ++k)
      EXPECT_NEAR(result.latent(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)), ref.latent[k], 1e-10);
  }
}

TEST(Autoencoder, VariableLengthMultivariateMatchesScalarOracle) {
  auto model = hand_set_model({2, 4, 3, 6});
  auto ds = random_dataset(5, 6, 2, 21, true);
  const auto idx = all_indices(ds);
  auto result = forward(model, make_batch(ds, idx));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::vector<std::vector<double>> series;
    for (std::size_t t = 0; t < ds.length(i); ++t) series.push_back({ds.value(i, t, 0), ds.value(i, t, 1)});
    auto ref = oracle::scalar_forward(model, series);
    for (std::size_t k = 0; k < 3; ++k)
      EXPECT_NEAR(result.latent(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)), ref.latent[k], 1e-10);
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t k = 0; k < 2; ++k)
        EXPECT_NEAR(result.reconstruction[t](static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)),
                    ref.reconstruction[t][k], 1e-10);
  }
  EXPECT_NEAR(loss_and_gradient(model, make_batch(ds, idx), nullptr), oracle::scalar_loss(model, ds), 1e-12);
}

TEST(Autoencoder, ZeroInputGivesIdenticalLatents) {
  auto model = init_model(1, 3, 2, 5, 3);
  TimeSeriesDataset zeros("zeros", 5, 1, std::vector<double>(15, 0.0), {5, 5, 5});
  const auto idx = all_indices(zeros);
  auto result = forward(model, make_batch(zeros, idx));
  EXPECT_EQ(result.latent.rows(), 2);
  EXPECT_EQ(result.latent.col(0), result.latent.col(1));
  EXPECT_EQ(result.latent.col(0), result.latent.col(2));

  // first encoder step from zero input and zero state: gates are functions of the biases only
  const auto b1 = model.view(model.layout().encoder1.b);
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  std::vector<double> h1(3);
  for (int k = 0; k < 3; ++k) h1[k] = sig(b1(9 + k, 0)) * std::tanh(sig(b1(k, 0)) * std::tanh(b1(6 + k, 0)));
  EXPECT_EQ(h1[0], 0.0);  // candidate bias is 0
}

TEST(Autoencoder, LatentWidthIsH2) {
  for (std::size_t n : {6u, 17u, 40u}) {
    auto model = init_model(1, 5, 3, n, 1);
    auto ds = random_dataset(3, n, 1, n);
    EXPECT_EQ(extract_aecs(model, ds).values.cols(), 3);
    EXPECT_EQ(extract_aecs(model, ds).values.rows(), 3);
  }
}

TEST(Autoencoder, GradientMatchesFiniteDifferences) {
  auto model = init_model(1, 3, 2, 6, 42);
  auto ds = random_dataset(4, 6, 1, 9);
  const auto idx = all_indices(ds);
  Vector grad;
  loss_and_gradient(model, make_batch(ds, idx), &grad);
  const Vector fd = oracle::finite_difference_gradient(model, ds);
  for (Eigen::Index k = 0; k < grad.size(); ++k) {
    const double denom = std::max({std::abs(grad[k]), std::abs(fd[k]), 1e-6});
    EXPECT_LT(std::abs(grad[k] - fd[k]) / denom, 1e-4) << "parameter " << k;
  }
}

TEST(Autoencoder, GradientMatchesFiniteDifferencesMaskedMultivariate) {
  auto model = init_model(2, 3, 2, 6, 5);
  auto ds = random_dataset(4, 6, 2, 77, true);
  const auto idx = all_indices(ds);
  Vector grad;
  loss_and_gradient(model, make_batch(ds, idx), &grad);
  const Vector fd = oracle::finite_difference_gradient(model, ds);
  for (Eigen::Index k = 0; k < grad.size(); ++k) {
    const double denom = std::max({std::abs(grad[k]), std::abs(fd[k]), 1e-6});
    EXPECT_LT(std::abs(grad[k] - fd[k]) / denom, 1e-4) << "parameter " << k;
  }
}

TEST(Autoencoder, PaddingDoesNotChangeLossOrGradient) {
  auto short_ds = random_dataset(4, 7, 2, 3, true);
  std::vector<double> padded(short_ds.size() * 11 * 2, 0.0);
  for (std::size_t i = 0; i < short_ds.size(); ++i)
    for (std::size_t t = 0; t < short_ds.length(i); ++t)
      for (std::size_t k = 0; k < 2; ++k) padded[(i * 11 + t) * 2 + k] = short_ds.value(i, t, k);
  TimeSeriesDataset long_ds("long", 11, 2, padded, short_ds.lengths());

  auto m7 = init_model(2, 5, 3, 7, 1);
  AutoencoderModel m11({2, 5, 3, 11}, 1, m7.parameters());
  Vector g7, g11;
  const auto idx = all_indices(short_ds);
  const double l7 = loss_and_gradient(m7, make_batch(short_ds, idx), &g7);
  const double l11 = loss_and_gradient(m11, make_batch(long_ds, idx), &g11);
  EXPECT_EQ(l7, l11);
  EXPECT_LT((g7 - g11).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(extract_aecs(m7, short_ds).values, extract_aecs(m11, long_ds).values);
}

TEST(Autoencoder, ZeroLearningRateLeavesParametersUnchanged) {
  auto model = init_model(1, 4, 3, 8, 2);
  auto ds = random_dataset(10, 8, 1, 4);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 3;
  cfg.learning_rate = 0.0;
  cfg.momentum = 0.5;
  auto result = train(model, ds, cfg);
  EXPECT_EQ(result.model.parameters(), model.parameters());
  ASSERT_EQ(result.trace.loss.size(), 4u);
  for (double l : result.trace.loss) EXPECT_NEAR(l, result.trace.loss.front(), 1e-12);
}

TEST(Autoencoder, TrainingIsReproducible) {
  auto ds = random_dataset(12, 9, 1, 8);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 5;
  cfg.seed = 99;
  auto a = train(init_model(1, 4, 3, 9, 99), ds, cfg);
  auto b = train(init_model(1, 4, 3, 9, 99), ds, cfg);
  EXPECT_EQ(a.model.parameters(), b.model.parameters());
  EXPECT_EQ(a.trace.loss, b.trace.loss);
  for (double l : a.trace.loss) EXPECT_GE(l, 0.0);
}

TEST(Autoencoder, SinusoidLossHalvesIn200Epochs) {
  auto ds = sinusoids(8, 16);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 2;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.9;
  cfg.clip_norm = 1.0;
  cfg.seed = 1;
  auto result = train(init_model(1, 15, 12, 16, 1), ds, cfg);
  EXPECT_LT(result.trace.loss.back(), 0.5 * result.trace.loss.front());
}

TEST(Autoencoder, NonFiniteParametersAbortTraining) {
  auto model = init_model(1, 4, 3, 8, 2);
  model.parameters()[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train(model, random_dataset(4, 8, 1, 1), cfg), NumericError);
}

TEST(Autoencoder, TrainConfigValidation) {
  TrainConfig cfg;
  cfg.momentum = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.learning_rate = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Autoencoder, ExtractIsPureAndRowwise) {
  auto model = init_model(1, 16, 12, 30, 7);
  auto base = random_dataset(6, 30, 1, 13);
  std::vector<double> values = base.values();
  std::copy(values.begin(), values.begin() + 30, values.begin() + 4 * 30);  // series 4 := series 0
  TimeSeriesDataset ds("dup", 30, 1, values, base.lengths());
  auto a = extract_aecs(model, ds);
  auto b = extract_aecs(model, ds);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.values.row(0), a.values.row(4));
  EXPECT_EQ(a.values.rows(), 6);
  EXPECT_EQ(a.values.cols(), 12);
  EXPECT_EQ(a.source_model_fingerprint, model.fingerprint());
  EXPECT_THROW(extract_aecs(model, random_dataset(3, 31, 1, 1)), ShapeError);
}

TEST(Autoencoder, CheckpointRoundTripReproducesLatents) {
  auto ds = random_dataset(5, 10, 2, 17);
  TrainConfig cfg;
  cfg.epochs = 2;
  auto trained = train(init_model(2, 5, 3, 10, 3), ds, cfg).model;
  std::stringstream buf;
  write_checkpoint(trained, buf);
  auto loaded = read_checkpoint(buf);
  EXPECT_EQ(loaded.parameters(), trained.parameters());
  EXPECT_EQ(loaded.dims(), trained.dims());
  EXPECT_EQ(loaded.seed(), trained.seed());
  EXPECT_EQ(extract_aecs(loaded, ds).values, extract_aecs(trained, ds).values);

  std::stringstream bad("hcaecs-model 2\n");
  EXPECT_THROW(read_checkpoint(bad), ParseError);
}

TEST(Autoencoder, LatentCsvRoundTripIsBitwise) {
  auto latent = extract_aecs(init_model(1, 5, 3, 12, 4), random_dataset(7, 12, 1, 2)).values;
  std::stringstream buf;
  write_latent_csv(latent, buf);
  EXPECT_EQ(read_latent_csv(buf), latent);
}
