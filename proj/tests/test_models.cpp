#include <gtest/gtest.h>

#include <cmath>

#include "vgsi/models.hpp"

using namespace vgsi;

namespace {

using LD = long double;

template <typename T>
Matrix<T> random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix<T> m(r, c);
  for (auto& v : m.flat()) v = static_cast<T>(scale * rng.normal());
  return m;
}

std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// Reference evaluation in long double, written directly from the model
// definitions.
std::vector<LD> ref_project(const std::vector<double>& x, const Matrix<double>& w) {
  std::vector<LD> out(w.cols(), 0);
  for (std::size_t j = 0; j < w.cols(); ++j)
    for (std::size_t i = 0; i < x.size(); ++i) out[j] += static_cast<LD>(x[i]) * w(i, j);
  return out;
}

std::vector<LD> ref_unit(std::vector<LD> v) {
  LD n = 0;
  for (auto x : v) n += x * x;
  n = std::sqrt(n);
  for (auto& x : v) x /= n;
  return v;
}

LD ref_dot(const std::vector<LD>& a, const std::vector<LD>& b) {
  LD s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<LD> widen(const std::vector<double>& v) { return {v.begin(), v.end()}; }

LD ref_simnet_alpha0(const SimNetParams<double>& p, const std::vector<double>& g, const std::vector<double>& i) {
  const auto a = ref_unit(ref_project(i, p.img_to_joint));
  const auto b = ref_unit(ref_project(g, p.goal_to_joint));
  LD z0 = p.head_bias(0, 0), z1 = p.head_bias(0, 1);
  for (std::size_t j = 0; j < a.size(); ++j) {
    z0 += a[j] * b[j] * p.head_weight(j, 0);
    z1 += a[j] * b[j] * p.head_weight(j, 1);
  }
  return 1 / (1 + std::exp(z1 - z0));
}

std::span<const double> sp(const std::vector<double>& v) { return v; }

}  // namespace

TEST(Devise, IdentityAlignedIsOne) {
  DeviseParams<double> p{Matrix<double>(3, 3)};
  for (int i = 0; i < 3; ++i) p.img_to_goal(i, i) = 1;
  const std::vector<double> x{1, 2, 3}, e1{1, 0, 0}, e2{0, 1, 0};
  EXPECT_NEAR(devise_score(p, sp(x), sp(x)), 1.0, 1e-15);
  EXPECT_NEAR(devise_score(p, sp(e1), sp(e2)), 0.0, 1e-15);
}

TEST(Devise, MatchesReference) {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    DeviseParams<double> p{random_matrix<double>(12, 8, rng)};
    const auto g = random_vector(8, rng), i = random_vector(12, rng);
    const LD ref = ref_dot(ref_unit(ref_project(i, p.img_to_goal)), ref_unit(widen(g)));
    EXPECT_NEAR(devise_score(p, sp(g), sp(i)), static_cast<double>(ref), 1e-10);
  }
}

TEST(Devise, AlignedPairsHaveZeroLoss) {
  DeviseParams<double> p{Matrix<double>(2, 2)};
  p.img_to_goal(0, 0) = p.img_to_goal(1, 1) = 1;
  const std::vector<double> x{0.3, 0.4};
  const std::vector<TrainExample<double>> batch{{x, x, {}, 1}};
  const auto lg = devise_loss_grad(p, std::span<const TrainExample<double>>(batch));
  EXPECT_NEAR(lg.loss, 0.0, 1e-15);
  // No gradient along the (already aligned) projection direction.
  double along = 0;
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c) along += lg.grad.img_to_goal(r, c) * x[r] * x[c];
  EXPECT_NEAR(along, 0.0, 1e-12);
}

TEST(Devise, BatchMeanInvariance) {
  Rng rng(2);
  DeviseParams<double> p{random_matrix<double>(5, 4, rng)};
  const auto g = random_vector(4, rng), i = random_vector(5, rng);
  const std::vector<TrainExample<double>> one{{g, i, {}, 1}}, two{{g, i, {}, 1}, {g, i, {}, 1}};
  const auto a = devise_loss_grad(p, std::span<const TrainExample<double>>(one));
  const auto b = devise_loss_grad(p, std::span<const TrainExample<double>>(two));
  EXPECT_NEAR(a.loss, b.loss, 1e-15);
  for (std::size_t k = 0; k < a.grad.img_to_goal.size(); ++k)
    EXPECT_NEAR(a.grad.img_to_goal.flat()[k], b.grad.img_to_goal.flat()[k], 1e-15);
}

TEST(SimNet, ZeroHeadScoresZero) {
  Rng rng(3);
  SimNetParams<double> p{random_matrix<double>(4, 3, rng), random_matrix<double>(5, 3, rng), Matrix<double>(3, 2),
                         Matrix<double>(1, 2)};
  const auto g = random_vector(5, rng), i = random_vector(4, rng);
  EXPECT_DOUBLE_EQ(simnet_score(p, sp(g), sp(i)), 0.0);
  const std::vector<TrainExample<double>> batch{{g, i, {}, 1}};
  EXPECT_NEAR(simnet_loss_grad(p, std::span<const TrainExample<double>>(batch)).loss, std::log(2.0), 1e-12);
}

TEST(SimNet, BiasSaturates) {
  Rng rng(4);
  SimNetParams<double> p{random_matrix<double>(4, 3, rng), random_matrix<double>(5, 3, rng), Matrix<double>(3, 2),
                         Matrix<double>(1, 2)};
  p.head_bias(0, 0) = 10;
  p.head_bias(0, 1) = -10;
  const auto g = random_vector(5, rng), i = random_vector(4, rng);
  const double s = simnet_score(p, sp(g), sp(i));
  EXPECT_GT(s, 0.99999);
  EXPECT_LT(s, 1.0);
  const std::vector<TrainExample<double>> batch{{g, i, {}, 1}};
  EXPECT_LT(simnet_loss_grad(p, std::span<const TrainExample<double>>(batch)).loss, 1e-8);
}

TEST(SimNet, MatchesReference) {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    SimNetParams<double> p{random_matrix<double>(12, 6, rng), random_matrix<double>(8, 6, rng),
                           random_matrix<double>(6, 2, rng), random_matrix<double>(1, 2, rng)};
    const auto g = random_vector(8, rng), i = random_vector(12, rng);
    const LD a0 = ref_simnet_alpha0(p, g, i);
    EXPECT_NEAR(simnet_score(p, sp(g), sp(i)), static_cast<double>(2 * a0 - 1), 1e-10);
    for (int y : {0, 1}) {
      const std::vector<TrainExample<double>> batch{{g, i, {}, y}};
      const LD ref_loss = y == 1 ? -std::log(a0) : -std::log(1 - a0);
      EXPECT_NEAR(simnet_loss_grad(p, std::span<const TrainExample<double>>(batch)).loss, static_cast<double>(ref_loss),
                  1e-10);
    }
  }
}

TEST(Triplet, SharedDirectionAndOrthogonal) {
  TripletParams<double> p{Matrix<double>(2, 2), Matrix<double>(2, 2)};
  p.goal_to_joint(0, 0) = p.goal_to_joint(1, 1) = 1;
  p.img_to_joint(0, 0) = p.img_to_joint(1, 1) = 2;
  const std::vector<double> a{1, 1}, b{1, -1};
  EXPECT_NEAR(triplet_score(p, sp(a), sp(a)), 1.0, 1e-15);
  EXPECT_NEAR(triplet_score(p, sp(a), sp(b)), 0.0, 1e-15);
}

TEST(Triplet, MatchesReference) {
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    TripletParams<double> p{random_matrix<double>(8, 6, rng), random_matrix<double>(12, 6, rng)};
    const auto g = random_vector(8, rng), i = random_vector(12, rng);
    const LD ref = ref_dot(ref_unit(ref_project(g, p.goal_to_joint)), ref_unit(ref_project(i, p.img_to_joint)));
    EXPECT_NEAR(triplet_score(p, sp(g), sp(i)), static_cast<double>(ref), 1e-10);
  }
}

TEST(Triplet, HingeValues) {
  Rng rng(7);
  TripletParams<double> p{random_matrix<double>(3, 3, rng), random_matrix<double>(3, 3, rng)};
  const auto g = random_vector(3, rng), i = random_vector(3, rng);
  const std::vector<TrainExample<double>> same{{g, i, i, 1}};
  EXPECT_NEAR(triplet_loss_grad(p, std::span<const TrainExample<double>>(same)).loss, 0.2, 1e-15);

  // d(G,pos) = 0 and d(G,neg) = 1: identity projections, pos = goal, neg orthogonal.
  TripletParams<double> id{Matrix<double>(2, 2), Matrix<double>(2, 2)};
  id.goal_to_joint(0, 0) = id.goal_to_joint(1, 1) = id.img_to_joint(0, 0) = id.img_to_joint(1, 1) = 1;
  const std::vector<double> e1{1, 0}, e2{0, 1};
  const std::vector<TrainExample<double>> easy{{e1, e1, e2, 1}};
  const auto lg = triplet_loss_grad(id, std::span<const TrainExample<double>>(easy));
  EXPECT_EQ(lg.loss, 0.0);
  EXPECT_TRUE(std::all_of(lg.grad.goal_to_joint.flat().begin(), lg.grad.goal_to_joint.flat().end(),
                          [](double v) { return v == 0.0; }));
}

TEST(Model, InitIsDeterministicAndShaped) {
  const ModelDims dims{8, 12, 6};
  for (auto kind : {ModelKind::devise, ModelKind::simnet, ModelKind::triplet}) {
    const auto a = init_model(kind, dims, 3), b = init_model(kind, dims, 3), c = init_model(kind, dims, 4);
    EXPECT_EQ(a, b);
    EXPECT_FALSE(a == c);
  }
  const auto s = std::get<SimNetParams<float>>(init_model(ModelKind::simnet, dims, 1).params);
  EXPECT_EQ(s.head_weight.rows(), 6u);
  EXPECT_EQ(s.head_bias(0, 0), 0.0f);
  EXPECT_EQ(parameter_count(s), 12u * 6 + 8 * 6 + 6 * 2 + 2);
}

TEST(Model, MatchAgreesWithEmbeddedScoring) {
  Rng rng(8);
  std::vector<float> g(8), i(12);
  for (auto& x : g) x = static_cast<float>(rng.normal());
  for (auto& x : i) x = static_cast<float>(rng.normal());
  for (auto kind : {ModelKind::devise, ModelKind::simnet, ModelKind::triplet}) {
    const auto m = init_model(kind, {8, 12, 6}, 9);
    const double direct = match(m, g, i);
    EXPECT_DOUBLE_EQ(direct, score_embedded(m, embed_goal(m, g), embed_image(m, i)));
    EXPECT_LE(std::abs(direct), 1.0 + 1e-12);
  }
}

TEST(Model, FlattenRoundTrip) {
  Rng rng(10);
  SimNetParams<double> p{random_matrix<double>(3, 2, rng), random_matrix<double>(4, 2, rng),
                         random_matrix<double>(2, 2, rng), random_matrix<double>(1, 2, rng)};
  auto q = zeros_like(p);
  unflatten(q, flatten(p));
  EXPECT_EQ(p, q);
  EXPECT_THROW(unflatten(q, std::vector<double>(3)), Error);
}

TEST(Model, ZeroVectorsAreRejected) {
  const auto m = init_model(ModelKind::triplet, {2, 2, 2}, 1);
  const std::vector<float> z{0, 0}, x{1, 0};
  EXPECT_THROW(match(m, z, x), Error);
  EXPECT_THROW(parse_model_kind("clip"), Error);
}
