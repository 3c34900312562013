#include <doctest.h>

#include <cmath>

#include "bnnp/errors.hpp"
#include "bnnp/variational.hpp"
#include "oracles.hpp"

using namespace bnnp;

namespace {

LowRankGaussian random_q(Index n, Index r, double sigma, Rng& rng) {
  LowRankGaussian q;
  q.mean = rng.normal_vector(n);
  q.factors = 0.7 * rng.normal_matrix(n, r);
  q.jitter_sigma = sigma;
  return q;
}

double mixture_log_density(const GaussianMixturePrior& mix, const Vector& w) {
  std::vector<double> terms;
  for (const auto& c : mix.components) terms.push_back(oracle::dense_gauss_log_density(w, c.mean, c.dense_covariance()));
  const double m = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s / static_cast<double>(terms.size()));
}

}  // namespace

TEST_SUITE("variational_family") {
  TEST_CASE("sample_with_noise: zero noise, zero factors, linearity") {
    Rng rng(1);
    const LowRankGaussian q = random_q(5, 2, 0.3, rng);
    CHECK(sample_with_noise(q, Vector::Zero(2), Vector::Zero(5)) == q.mean);
    LowRankGaussian flat = q;
    flat.factors.setZero();
    const Vector en = rng.normal_vector(5);
    CHECK(oracle::rel_err(sample_with_noise(flat, rng.normal_vector(2), en), q.mean + 0.3 * en) <= 1e-15);

    const Vector a1 = rng.normal_vector(2), b1 = rng.normal_vector(5), a2 = rng.normal_vector(2),
                 b2 = rng.normal_vector(5);
    const Vector lhs = sample_with_noise(q, a1 + a2, b1 + b2) - q.mean;
    const Vector rhs = (sample_with_noise(q, a1, b1) - q.mean) + (sample_with_noise(q, a2, b2) - q.mean);
    CHECK(oracle::rel_err(lhs, rhs) <= 1e-14);
    CHECK_THROWS_AS(sample_with_noise(q, Vector::Zero(3), Vector::Zero(5)), InvalidShape);
    CHECK_THROWS_AS(sample_with_noise(q, Vector::Zero(2), Vector::Zero(4)), InvalidShape);
  }

  TEST_CASE("sample covariance of 1e5 draws matches v v^T + sigma^2 I") {
    Rng rng(2);
    LowRankGaussian q;
    q.mean = Vector::Zero(3);
    q.factors = Matrix(3, 1);
    q.factors << 1.0, -0.5, 0.25;
    q.jitter_sigma = 0.5;
    const int N = 100000;
    Matrix acc = Matrix::Zero(3, 3);
    Vector mean = Vector::Zero(3);
    std::vector<Vector> draws;
    draws.reserve(N);
    for (int i = 0; i < N; ++i) {
      draws.push_back(sample(q, rng));
      mean += draws.back();
    }
    mean /= N;
    for (const auto& d : draws) acc += (d - mean) * (d - mean).transpose();
    acc /= N - 1;
    const Matrix want = q.factors * q.factors.transpose() + 0.25 * Matrix::Identity(3, 3);
    CHECK((acc - want).cwiseAbs().maxCoeff() <= 5e-2);
  }

  TEST_CASE("KL to isotropic: closed forms") {
    LowRankGaussian at_p;
    at_p.mean = Vector::Zero(6);
    at_p.factors = Matrix::Zero(6, 2);
    at_p.jitter_sigma = 1.5;
    CHECK(std::abs(kl_to_isotropic(at_p, IsotropicPrior{2.25})) <= 1e-12);

    LowRankGaussian s;
    s.mean = Vector::Ones(1);
    s.factors = Matrix::Ones(1, 1);
    s.jitter_sigma = 1.0;
    CHECK(kl_to_isotropic(s, IsotropicPrior{1.0}) == doctest::Approx(0.5 * (2.0 - std::log(2.0))).epsilon(1e-14));
    const LowRankKlGrad g = kl_grad(s, IsotropicPrior{1.0});
    CHECK(g.mean[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(g.factors(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
    const LowRankKlGrad g0 = kl_grad(at_p, IsotropicPrior{2.25});
    CHECK(g0.mean.cwiseAbs().maxCoeff() == 0.0);
    CHECK(g0.factors.cwiseAbs().maxCoeff() <= 1e-15);
  }

  TEST_CASE("KL is nonnegative and grows away from the prior") {
    Rng rng(3);
    LowRankGaussian q;
    q.mean = Vector::Zero(4);
    q.factors = Matrix::Zero(4, 1);
    q.jitter_sigma = 1.0;
    CHECK(kl_to_isotropic(q, IsotropicPrior{1.0}) == doctest::Approx(0.0));
    for (double eps : {1e-3, 1e-2, 1e-1}) {
      LowRankGaussian near = q;
      near.mean[0] = eps;
      CHECK(kl_to_isotropic(near, IsotropicPrior{1.0}) > 0.0);
      near = q;
      near.factors(1, 0) = eps;
      CHECK(kl_to_isotropic(near, IsotropicPrior{1.0}) > 0.0);
      near = q;
      near.jitter_sigma = 1.0 + eps;
      CHECK(kl_to_isotropic(near, IsotropicPrior{1.0}) > 0.0);
    }
    for (int t = 0; t < 30; ++t) CHECK(kl_to_isotropic(random_q(10, 3, 0.2, rng), IsotropicPrior{0.8}) >= 0.0);
  }

  TEST_CASE("n = 20, r = 3: KL matches the dense oracle and its gradient matches finite differences") {
    Rng rng(4);
    const LowRankGaussian q = random_q(20, 3, 0.4, rng);
    const IsotropicPrior p{1.3};
    CHECK(oracle::rel_err(kl_to_isotropic(q, p), oracle::dense_kl(q.mean, q.dense_covariance(), p.variance)) <= 1e-8);
    const LowRankKlGrad g = kl_grad(q, p);
    const Vector fd_mu = oracle::central_diff(
        [&](const Vector& m) {
          LowRankGaussian t = q;
          t.mean = m;
          return kl_to_isotropic(t, p);
        },
        q.mean);
    const Vector v0 = Eigen::Map<const Vector>(q.factors.data(), q.factors.size());
    const Vector fd_v = oracle::central_diff(
        [&](const Vector& v) {
          LowRankGaussian t = q;
          t.factors = Eigen::Map<const Matrix>(v.data(), 20, 3);
          return kl_to_isotropic(t, p);
        },
        v0);
    CHECK(oracle::rel_err(g.mean, fd_mu) <= 1e-5);
    CHECK(oracle::rel_err(Eigen::Map<const Vector>(g.factors.data(), g.factors.size()), fd_v) <= 1e-5);
  }

  TEST_CASE("Woodbury solve: trivial cases and the dense oracle") {
    Rng rng(5);
    LowRankGaussian q = random_q(30, 5, 0.6, rng);
    const Vector x = rng.normal_vector(30);
    CHECK(woodbury_solve(q, Vector::Zero(30)) == Vector::Zero(30));
    const Vector sol = woodbury_solve(q, x);
    const Matrix S = q.dense_covariance();
    CHECK(oracle::rel_err(sol, S.ldlt().solve(x)) <= 1e-9);
    CHECK(oracle::rel_err(S * sol, x) <= 1e-9);
    CHECK(oracle::rel_err(log_det_covariance(q), oracle::dense_log_det(S)) <= 1e-10);
    LowRankGaussian flat = q;
    flat.factors.setZero();
    CHECK(oracle::rel_err(woodbury_solve(flat, x), x / 0.36) <= 1e-14);
  }

  TEST_CASE("Woodbury with a diagonal part matches the dense oracle") {
    Rng rng(6);
    LowRankGaussian q = random_q(12, 3, 1e-3, rng);
    q.diag = Vector(rng.normal_vector(12).array().square() + 0.1);
    const Vector x = rng.normal_vector(12);
    CHECK(oracle::rel_err(woodbury_solve(q, x), q.dense_covariance().ldlt().solve(x)) <= 1e-9);
    CHECK(oracle::rel_err(log_det_covariance(q), oracle::dense_log_det(q.dense_covariance())) <= 1e-10);
  }

  TEST_CASE("jitter below the floor is rejected") {
    LowRankGaussian q;
    q.mean = Vector::Zero(2);
    q.factors = Matrix::Zero(2, 0);
    q.jitter_sigma = 1e-7;
    CHECK_THROWS_AS(q.validate(), InvalidConfig);
  }

  TEST_CASE("log_prob_grad: single Gaussian, isotropic and mixtures") {
    Rng rng(7);
    const LowRankGaussian q = random_q(6, 2, 0.5, rng);
    CHECK(log_prob_grad(Prior{q}, q.mean).cwiseAbs().maxCoeff() <= 1e-14);
    const Vector w = rng.normal_vector(6);
    CHECK(log_prob_grad(Prior{IsotropicPrior{1.0}}, w) == -w);

    GaussianMixturePrior one;
    one.components.push_back(q);
    const Vector single = log_prob_grad(Prior{q}, w);
    const Vector from_mix = log_prob_grad(Prior{one}, w);
    CHECK(single == from_mix);  // bit-for-bit

    GaussianMixturePrior two;
    LowRankGaussian a = random_q(2, 1, 0.7, rng), b = random_q(2, 1, 0.9, rng);
    two.components = {a, b};
    const Vector w2 = 0.5 * (a.mean + b.mean);
    const Vector fd = oracle::central_diff([&](const Vector& v) { return mixture_log_density(two, v); }, w2);
    CHECK(oracle::rel_err(log_prob_grad(Prior{two}, w2), fd) <= 1e-5);
    const PriorDensity density(Prior{two}, 2);
    CHECK(density.log_prob(w2) == doctest::Approx(mixture_log_density(two, w2)).epsilon(1e-10));
  }

  TEST_CASE("diagonal family") {
    DiagGaussian d;
    d.mean = Vector::Zero(3);
    d.log_std = Vector::Constant(3, std::log(1.5));
    CHECK(std::abs(kl_to_isotropic(d, IsotropicPrior{2.25})) <= 1e-12);
    DiagGaussian s;
    s.mean = Vector::Ones(1);
    s.log_std = Vector::Constant(1, 0.5 * std::log(2.0));
    CHECK(kl_to_isotropic(s, IsotropicPrior{1.0}) == doctest::Approx(0.5 * (2.0 - std::log(2.0))).epsilon(1e-14));
    CHECK(sample_with_noise(s, Vector::Zero(1)) == s.mean);
    CHECK_THROWS_AS(sample_with_noise(s, Vector::Zero(2)), InvalidShape);

    Rng rng(8);
    DiagGaussian r;
    r.mean = rng.normal_vector(5);
    r.log_std = 0.3 * rng.normal_vector(5);
    const DiagKlGrad g = kl_grad(r, IsotropicPrior{0.7});
    const Vector fd = oracle::central_diff(
        [&](const Vector& ls) {
          DiagGaussian t = r;
          t.log_std = ls;
          return kl_to_isotropic(t, IsotropicPrior{0.7});
        },
        r.log_std);
    CHECK(oracle::rel_err(g.log_std, fd) <= 1e-6);
    CHECK(oracle::rel_err(g.mean, Vector(r.mean / 0.7)) <= 1e-14);
  }

  TEST_CASE("initialisation scales") {
    Rng rng(9);
    const LowRankGaussian q = init_low_rank(20000, 4, 1e-3, 0.1, rng);
    const double mean_var = q.mean.squaredNorm() / 20000.0;
    const double factor_var = q.factors.squaredNorm() / (20000.0 * 4.0);
    CHECK(mean_var == doctest::Approx(0.01).epsilon(0.05));
    CHECK(factor_var == doctest::Approx(0.01 / 4.0).epsilon(0.05));
  }
}
