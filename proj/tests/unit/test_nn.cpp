#include <doctest.h>

#include "bnnp/errors.hpp"
#include "bnnp/nn.hpp"
#include "bnnp/rng.hpp"
#include "oracles.hpp"

using namespace bnnp;

namespace {

ArchSpec arch_of(std::vector<int> sizes, Activation act = Activation::softplus, OutputHead head = OutputHead::identity) {
  ArchSpec a;
  a.layer_sizes = std::move(sizes);
  a.activation = act;
  a.head = head;
  return a;
}

// Draws an input whose hidden pre-activations all have magnitude >= 1e-2.
Vector kink_free_input(const Mlp& net, const ParamVector& w, Rng& rng) {
  for (;;) {
    const Vector x = rng.normal_vector(net.input_dim());
    bool ok = true;
    const auto layers = net.unflatten(w);
    Vector a = x;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
      const Vector z = layers[l].weight * a + layers[l].bias;
      if (z.cwiseAbs().minCoeff() < 1e-2) ok = false;
      a = z.cwiseMax(0.0);
    }
    if (ok) return x;
  }
}

}  // namespace

TEST_SUITE("nn_core") {
  TEST_CASE("param_count follows the layer formula") {
    CHECK(arch_of({4, 3, 2}).param_count() == (4 + 1) * 3 + (3 + 1) * 2);
    CHECK(arch_of({784, 8, 10}).param_count() == 785 * 8 + 9 * 10);
    CHECK_THROWS_AS(arch_of({4}).validate(), InvalidShape);
    CHECK_THROWS_AS(arch_of({4, 0, 2}).validate(), InvalidShape);
  }

  TEST_CASE("flat index and coordinates round trip") {
    for (const auto& sizes : {std::vector<int>{1, 1}, {4, 3, 2}, {3, 5, 4, 2}, {7, 1, 6}}) {
      const Mlp net(arch_of(sizes));
      for (Index i = 0; i < net.param_count(); ++i) CHECK(net.flat_index(net.coord(i)) == i);
      Rng rng(11);
      const ParamVector w = rng.normal_vector(net.param_count());
      CHECK(net.flatten(net.unflatten(w)) == w);
    }
  }

  TEST_CASE("forward: zero parameters give zero output") {
    const Mlp net(arch_of({4, 3, 2}, Activation::relu));
    const Vector y = net.forward(ParamVector::Zero(net.param_count()), Vector::Constant(4, 0.7));
    CHECK(y == Vector::Zero(2));
  }

  TEST_CASE("forward: identity single layer") {
    const Mlp net(arch_of({2, 2}));
    std::vector<LayerParams> layers{{Matrix::Identity(2, 2), Vector::Zero(2)}};
    const ParamVector w = net.flatten(layers);
    Vector x(2);
    x << 0.3, -1.2;
    CHECK(net.forward(w, x) == x);
  }

  TEST_CASE("forward: random relu net matches explicit loops") {
    const ArchSpec arch = arch_of({4, 3, 2}, Activation::relu);
    const Mlp net(arch);
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
      const ParamVector w = rng.normal_vector(net.param_count());
      const Vector x = rng.normal_vector(4);
      CHECK(oracle::rel_err(net.forward(w, x), oracle::naive_forward(arch, w, x)) <= 1e-14);
    }
  }

  TEST_CASE("forward: shape errors") {
    const Mlp net(arch_of({4, 3, 2}));
    CHECK_THROWS_AS(net.forward(ParamVector::Zero(3), Vector::Zero(4)), InvalidShape);
    CHECK_THROWS_AS(net.forward(ParamVector::Zero(net.param_count()), Vector::Zero(3)), InvalidShape);
    CHECK_THROWS_AS(net.grad_params(ParamVector::Zero(net.param_count()), Vector::Zero(4), Vector::Zero(3)),
                    InvalidShape);
  }

  TEST_CASE("grad_params: zero upstream and linear layer") {
    const Mlp net(arch_of({3, 2}));
    Rng rng(5);
    const ParamVector w = rng.normal_vector(net.param_count());
    const Vector x = rng.normal_vector(3);
    CHECK(net.grad_params(w, x, Vector::Zero(2)) == ParamVector::Zero(net.param_count()));
    const ParamVector g = net.grad_params(w, x, Vector::Unit(2, 0));
    for (int c = 0; c < 3; ++c) CHECK(g[net.flat_index({0, 0, c, false})] == x[c]);
    for (int c = 0; c < 3; ++c) CHECK(g[net.flat_index({0, 1, c, false})] == 0.0);
    CHECK(g[net.flat_index({0, 0, 0, true})] == 1.0);
    CHECK(g[net.flat_index({0, 1, 0, true})] == 0.0);
  }

  TEST_CASE("grad_params is linear in the upstream vector") {
    const Mlp net(arch_of({4, 3, 2}, Activation::relu));
    Rng rng(8);
    const ParamVector w = rng.normal_vector(net.param_count());
    const Vector x = rng.normal_vector(4);
    const Vector u1 = rng.normal_vector(2), u2 = rng.normal_vector(2);
    const double alpha = 1.7;
    const ParamVector lhs = net.grad_params(w, x, alpha * u1 + u2);
    const ParamVector rhs = alpha * net.grad_params(w, x, u1) + net.grad_params(w, x, u2);
    CHECK(oracle::rel_err(lhs, rhs) <= 1e-12);
  }

  TEST_CASE("input_jacobian: linear layer returns W, dead relu units give zero") {
    const Mlp lin(arch_of({3, 2}));
    Rng rng(9);
    const ParamVector w = rng.normal_vector(lin.param_count());
    CHECK(lin.input_jacobian(w, rng.normal_vector(3)) == lin.unflatten(w)[0].weight);

    const Mlp relu(arch_of({2, 3, 1}, Activation::relu));
    auto layers = relu.unflatten(rng.normal_vector(relu.param_count()));
    layers[0].bias = Vector::Constant(3, -100.0);
    const Vector x = Vector::Constant(2, 0.1);
    CHECK(relu.input_jacobian(relu.flatten(layers), x) == Matrix::Zero(1, 2));
  }

  TEST_CASE("masked input-gradient norm: empty mask and linear scalar output") {
    const Mlp lin(arch_of({4, 1}));
    Rng rng(12);
    const ParamVector w = rng.normal_vector(lin.param_count());
    const Vector x = rng.normal_vector(4);
    const MaskedGradNorm none = lin.masked_input_grad_norm(w, x, {});
    CHECK(none.value == 0.0);
    CHECK(none.grad == ParamVector::Zero(w.size()));

    const MaskedGradNorm all = lin.masked_input_grad_norm(w, x, {0, 1, 2, 3});
    const Vector weights = w.head(4);
    CHECK(all.value == doctest::Approx(weights.squaredNorm()).epsilon(1e-14));
    ParamVector expected = ParamVector::Zero(w.size());
    expected.head(4) = 2.0 * weights;
    CHECK(oracle::rel_err(all.grad, expected) <= 1e-14);
    CHECK_THROWS_AS(lin.masked_input_grad_norm(w, x, {4}), InvalidMask);
    CHECK_THROWS_AS(lin.masked_input_grad_norm(w, x, {-1}), InvalidMask);
  }

  TEST_CASE("masked input-gradient norm of a softplus 4-3-1 net matches finite differences") {
    const Mlp net(arch_of({4, 3, 1}));
    Rng rng(13);
    const ParamVector w = rng.normal_vector(net.param_count());
    const Vector x = rng.normal_vector(4);
    const std::vector<int> mask{0, 2};
    const ParamVector fd = oracle::central_diff(
        [&](const Vector& v) { return net.masked_input_grad_norm(v, x, mask).value; }, w);
    CHECK(oracle::rel_err(net.masked_input_grad_norm(w, x, mask).grad, fd) <= 1e-4);
  }

  TEST_CASE("softplus nets: every gradient op agrees with finite differences on 100 draws") {
    const Mlp net(arch_of({4, 3, 2}));
    Rng rng(21);
    const std::vector<int> mask{1, 3};
    double worst_p = 0.0, worst_x = 0.0, worst_m = 0.0, worst_pen = 0.0;
    for (int t = 0; t < 100; ++t) {
      const ParamVector w = rng.normal_vector(net.param_count());
      const Vector x = rng.normal_vector(4);
      const Vector u = rng.normal_vector(2);
      worst_p = std::max(worst_p, oracle::rel_err(net.grad_params(w, x, u),
                                                  oracle::central_diff(
                                                      [&](const Vector& v) { return u.dot(net.forward(v, x)); }, w)));
      Matrix jfd(2, 4);
      for (int c = 0; c < 2; ++c)
        jfd.row(c) =
            oracle::central_diff([&](const Vector& v) { return net.forward(w, v)[c]; }, x).transpose();
      worst_x = std::max(worst_x, oracle::rel_err(net.input_jacobian(w, x), jfd));
      worst_m = std::max(worst_m, oracle::rel_err(net.masked_input_grad_norm(w, x, mask).grad,
                                                  oracle::central_diff(
                                                      [&](const Vector& v) {
                                                        return net.masked_input_grad_norm(v, x, mask).value;
                                                      },
                                                      w)));
      const Vector m = net.mask_vector(mask);
      const OutputFunctional f{OutputFunctional::Kind::log_prob_sum, 0};
      ParamVector g = ParamVector::Zero(w.size());
      net.input_grad_penalty(w, x, m, f, &g);
      worst_pen = std::max(
          worst_pen,
          oracle::rel_err(g, oracle::central_diff(
                                 [&](const Vector& v) { return net.input_grad_penalty(v, x, m, f, nullptr); }, w)));
    }
    CHECK(worst_p <= 1e-4);
    CHECK(worst_x <= 1e-4);
    CHECK(worst_m <= 1e-4);
    CHECK(worst_pen <= 1e-4);
  }

  TEST_CASE("relu nets agree with finite differences away from kinks") {
    const Mlp net(arch_of({4, 3, 2}, Activation::relu));
    Rng rng(22);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      const ParamVector w = rng.normal_vector(net.param_count());
      const Vector x = kink_free_input(net, w, rng);
      const Vector u = rng.normal_vector(2);
      worst = std::max(worst, oracle::rel_err(net.grad_params(w, x, u),
                                              oracle::central_diff(
                                                  [&](const Vector& v) { return u.dot(net.forward(v, x)); }, w, 1e-6)));
      Matrix jfd(2, 4);
      for (int c = 0; c < 2; ++c)
        jfd.row(c) = oracle::central_diff([&](const Vector& v) { return net.forward(w, v)[c]; }, x, 1e-6).transpose();
      worst = std::max(worst, oracle::rel_err(net.input_jacobian(w, x), jfd));
      worst = std::max(worst, oracle::rel_err(net.masked_input_grad_norm(w, x, {0, 2}).grad,
                                              oracle::central_diff(
                                                  [&](const Vector& v) {
                                                    return net.masked_input_grad_norm(v, x, {0, 2}).value;
                                                  },
                                                  w, 1e-6)));
    }
    CHECK(worst <= 1e-4);
  }

  TEST_CASE("head helpers") {
    Vector v(3);
    v << 1.0, 3.0, 3.0;
    CHECK(argmax_first(v) == 1);
    CHECK(log_sum_exp(v) == doctest::Approx(std::log(std::exp(1.0) + 2.0 * std::exp(3.0))));
    CHECK(softmax(v).sum() == doctest::Approx(1.0));
    CHECK(sigmoid(0.0) == 0.5);
    Vector big(2);
    big << 1000.0, 1000.0;
    CHECK(std::isfinite(log_sum_exp(big)));
  }
}
