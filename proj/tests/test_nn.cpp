#include <doctest.h>

#include <cmath>

#include "casseg/errors.hpp"
#include "casseg/nn.hpp"
#include "casseg/random.hpp"

using namespace casseg;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
    std::vector<double> v(shape_size(shape));
    for (auto& x : v) x = rng.normal(0.0, scale);
    return Tensor(std::move(shape), std::move(v));
}

// Central differences of sum(output * weights) w.r.t. every parameter and
// every input element, compared against backward().
double layer_fd_error(const Network& net, const Tensor& input, const Tensor& weights, double h) {
    auto linear = [&](const Network& n, const Tensor& x) {
        auto out = forward(n, x).output;
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * weights[i];
        return s;
    };
    auto cache = forward(net, input);
    auto grads = backward(net, cache, weights);

    double worst = 0.0;
    auto compare = [&](double a, double n) {
        worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8}));
    };
    Network probe = net;
    for (std::size_t i = 0; i < probe.params.size(); ++i) {
        for (std::size_t j = 0; j < probe.params[i].size(); ++j) {
            const double orig = probe.params[i][j];
            probe.params[i][j] = orig + h;
            const double up = linear(probe, input);
            probe.params[i][j] = orig - h;
            const double down = linear(probe, input);
            probe.params[i][j] = orig;
            compare(grads.param_grads[i][j], (up - down) / (2 * h));
        }
    }
    Tensor x = input;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double orig = x[j];
        x[j] = orig + h;
        const double up = linear(net, x);
        x[j] = orig - h;
        const double down = linear(net, x);
        x[j] = orig;
        compare(grads.grad_input[j], (up - down) / (2 * h));
    }
    return worst;
}

} // namespace

TEST_CASE("network_init") {
    auto a = network_init({Dense{2, 10}, Dense{10, 2}, SoftmaxChannels{}}, 17);
    auto b = network_init({Dense{2, 10}, Dense{10, 2}, SoftmaxChannels{}}, 17);
    CHECK(a.params == b.params);
    CHECK(a.parameter_count() == 2 * 10 + 10 + 10 * 2 + 2);
    CHECK(a.output_channels() == 2);
    for (double v : a.params[1].data()) CHECK(v == 0.0);

    CHECK_THROWS_AS(network_init({Dense{2, 10}, Dense{5, 2}}, 1), ShapeError);
    CHECK_THROWS_AS(network_init({Dense{2, 2}, SoftmaxChannels{}, Relu{}}, 1), ShapeError);
    CHECK_THROWS_AS(network_init({Conv2d{1, 2, 2}}, 1), ShapeError);
    CHECK(network_init({Dense{2, 2}}, 1).params != network_init({Dense{2, 2}}, 2).params);
}

TEST_CASE("forward") {
    SUBCASE("identity dense") {
        auto net = network_init({Dense{3, 3}}, 0);
        net.params[0] = identity(3);
        Tensor x({1, 2, 3}, std::vector<double>{1, -2, 3, 0.5, 0, -7});
        CHECK(forward(net, x).output == x);
    }
    SUBCASE("softmax of equal logits") {
        auto net = network_init({Dense{2, 2}, SoftmaxChannels{}}, 0);
        net.params[0] = Tensor({2, 2}, 0.0);
        auto out = forward(net, Tensor({1, 1, 2}, std::vector<double>{0.3, -1}));
        CHECK(out.output[0] == 0.5);
        CHECK(out.output[1] == 0.5);
    }
    SUBCASE("centred delta kernel copies a channel") {
        auto net = network_init({Conv2d{2, 1, 3}}, 0);
        net.params[0] = Tensor({1, 3, 3, 2}, 0.0);
        net.params[0].data()[(1 * 3 + 1) * 2 + 1] = 1.0;  // centre tap, input channel 1
        Rng rng(3);
        auto x = random_tensor(rng, {4, 5, 2});
        auto out = forward(net, x).output;
        for (std::size_t p = 0; p < 20; ++p) CHECK(out[p] == x[p * 2 + 1]);
    }
    SUBCASE("shape mismatch") {
        auto net = network_init({Dense{3, 2}}, 0);
        CHECK_THROWS_AS(forward(net, Tensor({1, 1, 2}, 0.0)), ShapeError);
        CHECK_THROWS_AS(forward(net, Tensor({3}, 0.0)), ShapeError);
    }
}

TEST_CASE("softmax output lies on the simplex") {
    Rng rng(8);
    auto net = network_init({Conv2d{1, 4, 3}, SoftmaxChannels{}}, 4);
    for (int trial = 0; trial < 20; ++trial) {
        auto out = forward(net, random_tensor(rng, {5, 5, 1}, 10.0)).output;
        for (std::size_t p = 0; p < 25; ++p) {
            double sum = 0;
            for (std::size_t c = 0; c < 4; ++c) {
                const double v = out[p * 4 + c];
                CHECK((v >= 0.0 && v <= 1.0));
                sum += v;
            }
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("backward basics") {
    auto net = network_init({Dense{2, 3}, Relu{}, Dense{3, 2}, SoftmaxChannels{}}, 5);
    Tensor x({1, 2, 2}, std::vector<double>{0.5, -0.3, 1.2, 0.1});
    auto cache = forward(net, x);

    auto zero = backward(net, cache, Tensor(cache.output.shape(), 0.0));
    for (const auto& g : zero.param_grads)
        for (double v : g.data()) CHECK(v == 0.0);
    for (double v : zero.grad_input.data()) CHECK(v == 0.0);

    CHECK_THROWS_AS(backward(net, cache, Tensor({1, 1, 2}, 1.0)), StateError);
    ForwardCache truncated = cache;
    truncated.inputs.pop_back();
    CHECK_THROWS_AS(backward(net, truncated, Tensor(cache.output.shape(), 1.0)), StateError);

    Network relu;
    relu.layers = {Relu{}};
    relu.param_offset = {std::size_t(-1)};
    auto rc = forward(relu, Tensor({1, 2, 1}, std::vector<double>{-1.0, 2.0}));
    auto rg = backward(relu, rc, Tensor({1, 2, 1}, 1.0));
    CHECK(rg.grad_input[0] == 0.0);
    CHECK(rg.grad_input[1] == 1.0);
}

TEST_CASE("property: per-layer backward matches finite differences") {
    Rng rng(99);
    double dense_worst = 0.0, conv_worst = 0.0, softmax_worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t cin = 1 + rng.below(3), cout = 1 + rng.below(3);
        const std::size_t h = 1 + rng.below(4), w = 1 + rng.below(4);
        auto dense = network_init({Dense{cin, cout}, Relu{}}, rng.next_u64());
        auto x = random_tensor(rng, {h, w, cin});
        auto weights = random_tensor(rng, {h, w, cout});
        dense_worst = std::max(dense_worst, layer_fd_error(dense, x, weights, 1e-5));

        auto conv = network_init({Conv2d{cin, cout, 3}}, rng.next_u64());
        conv_worst = std::max(conv_worst, layer_fd_error(conv, x, weights, 1e-5));

        auto soft = network_init({Dense{cin, cout + 1}, SoftmaxChannels{}}, rng.next_u64());
        softmax_worst = std::max(softmax_worst, layer_fd_error(soft, x, random_tensor(rng, {h, w, cout + 1}), 1e-5));
    }
    CHECK(dense_worst <= 1e-6);
    CHECK(conv_worst <= 1e-4);
    CHECK(softmax_worst <= 1e-4);
}

TEST_CASE("optimizer_step") {
    auto net = network_init({Dense{1, 1}}, 0);
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.0;
    net.params[0][0] = 1.0;
    std::vector<Tensor> grads{Tensor({1, 1}, 1.0), Tensor({1}, 0.0)};
    auto state = make_optimizer_state(net);
    optimizer_step(net, grads, cfg, state);
    CHECK(net.params[0][0] == doctest::Approx(0.9).epsilon(1e-15));

    SUBCASE("momentum recurrence") {
        net.params[0][0] = 1.0;
        cfg.momentum = 0.9;
        state = make_optimizer_state(net);
        optimizer_step(net, grads, cfg, state);
        optimizer_step(net, grads, cfg, state);
        double w = 1.0, v = 0.0;
        for (int i = 0; i < 2; ++i) {
            v = 0.9 * v + 1.0;
            w -= 0.1 * v;
        }
        CHECK(w == doctest::Approx(0.71));
        CHECK(net.params[0][0] == doctest::Approx(w).epsilon(1e-15));
    }
    SUBCASE("zero gradient is a fixed point") {
        auto before = net.params;
        state = make_optimizer_state(net);
        cfg.momentum = 0.9;
        optimizer_step(net, {Tensor({1, 1}, 0.0), Tensor({1}, 0.0)}, cfg, state);
        CHECK(net.params == before);
    }
    SUBCASE("adam first step moves by lr") {
        cfg.adam = true;
        net.params[0][0] = 1.0;
        state = make_optimizer_state(net);
        optimizer_step(net, grads, cfg, state);
        CHECK(net.params[0][0] == doctest::Approx(0.9).epsilon(1e-6));
    }
    CHECK_THROWS_AS(optimizer_step(net, {Tensor({1, 1}, 1.0)}, cfg, state), ShapeError);
    CHECK_THROWS_AS(optimizer_step(net, {Tensor({2, 1}, 1.0), Tensor({1}, 0.0)}, cfg, state), ShapeError);
}

TEST_CASE("TrainConfig validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.learning_rate = 0.1;
    cfg.momentum = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("gradcheck") {
    Rng rng(12);
    SUBCASE("linear net with CAS") {
        auto net = network_init({Dense{2, 3}, SoftmaxChannels{}}, 3);
        Example ex{random_tensor(rng, {3, 3, 2}), RegionPartition(3, 3, {0, 0, 1, 0, 1, 1, 2, 2, 2})};
        CHECK(gradcheck(net, LossKind::cas, 0.5, {&ex}, 1e-5) <= 1e-6);
    }
    SUBCASE("conv net with CE") {
        auto net = network_init({Conv2d{1, 3, 3}, Relu{}, Conv2d{3, 2, 3}, SoftmaxChannels{}}, 4);
        Example ex{random_tensor(rng, {4, 4, 1}), RegionPartition(4, 4, {0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 1, 1})};
        CHECK(gradcheck(net, LossKind::ce, 0.5, {&ex}, 1e-5) <= 1e-4);
        CHECK(gradcheck(net, LossKind::cace, 0.5, {&ex}, 1e-5) <= 1e-4);
    }
    SUBCASE("empty parameter set") {
        Network net;
        net.layers = {Relu{}};
        net.param_offset = {std::size_t(-1)};
        Example ex{Tensor({1, 2, 1}, std::vector<double>{0.5, 0.25}), RegionPartition(1, 2, {0, 1})};
        CHECK(gradcheck(net, LossKind::cas, 0.5, {&ex}) == 0.0);
    }
    SUBCASE("a perturbed analytic gradient is detected") {
        auto net = network_init({Dense{2, 2}, SoftmaxChannels{}}, 3);
        Example ex{random_tensor(rng, {2, 2, 2}), RegionPartition(2, 2, {0, 1, 1, 0})};
        auto err = gradcheck(net, LossKind::cas, 0.5, {&ex}, 1e-5, [](std::vector<Tensor>& g) {
            for (auto& t : g)
                for (auto& v : t.data()) v += 1e-2;
        });
        CHECK(err > 1e-4);
    }
}

TEST_CASE("training with CAS on the separable four-pixel fixture decreases the loss monotonically") {
    auto net = network_init({Dense{2, 2}, SoftmaxChannels{}}, 21);
    Example ex{Tensor({2, 2, 2}, std::vector<double>{1, 0, 1, 0, 0, 1, 0, 1}), RegionPartition(2, 2, {0, 0, 1, 1})};
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.0;
    auto state = make_optimizer_state(net);
    double previous = objective(net, LossKind::cas, 0.5, {&ex});
    for (int step = 0; step < 50; ++step) {
        auto r = objective_and_gradient(net, LossKind::cas, 0.5, {&ex});
        optimizer_step(net, r.param_grads, cfg, state);
        const double now = objective(net, LossKind::cas, 0.5, {&ex});
        CHECK(now < previous);
        previous = now;
    }
}

TEST_CASE("training is deterministic") {
    auto run = [] {
        auto net = network_init({Conv2d{1, 3, 3}, Relu{}, Conv2d{3, 2, 3}, SoftmaxChannels{}}, 8);
        Rng rng(1);
        Example ex{random_tensor(rng, {4, 4, 1}), RegionPartition(4, 4, {0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 1, 1})};
        TrainConfig cfg;
        auto state = make_optimizer_state(net);
        for (int step = 0; step < 10; ++step) {
            optimizer_step(net, objective_and_gradient(net, LossKind::cas, 0.5, {&ex}).param_grads, cfg, state);
        }
        return net.params;
    };
    CHECK(run() == run());
}
