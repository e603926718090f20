#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cfn/rnn.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cfn;
using testutil::random_inputs;
using testutil::random_layer;
using testutil::random_network;

namespace {

bool bits_equal(const Vec& a, const Vec& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool bits_equal(const HiddenState& a, const HiddenState& b) {
    if (a.h.size() != b.h.size()) return false;
    for (size_t l = 0; l < a.h.size(); ++l)
        if (!bits_equal(a.h[l], b.h[l])) return false;
    return true;
}

}  // namespace

TEST_CASE("activation values") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(2.0) == doctest::Approx(0.8807970779778823).epsilon(1e-15));
    CHECK(sigmoid(-2.0) == doctest::Approx(1.0 - 0.8807970779778823).epsilon(1e-15));
    CHECK(tanh_act(0.75) == doctest::Approx(0.6351489523872873).epsilon(1e-15));
    // Saturation stays finite and inside the closed unit interval.
    CHECK(sigmoid(1e6) == 1.0);
    CHECK(sigmoid(-1e6) == 0.0);
    CHECK(tanh_act(1e6) == 1.0);
}

TEST_CASE("single unit state update matches the closed form") {
    LayerParams p;
    p.mode = Mode::CFN;
    p.n_h = 1;
    p.n_in = 1;
    p.W_f = Mat(1, 1);
    p.W_f(0, 0) = 1.0;
    p.W_i = Mat(1, 1);
    p.W_i(0, 0) = -1.0;
    p.W_c = Mat(1, 1);
    p.W_c(0, 0) = 2.0;
    p.R_f = Mat(1, 1);
    p.R_f(0, 0) = 2.0;
    p.R_i = Mat(1, 1);
    p.R_i(0, 0) = 1.0;
    p.b_f = {0.1};
    p.b_i = {0.0};
    p.b_c = {0.15};
    p.check();

    const Vec u = {0.3};
    const Vec h = {0.05};
    // Preactivations: f <- 1*0.3 + 2*0.05 + 0.1 = 0.5
    //                 i <- -0.3 + 0.05 = -0.25
    //                 c <- 0.6 + 0.15 = 0.75
    const GateActivations g = layer_gates(p, u, h);
    CHECK(g.f[0] == doctest::Approx(sigmoid(0.5)).epsilon(1e-15));
    CHECK(g.i[0] == doctest::Approx(sigmoid(-0.25)).epsilon(1e-15));
    CHECK(g.h_tilde[0] == doctest::Approx(std::tanh(0.75)).epsilon(1e-15));

    const Vec h_next = layer_step(p, h, u);
    const double expect = sigmoid(0.5) * std::tanh(0.05) + sigmoid(-0.25) * std::tanh(0.75);
    CHECK(h_next[0] == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("gate components stay strictly inside their open ranges") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        auto p = random_layer(rng, Mode::CFN, 4, 3);
        auto u = testutil::random_vec(rng, 3, 2.0);
        auto h = testutil::random_vec(rng, 4, 2.0);
        auto g = layer_gates(p, u, h);
        for (int r = 0; r < 4; ++r) {
            CHECK(g.f[r] > 0.0);
            CHECK(g.f[r] < 1.0);
            CHECK(g.i[r] > 0.0);
            CHECK(g.i[r] < 1.0);
            CHECK(g.h_tilde[r] > -1.0);
            CHECK(g.h_tilde[r] < 1.0);
        }
    }
}

TEST_CASE("two layer step uses the updated lower state within the step") {
    Rng rng(21);
    auto net = random_network(rng, Mode::CFN, 2, 1, {3, 2});
    auto h0 = default_initial_state(net);
    h0.h[0] = {0.4, -0.3, 0.1};
    h0.h[1] = {-0.2, 0.6};
    const Vec u = {0.7, -0.5};

    auto [h1, y] = network_step(net, h0, u);

    // Independent plain-loop evaluation of the same dynamics.
    auto step_layer = [](const LayerParams& p, const Vec& hin, const Vec& uin) {
        Vec out(p.n_h);
        for (int r = 0; r < p.n_h; ++r) {
            double af = p.b_f[r], ai = p.b_i[r], ac = p.b_c[r];
            for (int j = 0; j < p.n_in; ++j) {
                af += p.W_f(r, j) * uin[j];
                ai += p.W_i(r, j) * uin[j];
                ac += p.W_c(r, j) * uin[j];
            }
            for (int j = 0; j < p.n_h; ++j) {
                af += p.R_f(r, j) * hin[j];
                ai += p.R_i(r, j) * hin[j];
            }
            out[r] = sigmoid(af) * std::tanh(hin[r]) + sigmoid(ai) * std::tanh(ac);
        }
        return out;
    };

    const Vec h1_lo = step_layer(net.layers[0], h0.h[0], u);
    const Vec h1_hi_updated = step_layer(net.layers[1], h0.h[1], h1_lo);
    const Vec h1_hi_stale = step_layer(net.layers[1], h0.h[1], h0.h[0]);

    for (int r = 0; r < 3; ++r) CHECK(h1.h[0][r] == doctest::Approx(h1_lo[r]).epsilon(1e-14));
    for (int r = 0; r < 2; ++r)
        CHECK(h1.h[1][r] == doctest::Approx(h1_hi_updated[r]).epsilon(1e-14));
    // Feeding the pre-update state must give a different answer, otherwise
    // this test could not tell the two orderings apart.
    CHECK(std::abs(h1.h[1][0] - h1_hi_stale[0]) > 1e-9);

    double y0 = net.b_y[0];
    for (int j = 0; j < 2; ++j) y0 += net.W_y(0, j) * h1_hi_updated[j];
    CHECK(y[0] == doctest::Approx(y0).epsilon(1e-14));
}

TEST_CASE("output at step k reads the state after the update") {
    Rng rng(31);
    auto net = random_network(rng, Mode::CFN, 1, 1, {3});
    auto sim = simulate(net, default_initial_state(net), random_inputs(rng, 4, 1, 1.0));
    REQUIRE(sim.y_seq.size() == 4);
    REQUIRE(sim.h_traj.size() == 5);
    for (int k = 0; k < 4; ++k) {
        double y = net.b_y[0];
        for (int j = 0; j < 3; ++j) y += net.W_y(0, j) * sim.h_traj[k + 1].h[0][j];
        CHECK(sim.y_seq[k][0] == doctest::Approx(y).epsilon(1e-14));
    }
}

TEST_CASE("states never leave the invariant box") {
    Rng rng(41);
    for (int trial = 0; trial < 40; ++trial) {
        const Mode mode = (trial % 2 == 0) ? Mode::CFN : Mode::DGN;
        auto net = random_network(rng, mode, 2, 1, {4, 3}, {2.0, 2.0, 1.0});
        auto u = random_inputs(rng, 200, 2, 100.0);
        auto sim = simulate(net, default_initial_state(net), u);
        for (const auto& hs : sim.h_traj)
            for (const auto& hl : hs.h)
                for (double v : hl) {
                    CHECK(std::isfinite(v));
                    CHECK(std::abs(v) <= 2.0);
                }
    }
}

TEST_CASE("decoupled gates ignore the layer state") {
    Rng rng(51);
    auto p = random_layer(rng, Mode::DGN, 4, 3);
    auto u = testutil::random_vec(rng, 3, 1.0);
    auto ha = testutil::random_vec(rng, 4, 2.0);
    auto hb = testutil::random_vec(rng, 4, 2.0);
    auto ga = layer_gates(p, u, ha);
    auto gb = layer_gates(p, u, hb);
    CHECK(bits_equal(ga.f, gb.f));
    CHECK(bits_equal(ga.i, gb.i));
    CHECK(bits_equal(ga.h_tilde, gb.h_tilde));
    // The state update itself still depends on h.
    CHECK_FALSE(bits_equal(layer_step(p, ha, u), layer_step(p, hb, u)));
}

TEST_CASE("gated mode with zero recurrent weights matches decoupled mode") {
    Rng rng(61);
    auto dgn = random_network(rng, Mode::DGN, 2, 2, {3, 3});
    NetworkParams cfn_net = dgn;
    cfn_net.mode = Mode::CFN;
    for (auto& l : cfn_net.layers) l.mode = Mode::CFN;

    Rng rng2(62);
    auto u = random_inputs(rng2, 50, 2, 1.5);
    auto sa = simulate(dgn, default_initial_state(dgn), u);
    auto sb = simulate(cfn_net, default_initial_state(cfn_net), u);
    for (size_t k = 0; k < u.size(); ++k) CHECK(bits_equal(sa.y_seq[k], sb.y_seq[k]));
}

TEST_CASE("simulate composes: split rollout equals full rollout bit for bit") {
    Rng rng(71);
    auto net = random_network(rng, Mode::CFN, 2, 1, {4, 3});
    auto u = random_inputs(rng, 30, 2, 1.0);

    auto full = simulate(net, default_initial_state(net), u);

    std::vector<Vec> first(u.begin(), u.begin() + 13), rest(u.begin() + 13, u.end());
    auto a = simulate(net, default_initial_state(net), first);
    auto b = simulate(net, a.h_traj.back(), rest);

    for (int k = 0; k < 13; ++k) CHECK(bits_equal(full.y_seq[k], a.y_seq[k]));
    for (size_t k = 0; k < rest.size(); ++k) CHECK(bits_equal(full.y_seq[13 + k], b.y_seq[k]));
    CHECK(bits_equal(full.h_traj.back(), b.h_traj.back()));
}

TEST_CASE("simulate on an empty input sequence") {
    Rng rng(81);
    auto net = random_network(rng, Mode::CFN, 2, 1, {3});
    auto sim = simulate(net, default_initial_state(net), {});
    CHECK(sim.y_seq.empty());
    REQUIRE(sim.h_traj.size() == 1);
    CHECK(bits_equal(sim.h_traj[0], default_initial_state(net)));
}

TEST_CASE("repeated rollouts are bit identical") {
    Rng rng(91);
    auto net = random_network(rng, Mode::CFN, 3, 2, {5, 4, 3});
    auto u = random_inputs(rng, 64, 3, 2.0);
    auto s1 = simulate(net, default_initial_state(net), u);
    auto s2 = simulate(net, default_initial_state(net), u);
    for (size_t k = 0; k < u.size(); ++k) {
        CHECK(bits_equal(s1.y_seq[k], s2.y_seq[k]));
        CHECK(bits_equal(s1.h_traj[k + 1], s2.h_traj[k + 1]));
    }
}

TEST_CASE("validation rejects malformed parameters") {
    Rng rng(101);
    auto net = random_network(rng, Mode::CFN, 2, 1, {3, 2});

    SUBCASE("wrong input-weight shape") {
        auto bad = net;
        bad.layers[0].W_f = Mat(3, 5);
        CHECK_THROWS_AS(bad.check(), std::invalid_argument);
    }
    SUBCASE("layer chaining mismatch") {
        auto bad = net;
        bad.layers[1].n_in = 4;
        CHECK_THROWS_AS(bad.check(), std::invalid_argument);
    }
    SUBCASE("non-finite weight") {
        auto bad = net;
        bad.layers[0].W_c(0, 0) = std::nan("");
        CHECK_THROWS_AS(bad.check(), std::invalid_argument);
    }
    SUBCASE("nonzero recurrent weights in decoupled mode") {
        auto bad = random_network(rng, Mode::DGN, 2, 1, {3});
        bad.layers[0].R_f(0, 0) = 1e-9;
        CHECK_THROWS_AS(bad.check(), std::invalid_argument);
    }
    SUBCASE("state outside the invariant box") {
        auto h = default_initial_state(net);
        h.h[0][0] = 2.5;
        CHECK_THROWS_AS(network_step(net, h, Vec{0.0, 0.0}), std::invalid_argument);
    }
    SUBCASE("non-finite input") {
        CHECK_THROWS_AS(
            simulate(net, default_initial_state(net),
                     std::vector<Vec>{Vec{0.0, std::numeric_limits<double>::infinity()}}),
            std::invalid_argument);
    }
}

TEST_CASE("mode names round trip") {
    CHECK(to_string(Mode::CFN) == "cfn");
    CHECK(to_string(Mode::DGN) == "dgn");
    CHECK(mode_from_string("CFN") == Mode::CFN);
    CHECK(mode_from_string("dgn") == Mode::DGN);
    CHECK_THROWS_AS(mode_from_string("gru"), std::invalid_argument);
}
