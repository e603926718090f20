#include "cfn/rnn.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include "cfn/kernels.hpp"

namespace cfn {

std::string to_string(Mode mode) { return mode == Mode::CFN ? "cfn" : "dgn"; }

Mode mode_from_string(const std::string& s) {
    std::string t(s);
    std::transform(t.begin(), t.end(), t.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (t == "cfn") return Mode::CFN;
    if (t == "dgn") return Mode::DGN;
    throw std::invalid_argument("unknown mode '" + s + "' (expected cfn or dgn)");
}

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

bool is_zero(const Mat& m) {
    return std::all_of(m.a.begin(), m.a.end(), [](double v) { return v == 0.0; });
}

}  // namespace

void LayerParams::check() const {
    require(n_h > 0, "layer: n_h must be positive");
    require(n_in > 0, "layer: n_in must be positive");
    auto dims = [&](const Mat& m, int r, int c, const char* name) {
        require(m.rows == r && m.cols == c, std::string("layer: bad shape for ") + name);
        require(all_finite(m), std::string("layer: non-finite entries in ") + name);
    };
    dims(W_f, n_h, n_in, "W_f");
    dims(W_i, n_h, n_in, "W_i");
    dims(W_c, n_h, n_in, "W_c");
    dims(R_f, n_h, n_h, "R_f");
    dims(R_i, n_h, n_h, "R_i");
    auto vdims = [&](const Vec& v, const char* name) {
        require(static_cast<int>(v.size()) == n_h, std::string("layer: bad size for ") + name);
        require(all_finite(v), std::string("layer: non-finite entries in ") + name);
    };
    vdims(b_f, "b_f");
    vdims(b_i, "b_i");
    vdims(b_c, "b_c");
    if (mode == Mode::DGN) {
        require(is_zero(R_f) && is_zero(R_i),
                "layer: decoupled-gate mode requires zero recurrent gate weights");
    }
}

int NetworkParams::total_hidden() const {
    int n = 0;
    for (const auto& l : layers) n += l.n_h;
    return n;
}

void NetworkParams::check() const {
    require(n_u > 0, "network: n_u must be positive");
    require(n_y > 0, "network: n_y must be positive");
    require(!layers.empty(), "network: at least one layer required");
    int expect_in = n_u;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        require(layers[l].mode == mode, "network: layer mode mismatch");
        require(layers[l].n_in == expect_in, "network: layer input width mismatch");
        layers[l].check();
        expect_in = layers[l].n_h;
    }
    require(W_y.rows == n_y && W_y.cols == layers.back().n_h, "network: bad shape for W_y");
    require(all_finite(W_y), "network: non-finite entries in W_y");
    require(static_cast<int>(b_y.size()) == n_y, "network: bad size for b_y");
    require(all_finite(b_y), "network: non-finite entries in b_y");
}

namespace detail {

void compute_gates(const LayerParams& p, const double* u_tilde, const double* h,
                   double* f, double* i, double* c) {
    const auto& ops = kern::active();
    const int n = p.n_h;
    ops.gemv(p.W_f.a.data(), u_tilde, f, n, p.n_in);
    ops.gemv(p.W_i.a.data(), u_tilde, i, n, p.n_in);
    ops.gemv(p.W_c.a.data(), u_tilde, c, n, p.n_in);
    if (p.mode == Mode::CFN) {
        ops.gemv_acc(p.R_f.a.data(), h, f, n, n);
        ops.gemv_acc(p.R_i.a.data(), h, i, n, n);
    }
    // Activations stay scalar libm in every backend so results are
    // backend-independent bit for bit.
    for (int r = 0; r < n; ++r) {
        f[r] = sigmoid(f[r] + p.b_f[r]);
        i[r] = sigmoid(i[r] + p.b_i[r]);
        c[r] = tanh_act(c[r] + p.b_c[r]);
    }
}

}  // namespace detail

GateActivations layer_gates(const LayerParams& p, const Vec& u_tilde, const Vec& h) {
    require(static_cast<int>(u_tilde.size()) == p.n_in, "layer_gates: input size mismatch");
    require(static_cast<int>(h.size()) == p.n_h, "layer_gates: state size mismatch");
    GateActivations g;
    g.f.resize(p.n_h);
    g.i.resize(p.n_h);
    g.h_tilde.resize(p.n_h);
    detail::compute_gates(p, u_tilde.data(), h.data(), g.f.data(), g.i.data(), g.h_tilde.data());
    return g;
}

Vec layer_step(const LayerParams& p, const Vec& h, const Vec& u_tilde) {
    GateActivations g = layer_gates(p, u_tilde, h);
    Vec ph(p.n_h);
    for (int r = 0; r < p.n_h; ++r) ph[r] = tanh_act(h[r]);
    Vec h_next(p.n_h);
    kern::active().hadamard2(g.f.data(), ph.data(), g.i.data(), g.h_tilde.data(), h_next.data(),
                             p.n_h);
    return h_next;
}

namespace {

void check_state(const NetworkParams& net, const HiddenState& h_all, const char* who) {
    require(h_all.h.size() == net.layers.size(),
            std::string(who) + ": state layer count mismatch");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        require(static_cast<int>(h_all.h[l].size()) == net.layers[l].n_h,
                std::string(who) + ": state size mismatch");
        for (double v : h_all.h[l])
            require(std::isfinite(v) && std::abs(v) <= 2.0,
                    std::string(who) + ": state outside the invariant box [-2, 2]");
    }
}

Vec read_output(const NetworkParams& net, const Vec& h_top) {
    Vec y(net.n_y);
    kern::active().gemv(net.W_y.a.data(), h_top.data(), y.data(), net.n_y,
                        net.layers.back().n_h);
    kern::active().add_acc(net.b_y.data(), y.data(), net.n_y);
    return y;
}

}  // namespace

std::pair<HiddenState, Vec> network_step(const NetworkParams& net, const HiddenState& h_all,
                                         const Vec& u) {
    net.check();
    check_state(net, h_all, "network_step");
    require(static_cast<int>(u.size()) == net.n_u, "network_step: input size mismatch");
    require(all_finite(u), "network_step: non-finite input");

    HiddenState next;
    next.h.resize(net.layers.size());
    const Vec* feed = &u;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        next.h[l] = layer_step(net.layers[l], h_all.h[l], *feed);
        feed = &next.h[l];  // within-step cascade: layer l+1 sees the updated state
    }
    return {std::move(next), read_output(net, next.h.back())};
}

SimResult simulate(const NetworkParams& net, const HiddenState& h0,
                   const std::vector<Vec>& u_seq) {
    net.check();
    check_state(net, h0, "simulate");
    for (const Vec& u : u_seq) {
        require(static_cast<int>(u.size()) == net.n_u, "simulate: input size mismatch");
        require(all_finite(u), "simulate: non-finite input");
    }

    const auto& ops = kern::active();
    const std::size_t L = net.layers.size();
    SimResult out;
    out.y_seq.reserve(u_seq.size());
    out.h_traj.reserve(u_seq.size() + 1);
    out.h_traj.push_back(h0);

    // Scratch buffers sized for the widest layer.
    int max_h = 0;
    for (const auto& l : net.layers) max_h = std::max(max_h, l.n_h);
    Vec f(max_h), gi(max_h), c(max_h), ph(max_h);

    HiddenState cur = h0;
    HiddenState nxt = h0;
    for (const Vec& u : u_seq) {
        const double* feed = u.data();
        for (std::size_t l = 0; l < L; ++l) {
            const LayerParams& p = net.layers[l];
            detail::compute_gates(p, feed, cur.h[l].data(), f.data(), gi.data(), c.data());
            for (int r = 0; r < p.n_h; ++r) ph[r] = tanh_act(cur.h[l][r]);
            ops.hadamard2(f.data(), ph.data(), gi.data(), c.data(), nxt.h[l].data(), p.n_h);
            feed = nxt.h[l].data();
        }
        out.y_seq.push_back(read_output(net, nxt.h.back()));
        std::swap(cur, nxt);
        out.h_traj.push_back(cur);
    }
    return out;
}

HiddenState default_initial_state(const NetworkParams& net) {
    HiddenState s;
    s.h.reserve(net.layers.size());
    for (const auto& l : net.layers) s.h.emplace_back(l.n_h, 0.0);
    return s;
}

}  // namespace cfn
