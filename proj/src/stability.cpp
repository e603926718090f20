#include "cfn/stability.hpp"

#include <cmath>
#include <stdexcept>

namespace cfn {

namespace {

double abs_row_sum(const Mat& m, int r) {
    double s = 0.0;
    for (int c = 0; c < m.cols; ++c) s += std::fabs(m(r, c));
    return s;
}

}  // namespace

double sigma_bar_f(const LayerParams& p) {
    // Max row sum of [2 W_f | 2 R_f | b_f]; the gate preactivation cannot
    // exceed it anywhere on the domain |u~| <= 2, |h| <= 2.
    double best = 0.0;
    for (int r = 0; r < p.n_h; ++r) {
        const double s = 2.0 * abs_row_sum(p.W_f, r) + 2.0 * abs_row_sum(p.R_f, r) +
                         std::fabs(p.b_f[r]);
        if (s > best) best = s;
    }
    return sigmoid(best);
}

double phi_bar_htilde(const LayerParams& p) {
    double best = 0.0;
    for (int r = 0; r < p.n_h; ++r) {
        const double s = 2.0 * abs_row_sum(p.W_c, r) + std::fabs(p.b_c[r]);
        if (s > best) best = s;
    }
    return std::tanh(best);
}

double rho(const LayerParams& p) {
    return sigma_bar_f(p) + 0.25 * inf_norm(p.R_f) + 0.25 * inf_norm(p.R_i) * phi_bar_htilde(p);
}

double gamma_input(const LayerParams& p) {
    return inf_norm(p.W_c) + 0.25 * inf_norm(p.W_f) + 0.25 * inf_norm(p.W_i) * phi_bar_htilde(p);
}

IssGains iss_gains(const LayerParams& p) {
    IssGains g;
    g.beta_base = sigma_bar_f(p);
    g.gamma_u_coeff = inf_norm(p.W_c) / (1.0 - g.beta_base);
    g.gamma_b_coeff = 1.0 / (1.0 - g.beta_base);
    return g;
}

LayerCertificate layer_certificate(const LayerParams& p) {
    LayerCertificate c;
    c.sigma_bar_f = sigma_bar_f(p);
    c.phi_bar_htilde = phi_bar_htilde(p);
    c.rho = rho(p);
    c.gamma_input = gamma_input(p);
    c.delta_iss_holds = c.rho < 1.0;
    c.marginal = std::fabs(c.rho - 1.0) < 1e-9;
    return c;
}

std::pair<Mat, Vec> cascade_matrices(const NetworkParams& net) {
    const int L = net.depth();
    if (L < 1) throw std::invalid_argument("cascade_matrices: network has no layers");
    Mat A(L, L);
    Vec B(L, 0.0);
    for (int l = 0; l < L; ++l) {
        const double rl = rho(net.layers[l]);
        const double gl = gamma_input(net.layers[l]);
        if (l == 0) {
            A(0, 0) = rl;
            B[0] = gl;
        } else {
            // Substituting the lower layer's bound into this layer's
            // contraction scales the previous row and input coefficient by
            // Gamma_l and adds the diagonal rho_l.
            for (int j = 0; j < l; ++j) A(l, j) = gl * A(l - 1, j);
            A(l, l) = rl;
            B[l] = gl * B[l - 1];
        }
    }
    return {std::move(A), std::move(B)};
}

NetworkCertificate network_certificate(const NetworkParams& net) {
    net.check();
    NetworkCertificate cert;
    cert.per_layer.reserve(net.layers.size());
    cert.iss_gains.reserve(net.layers.size());
    for (const auto& l : net.layers) {
        cert.per_layer.push_back(layer_certificate(l));
        cert.iss_gains.push_back(iss_gains(l));
    }
    auto ab = cascade_matrices(net);
    cert.a_delta = std::move(ab.first);
    cert.b_delta_u = std::move(ab.second);

    cert.schur_stable = true;
    for (const auto& lc : cert.per_layer) cert.schur_stable = cert.schur_stable && lc.delta_iss_holds;

    if (cert.schur_stable) {
        // (I - A) x = B by forward substitution; A is lower triangular with
        // diagonal rho_l < 1, so the system is nonsingular and x >= 0.
        const int L = cert.depth();
        Vec x(L, 0.0);
        for (int l = 0; l < L; ++l) {
            double s = cert.b_delta_u[l];
            for (int j = 0; j < l; ++j) s += cert.a_delta(l, j) * x[j];
            x[l] = s / (1.0 - cert.per_layer[l].rho);
        }
        cert.delta_iss_input_gain = inf_norm(x);
    }
    return cert;
}

namespace {

// One step of the bound recursion: eta <- A eta + B * d.
void bound_step(const Mat& A, const Vec& B, double d, const Vec& eta, Vec& out) {
    const int L = A.rows;
    for (int l = 0; l < L; ++l) {
        double s = B[l] * d;
        for (int j = 0; j <= l; ++j) s += A(l, j) * eta[j];
        out[l] = s;
    }
}

}  // namespace

double divergence_bound(const NetworkCertificate& cert, const Vec& h0_diff_norms,
                        double max_input_diff, int64_t k) {
    if (!cert.schur_stable)
        throw std::domain_error(
            "divergence_bound: certificate does not establish contraction "
            "(some layer has rho >= 1), no decay bound is claimed");
    const int L = cert.depth();
    if (static_cast<int>(h0_diff_norms.size()) != L)
        throw std::invalid_argument("divergence_bound: h0_diff_norms must have one entry per layer");
    for (double v : h0_diff_norms)
        if (!(v >= 0.0))
            throw std::invalid_argument("divergence_bound: difference norms must be non-negative");
    if (!(max_input_diff >= 0.0))
        throw std::invalid_argument("divergence_bound: max_input_diff must be non-negative");
    if (k < 0) throw std::invalid_argument("divergence_bound: k must be non-negative");

    Vec eta = h0_diff_norms, next(L);
    for (int64_t j = 0; j < k; ++j) {
        bound_step(cert.a_delta, cert.b_delta_u, max_input_diff, eta, next);
        eta.swap(next);
    }
    return inf_norm(eta);
}

std::string to_string(DivergenceVerdict v) {
    switch (v) {
        case DivergenceVerdict::bound_satisfied: return "bound satisfied";
        case DivergenceVerdict::bound_violated: return "bound violated";
        case DivergenceVerdict::not_certified: return "not certified";
    }
    return "unknown";
}

DivergenceTrace empirical_delta_iss_check(const NetworkParams& net, const HiddenState& h0_a,
                                          const HiddenState& h0_b,
                                          const std::vector<Vec>& u_seq_a,
                                          const std::vector<Vec>& u_seq_b) {
    if (u_seq_a.size() != u_seq_b.size())
        throw std::invalid_argument("empirical_delta_iss_check: input sequences differ in length");
    for (const auto* seq : {&u_seq_a, &u_seq_b})
        for (const Vec& u : *seq)
            for (double v : u)
                if (!(std::fabs(v) <= 1.0))
                    throw std::invalid_argument(
                        "empirical_delta_iss_check: input outside [-1,1] violates the "
                        "input-boundedness assumption the certificate relies on");

    const NetworkCertificate cert = network_certificate(net);
    const auto sim_a = simulate(net, h0_a, u_seq_a);
    const auto sim_b = simulate(net, h0_b, u_seq_b);

    const size_t N = u_seq_a.size();
    const int L = net.depth();
    DivergenceTrace tr;
    tr.state_diff.resize(N + 1);
    tr.bound.resize(N + 1);
    tr.input_diff.resize(N + 1);

    // Per-layer difference norms drive the recursion; the reported scalar is
    // the max over layers (the stacked-state infinity norm).
    Vec eta(L), next(L);
    for (int l = 0; l < L; ++l) eta[l] = inf_norm_diff(h0_a.h[l], h0_b.h[l]);

    tr.verdict = cert.schur_stable ? DivergenceVerdict::bound_satisfied
                                   : DivergenceVerdict::not_certified;

    for (size_t k = 0; k <= N; ++k) {
        double sd = 0.0;
        for (int l = 0; l < L; ++l) {
            const double d = inf_norm_diff(sim_a.h_traj[k].h[l], sim_b.h_traj[k].h[l]);
            if (d > sd) sd = d;
        }
        tr.state_diff[k] = sd;
        tr.bound[k] = inf_norm(eta);
        tr.input_diff[k] = k < N ? inf_norm_diff(u_seq_a[k], u_seq_b[k]) : 0.0;

        if (cert.schur_stable && sd > tr.bound[k] && tr.violating_step < 0) {
            tr.verdict = DivergenceVerdict::bound_violated;
            tr.violating_step = static_cast<int64_t>(k);
        }
        if (k < N) {
            bound_step(cert.a_delta, cert.b_delta_u, tr.input_diff[k], eta, next);
            eta.swap(next);
        }
    }
    return tr;
}

}  // namespace cfn
