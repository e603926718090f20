#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cfn/linalg.hpp"
#include "cfn/rnn.hpp"

// Analytic stability certificates for the layer cascade.
//
// Per layer, with the induced infinity norm (max absolute row sum):
//
//   sigma_bar_f  = sigmoid( max-row-sum of [2 W_f | 2 R_f | b_f] )
//   phi_bar_h~   = tanh( max-row-sum of [2 W_c | b_c] )
//   rho          = sigma_bar_f + 1/4 ||R_f|| + 1/4 ||R_i|| phi_bar_h~
//   Gamma_u~     = ||W_c|| + 1/4 ||W_f|| + 1/4 ||W_i|| phi_bar_h~
//
// These certify the one-step contraction on the invariant box:
//
//   ||h'a - h'b||_inf  <=  rho ||ha - hb||_inf + Gamma_u~ ||u~a - u~b||_inf
//
// which holds unconditionally; rho < 1 (strict) additionally gives
// incremental input-to-state stability of the layer. Stacking layers yields
// the non-negative lower-triangular recursion
//
//   eta_{k+1} <= A_delta eta_k + B_delta_u ||u_k^a - u_k^b||_inf
//
// over the vector eta of per-layer state-difference norms; the network is
// certified when A_delta is Schur (equivalently: every layer's rho < 1).

namespace cfn {

struct LayerCertificate {
    double sigma_bar_f = 0.0;   // sup of the forget gate over the domain, in (0,1)
    double phi_bar_htilde = 0.0;  // sup of |candidate| over the domain, in [0,1)
    double rho = 0.0;           // contraction coefficient in the layer state
    double gamma_input = 0.0;   // sensitivity coefficient in the layer input
    bool delta_iss_holds = false;  // rho < 1, strict
    bool marginal = false;         // |rho - 1| < 1e-9: numerically borderline
};

// Coefficients of the unconditional per-layer trajectory bound
//   ||h_k|| <= beta_base^k ||h_0|| + gamma_u_coeff * max_z ||u~_z||
//                                  + gamma_b_coeff * ||b_c||.
struct IssGains {
    double beta_base = 0.0;
    double gamma_u_coeff = 0.0;
    double gamma_b_coeff = 0.0;
};

struct NetworkCertificate {
    std::vector<LayerCertificate> per_layer;
    std::vector<IssGains> iss_gains;
    Mat a_delta;    // L x L, non-negative, lower triangular, diag = per-layer rho
    Vec b_delta_u;  // L, non-negative
    bool schur_stable = false;  // all per-layer rho < 1
    // ||(I - A_delta)^{-1} B_delta_u||_inf; empty when not schur_stable.
    std::optional<double> delta_iss_input_gain;

    int depth() const { return static_cast<int>(per_layer.size()); }
};

double sigma_bar_f(const LayerParams& p);
double phi_bar_htilde(const LayerParams& p);
double rho(const LayerParams& p);
double gamma_input(const LayerParams& p);
IssGains iss_gains(const LayerParams& p);
LayerCertificate layer_certificate(const LayerParams& p);

// (A_delta, B_delta_u) of the cascade recursion. Row 1 is (rho_1, 0, ..., 0)
// with input coefficient Gamma_1; row l folds the layer-l contraction over
// row l-1: row_l = Gamma_l * row_{l-1} + rho_l * e_l, B[l] = Gamma_l * B[l-1].
std::pair<Mat, Vec> cascade_matrices(const NetworkParams& net);

NetworkCertificate network_certificate(const NetworkParams& net);

// Worst-case ||eta_k||_inf after k steps of the bound recursion from
// eta_0 = h0_diff_norms (one entry per layer) with the per-step input
// difference held at max_input_diff. Throws std::domain_error when the
// certificate is not Schur stable, std::invalid_argument on bad arguments.
double divergence_bound(const NetworkCertificate& cert, const Vec& h0_diff_norms,
                        double max_input_diff, int64_t k);

enum class DivergenceVerdict {
    bound_satisfied,  // certified, empirical difference within the bound everywhere
    bound_violated,   // certified, yet some step exceeded the bound
    not_certified,    // no claim made; trace still reports the recursion values
};

std::string to_string(DivergenceVerdict v);

// Step-indexed record of an empirical trajectory-pair comparison. All three
// arrays have length N+1 (steps 0..N); input_diff[N] is 0 by convention
// since no input is consumed after the last step.
struct DivergenceTrace {
    std::vector<double> state_diff;  // ||h_k^a - h_k^b||_inf over the full stacked state
    std::vector<double> bound;       // recursion value at step k (valid upper bound always)
    std::vector<double> input_diff;  // ||u_k^a - u_k^b||_inf
    DivergenceVerdict verdict = DivergenceVerdict::not_certified;
    int64_t violating_step = -1;  // first step with state_diff > bound, or -1
};

// Simulates both trajectories and compares their divergence against the
// propagated certificate bound. Inputs must lie in [-1,1]^n_u; anything
// outside violates the input-boundedness assumption and is a hard error.
DivergenceTrace empirical_delta_iss_check(const NetworkParams& net, const HiddenState& h0_a,
                                          const HiddenState& h0_b,
                                          const std::vector<Vec>& u_seq_a,
                                          const std::vector<Vec>& u_seq_b);

}  // namespace cfn
