#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "cfn/linalg.hpp"

// Chaos-free network (CFN) and decoupled-gate network (DGN) dynamics.
//
// A network is a stack of gated layers. Per layer, with input u~ and state h:
//
//   f  = sigmoid(W_f u~ + R_f h + b_f)        forget gate
//   i  = sigmoid(W_i u~ + R_i h + b_i)        input gate
//   c  = tanh(W_c u~ + b_c)                   candidate state (stateless)
//   h' = f . tanh(h) + i . c
//
// Layer 1 consumes the external input; layer l >= 2 consumes the *updated*
// state h' of layer l-1 within the same step. The output reads the updated
// top-layer state: y = W_y h'^(L) + b_y.
//
// The DGN is the CFN with R_f = R_i = 0, which makes the gates independent
// of the layer state. States live in the forward invariant box [-2, 2]^n_h.

namespace cfn {

enum class Mode { CFN, DGN };

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& s);  // accepts "cfn" / "dgn" (any case)

struct LayerParams {
    Mode mode = Mode::CFN;
    int n_h = 0;   // hidden units
    int n_in = 0;  // layer input width (n_u for layer 1, previous n_h otherwise)
    Mat W_f, W_i, W_c;  // n_h x n_in
    Mat R_f, R_i;       // n_h x n_h; identically zero in DGN mode
    Vec b_f, b_i, b_c;  // n_h

    // Throws std::invalid_argument on inconsistent dimensions, non-finite
    // entries, or nonzero recurrent gate weights in DGN mode.
    void check() const;
};

struct NetworkParams {
    Mode mode = Mode::CFN;
    int n_u = 0;
    int n_y = 0;
    std::vector<LayerParams> layers;
    Mat W_y;  // n_y x layers.back().n_h
    Vec b_y;  // n_y

    int depth() const { return static_cast<int>(layers.size()); }
    int total_hidden() const;
    void check() const;
};

struct HiddenState {
    std::vector<Vec> h;  // one vector per layer
};

// Diagnostic view of one layer's gate evaluations.
struct GateActivations {
    Vec f;        // components in (0,1)
    Vec i;        // components in (0,1)
    Vec h_tilde;  // components in (-1,1)
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double tanh_act(double x) { return std::tanh(x); }

GateActivations layer_gates(const LayerParams& p, const Vec& u_tilde, const Vec& h);

// One state update h -> f . tanh(h) + i . c. Output components lie in (-2, 2).
Vec layer_step(const LayerParams& p, const Vec& h, const Vec& u_tilde);

// One full network step: within-step layer cascade plus the output map.
std::pair<HiddenState, Vec> network_step(const NetworkParams& net, const HiddenState& h_all,
                                         const Vec& u);

struct SimResult {
    std::vector<Vec> y_seq;            // one output per input step
    std::vector<HiddenState> h_traj;   // h0 plus every successor (length N+1)
};

// Pure, deterministic rollout from h0 (which must lie in [-2,2]^n_h).
SimResult simulate(const NetworkParams& net, const HiddenState& h0,
                   const std::vector<Vec>& u_seq);

// The zero state, inside the invariant set.
HiddenState default_initial_state(const NetworkParams& net);

namespace detail {
// Unchecked gate kernel shared by the public API, simulate() and training.
// In DGN mode the recurrent products are skipped entirely (the weights are
// structurally zero). Buffers must have size p.n_h.
void compute_gates(const LayerParams& p, const double* u_tilde, const double* h,
                   double* f, double* i, double* c);
}  // namespace detail

}  // namespace cfn
