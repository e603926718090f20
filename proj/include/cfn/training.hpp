#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cfn/dataset.hpp"
#include "cfn/linalg.hpp"
#include "cfn/rng.hpp"
#include "cfn/rnn.hpp"

// Training: exact reverse-mode gradients through the full unrolled dynamics
// (no truncation), bias-corrected Adam, and the optimization loop — epoch
// shuffling, mini-batches, input dropout during gradient computation only,
// per-epoch validation with best-parameter retention, and stepwise learning
// rate decay. The loss never contains a stability penalty; stability is
// handled by architecture choice, not by regularization.

namespace cfn {

struct TrainConfig {
    int epochs = 2000;
    double base_lr = 0.001;
    double lr_decay_factor = 0.9;
    int lr_decay_every = 200;  // epochs per decay step
    int batch_size = 25;
    double dropout_rate = 0.05;
    int washout = 25;  // steps excluded from the loss (state burn-in)
    uint64_t seed = 1;
    Mode mode = Mode::CFN;  // architecture being trained (used by CLI plumbing)
    int threads = 1;  // per-sequence passes may run in parallel; results identical

    void check() const;
};

// lr(e) = base_lr * factor^floor(e / every), epochs counted from 0.
double lr_at_epoch(const TrainConfig& cfg, int epoch);

// Uniform fan-in initialization: every weight matrix is drawn from
// U[-1/sqrt(fan_in), 1/sqrt(fan_in)] with fan_in = its own column count;
// all biases start at zero. Recurrent gate weights stay zero in DGN mode.
NetworkParams init_network(Mode mode, int n_u, int n_y, const std::vector<int>& hidden,
                           uint64_t seed);

// Trainable parameter blocks in a fixed order (per layer: W_f, W_i, W_c,
// R_f, R_i, b_f, b_i, b_c; then W_y, b_y). DGN mode omits R_f and R_i: they
// are structurally zero and never updated.
std::vector<Vec*> param_blocks(NetworkParams& net);
std::vector<const Vec*> param_blocks(const NetworkParams& net);

// Gradient (or moment) storage congruent with NetworkParams.
NetworkParams zeros_like(const NetworkParams& net);

// Keep-probability multipliers for every layer input, pre-sampled per
// (sequence, step, layer, component): 0 with probability rate, otherwise
// 1/(1 - rate) (inverted scaling keeps the conditional mean unchanged).
// An empty plan means no dropout.
struct DropoutPlan {
    double rate = 0.0;
    // mult[seq][step][layer] has the layer's input width.
    std::vector<std::vector<std::vector<Vec>>> mult;

    bool active() const { return !mult.empty(); }
};

DropoutPlan sample_dropout(Rng& rng, double rate, const NetworkParams& net,
                           const std::vector<const Sequence*>& batch);

// Mean over sequences of (1/(N - washout)) * sum_{k >= washout} ||y_k - y^_k||_2^2,
// simulated from the zero initial state. The optional plan applies dropout
// multipliers to every layer input (gradient-path evaluation); evaluation
// callers pass nullptr.
double mse_loss(const NetworkParams& net, const std::vector<const Sequence*>& batch,
                int washout, const DropoutPlan* plan = nullptr);

struct BpttResult {
    NetworkParams grads;  // d loss / d params, congruent with the network
    double loss = 0.0;
};

// Exact gradient of mse_loss via reverse sweep over the unrolled dynamics.
BpttResult bptt_gradients(const NetworkParams& net, const std::vector<const Sequence*>& batch,
                          int washout, const DropoutPlan* plan = nullptr, int threads = 1);

struct AdamState {
    NetworkParams m, v;  // first/second moment accumulators
    int64_t t = 0;       // completed steps
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double beta1_pow = 1.0, beta2_pow = 1.0;  // beta^t, maintained incrementally
};

AdamState make_adam_state(const NetworkParams& net);

// One bias-corrected step: p -= lr * m^ / (sqrt(v^) + eps).
void adam_step(AdamState& st, const NetworkParams& grads, double lr, NetworkParams& params);

struct TrainReport {
    struct EpochRow {
        int epoch = 0;
        double train_mse = 0.0;  // mean over the epoch's batch losses (with dropout)
        double val_mse = 0.0;
        double lr = 0.0;
    };
    std::vector<EpochRow> epochs;
    int best_epoch = -1;       // epoch of minimal validation MSE (earliest on ties)
    double best_val_mse = 0.0;
    double seconds_total = 0.0;  // wall clock; never serialized into artifacts
};

struct TrainResult {
    NetworkParams best_params;
    TrainReport report;
};

// Full optimization loop. `progress`, when set, is called after every epoch
// (for CLI logging); it must not mutate anything.
TrainResult train(const TrainConfig& cfg, const NetworkParams& init,
                  const std::vector<const Sequence*>& train_seqs,
                  const std::vector<const Sequence*>& val_seqs,
                  const std::function<void(const TrainReport::EpochRow&)>& progress = {});

// 100 * (1 - ||y_true - y_pred||_2 / ||y_true - mean(y_true)||_2) over
// indices >= skip, averaged across output channels. Constant y_true over the
// evaluated range is a hard error (the denominator vanishes).
double fit_metric(const Mat& y_true, const Mat& y_pred, int skip);

}  // namespace cfn
