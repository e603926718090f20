#include "cfn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "cfn/kernels.hpp"

namespace cfn {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(0..n-1), possibly on several threads. The caller must make the
// work items independent; any reduction happens afterwards in index order.
void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (int i = t; i < n; i += threads) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace

void TrainConfig::check() const {
    require(epochs >= 1, "config: epochs must be at least 1");
    require(base_lr > 0.0 && std::isfinite(base_lr), "config: base_lr must be positive");
    require(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0,
            "config: lr_decay_factor must lie in (0, 1]");
    require(lr_decay_every >= 1, "config: lr_decay_every must be at least 1");
    require(batch_size >= 1, "config: batch_size must be at least 1");
    require(dropout_rate >= 0.0 && dropout_rate < 1.0, "config: dropout_rate must lie in [0, 1)");
    require(washout >= 0, "config: washout must be non-negative");
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    return cfg.base_lr * std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_every);
}

NetworkParams init_network(Mode mode, int n_u, int n_y, const std::vector<int>& hidden,
                           uint64_t seed) {
    require(!hidden.empty(), "init_network: at least one hidden layer required");
    Rng rng(seed);
    auto fill = [&rng](Mat& m) {
        const double s = 1.0 / std::sqrt(static_cast<double>(m.cols));
        for (double& x : m.a) x = rng.uniform(-s, s);
    };
    NetworkParams net;
    net.mode = mode;
    net.n_u = n_u;
    net.n_y = n_y;
    int in = n_u;
    for (int n_h : hidden) {
        LayerParams p;
        p.mode = mode;
        p.n_h = n_h;
        p.n_in = in;
        p.W_f = Mat(n_h, in);
        p.W_i = Mat(n_h, in);
        p.W_c = Mat(n_h, in);
        p.R_f = Mat(n_h, n_h);
        p.R_i = Mat(n_h, n_h);
        fill(p.W_f);
        fill(p.W_i);
        fill(p.W_c);
        if (mode == Mode::CFN) {
            fill(p.R_f);
            fill(p.R_i);
        }
        p.b_f = Vec(n_h, 0.0);
        p.b_i = Vec(n_h, 0.0);
        p.b_c = Vec(n_h, 0.0);
        net.layers.push_back(std::move(p));
        in = n_h;
    }
    net.W_y = Mat(n_y, in);
    fill(net.W_y);
    net.b_y = Vec(n_y, 0.0);
    net.check();
    return net;
}

namespace {

template <class Net, class VecPtr>
std::vector<VecPtr> blocks_impl(Net& net) {
    std::vector<VecPtr> out;
    for (auto& l : net.layers) {
        out.push_back(&l.W_f.a);
        out.push_back(&l.W_i.a);
        out.push_back(&l.W_c.a);
        if (net.mode == Mode::CFN) {
            out.push_back(&l.R_f.a);
            out.push_back(&l.R_i.a);
        }
        out.push_back(&l.b_f);
        out.push_back(&l.b_i);
        out.push_back(&l.b_c);
    }
    out.push_back(&net.W_y.a);
    out.push_back(&net.b_y);
    return out;
}

}  // namespace

std::vector<Vec*> param_blocks(NetworkParams& net) { return blocks_impl<NetworkParams, Vec*>(net); }

std::vector<const Vec*> param_blocks(const NetworkParams& net) {
    return blocks_impl<const NetworkParams, const Vec*>(net);
}

NetworkParams zeros_like(const NetworkParams& net) {
    NetworkParams z = net;
    for (auto& l : z.layers) {
        std::fill(l.W_f.a.begin(), l.W_f.a.end(), 0.0);
        std::fill(l.W_i.a.begin(), l.W_i.a.end(), 0.0);
        std::fill(l.W_c.a.begin(), l.W_c.a.end(), 0.0);
        std::fill(l.R_f.a.begin(), l.R_f.a.end(), 0.0);
        std::fill(l.R_i.a.begin(), l.R_i.a.end(), 0.0);
        std::fill(l.b_f.begin(), l.b_f.end(), 0.0);
        std::fill(l.b_i.begin(), l.b_i.end(), 0.0);
        std::fill(l.b_c.begin(), l.b_c.end(), 0.0);
    }
    std::fill(z.W_y.a.begin(), z.W_y.a.end(), 0.0);
    std::fill(z.b_y.begin(), z.b_y.end(), 0.0);
    return z;
}

DropoutPlan sample_dropout(Rng& rng, double rate, const NetworkParams& net,
                           const std::vector<const Sequence*>& batch) {
    require(rate >= 0.0 && rate < 1.0, "sample_dropout: rate must lie in [0, 1)");
    DropoutPlan plan;
    plan.rate = rate;
    if (rate == 0.0) return plan;  // inactive
    const double keep_scale = 1.0 / (1.0 - rate);
    plan.mult.resize(batch.size());
    for (size_t s = 0; s < batch.size(); ++s) {
        const int N = batch[s]->length();
        plan.mult[s].resize(N);
        for (int k = 0; k < N; ++k) {
            plan.mult[s][k].resize(net.layers.size());
            for (size_t l = 0; l < net.layers.size(); ++l) {
                Vec& m = plan.mult[s][k][l];
                m.resize(net.layers[l].n_in);
                for (double& x : m) x = rng.uniform() < rate ? 0.0 : keep_scale;
            }
        }
    }
    return plan;
}

namespace {

// Per-sequence forward caches for the reverse sweep. Index order: [step][layer].
struct ForwardTape {
    std::vector<std::vector<Vec>> ut;  // layer inputs after dropout
    std::vector<std::vector<Vec>> f, i, c;  // gate activations
    std::vector<std::vector<Vec>> p;        // tanh of the pre-update state
    std::vector<std::vector<Vec>> h;        // states, [step 0..N][layer]
    std::vector<Vec> err;                   // y^_k - y_k for k >= washout, else empty
};

// Rolls one sequence forward from the zero state, returning its loss term.
// `mult` is this sequence's dropout multipliers or nullptr; `tape` may be
// nullptr when only the loss is needed.
double forward_one(const NetworkParams& net, const Sequence& seq,
                   const std::vector<std::vector<Vec>>* mult, int washout, ForwardTape* tape) {
    const auto& ops = kern::active();
    const int N = seq.length();
    const int L = net.depth();
    const int n_y = net.n_y;

    if (tape) {
        tape->ut.assign(N, std::vector<Vec>(L));
        tape->f.assign(N, std::vector<Vec>(L));
        tape->i.assign(N, std::vector<Vec>(L));
        tape->c.assign(N, std::vector<Vec>(L));
        tape->p.assign(N, std::vector<Vec>(L));
        tape->h.assign(N + 1, std::vector<Vec>(L));
        tape->err.assign(N, Vec());
        for (int l = 0; l < L; ++l) tape->h[0][l] = Vec(net.layers[l].n_h, 0.0);
    }

    std::vector<Vec> h(L);
    for (int l = 0; l < L; ++l) h[l] = Vec(net.layers[l].n_h, 0.0);

    int max_h = 0;
    for (const auto& l : net.layers) max_h = std::max(max_h, l.n_h);
    Vec fb(max_h), ib(max_h), cb(max_h), pb(max_h), ut_buf, yhat(n_y);

    const double inv_terms = 1.0 / static_cast<double>(N - washout);
    double loss = 0.0;

    for (int k = 0; k < N; ++k) {
        const double* feed = seq.u.row(k);
        int feed_n = net.n_u;
        for (int l = 0; l < L; ++l) {
            const LayerParams& lay = net.layers[l];
            const double* ut = feed;
            if (mult) {
                ut_buf.resize(feed_n);
                const Vec& m = (*mult)[k][l];
                for (int j = 0; j < feed_n; ++j) ut_buf[j] = feed[j] * m[j];
                ut = ut_buf.data();
            }
            detail::compute_gates(lay, ut, h[l].data(), fb.data(), ib.data(), cb.data());
            for (int r = 0; r < lay.n_h; ++r) pb[r] = tanh_act(h[l][r]);
            if (tape) {
                tape->ut[k][l].assign(ut, ut + feed_n);
                tape->f[k][l].assign(fb.begin(), fb.begin() + lay.n_h);
                tape->i[k][l].assign(ib.begin(), ib.begin() + lay.n_h);
                tape->c[k][l].assign(cb.begin(), cb.begin() + lay.n_h);
                tape->p[k][l].assign(pb.begin(), pb.begin() + lay.n_h);
            }
            ops.hadamard2(fb.data(), pb.data(), ib.data(), cb.data(), h[l].data(), lay.n_h);
            if (tape) tape->h[k + 1][l] = h[l];
            feed = h[l].data();
            feed_n = lay.n_h;
        }
        ops.gemv(net.W_y.a.data(), h[L - 1].data(), yhat.data(), n_y, net.layers[L - 1].n_h);
        ops.add_acc(net.b_y.data(), yhat.data(), n_y);
        if (k >= washout) {
            double sq = 0.0;
            for (int j = 0; j < n_y; ++j) {
                const double e = yhat[j] - seq.y(k, j);
                sq += e * e;
                if (tape) {
                    if (tape->err[k].empty()) tape->err[k].resize(n_y);
                    tape->err[k][j] = e;
                }
            }
            loss += sq;
        }
    }
    return loss * inv_terms;
}

// Reverse sweep over one sequence's tape; accumulates into `g` (pre-zeroed
// or shared across sequences of the same batch slot).
void backward_one(const NetworkParams& net, const Sequence& seq,
                  const std::vector<std::vector<Vec>>* mult, int washout,
                  const ForwardTape& tape, NetworkParams& g) {
    const auto& ops = kern::active();
    const int N = seq.length();
    const int L = net.depth();
    const int n_y = net.n_y;
    const double out_scale = 2.0 / static_cast<double>(N - washout);
    const bool gated = net.mode == Mode::CFN;

    int max_h = 0, max_in = net.n_u;
    for (const auto& l : net.layers) {
        max_h = std::max(max_h, l.n_h);
        max_in = std::max(max_in, l.n_in);
    }

    // g_time[l]: loss gradient in h_{k+1}^{(l)} through steps > k.
    // g_casc[l]: gradient arriving from layer l+1 within the current step.
    std::vector<Vec> g_time(L), g_casc(L);
    for (int l = 0; l < L; ++l) {
        g_time[l] = Vec(net.layers[l].n_h, 0.0);
        g_casc[l] = Vec(net.layers[l].n_h, 0.0);
    }
    Vec g_hp(max_h), g_af(max_h), g_ai(max_h), g_ac(max_h), g_ut(max_in), gy(n_y);

    for (int k = N - 1; k >= 0; --k) {
        for (int l = 0; l < L; ++l) std::fill(g_casc[l].begin(), g_casc[l].end(), 0.0);

        if (k >= washout) {
            for (int j = 0; j < n_y; ++j) gy[j] = out_scale * tape.err[k][j];
            ops.ger_acc(g.W_y.a.data(), gy.data(), tape.h[k + 1][L - 1].data(), n_y,
                        net.layers[L - 1].n_h);
            ops.add_acc(gy.data(), g.b_y.data(), n_y);
            ops.gemv_t_acc(net.W_y.a.data(), gy.data(), g_casc[L - 1].data(), n_y,
                           net.layers[L - 1].n_h);
        }

        for (int l = L - 1; l >= 0; --l) {
            const LayerParams& lay = net.layers[l];
            LayerParams& gl = g.layers[l];
            const int n = lay.n_h;
            const Vec& f = tape.f[k][l];
            const Vec& i = tape.i[k][l];
            const Vec& c = tape.c[k][l];
            const Vec& p = tape.p[k][l];
            const Vec& ut = tape.ut[k][l];

            // Total gradient in the updated state h_{k+1}^{(l)}.
            for (int r = 0; r < n; ++r) g_hp[r] = g_time[l][r] + g_casc[l][r];

            // Through h' = f.p + i.c and the gate nonlinearities.
            for (int r = 0; r < n; ++r) {
                g_af[r] = g_hp[r] * p[r] * f[r] * (1.0 - f[r]);
                g_ai[r] = g_hp[r] * c[r] * i[r] * (1.0 - i[r]);
                g_ac[r] = g_hp[r] * i[r] * (1.0 - c[r] * c[r]);
            }

            ops.ger_acc(gl.W_f.a.data(), g_af.data(), ut.data(), n, lay.n_in);
            ops.ger_acc(gl.W_i.a.data(), g_ai.data(), ut.data(), n, lay.n_in);
            ops.ger_acc(gl.W_c.a.data(), g_ac.data(), ut.data(), n, lay.n_in);
            ops.add_acc(g_af.data(), gl.b_f.data(), n);
            ops.add_acc(g_ai.data(), gl.b_i.data(), n);
            ops.add_acc(g_ac.data(), gl.b_c.data(), n);

            const Vec& h_prev = tape.h[k][l];
            if (gated) {
                ops.ger_acc(gl.R_f.a.data(), g_af.data(), h_prev.data(), n, n);
                ops.ger_acc(gl.R_i.a.data(), g_ai.data(), h_prev.data(), n, n);
            }

            // Gradient in the layer input (pre-activation paths of all gates).
            std::fill(g_ut.begin(), g_ut.begin() + lay.n_in, 0.0);
            ops.gemv_t_acc(lay.W_f.a.data(), g_af.data(), g_ut.data(), n, lay.n_in);
            ops.gemv_t_acc(lay.W_i.a.data(), g_ai.data(), g_ut.data(), n, lay.n_in);
            ops.gemv_t_acc(lay.W_c.a.data(), g_ac.data(), g_ut.data(), n, lay.n_in);

            // Gradient in the pre-update state: decay path plus gate paths.
            for (int r = 0; r < n; ++r)
                g_time[l][r] = g_hp[r] * f[r] * (1.0 - p[r] * p[r]);
            if (gated) {
                ops.gemv_t_acc(lay.R_f.a.data(), g_af.data(), g_time[l].data(), n, n);
                ops.gemv_t_acc(lay.R_i.a.data(), g_ai.data(), g_time[l].data(), n, n);
            }

            if (l > 0) {
                // The layer input was (dropout of) the lower layer's updated
                // state at this same step.
                if (mult) {
                    const Vec& m = (*mult)[k][l];
                    for (int j = 0; j < lay.n_in; ++j) g_casc[l - 1][j] += g_ut[j] * m[j];
                } else {
                    ops.add_acc(g_ut.data(), g_casc[l - 1].data(), lay.n_in);
                }
            }
        }
    }
    (void)seq;
}

}  // namespace

double mse_loss(const NetworkParams& net, const std::vector<const Sequence*>& batch, int washout,
                const DropoutPlan* plan) {
    net.check();
    require(!batch.empty(), "mse_loss: empty batch");
    if (plan && plan->active())
        require(plan->mult.size() == batch.size(), "mse_loss: dropout plan size mismatch");
    double total = 0.0;
    for (size_t s = 0; s < batch.size(); ++s) {
        const Sequence& seq = *batch[s];
        require(seq.length() > washout,
                "mse_loss: sequence '" + seq.id + "' is not longer than the washout");
        require(seq.u.cols == net.n_u && seq.y.cols == net.n_y,
                "mse_loss: sequence '" + seq.id + "' does not match the network dimensions");
        const auto* mult = (plan && plan->active()) ? &plan->mult[s] : nullptr;
        total += forward_one(net, seq, mult, washout, nullptr);
    }
    return total / static_cast<double>(batch.size());
}

BpttResult bptt_gradients(const NetworkParams& net, const std::vector<const Sequence*>& batch,
                          int washout, const DropoutPlan* plan, int threads) {
    net.check();
    require(!batch.empty(), "bptt_gradients: empty batch");
    if (plan && plan->active())
        require(plan->mult.size() == batch.size(), "bptt_gradients: dropout plan size mismatch");
    for (const Sequence* seq : batch) {
        require(seq->length() > washout,
                "bptt_gradients: sequence '" + seq->id + "' is not longer than the washout");
        require(seq->u.cols == net.n_u && seq->y.cols == net.n_y,
                "bptt_gradients: sequence '" + seq->id + "' does not match the network dimensions");
    }

    const int B = static_cast<int>(batch.size());
    std::vector<NetworkParams> slot_grads;
    slot_grads.reserve(B);
    for (int s = 0; s < B; ++s) slot_grads.push_back(zeros_like(net));
    std::vector<double> slot_loss(B, 0.0);

    parallel_for(B, resolve_threads(threads), [&](int s) {
        const auto* mult = (plan && plan->active()) ? &plan->mult[s] : nullptr;
        ForwardTape tape;
        slot_loss[s] = forward_one(net, *batch[s], mult, washout, &tape);
        backward_one(net, *batch[s], mult, washout, tape, slot_grads[s]);
    });

    // Fixed-order reduction: slot 0 accumulates 1..B-1, then scales by 1/B.
    // Identical regardless of thread count.
    BpttResult out;
    out.grads = std::move(slot_grads[0]);
    auto dst = param_blocks(out.grads);
    const auto& ops = kern::active();
    for (int s = 1; s < B; ++s) {
        auto src = param_blocks(slot_grads[s]);
        for (size_t b = 0; b < dst.size(); ++b)
            ops.add_acc(src[b]->data(), dst[b]->data(), static_cast<int>(dst[b]->size()));
    }
    const double inv_b = 1.0 / static_cast<double>(B);
    for (auto* blk : dst) ops.scale(blk->data(), inv_b, static_cast<int>(blk->size()));
    for (int s = 0; s < B; ++s) out.loss += slot_loss[s];
    out.loss /= static_cast<double>(B);  // same rounding as mse_loss
    return out;
}

AdamState make_adam_state(const NetworkParams& net) {
    AdamState st;
    st.m = zeros_like(net);
    st.v = zeros_like(net);
    return st;
}

void adam_step(AdamState& st, const NetworkParams& grads, double lr, NetworkParams& params) {
    st.t += 1;
    // Running beta powers keep the bias correction exact and cheap.
    st.beta1_pow *= st.beta1;
    st.beta2_pow *= st.beta2;
    const double bc1 = 1.0 - st.beta1_pow;
    const double bc2 = 1.0 - st.beta2_pow;

    auto p = param_blocks(params);
    auto m = param_blocks(st.m);
    auto v = param_blocks(st.v);
    auto g = param_blocks(grads);
    require(p.size() == g.size() && p.size() == m.size() && p.size() == v.size(),
            "adam_step: incongruent parameter blocks");
    const auto& ops = kern::active();
    for (size_t b = 0; b < p.size(); ++b) {
        require(p[b]->size() == g[b]->size(), "adam_step: block size mismatch");
        ops.adam_update(p[b]->data(), m[b]->data(), v[b]->data(), g[b]->data(),
                        static_cast<int>(p[b]->size()), lr, st.beta1, st.beta2, st.eps, bc1, bc2);
    }
}

TrainResult train(const TrainConfig& cfg, const NetworkParams& init,
                  const std::vector<const Sequence*>& train_seqs,
                  const std::vector<const Sequence*>& val_seqs,
                  const std::function<void(const TrainReport::EpochRow&)>& progress) {
    cfg.check();
    init.check();
    require(!train_seqs.empty(), "train: empty training split");
    require(!val_seqs.empty(), "train: empty validation split");

    const auto t_start = std::chrono::steady_clock::now();
    NetworkParams params = init;
    AdamState adam = make_adam_state(params);

    TrainResult result;
    result.best_params = params;
    result.report.best_epoch = -1;
    result.report.best_val_mse = 0.0;

    const int n_train = static_cast<int>(train_seqs.size());
    std::vector<int> order(n_train);
    for (int i = 0; i < n_train; ++i) order[i] = i;

    Rng shuffle_rng(derive_seed(cfg.seed, 0x5u));
    Rng dropout_rng(derive_seed(cfg.seed, 0x6u));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at_epoch(cfg, epoch);

        // Fisher-Yates shuffle, without replacement within the epoch.
        for (int i = n_train - 1; i >= 1; --i) {
            const int j = static_cast<int>(shuffle_rng.uniform_int(0, i));
            std::swap(order[i], order[j]);
        }

        double epoch_loss = 0.0;
        for (int start = 0; start < n_train; start += cfg.batch_size) {
            const int end = std::min(start + cfg.batch_size, n_train);
            std::vector<const Sequence*> batch;
            batch.reserve(end - start);
            for (int i = start; i < end; ++i) batch.push_back(train_seqs[order[i]]);

            const DropoutPlan plan = sample_dropout(dropout_rng, cfg.dropout_rate, params, batch);
            BpttResult bp = bptt_gradients(params, batch, cfg.washout, &plan, cfg.threads);
            if (!std::isfinite(bp.loss)) {
                std::ostringstream msg;
                msg << "training diverged: non-finite loss at epoch " << epoch
                    << " (learning rate " << lr
                    << "); lower base_lr or shorten lr_decay_every and retry";
                throw std::runtime_error(msg.str());
            }
            epoch_loss += bp.loss * static_cast<double>(batch.size());
            adam_step(adam, bp.grads, lr, params);
        }

        TrainReport::EpochRow row;
        row.epoch = epoch;
        row.train_mse = epoch_loss / static_cast<double>(n_train);
        row.val_mse = mse_loss(params, val_seqs, cfg.washout, nullptr);
        row.lr = lr;
        if (!std::isfinite(row.val_mse)) {
            std::ostringstream msg;
            msg << "training diverged: non-finite validation loss at epoch " << epoch
                << " (learning rate " << lr << "); lower base_lr and retry";
            throw std::runtime_error(msg.str());
        }
        result.report.epochs.push_back(row);

        // Strict improvement only: ties keep the earlier epoch.
        if (result.report.best_epoch < 0 || row.val_mse < result.report.best_val_mse) {
            result.report.best_epoch = epoch;
            result.report.best_val_mse = row.val_mse;
            result.best_params = params;
        }
        if (progress) progress(row);
    }

    result.report.seconds_total =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

double fit_metric(const Mat& y_true, const Mat& y_pred, int skip) {
    require(y_true.rows == y_pred.rows && y_true.cols == y_pred.cols,
            "fit_metric: shape mismatch between prediction and truth");
    require(skip >= 0, "fit_metric: skip must be non-negative");
    const int n = y_true.rows - skip;
    require(n >= 2, "fit_metric: need at least two evaluated samples after skip");

    double fit_sum = 0.0;
    for (int j = 0; j < y_true.cols; ++j) {
        double mean = 0.0;
        for (int k = skip; k < y_true.rows; ++k) mean += y_true(k, j);
        mean /= static_cast<double>(n);
        double num = 0.0, den = 0.0;
        for (int k = skip; k < y_true.rows; ++k) {
            const double e = y_true(k, j) - y_pred(k, j);
            const double d = y_true(k, j) - mean;
            num += e * e;
            den += d * d;
        }
        if (den == 0.0)
            throw std::invalid_argument(
                "fit_metric: output channel " + std::to_string(j) +
                " is constant over the evaluated range; the metric is undefined");
        fit_sum += 100.0 * (1.0 - std::sqrt(num) / std::sqrt(den));
    }
    return fit_sum / static_cast<double>(y_true.cols);
}

}  // namespace cfn
