#include "cfn/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "cfn/rng.hpp"

namespace cfn {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

void FourTankParams::check() const {
    const double areas[] = {A1, A2, A3, A4, a1, a2, a3, a4};
    for (double v : areas)
        require(std::isfinite(v) && v > 0.0, "tank parameters: areas must be positive");
    require(std::isfinite(g) && g > 0.0, "tank parameters: g must be positive");
    require(std::isfinite(k1) && k1 > 0.0 && std::isfinite(k2) && k2 > 0.0,
            "tank parameters: pump gains must be positive");
    require(gamma1 > 0.0 && gamma1 < 1.0 && gamma2 > 0.0 && gamma2 < 1.0,
            "tank parameters: valve splits must lie strictly inside (0, 1)");
    require(std::isfinite(overflow_level) && overflow_level > 0.0,
            "tank parameters: overflow level must be positive");
}

void FourTankParams::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f << "A1 = " << fmt_double(A1) << "\nA2 = " << fmt_double(A2) << "\nA3 = " << fmt_double(A3)
      << "\nA4 = " << fmt_double(A4) << "\na1 = " << fmt_double(a1)
      << "\na2 = " << fmt_double(a2) << "\na3 = " << fmt_double(a3)
      << "\na4 = " << fmt_double(a4) << "\ng = " << fmt_double(g)
      << "\nk1 = " << fmt_double(k1) << "\nk2 = " << fmt_double(k2)
      << "\ngamma1 = " << fmt_double(gamma1) << "\ngamma2 = " << fmt_double(gamma2)
      << "\noverflow_level = " << fmt_double(overflow_level) << "\n";
    if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

FourTankParams FourTankParams::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    FourTankParams p;
    std::map<std::string, double*> slot = {
        {"A1", &p.A1}, {"A2", &p.A2}, {"A3", &p.A3}, {"A4", &p.A4},
        {"a1", &p.a1}, {"a2", &p.a2}, {"a3", &p.a3}, {"a4", &p.a4},
        {"g", &p.g},   {"k1", &p.k1}, {"k2", &p.k2},
        {"gamma1", &p.gamma1}, {"gamma2", &p.gamma2}, {"overflow_level", &p.overflow_level}};
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string key, eq, value;
        std::istringstream ls(line);
        if (!(ls >> key)) continue;  // blank line
        const auto pos = key.find('=');
        if (pos != std::string::npos) {  // "key=value" without spaces
            value = key.substr(pos + 1);
            key.erase(pos);
            if (value.empty()) ls >> value;
        } else {
            ls >> eq >> value;
            if (eq != "=")
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": expected 'key = value'");
        }
        const auto it = slot.find(key);
        if (it == slot.end())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unknown key '" +
                                     key + "'");
        size_t used = 0;
        double parsed;
        try {
            parsed = std::stod(value, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != value.size() || value.empty())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad number '" +
                                     value + "'");
        *it->second = parsed;
    }
    p.check();
    return p;
}

FourTankPlant::FourTankPlant(FourTankParams params) : p_(params) { p_.check(); }

void FourTankPlant::derivative(const double* x, const double* u, double* dx) const {
    // Torricelli outflow; an empty (or transiently negative RK stage) level
    // produces no outflow, which keeps every stage finite.
    const auto outflow = [this](double a, double level) {
        return a * std::sqrt(2.0 * p_.g * std::max(level, 0.0));
    };
    const double q1 = p_.k1 * u[0];
    const double q2 = p_.k2 * u[1];
    dx[0] = (-outflow(p_.a1, x[0]) + outflow(p_.a3, x[2]) + p_.gamma1 * q1) / p_.A1;
    dx[1] = (-outflow(p_.a2, x[1]) + outflow(p_.a4, x[3]) + p_.gamma2 * q2) / p_.A2;
    dx[2] = (-outflow(p_.a3, x[2]) + (1.0 - p_.gamma2) * q2) / p_.A3;
    dx[3] = (-outflow(p_.a4, x[3]) + (1.0 - p_.gamma1) * q1) / p_.A4;
}

void FourTankPlant::output(const double* x, const double* u, double* y) const {
    (void)u;
    y[0] = x[0];
}

void FourTankPlant::clamp_state(double* x) const {
    for (int i = 0; i < 4; ++i) x[i] = std::max(x[i], 0.0);
}

Vec FourTankPlant::steady_state(double v1, double v2) const {
    require(std::isfinite(v1) && v1 >= 0.0 && std::isfinite(v2) && v2 >= 0.0,
            "steady state: pump voltages must be finite and non-negative");
    const double q1 = p_.k1 * v1;
    const double q2 = p_.k2 * v2;
    const double twog = 2.0 * p_.g;
    const auto level = [twog](double flow, double a) {
        const double s = flow / a;
        return s * s / twog;
    };
    Vec x(4);
    x[0] = level(p_.gamma1 * q1 + (1.0 - p_.gamma2) * q2, p_.a1);
    x[1] = level(p_.gamma2 * q2 + (1.0 - p_.gamma1) * q1, p_.a2);
    x[2] = level((1.0 - p_.gamma2) * q2, p_.a3);
    x[3] = level((1.0 - p_.gamma1) * q1, p_.a4);
    return x;
}

void MprsConfig::check() const {
    require(num_levels >= 1, "excitation: need at least one level");
    require(!level_range.empty(), "excitation: no input channels configured");
    for (const auto& [lo, hi] : level_range) {
        require(std::isfinite(lo) && std::isfinite(hi), "excitation: level range must be finite");
        require(hi >= lo, "excitation: level range upper bound below lower bound");
        if (num_levels > 1) require(hi > lo, "excitation: degenerate level range");
    }
    require(hold_min >= 1, "excitation: hold_min must be at least one step");
    require(hold_max >= hold_min, "excitation: hold_max below hold_min");
}

Mat mprs_generate(const MprsConfig& cfg, int length) {
    cfg.check();
    require(length >= 1, "excitation: length must be positive");
    const int nc = static_cast<int>(cfg.level_range.size());
    Mat u(length, nc);
    for (int c = 0; c < nc; ++c) {
        Rng rng(derive_seed(cfg.seed, static_cast<uint64_t>(c)));
        const auto [lo, hi] = cfg.level_range[c];
        int t = 0;
        while (t < length) {
            const int idx = static_cast<int>(rng.uniform_int(0, cfg.num_levels - 1));
            const double level =
                cfg.num_levels == 1 ? lo : lo + idx * (hi - lo) / (cfg.num_levels - 1);
            const int hold = static_cast<int>(rng.uniform_int(cfg.hold_min, cfg.hold_max));
            for (int j = 0; j < hold && t < length; ++j, ++t) u(t, c) = level;
        }
    }
    return u;
}

PlantTrajectory simulate_plant(const PlantModel& plant, const Vec& x0, const Mat& u_seq,
                               double dt) {
    const int nx = plant.state_dim();
    const int nu = plant.input_dim();
    const int ny = plant.output_dim();
    require(static_cast<int>(x0.size()) == nx, "simulate: initial state has wrong dimension");
    require(u_seq.cols == nu, "simulate: input has wrong channel count");
    require(u_seq.rows >= 1, "simulate: empty input sequence");
    require(std::isfinite(dt) && dt > 0.0, "simulate: step size must be positive");
    require(all_finite(x0) && all_finite(u_seq), "simulate: non-finite input data");

    const int T = u_seq.rows;
    PlantTrajectory out{Mat(T, nx), Mat(T, ny)};
    Vec x = x0;
    plant.clamp_state(x.data());
    Vec k1(nx), k2(nx), k3(nx), k4(nx), xs(nx);
    for (int k = 0; k < T; ++k) {
        const double* u = u_seq.row(k);
        std::copy(x.begin(), x.end(), out.x.row(k));
        plant.output(x.data(), u, out.y.row(k));

        // Classic fourth-order Runge-Kutta; the input is held over the step.
        plant.derivative(x.data(), u, k1.data());
        for (int i = 0; i < nx; ++i) xs[i] = x[i] + 0.5 * dt * k1[i];
        plant.derivative(xs.data(), u, k2.data());
        for (int i = 0; i < nx; ++i) xs[i] = x[i] + 0.5 * dt * k2[i];
        plant.derivative(xs.data(), u, k3.data());
        for (int i = 0; i < nx; ++i) xs[i] = x[i] + dt * k3[i];
        plant.derivative(xs.data(), u, k4.data());
        for (int i = 0; i < nx; ++i)
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        plant.clamp_state(x.data());
        if (!all_finite(x))
            throw std::runtime_error("plant state became non-finite at step " +
                                     std::to_string(k));
    }
    return out;
}

Mat add_output_noise(const Mat& y, double snr_power_ratio, uint64_t seed) {
    if (std::isinf(snr_power_ratio) && snr_power_ratio > 0.0) return y;
    require(std::isfinite(snr_power_ratio) && snr_power_ratio > 0.0,
            "noise: signal-to-noise ratio must be positive (or infinite to disable)");
    require(y.rows >= 1 && y.cols >= 1, "noise: empty signal");
    Mat out = y;
    Rng rng(seed);
    for (int c = 0; c < y.cols; ++c) {
        double mean = 0.0;
        for (int r = 0; r < y.rows; ++r) mean += y(r, c);
        mean /= y.rows;
        double power = 0.0;
        for (int r = 0; r < y.rows; ++r) {
            const double d = y(r, c) - mean;
            power += d * d;
        }
        power /= y.rows;
        const double sd = std::sqrt(power / snr_power_ratio);
        for (int r = 0; r < y.rows; ++r) out(r, c) += sd * rng.gaussian();
    }
    return out;
}

namespace {

void channel_extrema(const std::vector<const Sequence*>& seqs, bool input, int channel,
                     double* lo, double* hi) {
    *lo = std::numeric_limits<double>::infinity();
    *hi = -std::numeric_limits<double>::infinity();
    for (const Sequence* s : seqs) {
        const Mat& m = input ? s->u : s->y;
        for (int r = 0; r < m.rows; ++r) {
            const double v = m(r, channel);
            *lo = std::min(*lo, v);
            *hi = std::max(*hi, v);
        }
    }
}

void apply_norm(Mat& m, const Vec& lo, const Vec& hi) {
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) m(r, c) = normalize_value(m(r, c), lo[c], hi[c]);
}

}  // namespace

void normalize_dataset(SequenceDataset& ds, std::vector<std::string>* warnings) {
    const auto train = ds.by_split(Split::train);
    require(!train.empty(), "normalize: dataset has no training sequences");
    const int n_u = train[0]->u.cols;
    const int n_y = train[0]->y.cols;
    for (const auto& s : ds.sequences) {
        require(s.u.cols == n_u && s.y.cols == n_y,
                "normalize: inconsistent channel counts across sequences");
        require(all_finite(s.u) && all_finite(s.y), "normalize: non-finite data");
    }

    ds.norm.u_lo.assign(n_u, 0.0);
    ds.norm.u_hi.assign(n_u, 0.0);
    ds.norm.y_lo.assign(n_y, 0.0);
    ds.norm.y_hi.assign(n_y, 0.0);
    for (int c = 0; c < n_u; ++c) {
        channel_extrema(train, true, c, &ds.norm.u_lo[c], &ds.norm.u_hi[c]);
        require(ds.norm.u_hi[c] > ds.norm.u_lo[c],
                "normalize: input channel " + std::to_string(c) +
                    " is constant on the training split");
    }
    for (int c = 0; c < n_y; ++c) {
        channel_extrema(train, false, c, &ds.norm.y_lo[c], &ds.norm.y_hi[c]);
        require(ds.norm.y_hi[c] > ds.norm.y_lo[c],
                "normalize: output channel " + std::to_string(c) +
                    " is constant on the training split");
    }

    for (auto& s : ds.sequences) {
        apply_norm(s.u, ds.norm.u_lo, ds.norm.u_hi);
        apply_norm(s.y, ds.norm.y_lo, ds.norm.y_hi);
        if (!warnings) continue;
        // Non-train splits may exceed the train extrema; that is allowed but
        // worth surfacing.
        const auto report = [&](const Mat& m, const char* what) {
            for (int c = 0; c < m.cols; ++c) {
                double lo = 0.0, hi = 0.0;
                bool outside = false;
                for (int r = 0; r < m.rows; ++r) {
                    const double v = m(r, c);
                    if (v < -1.0 || v > 1.0) {
                        if (!outside) {
                            lo = hi = v;
                            outside = true;
                        }
                        lo = std::min(lo, v);
                        hi = std::max(hi, v);
                    }
                }
                if (outside)
                    warnings->push_back("sequence '" + s.id + "' " + what + " channel " +
                                        std::to_string(c) + " leaves [-1,1] (range " +
                                        fmt_double(lo) + " .. " + fmt_double(hi) + ")");
            }
        };
        if (s.split != Split::train) {
            report(s.u, "input");
            report(s.y, "output");
        }
    }
}

SequenceDataset window_and_split(const Mat& u, const Mat& y, int block_count,
                                 double train_fraction, int window, double overlap_fraction,
                                 uint64_t seed) {
    require(u.rows == y.rows, "windowing: input and output lengths differ");
    require(u.rows >= 1 && u.cols >= 1 && y.cols >= 1, "windowing: empty trajectory");
    require(block_count >= 1, "windowing: need at least one block");
    require(u.rows >= block_count, "windowing: more blocks than samples");
    require(train_fraction > 0.0 && train_fraction <= 1.0,
            "windowing: train fraction must lie in (0, 1]");
    require(window >= 1, "windowing: window must be positive");
    require(overlap_fraction >= 0.0 && overlap_fraction < 1.0,
            "windowing: overlap fraction must lie in [0, 1)");
    const int stride = static_cast<int>(std::lround(window * (1.0 - overlap_fraction)));
    require(stride >= 1, "windowing: overlap leaves a stride below one step");

    const int T = u.rows;
    const int base = T / block_count;
    const int rem = T % block_count;
    require(base >= window, "windowing: window longer than a block");

    // Random block assignment, then windows cut from maximal runs of
    // same-split blocks so no window straddles a split boundary.
    int n_train = static_cast<int>(std::lround(train_fraction * block_count));
    n_train = std::max(1, std::min(block_count, n_train));
    std::vector<int> order(block_count);
    for (int i = 0; i < block_count; ++i) order[i] = i;
    Rng rng(seed);
    for (int i = block_count - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.uniform_int(0, i));
        std::swap(order[i], order[j]);
    }
    std::vector<Split> split_of(block_count, Split::val);
    for (int i = 0; i < n_train; ++i) split_of[order[i]] = Split::train;

    std::vector<int> begin(block_count + 1, 0);
    for (int b = 0; b < block_count; ++b) begin[b + 1] = begin[b] + base + (b < rem ? 1 : 0);

    SequenceDataset ds;
    int counter[2] = {0, 0};  // train, val
    int b = 0;
    while (b < block_count) {
        int e = b + 1;
        while (e < block_count && split_of[e] == split_of[b]) ++e;
        const int run_begin = begin[b];
        const int run_end = begin[e];
        for (int start = run_begin; start + window <= run_end; start += stride) {
            Sequence s;
            s.split = split_of[b];
            const int si = s.split == Split::train ? 0 : 1;
            char idbuf[32];
            std::snprintf(idbuf, sizeof idbuf, "%s-%03d", to_string(s.split).c_str(),
                          counter[si]++);
            s.id = idbuf;
            s.u = Mat(window, u.cols);
            s.y = Mat(window, y.cols);
            for (int r = 0; r < window; ++r) {
                std::copy(u.row(start + r), u.row(start + r) + u.cols, s.u.row(r));
                std::copy(y.row(start + r), y.row(start + r) + y.cols, s.y.row(r));
            }
            ds.sequences.push_back(std::move(s));
        }
        b = e;
    }
    return ds;
}

PipelineSeeds pipeline_seeds(uint64_t master) {
    PipelineSeeds s;
    s.excitation_train = derive_seed(master, 0x1);
    s.noise_train = derive_seed(master, 0x2);
    s.excitation_test = derive_seed(master, 0x3);
    s.noise_test = derive_seed(master, 0x4);
    s.block_assignment = derive_seed(master, 0x5);
    return s;
}

SequenceDataset build_dataset(const PlantModel& plant, const PipelineConfig& cfg, uint64_t seed,
                              std::vector<std::string>* warnings) {
    require(cfg.train_steps >= 1, "pipeline: train trajectory length must be positive");
    require(cfg.test_steps >= 0, "pipeline: test trajectory length must be non-negative");
    require(static_cast<int>(cfg.mprs.level_range.size()) == plant.input_dim(),
            "pipeline: excitation channel count does not match the plant");
    require(static_cast<int>(cfg.x0.size()) == plant.state_dim(),
            "pipeline: initial state does not match the plant");

    // Every stage draws from its own derived stream; none may share.
    const PipelineSeeds seeds = pipeline_seeds(seed);
    MprsConfig mprs = cfg.mprs;
    mprs.seed = seeds.excitation_train;
    const Mat u_train = mprs_generate(mprs, cfg.train_steps);
    const PlantTrajectory traj = simulate_plant(plant, cfg.x0, u_train, cfg.dt);
    const Mat y_train = add_output_noise(traj.y, cfg.snr_power_ratio, seeds.noise_train);

    SequenceDataset ds = window_and_split(u_train, y_train, cfg.blocks, cfg.train_fraction,
                                          cfg.window, cfg.overlap_fraction,
                                          seeds.block_assignment);
    if (cfg.test_steps > 0) {
        mprs.seed = seeds.excitation_test;
        const Mat u_test = mprs_generate(mprs, cfg.test_steps);
        const PlantTrajectory test_traj = simulate_plant(plant, cfg.x0, u_test, cfg.dt);
        Sequence s;
        s.u = u_test;
        s.y = add_output_noise(test_traj.y, cfg.snr_power_ratio, seeds.noise_test);
        s.split = Split::test;
        s.id = "test-000";
        ds.sequences.push_back(std::move(s));
    }
    ds.sampling_time = cfg.dt;
    normalize_dataset(ds, warnings);
    return ds;
}

PipelineConfig fourtank_pipeline_defaults(const FourTankParams& params) {
    PipelineConfig cfg;
    cfg.mprs.num_levels = 5;
    cfg.mprs.level_range = {{2.0, 3.3}, {2.0, 3.3}};
    cfg.mprs.hold_min = 20;
    cfg.mprs.hold_max = 100;
    const FourTankPlant plant(params);
    cfg.x0 = plant.steady_state(2.65, 2.65);
    return cfg;
}

SequenceDataset build_fourtank_dataset(uint64_t seed, std::vector<std::string>* warnings) {
    const FourTankPlant plant;
    return build_dataset(plant, fourtank_pipeline_defaults(plant.params()), seed, warnings);
}

}  // namespace cfn
