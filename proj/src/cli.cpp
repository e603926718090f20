#include "cfn/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <functional>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cfn/bench.hpp"
#include "cfn/io.hpp"
#include "cfn/rng.hpp"
#include "cfn/stability.hpp"

namespace fs = std::filesystem;

namespace cfn {

namespace {

// Uniform exception-to-exit-code mapping for every subcommand body.
int guarded(std::ostream& err, const std::function<int()>& body) {
    try {
        return body();
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    }
}

std::string fmt6(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::vector<Vec> mat_rows(const Mat& m) {
    std::vector<Vec> rows(m.rows);
    for (int r = 0; r < m.rows; ++r) rows[r].assign(m.row(r), m.row(r) + m.cols);
    return rows;
}

void require_dir(const std::string& dir, const char* what) {
    if (!fs::is_directory(dir))
        throw IoError(std::string(what) + " directory '" + dir + "' does not exist");
}

}  // namespace

int cmd_gen_data(const GenDataArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() {
        if (args.preset != "fourtank")
            throw std::invalid_argument("unknown preset '" + args.preset +
                                        "' (available: fourtank)");
        require_dir(args.out_dir, "output");

        FourTankParams params;
        if (!args.plant_config.empty()) {
            try {
                params = FourTankParams::load(args.plant_config);
            } catch (const std::invalid_argument&) {
                throw;
            } catch (const std::runtime_error& e) {
                throw IoError(e.what());
            }
        }
        const FourTankPlant plant(params);
        const PipelineConfig cfg = fourtank_pipeline_defaults(params);
        std::vector<std::string> warnings;
        const SequenceDataset ds = build_dataset(plant, cfg, args.seed, &warnings);
        for (const auto& w : warnings) err << "note: " << w << '\n';

        const std::vector<ChannelMeta> u_meta = {{"pump1", "V"}, {"pump2", "V"}};
        const std::vector<ChannelMeta> y_meta = {{"tank1_level", "cm"}};
        const fs::path base(args.out_dir);
        save_dataset_split(ds, Split::train, (base / "train.tsv").string(), u_meta, y_meta);
        save_dataset_split(ds, Split::val, (base / "val.tsv").string(), u_meta, y_meta);
        save_dataset_split(ds, Split::test, (base / "test.tsv").string(), u_meta, y_meta);

        const PipelineSeeds seeds = pipeline_seeds(args.seed);
        nlohmann::json j;
        j["format"] = "cfnid-manifest";
        j["version"] = 1;
        j["preset"] = args.preset;
        j["seed"] = args.seed;
        j["seeds"] = {{"excitation_train", seeds.excitation_train},
                      {"noise_train", seeds.noise_train},
                      {"excitation_test", seeds.excitation_test},
                      {"noise_test", seeds.noise_test},
                      {"block_assignment", seeds.block_assignment}};
        j["pipeline"] = {{"train_steps", cfg.train_steps},
                         {"test_steps", cfg.test_steps},
                         {"dt", cfg.dt},
                         {"blocks", cfg.blocks},
                         {"train_fraction", cfg.train_fraction},
                         {"window", cfg.window},
                         {"overlap", cfg.overlap_fraction},
                         {"snr", cfg.snr_power_ratio},
                         {"x0", cfg.x0},
                         {"mprs",
                          {{"levels", cfg.mprs.num_levels},
                           {"hold_min", cfg.mprs.hold_min},
                           {"hold_max", cfg.mprs.hold_max},
                           {"range",
                            {{cfg.mprs.level_range[0].first, cfg.mprs.level_range[0].second},
                             {cfg.mprs.level_range[1].first,
                              cfg.mprs.level_range[1].second}}}}}};
        j["plant"] = {{"A1", params.A1},         {"A2", params.A2},
                      {"A3", params.A3},         {"A4", params.A4},
                      {"a1", params.a1},         {"a2", params.a2},
                      {"a3", params.a3},         {"a4", params.a4},
                      {"g", params.g},           {"k1", params.k1},
                      {"k2", params.k2},         {"gamma1", params.gamma1},
                      {"gamma2", params.gamma2}, {"overflow_level", params.overflow_level}};
        j["splits"] = {{"train", ds.by_split(Split::train).size()},
                       {"val", ds.by_split(Split::val).size()},
                       {"test", ds.by_split(Split::test).size()}};
        j["normalization"] = {{"u_lo", ds.norm.u_lo},
                              {"u_hi", ds.norm.u_hi},
                              {"y_lo", ds.norm.y_lo},
                              {"y_hi", ds.norm.y_hi}};
        j["files"] = {{"train", "train.tsv"}, {"val", "val.tsv"}, {"test", "test.tsv"}};
        j["warnings"] = warnings;
        {
            std::ofstream mf(base / "manifest.json", std::ios::binary);
            if (!mf) throw IoError("cannot open manifest.json for writing");
            mf << j.dump(2) << '\n';
            if (!mf) throw IoError("write to manifest.json failed");
        }

        out << "wrote " << ds.by_split(Split::train).size() << " train / "
            << ds.by_split(Split::val).size() << " val / " << ds.by_split(Split::test).size()
            << " test sequences to " << args.out_dir << '\n';
        return kExitOk;
    });
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() {
        TrainConfig cfg = args.cfg;
        cfg.mode = mode_from_string(args.mode);
        cfg.check();

        std::vector<int> hidden = args.hidden;
        if (hidden.empty()) throw std::invalid_argument("--hidden is required");
        if (args.layers > 0) {
            if (hidden.size() == 1) hidden.assign(args.layers, hidden[0]);
            if (static_cast<int>(hidden.size()) != args.layers)
                throw std::invalid_argument("--layers disagrees with the --hidden list");
        }
        for (int h : hidden)
            if (h < 1) throw std::invalid_argument("hidden sizes must be positive");

        const SequenceDataset ds = load_dataset_dir(args.data_dir);
        const auto train_seqs = ds.by_split(Split::train);
        const auto val_seqs = ds.by_split(Split::val);
        if (train_seqs.empty()) throw std::invalid_argument("dataset has no training sequences");
        if (val_seqs.empty())
            throw std::invalid_argument("dataset has no validation sequences (required for "
                                        "early stopping)");
        const int n_u = train_seqs[0]->u.cols;
        const int n_y = train_seqs[0]->y.cols;

        const NetworkParams init = init_network(cfg.mode, n_u, n_y, hidden, cfg.seed);
        out << "training " << to_string(cfg.mode) << " with " << hidden.size()
            << " layer(s), inputs " << n_u << ", outputs " << n_y << ", "
            << train_seqs.size() << " train / " << val_seqs.size() << " val sequences\n";

        const auto progress = [&](const TrainReport::EpochRow& row) {
            if (args.log_every <= 0) return;
            if (row.epoch % args.log_every != 0 && row.epoch != cfg.epochs - 1) return;
            out << "epoch " << row.epoch << "  train " << fmt6(row.train_mse) << "  val "
                << fmt6(row.val_mse) << "  lr " << fmt6(row.lr) << '\n';
        };
        const TrainResult result = train(cfg, init, train_seqs, val_seqs, progress);

        Model m;
        m.net = result.best_params;
        m.norm = ds.norm;
        m.sampling_time = ds.sampling_time;
        m.prov.seed = cfg.seed;
        m.prov.config_digest = config_digest(cfg.mode, hidden, cfg);
        m.prov.best_epoch = result.report.best_epoch;
        m.prov.washout = cfg.washout;
        save_model(m, args.out_model);
        const std::string report_path =
            args.report_path.empty() ? args.out_model + ".report.tsv" : args.report_path;
        save_train_report(result.report, report_path);

        out << "best epoch " << result.report.best_epoch << '\n';
        out << "final validation MSE " << format_g17(result.report.best_val_mse) << '\n';
        out << "model written to " << args.out_model << '\n';
        return kExitOk;
    });
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() {
        const Model m = load_model(args.model_path);
        const SequenceDataset ds = load_dataset_dir(args.data_dir);
        const auto test_seqs = ds.by_split(Split::test);
        if (test_seqs.empty()) throw std::invalid_argument("dataset has no test sequences");
        if (!args.trace_dir.empty()) require_dir(args.trace_dir, "trace output");

        if (!m.norm.u_lo.empty() &&
            (m.norm.u_lo != ds.norm.u_lo || m.norm.u_hi != ds.norm.u_hi ||
             m.norm.y_lo != ds.norm.y_lo || m.norm.y_hi != ds.norm.y_hi))
            err << "note: model normalization scales differ from the dataset's\n";

        double fit_full_sum = 0.0, fit_wash_sum = 0.0;
        for (const Sequence* s : test_seqs) {
            if (s->u.cols != m.net.n_u || s->y.cols != m.net.n_y)
                throw std::invalid_argument("sequence '" + s->id +
                                            "' dimensions do not match the model");
            const SimResult sim =
                simulate(m.net, default_initial_state(m.net), mat_rows(s->u));
            Mat y_pred(s->length(), m.net.n_y);
            for (int r = 0; r < s->length(); ++r)
                for (int c = 0; c < m.net.n_y; ++c) y_pred(r, c) = sim.y_seq[r][c];

            const double fit_full = fit_metric(s->y, y_pred, 0);
            const int skip = std::min(m.prov.washout, s->length() - 2);
            const double fit_wash = skip > 0 ? fit_metric(s->y, y_pred, skip) : fit_full;
            fit_full_sum += fit_full;
            fit_wash_sum += fit_wash;
            out << s->id << "  FIT " << fmt6(fit_full) << "%  FIT[skip " << std::max(skip, 0)
                << "] " << fmt6(fit_wash) << "%\n";

            if (args.trace_dir.empty()) continue;
            std::ostringstream os;
            os << "# cfnid-trace 1\n";
            os << "# sequence " << s->id << '\n';
            os << "# sampling_time " << format_g17(ds.sampling_time) << '\n';
            os << "# columns time";
            for (int c = 0; c < m.net.n_y; ++c) os << " y" << c << "_true y" << c << "_pred";
            os << '\n';
            for (int r = 0; r < s->length(); ++r) {
                os << format_g17(r * ds.sampling_time);
                for (int c = 0; c < m.net.n_y; ++c) {
                    const double lo = ds.norm.y_lo[c], hi = ds.norm.y_hi[c];
                    os << '\t' << format_g17(denormalize_value(s->y(r, c), lo, hi)) << '\t'
                       << format_g17(denormalize_value(y_pred(r, c), lo, hi));
                }
                os << '\n';
            }
            const fs::path p = fs::path(args.trace_dir) / ("trace_" + s->id + ".tsv");
            std::ofstream f(p, std::ios::binary);
            if (!f) throw IoError("cannot open '" + p.string() + "' for writing");
            f << os.str();
            if (!f) throw IoError("write to '" + p.string() + "' failed");
        }

        const double n = static_cast<double>(test_seqs.size());
        const double headline = (args.skip_washout ? fit_wash_sum : fit_full_sum) / n;
        out << "FIT " << fmt6(headline) << "%"
            << (args.skip_washout ? " (washout skipped)" : "") << '\n';
        return kExitOk;
    });
}

int cmd_certify(const CertifyArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() {
        const Model m = load_model(args.model_path);
        const NetworkCertificate cert = network_certificate(m.net);
        out << render_certificate_human(cert, m.net.mode);
        if (!args.report_path.empty()) {
            std::ofstream f(args.report_path, std::ios::binary);
            if (!f) throw IoError("cannot open '" + args.report_path + "' for writing");
            f << render_certificate_machine(cert);
            if (!f) throw IoError("write to '" + args.report_path + "' failed");
        }
        return cert.schur_stable ? kExitOk : kExitNotCertified;
    });
}

int cmd_diverge(const DivergeArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() {
        if (args.trials < 1) throw std::invalid_argument("--trials must be positive");
        if (args.horizon < 0) throw std::invalid_argument("--horizon must be non-negative");
        const Model m = load_model(args.model_path);
        if (!args.trace_dir.empty()) require_dir(args.trace_dir, "trace output");
        const NetworkCertificate cert = network_certificate(m.net);
        out << "certificate: "
            << (cert.schur_stable ? "delta-ISS certified"
                                  : "not certified (sufficient condition fails)")
            << '\n';

        int violations = 0;
        double max_util = 0.0;
        int util_trial = -1;
        int64_t util_step = -1;
        for (int trial = 0; trial < args.trials; ++trial) {
            Rng rng(derive_seed(args.seed, static_cast<uint64_t>(trial)));
            const auto random_state = [&]() {
                HiddenState h;
                for (const auto& l : m.net.layers) {
                    Vec v(l.n_h);
                    for (double& x : v) x = rng.uniform(-2.0, 2.0);
                    h.h.push_back(std::move(v));
                }
                return h;
            };
            const HiddenState h0_a = random_state();
            const HiddenState h0_b = random_state();
            const auto random_inputs = [&]() {
                std::vector<Vec> u(args.horizon, Vec(m.net.n_u));
                for (auto& row : u)
                    for (double& x : row) x = rng.uniform(-1.0, 1.0);
                return u;
            };
            const std::vector<Vec> u_a = random_inputs();
            const std::vector<Vec> u_b = random_inputs();

            const DivergenceTrace trace = empirical_delta_iss_check(m.net, h0_a, h0_b, u_a, u_b);
            if (trace.verdict == DivergenceVerdict::bound_violated) {
                ++violations;
                err << "trial " << trial << ": bound violated at step "
                    << trace.violating_step << '\n';
            }
            for (size_t k = 0; k < trace.bound.size(); ++k) {
                if (trace.bound[k] <= 0.0) continue;
                const double util = trace.state_diff[k] / trace.bound[k];
                if (util > max_util) {
                    max_util = util;
                    util_trial = trial;
                    util_step = static_cast<int64_t>(k);
                }
            }

            if (args.trace_dir.empty()) continue;
            std::ostringstream os;
            os << "# cfnid-divergence 1\n";
            os << "# trial " << trial << '\n';
            os << "# verdict " << to_string(trace.verdict) << '\n';
            os << "# columns step state_diff bound input_diff\n";
            for (size_t k = 0; k < trace.state_diff.size(); ++k)
                os << k << '\t' << format_g17(trace.state_diff[k]) << '\t'
                   << format_g17(trace.bound[k]) << '\t' << format_g17(trace.input_diff[k])
                   << '\n';
            char name[48];
            std::snprintf(name, sizeof name, "diverge_trial-%03d.tsv", trial);
            const fs::path p = fs::path(args.trace_dir) / name;
            std::ofstream f(p, std::ios::binary);
            if (!f) throw IoError("cannot open '" + p.string() + "' for writing");
            f << os.str();
            if (!f) throw IoError("write to '" + p.string() + "' failed");
        }

        out << "trials " << args.trials << ", horizon " << args.horizon << '\n';
        out << "bound violations: " << violations << '\n';
        if (util_trial >= 0)
            out << "max bound utilization: " << fmt6(max_util) << " (trial " << util_trial
                << ", step " << util_step << ")\n";
        else
            out << "max bound utilization: 0 (all traces identically zero)\n";
        if (cert.schur_stable && violations > 0) return kExitNotCertified;
        return kExitOk;
    });
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"identification and stability certification of chaos-free recurrent "
                 "networks"};
    app.require_subcommand(1);

    GenDataArgs ga;
    CLI::App* gen = app.add_subcommand("gen-data", "generate a benchmark dataset");
    gen->add_option("--preset", ga.preset, "builder preset")->capture_default_str();
    gen->add_option("--plant", ga.plant_config, "plant parameter file (key = value)");
    gen->add_option("--seed", ga.seed, "master seed")->capture_default_str();
    gen->add_option("--out", ga.out_dir, "output directory")->capture_default_str();

    TrainArgs ta;
    CLI::App* tr = app.add_subcommand("train", "fit a network to a dataset");
    tr->add_option("--mode", ta.mode, "architecture: cfn or dgn")->required();
    tr->add_option("--layers", ta.layers, "layer count (default: length of --hidden)");
    tr->add_option("--hidden", ta.hidden, "hidden sizes (one value or per-layer list)")
        ->required()
        ->delimiter(',');
    tr->add_option("--data", ta.data_dir, "dataset directory")->required();
    tr->add_option("--out", ta.out_model, "output model path")->required();
    tr->add_option("--report", ta.report_path, "per-epoch report path");
    tr->add_option("--epochs", ta.cfg.epochs)->capture_default_str();
    tr->add_option("--base-lr", ta.cfg.base_lr)->capture_default_str();
    tr->add_option("--lr-decay-factor", ta.cfg.lr_decay_factor)->capture_default_str();
    tr->add_option("--lr-decay-every", ta.cfg.lr_decay_every)->capture_default_str();
    tr->add_option("--batch", ta.cfg.batch_size)->capture_default_str();
    tr->add_option("--dropout", ta.cfg.dropout_rate)->capture_default_str();
    tr->add_option("--washout", ta.cfg.washout)->capture_default_str();
    tr->add_option("--seed", ta.cfg.seed)->capture_default_str();
    tr->add_option("--threads", ta.cfg.threads)->capture_default_str();
    tr->add_option("--log-every", ta.log_every, "epochs between progress lines (0 = quiet)")
        ->capture_default_str();

    EvalArgs ea;
    CLI::App* ev = app.add_subcommand("eval", "evaluate a model on the test split");
    ev->add_option("--model", ea.model_path)->required();
    ev->add_option("--data", ea.data_dir, "dataset directory")->required();
    ev->add_flag("--skip-washout", ea.skip_washout,
                 "headline FIT skips the model's washout steps");
    ev->add_option("--trace-out", ea.trace_dir, "directory for prediction traces ('' = none)")
        ->capture_default_str();

    CertifyArgs ca;
    CLI::App* ce = app.add_subcommand("certify", "compute the stability certificate");
    ce->add_option("--model", ca.model_path)->required();
    ce->add_option("--report", ca.report_path, "machine-readable report path");

    DivergeArgs da;
    CLI::App* dv = app.add_subcommand("diverge", "empirical trajectory-divergence experiment");
    dv->add_option("--model", da.model_path)->required();
    dv->add_option("--trials", da.trials)->capture_default_str();
    dv->add_option("--horizon", da.horizon)->capture_default_str();
    dv->add_option("--seed", da.seed)->capture_default_str();
    dv->add_option("--trace-out", da.trace_dir, "directory for divergence traces ('' = none)")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitValidation;
    }

    if (gen->parsed()) return cmd_gen_data(ga, out, err);
    if (tr->parsed()) return cmd_train(ta, out, err);
    if (ev->parsed()) return cmd_eval(ea, out, err);
    if (ce->parsed()) return cmd_certify(ca, out, err);
    if (dv->parsed()) return cmd_diverge(da, out, err);
    err << "error: no subcommand selected\n";
    return kExitValidation;
}

}  // namespace cfn
