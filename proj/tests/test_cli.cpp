#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfn/bench.hpp"
#include "cfn/cli.hpp"
#include "cfn/io.hpp"
#include "cfn/stability.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cfn;
namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(bool(f));
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

std::string scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("cfnid_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

int data_rows(const std::string& text) {
    int rows = 0;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line))
        if (!line.empty() && line[0] != '#') ++rows;
    return rows;
}

// A small synthetic dataset directory: fast enough that train/eval tests do
// not need the full benchmark pipeline.
std::string tiny_dataset_dir(const std::string& name, uint64_t seed) {
    Rng rng(seed);
    Mat u(200, 2), y(200, 1);
    for (int t = 0; t < 200; ++t) {
        u(t, 0) = rng.uniform(2.0, 3.3);
        u(t, 1) = rng.uniform(2.0, 3.3);
        y(t, 0) = rng.uniform(5.0, 15.0);
    }
    SequenceDataset ds = window_and_split(u, y, 4, 0.5, 25, 0.0, 7);
    ds.sampling_time = 15.0;
    Sequence test;
    test.id = "test-000";
    test.split = Split::test;
    test.u = Mat(30, 2);
    test.y = Mat(30, 1);
    for (int t = 0; t < 30; ++t) {
        test.u(t, 0) = rng.uniform(2.0, 3.3);
        test.u(t, 1) = rng.uniform(2.0, 3.3);
        test.y(t, 0) = rng.uniform(5.0, 15.0);
    }
    ds.sequences.push_back(test);
    normalize_dataset(ds);

    const std::string dir = scratch_dir(name);
    save_dataset_split(ds, Split::train, dir + "/train.tsv");
    save_dataset_split(ds, Split::val, dir + "/val.tsv");
    save_dataset_split(ds, Split::test, dir + "/test.tsv");
    return dir;
}

struct Run {
    int rc = 0;
    std::string out, err;
};

Run gen(const GenDataArgs& a) {
    std::ostringstream out, err;
    const int rc = cmd_gen_data(a, out, err);
    return {rc, out.str(), err.str()};
}

Run train_run(const TrainArgs& a) {
    std::ostringstream out, err;
    const int rc = cmd_train(a, out, err);
    return {rc, out.str(), err.str()};
}

Run eval_run(const EvalArgs& a) {
    std::ostringstream out, err;
    const int rc = cmd_eval(a, out, err);
    return {rc, out.str(), err.str()};
}

Run certify_run(const CertifyArgs& a) {
    std::ostringstream out, err;
    const int rc = cmd_certify(a, out, err);
    return {rc, out.str(), err.str()};
}

Run diverge_run(const DivergeArgs& a) {
    std::ostringstream out, err;
    const int rc = cmd_diverge(a, out, err);
    return {rc, out.str(), err.str()};
}

Run cli(std::vector<std::string> argv) {
    argv.insert(argv.begin(), "cfnid");
    std::vector<const char*> cargv;
    for (const auto& s : argv) cargv.push_back(s.c_str());
    std::ostringstream out, err;
    const int rc = run_cli(static_cast<int>(cargv.size()), cargv.data(), out, err);
    return {rc, out.str(), err.str()};
}

// Writes a model whose certificate verdict is known by construction.
std::string write_model(const std::string& dir, Mode mode, const testutil::LayerScales& sc,
                        uint64_t seed) {
    Rng rng(seed);
    Model m;
    m.net = testutil::random_network(rng, mode, 2, 1, {3, 3}, sc);
    m.sampling_time = 15.0;
    const std::string path = dir + "/" + to_string(mode) + ".model";
    save_model(m, path);
    return path;
}

}  // namespace

TEST_CASE("gen-data writes the dataset artifacts and a faithful manifest") {
    const std::string dir_a = scratch_dir("gen_a");
    const Run a = gen({.preset = "fourtank", .plant_config = "", .seed = 2, .out_dir = dir_a});
    CHECK(a.rc == kExitOk);
    CHECK(a.out.find("wrote 77 train / 18 val / 1 test sequences") != std::string::npos);
    CHECK(a.err.empty());  // seed 2 keeps val/test inside the train envelope
    for (const char* f : {"train.tsv", "val.tsv", "test.tsv", "manifest.json"})
        CHECK(fs::exists(fs::path(dir_a) / f));

    const nlohmann::json j = nlohmann::json::parse(read_file(dir_a + "/manifest.json"));
    CHECK(j.at("seed") == 2);
    CHECK(j.at("splits").at("train") == 77);
    CHECK(j.at("splits").at("val") == 18);
    CHECK(j.at("splits").at("test") == 1);
    CHECK(j.at("pipeline").at("window") == 500);
    CHECK(j.at("pipeline").at("overlap") == 0.5);
    CHECK(j.at("pipeline").at("snr") == 100.0);
    CHECK(j.at("pipeline").at("dt") == 15.0);
    CHECK(j.at("plant").at("overflow_level") == 20.0);
    CHECK(j.at("warnings").empty());
    CHECK(j.at("seeds").at("block_assignment") == pipeline_seeds(2).block_assignment);

    // Same seed: byte-identical artifacts. Different seed: different data.
    const std::string dir_b = scratch_dir("gen_b");
    const Run b = gen({.preset = "fourtank", .plant_config = "", .seed = 2, .out_dir = dir_b});
    CHECK(b.rc == kExitOk);
    for (const char* f : {"train.tsv", "val.tsv", "test.tsv", "manifest.json"})
        CHECK(read_file(dir_a + "/" + f) == read_file(dir_b + "/" + f));

    const std::string dir_c = scratch_dir("gen_c");
    const Run c = gen({.preset = "fourtank", .plant_config = "", .seed = 3, .out_dir = dir_c});
    CHECK(c.rc == kExitOk);
    CHECK(read_file(dir_a + "/train.tsv") != read_file(dir_c + "/train.tsv"));

    // The generated directory round-trips through the dataset loader.
    const SequenceDataset back = load_dataset_dir(dir_a);
    CHECK(back.sequences.size() == 96);
    CHECK(back.sampling_time == 15.0);

    fs::remove_all(dir_b);
    fs::remove_all(dir_c);
    fs::remove_all(dir_a);
}

TEST_CASE("gen-data accepts plant parameter overrides from a file") {
    const std::string dir = scratch_dir("gen_plant");
    {
        std::ofstream f(dir + "/plant.conf");
        f << "# taller tanks\noverflow_level = 25\n";
    }
    GenDataArgs a;
    a.plant_config = dir + "/plant.conf";
    a.out_dir = dir;
    const Run r = gen(a);
    CHECK(r.rc == kExitOk);
    const nlohmann::json j = nlohmann::json::parse(read_file(dir + "/manifest.json"));
    CHECK(j.at("plant").at("overflow_level") == 25.0);
    fs::remove_all(dir);
}

TEST_CASE("gen-data maps failures onto the exit-code contract") {
    const std::string dir = scratch_dir("gen_err");

    GenDataArgs bad_preset;
    bad_preset.preset = "pendulum";
    bad_preset.out_dir = dir;
    Run r = gen(bad_preset);
    CHECK(r.rc == kExitValidation);
    CHECK(r.err.find("unknown preset") != std::string::npos);

    GenDataArgs no_dir;
    no_dir.out_dir = dir + "/missing/deeper";
    r = gen(no_dir);
    CHECK(r.rc == kExitIo);
    CHECK(r.err.find("does not exist") != std::string::npos);

    GenDataArgs no_plant;
    no_plant.plant_config = dir + "/nope.conf";
    no_plant.out_dir = dir;
    CHECK(gen(no_plant).rc == kExitIo);

    {
        std::ofstream f(dir + "/unknown.conf");
        f << "frobnication = 3\n";
    }
    GenDataArgs unknown_key;
    unknown_key.plant_config = dir + "/unknown.conf";
    unknown_key.out_dir = dir;
    CHECK(gen(unknown_key).rc == kExitIo);

    {
        std::ofstream f(dir + "/invalid.conf");
        f << "a1 = -3\n";  // parses fine, fails the physical validity check
    }
    GenDataArgs invalid_value;
    invalid_value.plant_config = dir + "/invalid.conf";
    invalid_value.out_dir = dir;
    CHECK(gen(invalid_value).rc == kExitValidation);

    fs::remove_all(dir);
}

TEST_CASE("train writes a model and report and is byte-reproducible") {
    const std::string data = tiny_dataset_dir("train_data", 5);
    const std::string dir = scratch_dir("train_out");

    TrainArgs a;
    a.mode = "dgn";
    a.hidden = {3};
    a.data_dir = data;
    a.out_model = dir + "/a.model";
    a.cfg.epochs = 2;
    a.cfg.washout = 5;
    a.cfg.seed = 11;
    a.log_every = 1;
    Run r = train_run(a);
    CHECK(r.rc == kExitOk);
    CHECK(r.out.find("training dgn with 1 layer(s)") != std::string::npos);
    CHECK(r.out.find("epoch 0") != std::string::npos);
    CHECK(r.out.find("best epoch") != std::string::npos);
    CHECK(r.out.find("model written to") != std::string::npos);
    REQUIRE(fs::exists(a.out_model));
    REQUIRE(fs::exists(dir + "/a.model.report.tsv"));

    // The saved model carries provenance and the dataset's scales.
    const Model m = load_model(a.out_model);
    CHECK(m.prov.seed == 11);
    CHECK(m.prov.washout == 5);
    CHECK(m.prov.best_epoch >= 0);
    CHECK(m.prov.config_digest == config_digest(Mode::DGN, {3}, a.cfg));
    CHECK(m.sampling_time == 15.0);
    CHECK(m.norm.u_lo.size() == 2);
    CHECK(m.net.mode == Mode::DGN);

    TrainArgs b = a;
    b.out_model = dir + "/b.model";
    b.report_path = dir + "/b_report.tsv";
    CHECK(train_run(b).rc == kExitOk);
    CHECK(read_file(a.out_model) == read_file(b.out_model));
    CHECK(read_file(dir + "/a.model.report.tsv") == read_file(dir + "/b_report.tsv"));

    // Worker threads change the schedule, not the arithmetic.
    TrainArgs c = a;
    c.out_model = dir + "/c.model";
    c.cfg.threads = 2;
    CHECK(train_run(c).rc == kExitOk);
    CHECK(read_file(a.out_model) == read_file(c.out_model));

    fs::remove_all(dir);
    fs::remove_all(data);
}

TEST_CASE("train rejects inconsistent arguments and incomplete datasets") {
    const std::string data = tiny_dataset_dir("train_err_data", 6);
    const std::string dir = scratch_dir("train_err");

    TrainArgs base;
    base.mode = "cfn";
    base.hidden = {3};
    base.data_dir = data;
    base.out_model = dir + "/m.model";
    base.cfg.epochs = 1;

    TrainArgs a = base;
    a.hidden = {};
    Run r = train_run(a);
    CHECK(r.rc == kExitValidation);
    CHECK(r.err.find("--hidden") != std::string::npos);

    a = base;
    a.layers = 3;
    a.hidden = {4, 5};
    r = train_run(a);
    CHECK(r.rc == kExitValidation);
    CHECK(r.err.find("--layers disagrees") != std::string::npos);

    a = base;
    a.mode = "lstm";
    CHECK(train_run(a).rc == kExitValidation);

    a = base;
    a.cfg.epochs = 0;
    CHECK(train_run(a).rc == kExitValidation);

    a = base;
    a.data_dir = dir + "/no_such_dataset";
    CHECK(train_run(a).rc == kExitIo);

    // A dataset without a validation split cannot drive early stopping.
    const std::string noval = scratch_dir("train_noval");
    fs::copy_file(data + "/train.tsv", noval + "/train.tsv");
    a = base;
    a.data_dir = noval;
    r = train_run(a);
    CHECK(r.rc == kExitValidation);
    CHECK(r.err.find("validation") != std::string::npos);

    fs::remove_all(noval);
    fs::remove_all(dir);
    fs::remove_all(data);
}

TEST_CASE("eval reports exact FIT for a model that reproduces the data") {
    // Build the dataset FROM the model so predictions match bit for bit.
    Rng rng(41);
    Model m;
    m.net = testutil::random_network(rng, Mode::DGN, 2, 1, {4});
    m.sampling_time = 15.0;
    m.prov.washout = 5;
    m.norm.u_lo = {-1.0, -1.0};
    m.norm.u_hi = {1.0, 1.0};
    m.norm.y_lo = {-1.0};
    m.norm.y_hi = {1.0};

    SequenceDataset ds;
    ds.sampling_time = 15.0;
    ds.norm = m.norm;
    const char* ids[] = {"train-000", "val-000", "test-000"};
    const Split splits[] = {Split::train, Split::val, Split::test};
    for (int s = 0; s < 3; ++s) {
        Sequence seq;
        seq.id = ids[s];
        seq.split = splits[s];
        const int T = 30;
        seq.u = Mat(T, 2);
        for (int t = 0; t < T; ++t)
            for (int c = 0; c < 2; ++c) seq.u(t, c) = rng.uniform(-1.0, 1.0);
        std::vector<Vec> u_rows(T);
        for (int t = 0; t < T; ++t) u_rows[t] = {seq.u(t, 0), seq.u(t, 1)};
        const SimResult sim = simulate(m.net, default_initial_state(m.net), u_rows);
        seq.y = Mat(T, 1);
        for (int t = 0; t < T; ++t) seq.y(t, 0) = sim.y_seq[t][0];
        ds.sequences.push_back(seq);
    }

    const std::string dir = scratch_dir("eval_exact");
    save_dataset_split(ds, Split::train, dir + "/train.tsv");
    save_dataset_split(ds, Split::val, dir + "/val.tsv");
    save_dataset_split(ds, Split::test, dir + "/test.tsv");
    const std::string model_path = dir + "/perfect.model";
    save_model(m, model_path);

    EvalArgs a;
    a.model_path = model_path;
    a.data_dir = dir;
    a.trace_dir = dir;
    Run r = eval_run(a);
    CHECK(r.rc == kExitOk);
    CHECK(r.out.find("test-000  FIT 100%  FIT[skip 5] 100%") != std::string::npos);
    CHECK(r.out.find("\nFIT 100%\n") != std::string::npos);

    const std::string trace = read_file(dir + "/trace_test-000.tsv");
    CHECK(data_rows(trace) == 30);
    CHECK(trace.find("# cfnid-trace 1") == 0);
    CHECK(trace.find("# columns time y0_true y0_pred") != std::string::npos);

    // The washout-skipped headline is marked as such.
    EvalArgs b = a;
    b.skip_washout = true;
    b.trace_dir.clear();
    r = eval_run(b);
    CHECK(r.rc == kExitOk);
    CHECK(r.out.find("FIT 100% (washout skipped)") != std::string::npos);

    // Trace suppression leaves no files behind.
    const std::string dir2 = scratch_dir("eval_notrace");
    EvalArgs c = a;
    c.trace_dir.clear();
    CHECK(eval_run(c).rc == kExitOk);
    CHECK(!fs::exists(dir2 + "/trace_test-000.tsv"));

    EvalArgs bad = a;
    bad.model_path = dir + "/missing.model";
    CHECK(eval_run(bad).rc == kExitIo);

    fs::remove_all(dir2);
    fs::remove_all(dir);
}

TEST_CASE("certify separates certified and uncertified models by exit code") {
    const std::string dir = scratch_dir("certify");
    testutil::LayerScales tiny;
    tiny.w = 0.2;
    tiny.r = 0.0;
    tiny.b = 0.1;
    const std::string dgn_path = write_model(dir, Mode::DGN, tiny, 51);

    CertifyArgs a;
    a.model_path = dgn_path;
    a.report_path = dir + "/cert.txt";
    Run r = certify_run(a);
    CHECK(r.rc == kExitOk);
    CHECK(r.out.find("delta-ISS certified (by design)") != std::string::npos);

    // The machine report equals the library's own rendering byte for byte.
    const Model m = load_model(dgn_path);
    CHECK(read_file(dir + "/cert.txt") ==
          render_certificate_machine(network_certificate(m.net)));

    testutil::LayerScales big;
    big.w = 2.0;
    big.r = 2.0;
    big.b = 1.0;
    const std::string cfn_path = write_model(dir, Mode::CFN, big, 52);
    CertifyArgs b;
    b.model_path = cfn_path;
    r = certify_run(b);
    CHECK(r.rc == kExitNotCertified);
    CHECK(r.out.find("sufficient condition violated at layer(s)") != std::string::npos);

    CertifyArgs c;
    c.model_path = dir + "/missing.model";
    CHECK(certify_run(c).rc == kExitIo);

    fs::remove_all(dir);
}

TEST_CASE("diverge reports zero violations for a certified model") {
    const std::string dir = scratch_dir("diverge");
    testutil::LayerScales tiny;
    tiny.w = 0.2;
    tiny.r = 0.0;
    tiny.b = 0.1;
    const std::string path = write_model(dir, Mode::DGN, tiny, 61);

    DivergeArgs a;
    a.model_path = path;
    a.trials = 3;
    a.horizon = 20;
    a.trace_dir = dir;
    Run r = diverge_run(a);
    CHECK(r.rc == kExitOk);
    CHECK(r.out.find("certificate: delta-ISS certified") != std::string::npos);
    CHECK(r.out.find("trials 3, horizon 20") != std::string::npos);
    CHECK(r.out.find("bound violations: 0") != std::string::npos);
    CHECK(r.out.find("max bound utilization:") != std::string::npos);
    for (const char* f : {"diverge_trial-000.tsv", "diverge_trial-001.tsv",
                          "diverge_trial-002.tsv"})
        CHECK(data_rows(read_file(dir + "/" + std::string(f))) == 21);  // steps 0..20

    // Identical arguments yield identical traces (seeded trials).
    const std::string dir2 = scratch_dir("diverge_again");
    DivergeArgs b = a;
    b.trace_dir = dir2;
    CHECK(diverge_run(b).rc == kExitOk);
    CHECK(read_file(dir + "/diverge_trial-002.tsv") ==
          read_file(dir2 + "/diverge_trial-002.tsv"));

    DivergeArgs h0 = a;
    h0.horizon = 0;
    h0.trace_dir = dir2;
    CHECK(diverge_run(h0).rc == kExitOk);
    CHECK(data_rows(read_file(dir2 + "/diverge_trial-000.tsv")) == 1);

    // An uncertified model still runs the experiment, with no claim to check.
    testutil::LayerScales big;
    big.w = 2.0;
    big.r = 2.0;
    big.b = 1.0;
    const std::string cfn_path = write_model(dir2, Mode::CFN, big, 62);
    DivergeArgs u = a;
    u.model_path = cfn_path;
    u.trace_dir.clear();
    r = diverge_run(u);
    CHECK(r.rc == kExitOk);
    CHECK(r.out.find("not certified") != std::string::npos);

    DivergeArgs bad = a;
    bad.trials = 0;
    CHECK(diverge_run(bad).rc == kExitValidation);
    bad = a;
    bad.horizon = -1;
    CHECK(diverge_run(bad).rc == kExitValidation);
    bad = a;
    bad.model_path = dir + "/missing.model";
    CHECK(diverge_run(bad).rc == kExitIo);

    fs::remove_all(dir2);
    fs::remove_all(dir);
}

TEST_CASE("the argument parser enforces the command surface") {
    CHECK(cli({}).rc == kExitValidation);
    CHECK(cli({"bogus-cmd"}).rc == kExitValidation);
    CHECK(cli({"train", "--mode", "cfn"}).rc == kExitValidation);  // missing required flags
    CHECK(cli({"gen-data", "--seed", "notanumber"}).rc == kExitValidation);

    const Run help = cli({"--help"});
    CHECK(help.rc == kExitOk);
    CHECK(help.out.find("gen-data") != std::string::npos);
    CHECK(help.out.find("certify") != std::string::npos);
}

TEST_CASE("full argv round: train with a comma hidden list, then certify and eval") {
    const std::string data = tiny_dataset_dir("cli_full_data", 8);
    const std::string dir = scratch_dir("cli_full");
    const std::string model = dir + "/m.model";

    const Run tr = cli({"train", "--mode", "dgn", "--hidden", "3,2", "--data", data, "--out",
                        model, "--epochs", "2", "--washout", "5", "--seed", "9",
                        "--log-every", "0"});
    CHECK(tr.rc == kExitOk);
    const Model m = load_model(model);
    REQUIRE(m.net.depth() == 2);
    CHECK(m.net.layers[0].n_h == 3);
    CHECK(m.net.layers[1].n_h == 2);

    // --layers with a single --hidden value replicates it.
    const Run tr2 = cli({"train", "--mode", "dgn", "--layers", "2", "--hidden", "3", "--data",
                         data, "--out", dir + "/m2.model", "--epochs", "1", "--washout", "5",
                         "--log-every", "0"});
    CHECK(tr2.rc == kExitOk);
    CHECK(load_model(dir + "/m2.model").net.layers[1].n_h == 3);

    const Run ce = cli({"certify", "--model", model});
    CHECK(ce.rc == kExitOk);  // DGN certifies by construction
    CHECK(ce.out.find("(by design)") != std::string::npos);

    const Run ev = cli({"eval", "--model", model, "--data", data, "--trace-out", dir});
    CHECK(ev.rc == kExitOk);
    CHECK(ev.out.find("FIT") != std::string::npos);
    CHECK(fs::exists(dir + "/trace_test-000.tsv"));

    const Run dv = cli({"diverge", "--model", model, "--trials", "2", "--horizon", "5",
                        "--trace-out", ""});
    CHECK(dv.rc == kExitOk);
    CHECK(dv.out.find("bound violations: 0") != std::string::npos);

    fs::remove_all(dir);
    fs::remove_all(data);
}

