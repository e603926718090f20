#include "cfn/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace cfn {

std::string format_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double_strict(const std::string& tok) {
    if (tok.empty()) throw IoError("empty numeric token");
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size())
        throw IoError("malformed numeric token '" + tok + "'");
    return v;
}

namespace {

long long parse_int_strict(const std::string& tok) {
    if (tok.empty()) throw IoError("empty integer token");
    char* end = nullptr;
    const long long v = std::strtoll(tok.c_str(), &end, 10);
    if (end != tok.c_str() + tok.size())
        throw IoError("malformed integer token '" + tok + "'");
    return v;
}

uint64_t parse_u64_strict(const std::string& tok) {
    if (tok.empty()) throw IoError("empty integer token");
    char* end = nullptr;
    const unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
    if (end != tok.c_str() + tok.size())
        throw IoError("malformed integer token '" + tok + "'");
    return v;
}

// Sequential line scanner that blames the file and line on every failure.
class Reader {
  public:
    Reader(const std::string& path) : path_(path), in_(path) {
        if (!in_) throw IoError("cannot open '" + path + "'");
    }

    // Next line split into tokens; fails at end of file.
    std::vector<std::string> line() {
        std::string raw;
        if (!std::getline(in_, raw)) fail("unexpected end of file");
        ++lineno_;
        std::istringstream ls(raw);
        std::vector<std::string> toks;
        std::string t;
        while (ls >> t) toks.push_back(t);
        return toks;
    }

    // Line whose first token(s) must equal `key`; returns the remainder.
    std::vector<std::string> expect(const std::string& key) {
        auto toks = line();
        std::istringstream ks(key);
        std::string part;
        size_t i = 0;
        while (ks >> part) {
            if (i >= toks.size() || toks[i] != part) fail("expected '" + key + "' line");
            ++i;
        }
        toks.erase(toks.begin(), toks.begin() + i);
        return toks;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw IoError(path_ + ":" + std::to_string(lineno_) + ": " + msg);
    }

    const std::string& path() const { return path_; }

  private:
    std::string path_;
    std::ifstream in_;
    int lineno_ = 0;
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw IoError("write to '" + path + "' failed");
}

void append_mat_rows(std::ostringstream& os, const Mat& m) {
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c) {
            if (c) os << '\t';
            os << format_g17(m(r, c));
        }
        os << '\n';
    }
}

void append_tensor(std::ostringstream& os, const std::string& name, const Mat& m) {
    os << "tensor " << name << ' ' << m.rows << ' ' << m.cols << '\n';
    append_mat_rows(os, m);
}

void append_tensor(std::ostringstream& os, const std::string& name, const Vec& v) {
    os << "tensor " << name << " 1 " << v.size() << '\n';
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) os << '\t';
        os << format_g17(v[i]);
    }
    os << '\n';
}

Mat read_tensor(Reader& rd, const std::string& name, int want_rows, int want_cols) {
    const auto head = rd.expect("tensor " + name);
    if (head.size() != 2) rd.fail("tensor header needs rows and cols");
    const int rows = static_cast<int>(parse_int_strict(head[0]));
    const int cols = static_cast<int>(parse_int_strict(head[1]));
    if (rows != want_rows || cols != want_cols)
        rd.fail("tensor " + name + " has shape " + std::to_string(rows) + "x" +
                std::to_string(cols) + ", expected " + std::to_string(want_rows) + "x" +
                std::to_string(want_cols));
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        const auto toks = rd.line();
        if (static_cast<int>(toks.size()) != cols) rd.fail("tensor row has wrong width");
        for (int c = 0; c < cols; ++c) m(r, c) = parse_double_strict(toks[c]);
    }
    return m;
}

Vec read_vector_tensor(Reader& rd, const std::string& name, int want_n) {
    return read_tensor(rd, name, 1, want_n).a;
}

void append_vec_line(std::ostringstream& os, const std::string& key, const Vec& v) {
    os << key;
    for (double x : v) os << ' ' << format_g17(x);
    os << '\n';
}

Vec parse_vec_tokens(const std::vector<std::string>& toks) {
    Vec v(toks.size());
    for (size_t i = 0; i < toks.size(); ++i) v[i] = parse_double_strict(toks[i]);
    return v;
}

bool norm_present(const Normalization& n) {
    return !n.u_lo.empty() || !n.y_lo.empty();
}

}  // namespace

std::string config_digest(Mode mode, const std::vector<int>& hidden, const TrainConfig& cfg) {
    std::ostringstream os;
    os << "mode=" << to_string(mode) << ";hidden=";
    for (size_t i = 0; i < hidden.size(); ++i) os << (i ? "," : "") << hidden[i];
    os << ";epochs=" << cfg.epochs << ";base_lr=" << format_g17(cfg.base_lr)
       << ";lr_decay_factor=" << format_g17(cfg.lr_decay_factor)
       << ";lr_decay_every=" << cfg.lr_decay_every << ";batch_size=" << cfg.batch_size
       << ";dropout_rate=" << format_g17(cfg.dropout_rate) << ";washout=" << cfg.washout;
    const std::string s = os.str();
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void save_model(const Model& m, const std::string& path) {
    m.net.check();
    std::ostringstream os;
    os << "cfnid-model 1\n";
    os << "mode " << to_string(m.net.mode) << '\n';
    os << "inputs " << m.net.n_u << '\n';
    os << "outputs " << m.net.n_y << '\n';
    os << "hidden";
    for (const auto& l : m.net.layers) os << ' ' << l.n_h;
    os << '\n';
    os << "seed " << m.prov.seed << '\n';
    os << "config_digest " << (m.prov.config_digest.empty() ? "none" : m.prov.config_digest)
       << '\n';
    os << "best_epoch " << m.prov.best_epoch << '\n';
    os << "washout " << m.prov.washout << '\n';
    os << "sampling_time " << format_g17(m.sampling_time) << '\n';
    if (norm_present(m.norm)) {
        os << "norm present\n";
        append_vec_line(os, "norm_u_lo", m.norm.u_lo);
        append_vec_line(os, "norm_u_hi", m.norm.u_hi);
        append_vec_line(os, "norm_y_lo", m.norm.y_lo);
        append_vec_line(os, "norm_y_hi", m.norm.y_hi);
    } else {
        os << "norm absent\n";
    }
    for (int l = 0; l < m.net.depth(); ++l) {
        const LayerParams& lp = m.net.layers[l];
        const std::string pre = "layer" + std::to_string(l) + ".";
        append_tensor(os, pre + "W_f", lp.W_f);
        append_tensor(os, pre + "W_i", lp.W_i);
        append_tensor(os, pre + "W_c", lp.W_c);
        if (m.net.mode == Mode::CFN) {
            append_tensor(os, pre + "R_f", lp.R_f);
            append_tensor(os, pre + "R_i", lp.R_i);
        }
        append_tensor(os, pre + "b_f", lp.b_f);
        append_tensor(os, pre + "b_i", lp.b_i);
        append_tensor(os, pre + "b_c", lp.b_c);
    }
    append_tensor(os, "W_y", m.net.W_y);
    append_tensor(os, "b_y", m.net.b_y);
    os << "end\n";
    write_file(path, os.str());
}

Model load_model(const std::string& path) {
    Reader rd(path);
    {
        const auto v = rd.expect("cfnid-model");
        if (v.size() != 1 || v[0] != "1") rd.fail("unsupported model format version");
    }
    Model m;
    {
        const auto v = rd.expect("mode");
        if (v.size() != 1) rd.fail("mode line needs one value");
        try {
            m.net.mode = mode_from_string(v[0]);
        } catch (const std::invalid_argument& e) {
            rd.fail(e.what());
        }
    }
    const auto get1 = [&](const char* key) {
        const auto v = rd.expect(key);
        if (v.size() != 1) rd.fail(std::string(key) + " line needs one value");
        return v[0];
    };
    m.net.n_u = static_cast<int>(parse_int_strict(get1("inputs")));
    m.net.n_y = static_cast<int>(parse_int_strict(get1("outputs")));
    std::vector<int> hidden;
    for (const auto& t : rd.expect("hidden")) hidden.push_back((int)parse_int_strict(t));
    if (hidden.empty()) rd.fail("hidden line needs at least one layer size");
    m.prov.seed = parse_u64_strict(get1("seed"));
    m.prov.config_digest = get1("config_digest");
    m.prov.best_epoch = static_cast<int>(parse_int_strict(get1("best_epoch")));
    m.prov.washout = static_cast<int>(parse_int_strict(get1("washout")));
    m.sampling_time = parse_double_strict(get1("sampling_time"));
    {
        const auto v = rd.expect("norm");
        if (v.size() != 1 || (v[0] != "present" && v[0] != "absent"))
            rd.fail("norm line must read 'present' or 'absent'");
        if (v[0] == "present") {
            m.norm.u_lo = parse_vec_tokens(rd.expect("norm_u_lo"));
            m.norm.u_hi = parse_vec_tokens(rd.expect("norm_u_hi"));
            m.norm.y_lo = parse_vec_tokens(rd.expect("norm_y_lo"));
            m.norm.y_hi = parse_vec_tokens(rd.expect("norm_y_hi"));
            if (m.norm.u_lo.size() != m.norm.u_hi.size() ||
                m.norm.y_lo.size() != m.norm.y_hi.size())
                rd.fail("normalization bounds have mismatched lengths");
        }
    }
    int n_in = m.net.n_u;
    for (size_t l = 0; l < hidden.size(); ++l) {
        LayerParams lp;
        lp.mode = m.net.mode;
        lp.n_h = hidden[l];
        lp.n_in = n_in;
        const std::string pre = "layer" + std::to_string(l) + ".";
        lp.W_f = read_tensor(rd, pre + "W_f", lp.n_h, lp.n_in);
        lp.W_i = read_tensor(rd, pre + "W_i", lp.n_h, lp.n_in);
        lp.W_c = read_tensor(rd, pre + "W_c", lp.n_h, lp.n_in);
        if (m.net.mode == Mode::CFN) {
            lp.R_f = read_tensor(rd, pre + "R_f", lp.n_h, lp.n_h);
            lp.R_i = read_tensor(rd, pre + "R_i", lp.n_h, lp.n_h);
        } else {
            lp.R_f = Mat(lp.n_h, lp.n_h);
            lp.R_i = Mat(lp.n_h, lp.n_h);
        }
        lp.b_f = read_vector_tensor(rd, pre + "b_f", lp.n_h);
        lp.b_i = read_vector_tensor(rd, pre + "b_i", lp.n_h);
        lp.b_c = read_vector_tensor(rd, pre + "b_c", lp.n_h);
        m.net.layers.push_back(std::move(lp));
        n_in = hidden[l];
    }
    m.net.W_y = read_tensor(rd, "W_y", m.net.n_y, hidden.back());
    m.net.b_y = read_vector_tensor(rd, "b_y", m.net.n_y);
    rd.expect("end");
    try {
        m.net.check();
    } catch (const std::invalid_argument& e) {
        throw IoError(path + ": inconsistent model: " + e.what());
    }
    return m;
}

void save_dataset_split(const SequenceDataset& ds, Split split, const std::string& path,
                        const std::vector<ChannelMeta>& u_meta,
                        const std::vector<ChannelMeta>& y_meta) {
    if (!norm_present(ds.norm))
        throw std::invalid_argument("dataset files require normalization scales");
    const int n_u = static_cast<int>(ds.norm.u_lo.size());
    const int n_y = static_cast<int>(ds.norm.y_lo.size());
    if (!u_meta.empty() && static_cast<int>(u_meta.size()) != n_u)
        throw std::invalid_argument("input channel metadata count mismatch");
    if (!y_meta.empty() && static_cast<int>(y_meta.size()) != n_y)
        throw std::invalid_argument("output channel metadata count mismatch");

    std::ostringstream os;
    os << "# cfnid-dataset 1\n";
    os << "# split " << to_string(split) << '\n';
    os << "# sampling_time " << format_g17(ds.sampling_time) << '\n';
    os << "# inputs " << n_u << '\n';
    os << "# outputs " << n_y << '\n';
    const auto channel_line = [&](const char* kind, int idx, const std::vector<ChannelMeta>& meta,
                                  double lo, double hi) {
        std::string name = meta.empty() ? kind + std::to_string(idx) : meta[idx].name;
        std::string unit = meta.empty() ? std::string("-") : meta[idx].unit;
        for (auto& ch : name)
            if (ch == ' ' || ch == '\t') ch = '_';
        for (auto& ch : unit)
            if (ch == ' ' || ch == '\t') ch = '_';
        os << "# channel " << kind << idx << ' ' << name << ' ' << unit << ' ' << format_g17(lo)
           << ' ' << format_g17(hi) << '\n';
    };
    for (int c = 0; c < n_u; ++c) channel_line("u", c, u_meta, ds.norm.u_lo[c], ds.norm.u_hi[c]);
    for (int c = 0; c < n_y; ++c) channel_line("y", c, y_meta, ds.norm.y_lo[c], ds.norm.y_hi[c]);

    for (const Sequence* s : ds.by_split(split)) {
        if (s->u.cols != n_u || s->y.cols != n_y)
            throw std::invalid_argument("sequence '" + s->id +
                                        "' channel count does not match the scales");
        os << "sequence " << s->id << ' ' << s->length() << '\n';
        for (int r = 0; r < s->length(); ++r) {
            for (int c = 0; c < n_u; ++c) {
                if (c) os << '\t';
                os << format_g17(s->u(r, c));
            }
            for (int c = 0; c < n_y; ++c) os << '\t' << format_g17(s->y(r, c));
            os << '\n';
        }
    }
    os << "end\n";
    write_file(path, os.str());
}

SequenceDataset load_dataset_file(const std::string& path) {
    Reader rd(path);
    {
        const auto v = rd.expect("# cfnid-dataset");
        if (v.size() != 1 || v[0] != "1") rd.fail("unsupported dataset format version");
    }
    SequenceDataset ds;
    Split split;
    {
        const auto v = rd.expect("# split");
        if (v.size() != 1) rd.fail("split line needs one tag");
        try {
            split = split_from_string(v[0]);
        } catch (const std::invalid_argument& e) {
            rd.fail(e.what());
        }
    }
    {
        const auto v = rd.expect("# sampling_time");
        if (v.size() != 1) rd.fail("sampling_time line needs one value");
        ds.sampling_time = parse_double_strict(v[0]);
    }
    const auto get_count = [&](const char* key) {
        const auto v = rd.expect(key);
        if (v.size() != 1) rd.fail(std::string(key) + " line needs one value");
        return static_cast<int>(parse_int_strict(v[0]));
    };
    const int n_u = get_count("# inputs");
    const int n_y = get_count("# outputs");
    if (n_u < 1 || n_y < 1) rd.fail("channel counts must be positive");
    ds.norm.u_lo.resize(n_u);
    ds.norm.u_hi.resize(n_u);
    ds.norm.y_lo.resize(n_y);
    ds.norm.y_hi.resize(n_y);
    for (int c = 0; c < n_u + n_y; ++c) {
        const auto v = rd.expect("# channel");
        if (v.size() != 5) rd.fail("channel line needs id, name, unit, lo, hi");
        const bool input = c < n_u;
        const int idx = input ? c : c - n_u;
        const std::string want = (input ? "u" : "y") + std::to_string(idx);
        if (v[0] != want) rd.fail("expected channel '" + want + "', got '" + v[0] + "'");
        (input ? ds.norm.u_lo : ds.norm.y_lo)[idx] = parse_double_strict(v[3]);
        (input ? ds.norm.u_hi : ds.norm.y_hi)[idx] = parse_double_strict(v[4]);
    }
    for (;;) {
        const auto toks = rd.line();
        if (toks.size() == 1 && toks[0] == "end") break;
        if (toks.size() != 3 || toks[0] != "sequence")
            rd.fail("expected 'sequence <id> <steps>' or 'end'");
        Sequence s;
        s.id = toks[1];
        s.split = split;
        const int steps = static_cast<int>(parse_int_strict(toks[2]));
        if (steps < 1) rd.fail("sequence length must be positive");
        s.u = Mat(steps, n_u);
        s.y = Mat(steps, n_y);
        for (int r = 0; r < steps; ++r) {
            const auto row = rd.line();
            if (static_cast<int>(row.size()) != n_u + n_y)
                rd.fail("row has " + std::to_string(row.size()) + " columns, expected " +
                        std::to_string(n_u + n_y));
            for (int c = 0; c < n_u; ++c) s.u(r, c) = parse_double_strict(row[c]);
            for (int c = 0; c < n_y; ++c) s.y(r, c) = parse_double_strict(row[n_u + c]);
        }
        ds.sequences.push_back(std::move(s));
    }
    return ds;
}

SequenceDataset load_dataset_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path base(dir);
    if (!fs::is_directory(base)) throw IoError("'" + dir + "' is not a directory");
    const fs::path train = base / "train.tsv";
    if (!fs::exists(train))
        throw IoError("'" + dir + "' does not contain train.tsv");
    SequenceDataset ds = load_dataset_file(train.string());
    for (const char* name : {"val.tsv", "test.tsv"}) {
        const fs::path p = base / name;
        if (!fs::exists(p)) continue;
        const SequenceDataset part = load_dataset_file(p.string());
        if (part.sampling_time != ds.sampling_time)
            throw IoError("'" + p.string() + "' sampling time differs from train.tsv");
        if (part.norm.u_lo != ds.norm.u_lo || part.norm.u_hi != ds.norm.u_hi ||
            part.norm.y_lo != ds.norm.y_lo || part.norm.y_hi != ds.norm.y_hi)
            throw IoError("'" + p.string() + "' normalization scales differ from train.tsv");
        for (auto& s : part.sequences) ds.sequences.push_back(s);
    }
    return ds;
}

namespace {

const char* yesno(bool b) { return b ? "yes" : "no"; }

}  // namespace

std::string render_certificate_human(const NetworkCertificate& cert, Mode mode) {
    std::ostringstream os;
    char buf[160];
    os << "stability certificate (" << to_string(mode) << ", " << cert.depth() << " layer"
       << (cert.depth() == 1 ? "" : "s") << ")\n";
    os << "  layer  sigma_bar_f  phi_bar_htilde  rho        gamma_input  contracting  marginal\n";
    for (int l = 0; l < cert.depth(); ++l) {
        const LayerCertificate& c = cert.per_layer[l];
        std::snprintf(buf, sizeof buf, "  %-5d  %-11.6g  %-14.6g  %-9.6g  %-11.6g  %-11s  %s\n",
                      l, c.sigma_bar_f, c.phi_bar_htilde, c.rho, c.gamma_input,
                      yesno(c.delta_iss_holds), yesno(c.marginal));
        os << buf;
    }
    os << "  cascade matrix A_delta:\n";
    for (int r = 0; r < cert.a_delta.rows; ++r) {
        os << "   ";
        for (int c = 0; c < cert.a_delta.cols; ++c) {
            std::snprintf(buf, sizeof buf, " %12.6g", cert.a_delta(r, c));
            os << buf;
        }
        os << '\n';
    }
    os << "  input vector B_delta_u:\n   ";
    for (double v : cert.b_delta_u) {
        std::snprintf(buf, sizeof buf, " %12.6g", v);
        os << buf;
    }
    os << '\n';
    os << "  schur stable: " << yesno(cert.schur_stable) << '\n';
    if (cert.delta_iss_input_gain) {
        std::snprintf(buf, sizeof buf, "  delta-ISS input gain: %.6g\n",
                      *cert.delta_iss_input_gain);
        os << buf;
    } else {
        os << "  delta-ISS input gain: unavailable\n";
    }
    if (cert.schur_stable) {
        os << "verdict: delta-ISS certified";
        if (mode == Mode::DGN) os << " (by design)";
        os << '\n';
    } else {
        os << "verdict: sufficient condition violated at layer(s)";
        bool first = true;
        for (int l = 0; l < cert.depth(); ++l)
            if (!cert.per_layer[l].delta_iss_holds) {
                os << (first ? " " : ", ") << l;
                first = false;
            }
        os << '\n';
    }
    return os.str();
}

std::string render_certificate_machine(const NetworkCertificate& cert) {
    std::ostringstream os;
    os << "cfnid-certificate 1\n";
    os << "layers " << cert.depth() << '\n';
    for (int l = 0; l < cert.depth(); ++l) {
        const LayerCertificate& c = cert.per_layer[l];
        const IssGains& g = cert.iss_gains[l];
        const std::string pre = "layer " + std::to_string(l) + ' ';
        os << pre << "sigma_bar_f " << format_g17(c.sigma_bar_f) << '\n';
        os << pre << "phi_bar_htilde " << format_g17(c.phi_bar_htilde) << '\n';
        os << pre << "rho " << format_g17(c.rho) << '\n';
        os << pre << "gamma_input " << format_g17(c.gamma_input) << '\n';
        os << pre << "delta_iss_holds " << (c.delta_iss_holds ? 1 : 0) << '\n';
        os << pre << "marginal " << (c.marginal ? 1 : 0) << '\n';
        os << pre << "iss_beta_base " << format_g17(g.beta_base) << '\n';
        os << pre << "iss_gamma_u " << format_g17(g.gamma_u_coeff) << '\n';
        os << pre << "iss_gamma_b " << format_g17(g.gamma_b_coeff) << '\n';
    }
    os << "a_delta " << cert.a_delta.rows << ' ' << cert.a_delta.cols << '\n';
    append_mat_rows(os, cert.a_delta);
    os << "b_delta_u " << cert.b_delta_u.size() << '\n';
    for (size_t i = 0; i < cert.b_delta_u.size(); ++i) {
        if (i) os << '\t';
        os << format_g17(cert.b_delta_u[i]);
    }
    os << '\n';
    os << "schur_stable " << (cert.schur_stable ? 1 : 0) << '\n';
    os << "delta_iss_input_gain "
       << (cert.delta_iss_input_gain ? format_g17(*cert.delta_iss_input_gain) : "unavailable")
       << '\n';
    os << "end\n";
    return os.str();
}

NetworkCertificate parse_certificate_machine(const std::string& text) {
    // Reuse the strict line scanner via a temp-free in-memory stream.
    std::istringstream in(text);
    int lineno = 0;
    const auto next = [&]() {
        std::string raw;
        if (!std::getline(in, raw))
            throw IoError("certificate text line " + std::to_string(lineno) +
                          ": unexpected end of input");
        ++lineno;
        std::istringstream ls(raw);
        std::vector<std::string> toks;
        std::string t;
        while (ls >> t) toks.push_back(t);
        return toks;
    };
    const auto fail = [&](const std::string& msg) -> void {
        throw IoError("certificate text line " + std::to_string(lineno) + ": " + msg);
    };

    auto toks = next();
    if (toks != std::vector<std::string>{"cfnid-certificate", "1"})
        fail("unsupported certificate format");
    toks = next();
    if (toks.size() != 2 || toks[0] != "layers") fail("expected layer count");
    const int depth = static_cast<int>(parse_int_strict(toks[1]));
    if (depth < 1) fail("layer count must be positive");

    NetworkCertificate cert;
    cert.per_layer.resize(depth);
    cert.iss_gains.resize(depth);
    for (int l = 0; l < depth; ++l) {
        const auto field = [&](const char* name) -> std::string {
            const auto t = next();
            if (t.size() != 4 || t[0] != "layer" ||
                t[1] != std::to_string(l) || t[2] != name)
                fail(std::string("expected 'layer ") + std::to_string(l) + ' ' + name + "'");
            return t[3];
        };
        LayerCertificate& c = cert.per_layer[l];
        IssGains& g = cert.iss_gains[l];
        c.sigma_bar_f = parse_double_strict(field("sigma_bar_f"));
        c.phi_bar_htilde = parse_double_strict(field("phi_bar_htilde"));
        c.rho = parse_double_strict(field("rho"));
        c.gamma_input = parse_double_strict(field("gamma_input"));
        c.delta_iss_holds = parse_int_strict(field("delta_iss_holds")) != 0;
        c.marginal = parse_int_strict(field("marginal")) != 0;
        g.beta_base = parse_double_strict(field("iss_beta_base"));
        g.gamma_u_coeff = parse_double_strict(field("iss_gamma_u"));
        g.gamma_b_coeff = parse_double_strict(field("iss_gamma_b"));
    }
    toks = next();
    if (toks.size() != 3 || toks[0] != "a_delta") fail("expected a_delta header");
    const int ar = static_cast<int>(parse_int_strict(toks[1]));
    const int ac = static_cast<int>(parse_int_strict(toks[2]));
    if (ar != depth || ac != depth) fail("a_delta shape does not match the layer count");
    cert.a_delta = Mat(ar, ac);
    for (int r = 0; r < ar; ++r) {
        toks = next();
        if (static_cast<int>(toks.size()) != ac) fail("a_delta row has wrong width");
        for (int c = 0; c < ac; ++c) cert.a_delta(r, c) = parse_double_strict(toks[c]);
    }
    toks = next();
    if (toks.size() != 2 || toks[0] != "b_delta_u") fail("expected b_delta_u header");
    if (static_cast<int>(parse_int_strict(toks[1])) != depth)
        fail("b_delta_u length does not match the layer count");
    toks = next();
    if (static_cast<int>(toks.size()) != depth) fail("b_delta_u row has wrong width");
    cert.b_delta_u = parse_vec_tokens(toks);
    toks = next();
    if (toks.size() != 2 || toks[0] != "schur_stable") fail("expected schur_stable");
    cert.schur_stable = parse_int_strict(toks[1]) != 0;
    toks = next();
    if (toks.size() != 2 || toks[0] != "delta_iss_input_gain")
        fail("expected delta_iss_input_gain");
    if (toks[1] != "unavailable") cert.delta_iss_input_gain = parse_double_strict(toks[1]);
    toks = next();
    if (toks != std::vector<std::string>{"end"}) fail("expected end marker");
    return cert;
}

void save_train_report(const TrainReport& report, const std::string& path) {
    std::ostringstream os;
    os << "# cfnid-train-report 1\n";
    os << "# best_epoch " << report.best_epoch << '\n';
    os << "# best_val_mse " << format_g17(report.best_val_mse) << '\n';
    os << "# columns epoch train_mse val_mse lr\n";
    for (const auto& row : report.epochs)
        os << row.epoch << '\t' << format_g17(row.train_mse) << '\t' << format_g17(row.val_mse)
           << '\t' << format_g17(row.lr) << '\n';
    write_file(path, os.str());
}

}  // namespace cfn
