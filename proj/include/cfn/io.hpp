#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfn/dataset.hpp"
#include "cfn/rnn.hpp"
#include "cfn/stability.hpp"
#include "cfn/training.hpp"

// Text artifact formats. Every floating-point value is written with 17
// significant digits so a save/load/save cycle is byte-identical, and no
// artifact embeds wall-clock state.

namespace cfn {

// File-level failures (open/read/write/parse of a named file). Kept distinct
// from std::invalid_argument so callers can map them to a dedicated exit code.
class IoError : public std::runtime_error {
  public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

std::string format_g17(double v);
// Strict full-string parse; throws IoError naming the offending token.
double parse_double_strict(const std::string& tok);

struct Provenance {
    uint64_t seed = 0;
    std::string config_digest = "none";
    int best_epoch = -1;
    int washout = 0;
};

// A trained (or hand-built) network together with everything needed to run
// it against physical data.
struct Model {
    NetworkParams net;
    Normalization norm;  // empty when the model was built outside the pipeline
    double sampling_time = 0.0;
    Provenance prov;
};

void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);

// Stable digest of the architecture and training configuration (FNV-1a over
// a canonical rendering); recorded in model provenance.
std::string config_digest(Mode mode, const std::vector<int>& hidden, const TrainConfig& cfg);

struct ChannelMeta {
    std::string name;
    std::string unit;
};

// One file per split: '#'-prefixed header (format version, split tag,
// sampling time, channel names/units/scales), then "sequence <id> <steps>"
// sections of tab-delimited u and y columns. Values are stored normalized;
// the header scales recover physical units.
void save_dataset_split(const SequenceDataset& ds, Split split, const std::string& path,
                        const std::vector<ChannelMeta>& u_meta = {},
                        const std::vector<ChannelMeta>& y_meta = {});
SequenceDataset load_dataset_file(const std::string& path);
// Loads train.tsv (required) plus val.tsv/test.tsv when present, checking
// that scales and sampling time agree across files.
SequenceDataset load_dataset_dir(const std::string& dir);

// Certificate renderings: a human table and a machine key/value form that
// parses back to an identical certificate.
std::string render_certificate_human(const NetworkCertificate& cert, Mode mode);
std::string render_certificate_machine(const NetworkCertificate& cert);
NetworkCertificate parse_certificate_machine(const std::string& text);

// Per-epoch training log: header comments with the selected epoch, then
// tab-delimited epoch/train_mse/val_mse/lr rows. Wall-clock time is not
// serialized.
void save_train_report(const TrainReport& report, const std::string& path);

}  // namespace cfn
