#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cfn/training.hpp"

// Command-line surface. Every subcommand is also a plain function over a
// parsed-arguments struct so the behavior is testable in-process; run_cli
// only parses flags and dispatches.
//
// Exit codes: 0 success (and: certificate holds); 2 the stability
// certificate's sufficient condition failed (or a certified bound was
// violated empirically); 3 invalid arguments or inconsistent data;
// 4 file-system and format errors.

namespace cfn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitNotCertified = 2;
inline constexpr int kExitValidation = 3;
inline constexpr int kExitIo = 4;

struct GenDataArgs {
    std::string preset = "fourtank";
    std::string plant_config;  // optional key=value file overriding plant parameters
    uint64_t seed = 2;
    std::string out_dir = ".";
};

struct TrainArgs {
    std::string mode = "cfn";
    int layers = 0;  // 0: take the length of `hidden`
    std::vector<int> hidden;
    std::string data_dir;
    std::string out_model;
    std::string report_path;  // default: "<out_model>.report.tsv"
    TrainConfig cfg;          // seed and protocol overrides land here
    int log_every = 100;      // epochs between progress lines; 0 silences them
};

struct EvalArgs {
    std::string model_path;
    std::string data_dir;
    bool skip_washout = false;  // headline FIT skips the model's washout steps
    std::string trace_dir = ".";
};

struct CertifyArgs {
    std::string model_path;
    std::string report_path;  // optional machine-readable rendering
};

struct DivergeArgs {
    std::string model_path;
    int trials = 100;
    int horizon = 500;
    uint64_t seed = 1;
    std::string trace_dir = ".";
};

int cmd_gen_data(const GenDataArgs& args, std::ostream& out, std::ostream& err);
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_certify(const CertifyArgs& args, std::ostream& out, std::ostream& err);
int cmd_diverge(const DivergeArgs& args, std::ostream& out, std::ostream& err);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cfn
