#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "cfn/linalg.hpp"

// In-memory dataset model shared by training, benchmarking and I/O.

namespace cfn {

enum class Split { train, val, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

// One input/output trajectory. Rows are time steps.
struct Sequence {
    Mat u;  // T x n_u
    Mat y;  // T x n_y
    Split split = Split::train;
    std::string id;

    int length() const { return u.rows; }
};

// Per-channel affine ranges, recorded so physical units can be recovered.
// Data stored in a SequenceDataset is already normalized into [-1, 1] using
// these (train-split extrema).
struct Normalization {
    Vec u_lo, u_hi;  // one entry per input channel
    Vec y_lo, y_hi;  // one entry per output channel
};

struct SequenceDataset {
    std::vector<Sequence> sequences;
    Normalization norm;
    double sampling_time = 0.0;  // seconds

    std::vector<const Sequence*> by_split(Split s) const {
        std::vector<const Sequence*> out;
        for (const auto& seq : sequences)
            if (seq.split == s) out.push_back(&seq);
        return out;
    }
};

inline std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "unknown";
}

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw std::invalid_argument("unknown split '" + s + "'");
}

}  // namespace cfn
