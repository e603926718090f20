#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cfn/dataset.hpp"
#include "cfn/linalg.hpp"

// Benchmark data pipeline: plant simulation, multilevel pseudo-random
// excitation, measurement noise, [-1,1] normalization from train-split
// extrema, and block-based windowing into train/val/test subsequences.

namespace cfn {

// Continuous-time plant with a direct output map. Implementations must keep
// the derivative finite on the admissible state box.
class PlantModel {
  public:
    virtual ~PlantModel() = default;
    virtual int state_dim() const = 0;
    virtual int input_dim() const = 0;
    virtual int output_dim() const = 0;
    virtual void derivative(const double* x, const double* u, double* dx) const = 0;
    virtual void output(const double* x, const double* u, double* y) const = 0;
    // Physical projection applied to the committed state after each step.
    virtual void clamp_state(double* x) const { (void)x; }
};

// Four interconnected tanks, two pumps, flow-split valves, Torricelli
// outflow. Laboratory parameter set in the minimum-phase configuration
// (both valve splits biased toward the lower tanks). Units: cm, s, V.
struct FourTankParams {
    double A1 = 28.0, A2 = 32.0, A3 = 28.0, A4 = 32.0;  // tank cross-sections, cm^2
    double a1 = 0.071, a2 = 0.057, a3 = 0.071, a4 = 0.057;  // outlet areas, cm^2
    double g = 981.0;           // cm/s^2
    double k1 = 3.33, k2 = 3.35;  // pump gains, cm^3/(V s)
    double gamma1 = 0.7, gamma2 = 0.6;  // valve flow splits
    double overflow_level = 20.0;       // cm; admissibility bound, not a clamp

    void check() const;
    void save(const std::string& path) const;      // key=value lines
    static FourTankParams load(const std::string& path);
};

class FourTankPlant : public PlantModel {
  public:
    explicit FourTankPlant(FourTankParams params = {});

    int state_dim() const override { return 4; }
    int input_dim() const override { return 2; }
    int output_dim() const override { return 1; }  // level of tank 1, cm
    void derivative(const double* x, const double* u, double* dx) const override;
    void output(const double* x, const double* u, double* y) const override;
    void clamp_state(double* x) const override;  // levels cannot be negative

    // Closed-form equilibrium levels for constant pump voltages: solving the
    // flow balance gives each level as (flow / outlet area)^2 / (2g).
    Vec steady_state(double v1, double v2) const;

    const FourTankParams& params() const { return p_; }

  private:
    FourTankParams p_;
};

struct MprsConfig {
    int num_levels = 5;
    // Per input channel [lo, hi]; levels are equispaced across the range.
    std::vector<std::pair<double, double>> level_range;
    int hold_min = 20, hold_max = 100;  // steps
    uint64_t seed = 0;

    void check() const;
};

// Piecewise-constant excitation: per channel, repeatedly draw one of the
// equispaced levels and a hold duration, until `length` steps are covered.
// Channels use independent derived streams.
Mat mprs_generate(const MprsConfig& cfg, int length);

struct PlantTrajectory {
    Mat x;  // T x n_x, state at each sampling instant (before that step's hold)
    Mat y;  // T x n_y, output at each sampling instant
};

// Fixed-step 4th-order Runge-Kutta with zero-order-hold inputs. Throws
// std::runtime_error naming the step if the state leaves the finite range.
PlantTrajectory simulate_plant(const PlantModel& plant, const Vec& x0, const Mat& u_seq,
                               double dt);

// Additive white Gaussian measurement noise, per channel, with variance =
// (mean-removed signal power) / snr_power_ratio. An infinite ratio returns
// the input unchanged. Deterministic given the seed.
Mat add_output_noise(const Mat& y, double snr_power_ratio, uint64_t seed);

inline double normalize_value(double x, double lo, double hi) {
    return 2.0 * (x - lo) / (hi - lo) - 1.0;
}
inline double denormalize_value(double xn, double lo, double hi) {
    return lo + (xn + 1.0) * (hi - lo) / 2.0;
}

// Computes per-channel extrema over the train split and affinely maps every
// sequence of every split into [-1,1] in place. Values of other splits may
// land slightly outside; each such channel is reported in `warnings`.
// A constant train channel is a hard error.
void normalize_dataset(SequenceDataset& ds, std::vector<std::string>* warnings = nullptr);

// Splits one long trajectory into `block_count` contiguous blocks, randomly
// assigns blocks to train/val, merges adjacent same-split blocks into runs,
// and cuts each run into windows of `window` steps with stride
// window*(1 - overlap_fraction). Windows never span a split boundary.
// The returned dataset is in raw units (normalize_dataset comes after).
SequenceDataset window_and_split(const Mat& u, const Mat& y, int block_count,
                                 double train_fraction, int window, double overlap_fraction,
                                 uint64_t seed);

// Stage streams derived from one master seed; recorded in run manifests.
struct PipelineSeeds {
    uint64_t excitation_train = 0;
    uint64_t noise_train = 0;
    uint64_t excitation_test = 0;
    uint64_t noise_test = 0;
    uint64_t block_assignment = 0;
};

PipelineSeeds pipeline_seeds(uint64_t master);

struct PipelineConfig {
    int train_steps = 25000;
    int test_steps = 5000;
    double dt = 15.0;
    int blocks = 10;
    double train_fraction = 0.8;
    int window = 500;
    double overlap_fraction = 0.5;
    double snr_power_ratio = 100.0;  // +inf disables noise
    MprsConfig mprs;  // its seed field is ignored; streams derive from the master seed
    Vec x0;           // initial plant state for both trajectories
};

// End-to-end: excitation -> plant -> output noise -> windowing/splits ->
// normalization. The test trajectory is excited independently and becomes a
// single unwindowed sequence.
SequenceDataset build_dataset(const PlantModel& plant, const PipelineConfig& cfg, uint64_t seed,
                              std::vector<std::string>* warnings = nullptr);

// The quadruple-tank benchmark recipe: 25000-step excitation at dt = 15 s,
// five levels per pump on [2.0, 3.3] V, holds of 20..100 steps, SNR 100
// output noise, 10 blocks with an 80/20 split, 500-step windows with 50%
// overlap, plus an independent 5000-step test trajectory. The plant starts
// at the steady state for the mid-range input.
PipelineConfig fourtank_pipeline_defaults(const FourTankParams& params = {});

SequenceDataset build_fourtank_dataset(uint64_t seed,
                                       std::vector<std::string>* warnings = nullptr);

}  // namespace cfn
