#pragma once

// Synthetic grids and runs with known structure, used as test oracles and for
// exercising the pipeline without real training logs.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gridlex/core.hpp"
#include "gridlex/serialize.hpp"

namespace gridlex {

/// Seeded generator with a fixed algorithm: std::mt19937_64 (whose output
/// sequence the C++ standard pins), uniforms from the top 53 bits, and
/// normals by the Box-Muller transform taken in pairs. The standard library
/// distributions are avoided because their output is implementation-defined.
class SynthRng {
public:
    explicit SynthRng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1).
    double uniform();
    double normal(double mean = 0.0, double sd = 1.0);

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

struct SynthFactor {
    std::string name;
    /// Sum-to-zero effect per level; the level count is effects.size().
    std::vector<double> effects;
    /// Optional level labels; defaults to "0", "1", ...
    std::vector<std::string> labels;
};

struct SynthInteraction {
    std::string first;
    std::string second;
    /// table[i][j] for level i of `first` and j of `second`; every row and
    /// column sums to zero.
    std::vector<std::vector<double>> table;
};

struct SynthGridSpec {
    std::vector<SynthFactor> factors;
    std::vector<SynthInteraction> interactions;
    double grand_mean = 0.0;
    double noise_sd = 0.0;
    std::uint64_t seed = 0;
    std::string metric = "val_loss.ar";
};

struct SynthGrid {
    GridTable grid;
    /// Analytic decomposition: mains, listed interactions, and the expected
    /// noise contribution as residual.
    VarianceDecomposition ground_truth;
};

SynthGrid gen_grid(const SynthGridSpec& spec);

/// Loss curve l(R) = floor + A exp(-R / tau_sat) + B max(0, R - R*).
struct SynthRunSpec {
    std::string run_id = "synth-0";
    std::string scale = "150M";
    Paradigm paradigm = Paradigm::BilingualBasic;
    double weight_decay = 0.1;
    double learning_rate = 0.003;
    std::optional<int> r_max = 20;
    TokenCount d_lr = 200'000'000;

    double floor = 2.5;
    double amplitude = 1.0;
    double tau_sat = 4.0;
    double r_star = 10.0;
    double overfit_slope = 0.0;
    std::vector<double> schedule;

    double noise_sd = 0.0;
    std::uint64_t seed = 0;
    std::string language = "ar";
    /// Accuracy benchmark label; empty skips the accuracy series.
    std::string accuracy_metric;
    double accuracy_noise_sd = 0.0;
};

/// Noise-free loss at R.
double synth_loss(const SynthRunSpec& spec, double r);
/// Minimiser of the noise-free curve over R > 0.
double synth_loss_argmin(const SynthRunSpec& spec);

RunRecord gen_run(const SynthRunSpec& spec);

/// A family of runs across an HP x R_max grid. Each run's floor is raised by
/// a quadratic penalty in log-distance from the optimal (lambda, eta).
struct SynthRunsSpec {
    SynthRunSpec base;
    std::vector<double> weight_decays;
    std::vector<double> learning_rates;
    std::vector<int> r_max_values;
    double best_weight_decay = 0.1;
    double best_learning_rate = 0.003;
    double lambda_curvature = 0.01;
    double eta_curvature = 0.05;
    std::size_t checkpoints = 10;
};

std::vector<RunRecord> gen_runs(const SynthRunsSpec& spec);

SynthGridSpec synth_grid_spec_from_json(const Json& j);
SynthRunsSpec synth_runs_spec_from_json(const Json& j);

}  // namespace gridlex
