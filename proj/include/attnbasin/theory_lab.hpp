#pragma once

// Synthetic attention with a controllable basin, and numerical checks of the
// attention-to-probability monotonicity and placement results on TheoryModel.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "attnbasin/block_stats.hpp"
#include "attnbasin/dump_io.hpp"
#include "attnbasin/theory.hpp"

namespace attnbasin {

// Per layer l and slot p the document mass is max(0, f(p) + g(l) * sigma * eta)
// with f(p) = c + beta * ((2p - 1 - k) / (k - 1))^2 and eta ~ N(0, 1). The
// query span receives query_mass; the template span acts as the sink and takes
// whatever remains of the unit row. If docs plus query exceed 1 the row is
// divided by its total and the template gets nothing.
struct SyntheticBasinParams {
    Eigen::Index k = 5;
    Eigen::Index num_layers = 4;
    double f_base = 0.0625;
    double f_curvature = 0.125;
    double noise_scale = 0.0;
    std::vector<double> layer_noise_growth;  // g(l); empty means all ones
    std::size_t tokens_per_block = 8;
    std::size_t template_tokens = 4;
    std::size_t query_tokens = 4;
    double query_mass = 0.125;
    std::size_t num_heads = 1;
    HeadMode head_mode = HeadMode::mean;
    std::uint64_t seed = 0;
    std::string model_id = "synthetic-basin";

    double growth(Eigen::Index layer) const;
};

void validate_params(const SyntheticBasinParams& params);

// f(p) for p = 1..k, unnormalized.
Eigen::VectorXd positional_bias(const SyntheticBasinParams& params);

// One sample's masses for one head.
struct HeadMasses {
    Eigen::MatrixXd docs;          // [L, k] by presentation slot
    Eigen::VectorXd query;         // [L]
    Eigen::VectorXd template_sink; // [L]
};

// Heads of sample `index`, drawn from the stream seeded with seed + index.
std::vector<HeadMasses> draw_sample(const SyntheticBasinParams& params, std::size_t index);

// Head-averaged doc masses ([L, k], slot order, token_sum scale) for samples 0..n-1.
PositionStats generate_slot_samples(const SyntheticBasinParams& params, std::size_t n_samples);

// Materializes samples as dumps. permutations[i % size] is applied to sample i
// (identity when empty); the noise is tied to slots, not documents.
std::vector<AttentionDump> generate_synthetic_dumps(const SyntheticBasinParams& params, std::size_t n_samples,
                                                    const std::vector<std::vector<std::size_t>>& permutations = {});
AttentionDump make_synthetic_dump(const SyntheticBasinParams& params, std::size_t index,
                                  const std::vector<std::size_t>& permutation);

enum class KappaFamily {
    equal,          // one shared gain
    dominant,       // target gain >= every other gain
    unconstrained,  // independent gains; some trials fall outside the hypothesis
};

const char* kappa_family_name(KappaFamily family);

struct MonotonicityOptions {
    std::size_t trials = 1000;
    std::uint64_t seed = 0;
    KappaFamily family = KappaFamily::equal;
    Eigen::Index min_k = 3;
    Eigen::Index max_k = 8;
    Eigen::Index max_layers = 32;
    double hidden_noise = 0.0;  // Gaussian noise injected into h_last
};

struct MonotonicityReport {
    std::size_t trials = 0;
    std::size_t in_hypothesis = 0;
    std::size_t out_of_hypothesis = 0;
    std::size_t violations_positive = 0;   // (a) dP*/da* > 0
    std::size_t violations_nonpositive = 0; // (b) dP*/da_j <= 0
    std::size_t violations_dominance = 0;   // (c) dP*/da* > |dP*/da_j|, in-hypothesis only
    double min_dominance_ratio = 0.0;       // min over in-hypothesis trials of dP*/da* / max_j |dP*/da_j|

    std::size_t violations() const { return violations_positive + violations_nonpositive + violations_dominance; }
};

struct MonotonicityTrial {
    TheoryModeld model;
    Eigen::VectorXd alpha_bar;
    Eigen::Index target = 0;
};

// The randomized configuration for trial `index` (seed + index).
MonotonicityTrial monotonicity_trial(const MonotonicityOptions& options, std::size_t index);

MonotonicityReport verify_monotonicity(const MonotonicityOptions& options);

struct GradientCheckReport {
    std::size_t configs = 0;
    double step = 1e-5;
    double max_relative_error = 0.0;  // max over configs of ||g - fd||_inf / ||g||_inf
};

GradientCheckReport check_gradients(std::size_t configs, std::uint64_t seed, double step = 1e-5);

// Central finite-difference gradient of P(target) with respect to alpha_bar.
Eigen::VectorXd finite_difference_gradient(const TheoryModeld& model, const Eigen::VectorXd& alpha_bar,
                                           Eigen::Index target, double step);

// Mean P(answer of `target`) when that document is placed at each slot. The
// remaining documents fill the other slots in increasing index order. Trial t
// uses generator sample t for every placement.
Eigen::VectorXd placement_sweep(const TheoryModeld& model, const SyntheticBasinParams& params, Eigen::Index target,
                                std::size_t trials);

// Document attention under a placement: abar_doc[j] = slot_alpha[slot of j].
Eigen::VectorXd place_documents(const Eigen::VectorXd& slot_alpha, const std::vector<std::size_t>& permutation);

}  // namespace attnbasin
