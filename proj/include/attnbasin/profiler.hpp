#pragma once

// Positional attention profile: running mean of per-slot document attention
// over probe samples, with checkpointed convergence tracking.

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "attnbasin/block_stats.hpp"

namespace attnbasin {

// Which layer row of a BlockAttention feeds the profile. Default is the
// shallowest layer.
struct LayerSelection {
    bool cross_layer_mean = false;
    Eigen::Index layer = 0;

    static LayerSelection single(Eigen::Index l) { return {false, l}; }
    static LayerSelection all_layers() { return {true, 0}; }
    bool operator==(const LayerSelection&) const = default;
};

std::string layer_selection_name(const LayerSelection& sel);

// Slot-ordered scores for one sample under a layer selection.
Eigen::VectorXd slot_scores(const BlockAttention& ba, const LayerSelection& sel);

struct Checkpoint {
    std::size_t n = 0;
    Eigen::VectorXd running_mean;
};

struct ConvergencePoint {
    std::size_t n = 0;
    double delta = 0.0;  // L-infinity distance to the previous checkpoint's running mean
};

struct ProfileConfig {
    Eigen::Index k = 0;
    LayerSelection layer_selection{};
    AggregationMode mode = AggregationMode::token_mean;
    std::size_t checkpoint_every = 50;
    std::string model_id;
};

class ProfileAccumulator {
public:
    explicit ProfileAccumulator(ProfileConfig config);

    // Adds one slot-ordered score vector. Throws on a length mismatch.
    void accumulate(const Eigen::Ref<const Eigen::VectorXd>& doc_scores);

    // Sums and counts add. Checkpoint history is kept from *this unless it is
    // empty, in which case other's history is adopted.
    void merge(const ProfileAccumulator& other);

    const ProfileConfig& config() const { return config_; }
    const Eigen::VectorXd& sum() const { return sum_; }
    std::size_t count() const { return n_; }
    const std::vector<Checkpoint>& checkpoints() const { return checkpoints_; }

private:
    ProfileConfig config_;
    Eigen::VectorXd sum_;
    std::size_t n_ = 0;
    std::vector<Checkpoint> checkpoints_;
};

ProfileAccumulator merge(ProfileAccumulator a, const ProfileAccumulator& b);

struct ConvergenceResult {
    bool converged = false;
    std::optional<std::size_t> n_star;
};

// Converged at the first checkpoint that closes a run of `patience`
// consecutive inter-checkpoint deltas, each strictly below tau.
ConvergenceResult check_convergence(const ProfileAccumulator& acc, double tau, std::size_t patience);

struct AttentionProfile {
    Eigen::VectorXd scores;
    std::size_t n_samples = 0;
    LayerSelection layer_selection{};
    AggregationMode mode = AggregationMode::token_mean;
    std::vector<ConvergencePoint> convergence_history;
    std::string model_id;

    Eigen::Index k() const { return scores.size(); }
};

AttentionProfile finalize(const ProfileAccumulator& acc);

struct BasinReport {
    bool is_basin = false;
    double edge_min = 0.0;
    double middle_mean = 0.0;
    double depth = 0.0;
    Eigen::Index argmin_slot = 0;  // 0-based
};

BasinReport detect_basin(const Eigen::Ref<const Eigen::VectorXd>& scores);
inline BasinReport detect_basin(const AttentionProfile& profile) { return detect_basin(profile.scores); }

}  // namespace attnbasin
