#pragma once

// Block-level aggregation of query-row attention.

#include <string>
#include <vector>

#include <Eigen/Core>

#include "attnbasin/dump_io.hpp"

namespace attnbasin {

enum class AggregationMode {
    token_mean,  // mean over stored rows and over the block's key tokens
    token_sum,   // mean over stored rows of the mass summed over the block's key tokens
};

enum class RowSelection {
    all_rows,  // uniform mean over every stored query row
    last_row,  // only the final stored row
};

struct BlockOptions {
    AggregationMode mode = AggregationMode::token_mean;
    RowSelection rows = RowSelection::all_rows;
};

struct BlockAttention {
    // [L, k]; column j is ORIGINAL document j (not its presentation slot).
    Eigen::MatrixXd values;
    // [L, S] over every declared span in header order (template, docs, query).
    Eigen::MatrixXd span_values;
    std::vector<std::string> span_labels;
    AggregationMode mode = AggregationMode::token_mean;
    std::string sample_id;
    std::vector<std::size_t> permutation;  // copied from the dump header

    Eigen::Index num_layers() const { return values.rows(); }
    Eigen::Index num_docs() const { return values.cols(); }
};

// Per-sample, per-layer attention keyed by presentation slot.
struct PositionStats {
    std::vector<Eigen::MatrixXd> samples;  // N entries of [L, k]
    AggregationMode mode = AggregationMode::token_mean;

    std::size_t num_samples() const { return samples.size(); }
    Eigen::Index num_layers() const { return samples.empty() ? 0 : samples.front().rows(); }
    Eigen::Index num_slots() const { return samples.empty() ? 0 : samples.front().cols(); }
};

BlockAttention block_attention(const AttentionDump& dump, const BlockOptions& options = {});

inline BlockAttention block_attention(const AttentionDump& dump, AggregationMode mode) {
    return block_attention(dump, BlockOptions{mode, RowSelection::all_rows});
}

// Mean of the selected layer rows. Throws on an empty or out-of-range selection.
Eigen::VectorXd cross_layer_mean(const BlockAttention& ba, const std::vector<Eigen::Index>& layers);
Eigen::VectorXd cross_layer_mean(const BlockAttention& ba);

// Reorders document columns into presentation slots: slot s holds the
// column of document permutation[s].
Eigen::MatrixXd to_slot_order(const Eigen::MatrixXd& by_document, const std::vector<std::size_t>& permutation);
Eigen::MatrixXd to_document_order(const Eigen::MatrixXd& by_slot, const std::vector<std::size_t>& permutation);

PositionStats collect_position_stats(const std::vector<BlockAttention>& blocks);

const char* aggregation_name(AggregationMode mode);
AggregationMode parse_aggregation(const std::string& name);

}  // namespace attnbasin
