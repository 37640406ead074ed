#include "attnbasin/block_stats.hpp"

#include "attnbasin/error.hpp"

namespace attnbasin {

namespace {

void check_permutation(const std::vector<std::size_t>& permutation, Eigen::Index k) {
    if (static_cast<Eigen::Index>(permutation.size()) != k) {
        throw InvalidArgument("permutation length " + std::to_string(permutation.size()) + " != k=" +
                              std::to_string(k));
    }
    std::vector<bool> seen(permutation.size(), false);
    for (std::size_t v : permutation) {
        if (v >= permutation.size() || seen[v]) throw InvalidArgument("permutation is not a permutation of 0..k-1");
        seen[v] = true;
    }
}

}  // namespace

const char* aggregation_name(AggregationMode mode) {
    return mode == AggregationMode::token_mean ? "token_mean" : "token_sum";
}

AggregationMode parse_aggregation(const std::string& name) {
    if (name == "token_mean") return AggregationMode::token_mean;
    if (name == "token_sum") return AggregationMode::token_sum;
    throw InvalidArgument("unknown aggregation mode '" + name + "'");
}

BlockAttention block_attention(const AttentionDump& dump, const BlockOptions& options) {
    const DumpHeader& h = dump.header;
    if (h.stored_rows.empty()) throw InvalidArgument("no query rows");
    if (dump.tensor.size() != h.tensor_size()) throw InvalidArgument("tensor size does not match header shape");
    const auto T = static_cast<std::int64_t>(h.num_tokens);
    for (const BlockSpan& s : h.spans) {
        if (s.start < 0 || s.end > T || s.start >= s.end) {
            throw InvalidArgument("span '" + s.label + "' is empty or outside [0," + std::to_string(T) + ")");
        }
    }
    const auto docs = h.doc_span_indices();
    if (docs.empty()) throw InvalidArgument("dump has no doc spans");
    check_permutation(h.permutation, static_cast<Eigen::Index>(docs.size()));

    const auto L = static_cast<Eigen::Index>(h.num_layers);
    const auto S = static_cast<Eigen::Index>(h.spans.size());
    const std::size_t H = h.stored_heads();
    const std::size_t first_row = options.rows == RowSelection::last_row ? h.num_rows() - 1 : 0;
    const std::size_t row_count = h.num_rows() - first_row;

    BlockAttention out;
    out.mode = options.mode;
    out.sample_id = h.sample_id;
    out.permutation = h.permutation;
    out.span_values = Eigen::MatrixXd::Zero(L, S);
    for (const BlockSpan& s : h.spans) out.span_labels.push_back(s.label);

    // Fixed reduction order: layer, then row, then key (heads averaged per key first).
    Eigen::RowVectorXd head_mean(static_cast<Eigen::Index>(h.num_tokens));
    for (Eigen::Index l = 0; l < L; ++l) {
        Eigen::RowVectorXd span_acc = Eigen::RowVectorXd::Zero(S);
        for (std::size_t r = first_row; r < h.num_rows(); ++r) {
            head_mean.setZero();
            for (std::size_t hd = 0; hd < H; ++hd) {
                head_mean += dump.rows(static_cast<std::size_t>(l), hd).row(static_cast<Eigen::Index>(r)).cast<double>();
            }
            head_mean /= static_cast<double>(H);
            for (Eigen::Index j = 0; j < S; ++j) {
                const BlockSpan& s = h.spans[static_cast<std::size_t>(j)];
                double mass = 0.0;
                for (std::int64_t key = s.start; key < s.end; ++key) mass += head_mean(key);
                span_acc(j) += mass;
            }
        }
        span_acc /= static_cast<double>(row_count);
        if (options.mode == AggregationMode::token_mean) {
            for (Eigen::Index j = 0; j < S; ++j) {
                span_acc(j) /= static_cast<double>(h.spans[static_cast<std::size_t>(j)].length());
            }
        }
        out.span_values.row(l) = span_acc;
    }

    Eigen::MatrixXd by_slot(L, static_cast<Eigen::Index>(docs.size()));
    for (std::size_t slot = 0; slot < docs.size(); ++slot) {
        by_slot.col(static_cast<Eigen::Index>(slot)) = out.span_values.col(static_cast<Eigen::Index>(docs[slot]));
    }
    out.values = to_document_order(by_slot, h.permutation);
    return out;
}

Eigen::VectorXd cross_layer_mean(const BlockAttention& ba, const std::vector<Eigen::Index>& layers) {
    if (layers.empty()) throw InvalidArgument("empty layer selection");
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(ba.num_docs());
    for (Eigen::Index l : layers) {
        if (l < 0 || l >= ba.num_layers()) {
            throw InvalidArgument("layer " + std::to_string(l) + " outside [0," + std::to_string(ba.num_layers()) + ")");
        }
        acc += ba.values.row(l).transpose();
    }
    return acc / static_cast<double>(layers.size());
}

Eigen::VectorXd cross_layer_mean(const BlockAttention& ba) {
    std::vector<Eigen::Index> all(static_cast<std::size_t>(ba.num_layers()));
    for (Eigen::Index l = 0; l < ba.num_layers(); ++l) all[static_cast<std::size_t>(l)] = l;
    return cross_layer_mean(ba, all);
}

Eigen::MatrixXd to_slot_order(const Eigen::MatrixXd& by_document, const std::vector<std::size_t>& permutation) {
    check_permutation(permutation, by_document.cols());
    Eigen::MatrixXd out(by_document.rows(), by_document.cols());
    for (std::size_t slot = 0; slot < permutation.size(); ++slot) {
        out.col(static_cast<Eigen::Index>(slot)) = by_document.col(static_cast<Eigen::Index>(permutation[slot]));
    }
    return out;
}

Eigen::MatrixXd to_document_order(const Eigen::MatrixXd& by_slot, const std::vector<std::size_t>& permutation) {
    check_permutation(permutation, by_slot.cols());
    Eigen::MatrixXd out(by_slot.rows(), by_slot.cols());
    for (std::size_t slot = 0; slot < permutation.size(); ++slot) {
        out.col(static_cast<Eigen::Index>(permutation[slot])) = by_slot.col(static_cast<Eigen::Index>(slot));
    }
    return out;
}

PositionStats collect_position_stats(const std::vector<BlockAttention>& blocks) {
    PositionStats stats;
    if (blocks.empty()) return stats;
    const BlockAttention& first = blocks.front();
    stats.mode = first.mode;
    stats.samples.reserve(blocks.size());
    for (const BlockAttention& b : blocks) {
        if (b.num_layers() != first.num_layers() || b.num_docs() != first.num_docs()) {
            throw InvalidArgument("sample '" + b.sample_id + "' has shape [" + std::to_string(b.num_layers()) + "," +
                                  std::to_string(b.num_docs()) + "], expected [" +
                                  std::to_string(first.num_layers()) + "," + std::to_string(first.num_docs()) + "]");
        }
        if (b.mode != first.mode) throw InvalidArgument("mixed aggregation modes across samples");
        stats.samples.push_back(to_slot_order(b.values, b.permutation));
    }
    return stats;
}

}  // namespace attnbasin
