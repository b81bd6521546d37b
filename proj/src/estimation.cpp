#include "fedmvt/estimation.hpp"

#include <cmath>

namespace fedmvt {

namespace {

constexpr double kMaskLogit = -1e9;

Tensor attention_weights(Tape& tape, const Tensor& queries, const Tensor& keys,
                         const EstimationOptions& opt) {
    if (queries.cols() != keys.cols())
        throw ShapeError("attention: query width " + queries.m.shape_str() + " vs key width " +
                         keys.m.shape_str());
    if (keys.rows() < 1) throw std::invalid_argument("attention: empty key set, no anchor rows available");
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
    Tensor logits = tape.scale(tape.matmul(queries, tape.transpose(keys)), inv_sqrt_d);
    if (!opt.self_rows.empty()) {
        if (static_cast<int>(opt.self_rows.size()) != logits.rows())
            throw ShapeError("attention: self_rows size does not match query count");
        Mat mask(logits.rows(), logits.cols());
        for (int i = 0; i < mask.rows; ++i) {
            int self = opt.self_rows[static_cast<size_t>(i)];
            if (self >= 0 && self < mask.cols) mask.at(i, self) = kMaskLogit;
        }
        logits = tape.add(logits, tape.constant(std::move(mask)));
    }
    return tape.softmax_rows(logits);
}

}  // namespace

Tensor full_representation(Tape& tape, const RepresentationPair& r) {
    return tape.concat_features(r.unique, r.shared);
}

Tensor estimate_shared(Tape& tape, const Tensor& queries, const Tensor& keys_values,
                       const EstimationOptions& opt) {
    return tape.matmul(attention_weights(tape, queries, keys_values, opt), keys_values);
}

Tensor estimate_unique(Tape& tape, const Tensor& queries, const Tensor& keys, const Tensor& values,
                       const EstimationOptions& opt) {
    if (keys.rows() != values.rows())
        throw ShapeError("estimate_unique: keys " + keys.m.shape_str() + " and values " +
                         values.m.shape_str() + " must be row-aligned");
    return tape.matmul(attention_weights(tape, queries, keys, opt), values);
}

RepresentationPair estimate_missing(Tape& tape, Party for_party, const RepresentationPair& source,
                                    const OverlapAnchors& anchors, const Tensor& shared_pool,
                                    const EstimationOptions& opt) {
    const Tensor& anchor_keys = (for_party == Party::A) ? anchors.b_unique : anchors.a_unique;
    const Tensor& anchor_values = (for_party == Party::A) ? anchors.a_unique : anchors.b_unique;
    RepresentationPair out;
    out.party = for_party;
    out.origin = ReprOrigin::Estimated;
    out.unique = estimate_unique(tape, source.unique, anchor_keys, anchor_values, opt);
    out.shared = estimate_shared(tape, source.shared, shared_pool, opt);
    return out;
}

Tensor overlap_distance_loss(Tape& tape, const Tensor& estimated, const Tensor& learned) {
    return tape.mean_sq_row_distance(estimated, learned);
}

}  // namespace fedmvt
