#include "fedmvt/federation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "fedmvt/rng.hpp"

namespace fedmvt {

namespace {

std::vector<int> iota_vec(int begin, int end) {
    std::vector<int> v(static_cast<size_t>(end - begin));
    std::iota(v.begin(), v.end(), begin);
    return v;
}

Mat vstack(const Mat& a, const Mat& b) {
    if (a.rows == 0) return b;
    if (b.rows == 0) return a;
    if (a.cols != b.cols) throw ShapeError("vstack: " + a.shape_str() + " vs " + b.shape_str());
    Mat out(a.rows + b.rows, a.cols);
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
    return out;
}

Mat hstack(const Mat& a, const Mat& b) {
    if (a.rows != b.rows) throw ShapeError("hstack: " + a.shape_str() + " vs " + b.shape_str());
    Mat out(a.rows, a.cols + b.cols);
    for (int r = 0; r < a.rows; ++r) {
        std::copy_n(a.row_ptr(r), a.cols, out.row_ptr(r));
        std::copy_n(b.row_ptr(r), b.cols, out.row_ptr(r) + a.cols);
    }
    return out;
}

Mat slice_rows(const Mat& m, int begin, int count) {
    Mat out(count, m.cols);
    if (count > 0) std::copy_n(m.row_ptr(begin), static_cast<size_t>(count) * m.cols, out.v.data());
    return out;
}

void put_u8(std::vector<uint8_t>& out, uint8_t v) { out.push_back(v); }
void put_i32(std::vector<uint8_t>& out, int32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((static_cast<uint32_t>(v) >> (8 * i)) & 0xff));
}
void put_f64(std::vector<uint8_t>& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((bits >> (8 * i)) & 0xff));
}

int32_t get_i32(const std::vector<uint8_t>& in, size_t& pos) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(in.at(pos++)) << (8 * i);
    return static_cast<int32_t>(v);
}
double get_f64(const std::vector<uint8_t>& in, size_t& pos) {
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(in.at(pos++)) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

const char* to_string(MsgKind k) {
    switch (k) {
        case MsgKind::ReprForward: return "ReprForward";
        case MsgKind::GradBackward: return "GradBackward";
        case MsgKind::LossScalarReport: return "LossScalarReport";
    }
    return "Unknown";
}

const char* to_string(Direction d) { return d == Direction::AtoB ? "AtoB" : "BtoA"; }

std::vector<uint8_t> encode_message(const BoundaryMessage& msg) {
    std::vector<uint8_t> out;
    out.reserve(14 + msg.payload.v.size() * 8);
    put_u8(out, static_cast<uint8_t>(msg.kind));
    put_u8(out, static_cast<uint8_t>(msg.direction));
    put_i32(out, msg.step);
    put_i32(out, msg.payload.rows);
    put_i32(out, msg.payload.cols);
    for (double x : msg.payload.v) put_f64(out, x);
    return out;
}

BoundaryMessage decode_message(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 14) throw std::invalid_argument("decode_message: truncated header");
    size_t pos = 0;
    BoundaryMessage msg;
    msg.kind = static_cast<MsgKind>(bytes[pos++]);
    msg.direction = static_cast<Direction>(bytes[pos++]);
    msg.step = get_i32(bytes, pos);
    int rows = get_i32(bytes, pos);
    int cols = get_i32(bytes, pos);
    if (rows < 0 || cols < 0 || bytes.size() != 14 + static_cast<size_t>(rows) * cols * 8)
        throw std::invalid_argument("decode_message: payload size mismatch");
    msg.payload = Mat(rows, cols);
    for (double& x : msg.payload.v) x = get_f64(bytes, pos);
    return msg;
}

uint64_t fingerprint_bytes(const void* data, size_t len) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    uint64_t h = 14695981039346656037ULL;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

uint64_t fingerprint_mat(const Mat& m) {
    return fingerprint_bytes(m.v.data(), m.v.size() * sizeof(double));
}

Mat BoundaryChannel::send(int step, Direction dir, MsgKind kind, const Mat& payload) {
    ledger_.append(LedgerEntry{step, dir, kind, payload.rows, payload.cols, fingerprint_mat(payload)});
    return payload;
}

void FingerprintRegistry::record_feature_rows(const Mat& features) {
    feature_rows.insert(fingerprint_mat(features));
    for (int r = 0; r < features.rows; ++r)
        feature_rows.insert(fingerprint_bytes(features.row_ptr(r), static_cast<size_t>(features.cols) * sizeof(double)));
}

void FingerprintRegistry::record_parameters(const std::vector<Tensor*>& params) {
    for (const Tensor* p : params) parameter_mats.insert(fingerprint_mat(p->m));
}

AuditReport audit_ledger(const BoundaryLedger& ledger, const FingerprintRegistry& registry) {
    AuditReport report;
    report.messages_checked = ledger.size();
    for (size_t i = 0; i < ledger.entries().size(); ++i) {
        const LedgerEntry& e = ledger.entries()[i];
        if (e.kind != MsgKind::ReprForward && e.kind != MsgKind::GradBackward &&
            e.kind != MsgKind::LossScalarReport)
            report.violations.push_back({i, e.step, "unknown message kind"});
        if (registry.feature_rows.count(e.fingerprint))
            report.violations.push_back({i, e.step, "payload matches a raw feature row"});
        if (registry.parameter_mats.count(e.fingerprint))
            report.violations.push_back({i, e.step, "payload matches a model parameter matrix"});
    }
    report.pass = report.violations.empty();
    return report;
}

std::string AuditReport::summary() const {
    if (pass) return "PASS (" + std::to_string(messages_checked) + " messages)";
    std::string s = "FAIL:";
    for (const AuditViolation& v : violations)
        s += " [step " + std::to_string(v.step) + ": " + v.reason + "]";
    return s;
}

std::vector<Tensor*> PartyA::params() {
    std::vector<Tensor*> out = h_u.params();
    auto add = [&](std::vector<Tensor*> more) { out.insert(out.end(), more.begin(), more.end()); };
    add(h_c.params());
    add(f_a.params());
    add(f_ab.params());
    return out;
}

std::vector<Tensor*> PartyB::params() {
    std::vector<Tensor*> out = h_u.params();
    auto add = [&](std::vector<Tensor*> more) { out.insert(out.end(), more.begin(), more.end()); };
    add(h_c.params());
    add(f_b.params());
    return out;
}

Models Models::init(const ModelConfig& cfg, uint64_t seed) {
    if (cfg.features_a < 1 || cfg.features_b < 1 || cfg.classes < 2 || cfg.hidden_units < 1 ||
        cfg.rep_dim_a < 1 || cfg.rep_dim_b < 1)
        throw std::invalid_argument("ModelConfig: widths must be positive and classes >= 2");
    Models m;
    m.config = cfg;
    m.a.h_u = RepresentationNet(cfg.features_a, cfg.hidden_units, cfg.rep_dim_a);
    m.a.h_c = RepresentationNet(cfg.features_a, cfg.hidden_units, cfg.rep_dim_a);
    m.a.f_a = SoftmaxClassifier(2 * cfg.rep_dim_a, cfg.classes);
    m.a.f_ab = SoftmaxClassifier(2 * cfg.rep_dim_a + 2 * cfg.rep_dim_b, cfg.classes);
    m.b.h_u = RepresentationNet(cfg.features_b, cfg.hidden_units, cfg.rep_dim_b);
    m.b.h_c = RepresentationNet(cfg.features_b, cfg.hidden_units, cfg.rep_dim_b);
    m.b.f_b = SoftmaxClassifier(2 * cfg.rep_dim_b, cfg.classes);
    init_params(m.a.h_u, mix_seed(seed, 10));
    init_params(m.a.h_c, mix_seed(seed, 11));
    init_params(m.a.f_a, mix_seed(seed, 12));
    init_params(m.a.f_ab, mix_seed(seed, 13));
    init_params(m.b.h_u, mix_seed(seed, 20));
    init_params(m.b.h_c, mix_seed(seed, 21));
    init_params(m.b.f_b, mix_seed(seed, 22));
    return m;
}

std::vector<Tensor*> Models::all_params() {
    std::vector<Tensor*> out = a.params();
    std::vector<Tensor*> pb = b.params();
    out.insert(out.end(), pb.begin(), pb.end());
    return out;
}

void TrainOptions::validate() const {
    if (epochs < 0) throw std::invalid_argument("TrainOptions: epochs must be >= 0");
    if (!(lr > 0.0)) throw std::invalid_argument("TrainOptions: lr must be positive");
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw std::invalid_argument("TrainOptions: threshold must be in (0,1]");
    if (batch_ol < 1 || batch_a < 1 || batch_b < 1)
        throw std::invalid_argument("TrainOptions: batch sizes must be >= 1");
    weights.validate();
}

// ---------------------------------------------------------------------------
// Step engine
// ---------------------------------------------------------------------------

namespace {

// One cross-boundary tensor: source node on the producing tape, leaf on the
// consuming tape. Gradients retrace these edges in reverse.
struct Crossing {
    Tape* src_tape;
    NodeId src;
    Tape* dst_tape;
    NodeId dst;
    Direction grad_dir;
};

struct StepLink {
    Tape* tape_a;
    Tape* tape_b;
    bool split;
    BoundaryChannel* chan;
    int step;
    std::vector<Crossing> crossings;

    Tensor b_to_a(const Tensor& t, MsgKind kind) {
        if (!split) return t;
        Mat wire = chan->send(step, Direction::BtoA, kind, t.m);
        Tensor leaf = tape_a->leaf(std::move(wire), true);
        crossings.push_back({tape_b, t.node, tape_a, leaf.node, Direction::AtoB});
        return leaf;
    }

    Tensor a_to_b(const Tensor& t, MsgKind kind) {
        if (!split) return t;
        Mat wire = chan->send(step, Direction::AtoB, kind, t.m);
        Tensor leaf = tape_b->leaf(std::move(wire), true);
        crossings.push_back({tape_a, t.node, tape_b, leaf.node, Direction::BtoA});
        return leaf;
    }

    void report_loss(double total) {
        if (!split) return;
        Mat scalar(1, 1);
        scalar.v[0] = total;
        chan->send(step, Direction::AtoB, MsgKind::LossScalarReport, scalar);
    }

    // Reverse sweep across both tapes. Crossings are unwound newest-first;
    // each dst tape is swept down to the crossing leaf so its gradient is
    // final before it ships back to the source tape.
    void backward(const Tensor& loss) {
        if (!split) {
            tape_a->backward(loss);
            return;
        }
        if (loss.rows() != 1 || loss.cols() != 1)
            throw ShapeError("backward: loss must be [1x1], got " + loss.m.shape_str());
        Mat one(1, 1);
        one.v[0] = 1.0;
        tape_a->seed_gradient(loss.node, one);
        for (auto it = crossings.rbegin(); it != crossings.rend(); ++it) {
            it->dst_tape->sweep_down_to(it->dst);
            Mat g = it->dst_tape->grad(it->dst);
            Mat wire = chan->send(step, it->grad_dir, MsgKind::GradBackward, g);
            it->src_tape->seed_gradient(it->src, wire);
        }
        tape_a->finish_backward();
        tape_b->finish_backward();
    }
};

LossReport mean_reports(const std::vector<LossReport>& reports) {
    LossReport mean;
    if (reports.empty()) return mean;
    for (const LossReport& r : reports) {
        mean.total += r.total;
        mean.fed += r.fed;
        mean.local_a += r.local_a;
        mean.local_b += r.local_b;
        mean.dist_ab += r.dist_ab;
        mean.orth_a += r.orth_a;
        mean.orth_b += r.orth_b;
        mean.dist_a += r.dist_a;
        mean.dist_b += r.dist_b;
        mean.pseudo_selected += r.pseudo_selected;
        mean.pseudo_candidates += r.pseudo_candidates;
        mean.fed_present = mean.fed_present || r.fed_present;
        mean.local_a_present = mean.local_a_present || r.local_a_present;
        mean.local_b_present = mean.local_b_present || r.local_b_present;
        mean.dist_ab_present = mean.dist_ab_present || r.dist_ab_present;
        mean.orth_a_present = mean.orth_a_present || r.orth_a_present;
        mean.orth_b_present = mean.orth_b_present || r.orth_b_present;
        mean.dist_a_present = mean.dist_a_present || r.dist_a_present;
        mean.dist_b_present = mean.dist_b_present || r.dist_b_present;
    }
    const double n = static_cast<double>(reports.size());
    mean.total /= n;
    mean.fed /= n;
    mean.local_a /= n;
    mean.local_b /= n;
    mean.dist_ab /= n;
    mean.orth_a /= n;
    mean.orth_b /= n;
    mean.dist_a /= n;
    mean.dist_b /= n;
    return mean;
}

}  // namespace

FederatedStepper::FederatedStepper(Models& models, const VerticalDataset& dataset,
                                   const TrainOptions& opts, Variant variant)
    : models_(models), ds_(dataset), opts_(opts), variant_(variant) {
    opts_.validate();
    if (ds_.n_overlap() == 0)
        throw std::invalid_argument("federated training requires overlap samples (estimation anchors)");
    if (variant_ == Variant::FedMvt && models_.config.rep_dim_a != models_.config.rep_dim_b)
        throw std::invalid_argument(
            "FedMVT requires rep_dim_a == rep_dim_b: shared-space alignment and attention take inner "
            "products across parties");
    for (size_t i = 0; i < ds_.overlap_pairs.size(); ++i)
        ol_pos_of_a_row_[ds_.overlap_pairs[i].first] = static_cast<int>(i);
    registry_.record_feature_rows(ds_.features_a);
    registry_.record_feature_rows(ds_.features_b);
    registry_.record_parameters(models_.all_params());
}

StepResult FederatedStepper::run_step(const TriBatch& batch, int step, bool capture_gradients) {
    const bool fedmvt = variant_ == Variant::FedMvt;
    const bool split = opts_.mode == FederationMode::Split;
    const bool full_pool = fedmvt && opts_.pool == AttentionPoolScope::FullDataset;
    const LossWeights& w = opts_.weights;

    const int n_ol = batch.ol_xa.rows;
    if (n_ol == 0) throw std::invalid_argument("run_step: batch has no overlap rows");
    const int n_anl = fedmvt ? batch.a_xa.rows : 0;
    const int n_bnl = fedmvt ? batch.b_xb.rows : 0;

    Tape tape_a;
    Tape tape_b_split;
    Tape& tape_b = split ? tape_b_split : tape_a;
    StepLink link{&tape_a, &tape_b, split, &channel_, step, {}};

    // --- Party B: representation forward -----------------------------------
    Mat xb_in;
    std::vector<int> rows_b_ol, rows_b_nl;
    if (full_pool) {
        xb_in = ds_.features_b;
        rows_b_ol = batch.ol_rows_b;
        rows_b_nl = batch.b_rows;
    } else {
        xb_in = vstack(batch.ol_xb, batch.b_xb);
        rows_b_ol = iota_vec(0, n_ol);
        rows_b_nl = iota_vec(n_ol, n_ol + n_bnl);
    }
    Tensor rb_u_src = forward_net(tape_b, models_.b.h_u, tape_b.constant(xb_in));
    Tensor rb_c_src = forward_net(tape_b, models_.b.h_c, tape_b.constant(xb_in));

    // --- Party A: representation forward + received B representations ------
    Mat xa_in;
    std::vector<int> rows_a_ol, rows_a_nl;
    if (full_pool) {
        xa_in = ds_.features_a;
        rows_a_ol = batch.ol_rows_a;
        rows_a_nl = batch.a_rows;
    } else {
        xa_in = vstack(batch.ol_xa, batch.a_xa);
        rows_a_ol = iota_vec(0, n_ol);
        rows_a_nl = iota_vec(n_ol, n_ol + n_anl);
    }
    Tensor ra_u_all = forward_net(tape_a, models_.a.h_u, tape_a.constant(xa_in));
    Tensor ra_c_all = forward_net(tape_a, models_.a.h_c, tape_a.constant(xa_in));

    Tensor rb_u = link.b_to_a(rb_u_src, MsgKind::ReprForward);
    Tensor rb_c = link.b_to_a(rb_c_src, MsgKind::ReprForward);

    Tensor ra_u_ol = tape_a.gather_rows(ra_u_all, rows_a_ol);
    Tensor ra_c_ol = tape_a.gather_rows(ra_c_all, rows_a_ol);
    Tensor rb_u_ol = tape_a.gather_rows(rb_u, rows_b_ol);
    Tensor rb_c_ol = tape_a.gather_rows(rb_c, rows_b_ol);
    Tensor ra_ol_full = tape_a.concat_features(ra_u_ol, ra_c_ol);
    Tensor rb_ol_full = tape_a.concat_features(rb_u_ol, rb_c_ol);

    // Anchors for the unique-path estimators: index-aligned overlap rows.
    Tensor anchor_a_u = ra_u_ol;
    Tensor anchor_b_u = rb_u_ol;
    std::vector<int> anchor_pos;  // query row -> anchor row, for self-exclusion
    if (fedmvt) {
        if (full_pool) {
            std::vector<int> rows_a_anchor, rows_b_anchor;
            for (auto [ia, ib] : ds_.overlap_pairs) {
                rows_a_anchor.push_back(ia);
                rows_b_anchor.push_back(ib);
            }
            anchor_a_u = tape_a.gather_rows(ra_u_all, rows_a_anchor);
            anchor_b_u = tape_a.gather_rows(rb_u, rows_b_anchor);
            for (int r : batch.ol_rows_a) anchor_pos.push_back(ol_pos_of_a_row_.at(r));
        } else {
            anchor_pos = iota_vec(0, n_ol);
        }
    }

    // --- Estimation ---------------------------------------------------------
    Tensor ra_tilde_nl_full;  // estimated A side of B's unlabeled rows
    Tensor rb_tilde_nl_full;  // estimated B side of A's labeled nl rows
    LossComponents parts;

    if (fedmvt && n_bnl > 0) {
        RepresentationPair source;
        source.party = Party::B;
        source.unique = tape_a.gather_rows(rb_u, rows_b_nl);
        source.shared = tape_a.gather_rows(rb_c, rows_b_nl);
        RepresentationPair est = estimate_missing(tape_a, Party::A, source,
                                                  OverlapAnchors{anchor_a_u, anchor_b_u}, ra_c_all);
        ra_tilde_nl_full = full_representation(tape_a, est);
    }
    if (fedmvt && n_anl > 0) {
        RepresentationPair source;
        source.party = Party::A;
        source.unique = tape_a.gather_rows(ra_u_all, rows_a_nl);
        source.shared = tape_a.gather_rows(ra_c_all, rows_a_nl);
        RepresentationPair est = estimate_missing(tape_a, Party::B, source,
                                                  OverlapAnchors{anchor_a_u, anchor_b_u}, rb_c);
        rb_tilde_nl_full = full_representation(tape_a, est);
    }
    if (fedmvt && w.lambda1 > 0.0) {
        EstimationOptions opt_u, opt_c;
        if (opts_.exclude_self) {
            opt_u.self_rows = anchor_pos;
            opt_c.self_rows = rows_a_ol;
        }
        Tensor est_u = estimate_unique(tape_a, rb_u_ol, anchor_b_u, anchor_a_u, opt_u);
        Tensor est_c = estimate_shared(tape_a, rb_c_ol, ra_c_all, opt_c);
        parts.dist_a = overlap_distance_loss(tape_a, tape_a.concat_features(est_u, est_c), ra_ol_full);
    }
    if (fedmvt && w.lambda2 > 0.0) {
        EstimationOptions opt_u, opt_c;
        if (opts_.exclude_self) {
            opt_u.self_rows = anchor_pos;
            opt_c.self_rows = rows_b_ol;
        }
        Tensor est_u = estimate_unique(tape_a, ra_u_ol, anchor_a_u, anchor_b_u, opt_u);
        Tensor est_c = estimate_shared(tape_a, ra_c_ol, rb_c, opt_c);
        parts.dist_b = overlap_distance_loss(tape_a, tape_a.concat_features(est_u, est_c), rb_ol_full);
    }

    // --- f^B forward at party B --------------------------------------------
    // Stack layout [ol ; a_nl(estimated B side) ; b_nl], mirrored on both
    // sides so gather offsets agree without extra coordination.
    Tensor rb_u_ol_b = tape_b.gather_rows(rb_u_src, rows_b_ol);
    Tensor rb_c_ol_b = tape_b.gather_rows(rb_c_src, rows_b_ol);
    std::vector<Tensor> fb_parts{tape_b.concat_features(rb_u_ol_b, rb_c_ol_b)};
    if (fedmvt && n_anl > 0)
        fb_parts.push_back(link.a_to_b(rb_tilde_nl_full, MsgKind::ReprForward));
    if (fedmvt && n_bnl > 0) {
        Tensor rb_u_nl_b = tape_b.gather_rows(rb_u_src, rows_b_nl);
        Tensor rb_c_nl_b = tape_b.gather_rows(rb_c_src, rows_b_nl);
        fb_parts.push_back(tape_b.concat_features(rb_u_nl_b, rb_c_nl_b));
    }
    Tensor fb_input = fb_parts.size() == 1 ? fb_parts[0] : tape_b.concat_samples(fb_parts);
    Tensor fb_probs_src = forward_classifier(tape_b, models_.b.f_b, fb_input);
    Tensor fb_probs = link.b_to_a(fb_probs_src, MsgKind::ReprForward);

    // --- Pseudo-label candidates and selection (values only, no gradients) --
    Selection sel;
    const int off_bnl = n_ol + n_anl;
    if (fedmvt && n_bnl > 0) {
        Mat rb_nl_vals = hstack(gather_mat_rows(rb_u.m, rows_b_nl), gather_mat_rows(rb_c.m, rows_b_nl));
        Mat fb_bnl = slice_rows(fb_probs.m, off_bnl, n_bnl);
        PseudoCandidates cands = candidate_labels_with_fb(models_.a.f_a, models_.a.f_ab,
                                                          ra_tilde_nl_full.m, rb_nl_vals, fb_bnl);
        sel = select(cands, opts_.threshold, opts_.rule);
    }

    // --- Enlarged training set ----------------------------------------------
    TrainingSetParts chi_parts;
    chi_parts.ol_b = rb_ol_full;
    chi_parts.ol_a = ra_ol_full;
    chi_parts.ol_labels = batch.ol_ya;
    if (fedmvt && n_anl > 0) {
        chi_parts.anl_b_est = rb_tilde_nl_full;
        chi_parts.anl_a = tape_a.concat_features(tape_a.gather_rows(ra_u_all, rows_a_nl),
                                                 tape_a.gather_rows(ra_c_all, rows_a_nl));
        chi_parts.anl_labels = batch.a_ya;
    }
    if (fedmvt && n_bnl > 0) {
        chi_parts.bnl_b = tape_a.concat_features(tape_a.gather_rows(rb_u, rows_b_nl),
                                                 tape_a.gather_rows(rb_c, rows_b_nl));
        chi_parts.bnl_a_est = ra_tilde_nl_full;
    }
    EnlargedTrainingSet chi = build_training_sets(tape_a, chi_parts, sel);

    // --- Classifier losses ---------------------------------------------------
    parts.fed = loss_classifier(tape_a, models_.a.f_ab, chi_full_input(tape_a, chi),
                                tape_a.constant(chi.labels));
    const int n_labeled = chi.n_ol + chi.n_a_nl;
    if (opts_.pseudo_in_local_sets || chi.n_pseudo == 0) {
        parts.local_a = loss_classifier(tape_a, models_.a.f_a, chi.a_side, tape_a.constant(chi.labels));
    } else {
        parts.local_a = loss_classifier(tape_a, models_.a.f_a,
                                        tape_a.gather_rows(chi.a_side, iota_vec(0, n_labeled)),
                                        tape_a.constant(slice_rows(chi.labels, 0, n_labeled)));
    }
    {
        std::vector<int> fb_rows = iota_vec(0, n_ol);
        Mat fb_labels = batch.ol_ya;
        if (fedmvt && n_anl > 0) {
            for (int i : iota_vec(n_ol, n_ol + n_anl)) fb_rows.push_back(i);
            fb_labels = vstack(fb_labels, batch.a_ya);
        }
        if (fedmvt && chi.n_pseudo > 0 && opts_.pseudo_in_local_sets) {
            for (int i : sel.indices) fb_rows.push_back(off_bnl + i);
            fb_labels = vstack(fb_labels, sel.labels);
        }
        parts.local_b = tape_a.cross_entropy_mean(tape_a.gather_rows(fb_probs, fb_rows),
                                                  tape_a.constant(fb_labels));
    }

    // --- Representation-structure losses -------------------------------------
    if (fedmvt && w.lambda3 > 0.0) parts.dist_ab = loss_shared_alignment(tape_a, ra_c_ol, rb_c_ol);
    if (fedmvt && w.lambda4 > 0.0) parts.orth_a = loss_orthogonality(tape_a, ra_u_all, ra_c_all, opts_.orth);
    if (fedmvt && w.lambda5 > 0.0) parts.orth_b = loss_orthogonality(tape_a, rb_u, rb_c, opts_.orth);

    auto [total, report] = total_objective(tape_a, parts, w);
    report.pseudo_selected = static_cast<int>(sel.indices.size());
    report.pseudo_candidates = fedmvt ? n_bnl : 0;

    link.report_loss(report.total);
    link.backward(total);

    GradMap grads_a = tape_a.leaf_gradients();
    GradMap grads_b = split ? tape_b.leaf_gradients() : grads_a;

    StepResult result;
    result.report = report;
    if (capture_gradients) {
        for (Tensor* p : models_.a.params()) result.param_grads.push_back(grads_a.at(p->node));
        for (Tensor* p : models_.b.params()) result.param_grads.push_back(grads_b.at(p->node));
    }
    sgd_step(models_.a.params(), grads_a, opts_.lr);
    sgd_step(models_.b.params(), grads_b, opts_.lr);
    registry_.record_parameters(models_.all_params());
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation and trainers
// ---------------------------------------------------------------------------

HeadAccuracy evaluate(Models& models, const EvalSplit& split) {
    if (split.labels.rows == 0) throw std::invalid_argument("evaluate: empty test split");
    if (split.features_a.rows != split.labels.rows || split.features_b.rows != split.labels.rows)
        throw std::invalid_argument("evaluate: feature/label row mismatch");
    Tape tape;
    Tensor ra = tape.concat_features(forward_net(tape, models.a.h_u, tape.constant(split.features_a)),
                                     forward_net(tape, models.a.h_c, tape.constant(split.features_a)));
    Tensor rb = tape.concat_features(forward_net(tape, models.b.h_u, tape.constant(split.features_b)),
                                     forward_net(tape, models.b.h_c, tape.constant(split.features_b)));
    Tensor pa = forward_classifier(tape, models.a.f_a, ra);
    Tensor pb = forward_classifier(tape, models.b.f_b, rb);
    Tensor pab = forward_classifier(tape, models.a.f_ab, tape.concat_features(rb, ra));

    auto accuracy = [&](const Mat& probs) {
        int hits = 0;
        for (int r = 0; r < probs.rows; ++r) {
            int pred = 0, truth = 0;
            for (int c = 1; c < probs.cols; ++c)
                if (probs.at(r, c) > probs.at(r, pred)) pred = c;
            for (int c = 1; c < split.labels.cols; ++c)
                if (split.labels.at(r, c) > split.labels.at(r, truth)) truth = c;
            if (pred == truth) ++hits;
        }
        return 100.0 * hits / probs.rows;
    };
    return {accuracy(pa.m), accuracy(pb.m), accuracy(pab.m)};
}

namespace {

TrainOutput run_federated_training(const VerticalDataset& ds, const EvalSplit* eval,
                                   const ModelConfig& mc, const TrainOptions& opts,
                                   FederatedStepper::Variant variant) {
    opts.validate();
    TrainOutput out;
    out.models = Models::init(mc, mix_seed(opts.seed, 0xA11CE));
    FederatedStepper stepper(out.models, ds, opts, variant);

    const bool ol_only = variant == FederatedStepper::Variant::VanillaVfl;
    int step = 0;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        TriBatchIterator it(ds, opts.batch_ol, opts.batch_a, opts.batch_b,
                            mix_seed(opts.seed, 0xBA7C4), epoch, ol_only);
        std::vector<LossReport> epoch_reports;
        int selected = 0;
        while (!it.done()) {
            StepResult r = stepper.run_step(it.next(), step++);
            selected += r.report.pseudo_selected;
            epoch_reports.push_back(r.report);
            out.step_losses.push_back(r.report);
        }
        EpochMetrics em;
        em.epoch = epoch;
        em.mean_losses = mean_reports(epoch_reports);
        em.pseudo_selected = selected;
        if (eval) em.accuracy = evaluate(out.models, *eval);
        out.history.push_back(em);
    }
    out.ledger = stepper.channel().ledger();
    out.fingerprints = stepper.registry();
    return out;
}

}  // namespace

TrainOutput train_fedmvt(const VerticalDataset& ds, const EvalSplit* eval, const ModelConfig& mc,
                         const TrainOptions& opts) {
    return run_federated_training(ds, eval, mc, opts, FederatedStepper::Variant::FedMvt);
}

TrainOutput train_vanilla_vfl(const VerticalDataset& ds, const EvalSplit* eval, const ModelConfig& mc,
                              const TrainOptions& opts) {
    return run_federated_training(ds, eval, mc, opts, FederatedStepper::Variant::VanillaVfl);
}

TrainOutput train_vanilla_local(const VerticalDataset& ds, const EvalSplit* eval,
                                const ModelConfig& mc, const TrainOptions& opts) {
    opts.validate();
    TrainOutput out;
    out.models = Models::init(mc, mix_seed(opts.seed, 0xA11CE));
    out.fingerprints.record_feature_rows(ds.features_a);
    std::vector<Tensor*> params = out.models.a.h_u.params();
    {
        auto more = out.models.a.h_c.params();
        params.insert(params.end(), more.begin(), more.end());
        more = out.models.a.f_a.params();
        params.insert(params.end(), more.begin(), more.end());
    }
    out.fingerprints.record_parameters(params);

    const int n = ds.features_a.rows;
    const int batch = std::max(opts.batch_ol, opts.batch_a);
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(mix_seed(opts.seed, mix_seed(static_cast<uint64_t>(epoch), 7)));
        shuffle_in_place(order, rng);
        std::vector<LossReport> epoch_reports;
        for (int begin = 0; begin < n; begin += batch) {
            std::vector<int> rows(order.begin() + begin,
                                  order.begin() + std::min(n, begin + batch));
            Tape tape;
            Tensor x = tape.constant(gather_mat_rows(ds.features_a, rows));
            Tensor y = tape.constant(gather_mat_rows(ds.labels_a, rows));
            Tensor ra = tape.concat_features(forward_net(tape, out.models.a.h_u, x),
                                             forward_net(tape, out.models.a.h_c, x));
            Tensor loss = loss_classifier(tape, out.models.a.f_a, ra, y);
            tape.backward(loss);
            GradMap grads = tape.leaf_gradients();
            sgd_step(params, grads, opts.lr);
            out.fingerprints.record_parameters(params);
            LossReport rep;
            rep.local_a = loss.scalar();
            rep.local_a_present = true;
            rep.total = rep.local_a;
            epoch_reports.push_back(rep);
            out.step_losses.push_back(rep);
        }
        EpochMetrics em;
        em.epoch = epoch;
        em.mean_losses = mean_reports(epoch_reports);
        if (eval) em.accuracy = evaluate(out.models, *eval);
        out.history.push_back(em);
    }
    return out;
}

}  // namespace fedmvt
