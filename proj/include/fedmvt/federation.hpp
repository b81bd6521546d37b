#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fedmvt/data.hpp"
#include "fedmvt/estimation.hpp"
#include "fedmvt/nn.hpp"
#include "fedmvt/objective.hpp"
#include "fedmvt/pseudo.hpp"

namespace fedmvt {

// ---------------------------------------------------------------------------
// Boundary channel and audit ledger
// ---------------------------------------------------------------------------

enum class MsgKind : uint8_t { ReprForward = 0, GradBackward = 1, LossScalarReport = 2 };
enum class Direction : uint8_t { AtoB = 0, BtoA = 1 };

const char* to_string(MsgKind k);
const char* to_string(Direction d);

struct BoundaryMessage {
    MsgKind kind;
    int step;
    Direction direction;
    Mat payload;
};

/// Wire form: kind tag, step counter, direction, row count, column count,
/// little-endian float64 payload.
std::vector<uint8_t> encode_message(const BoundaryMessage& msg);
BoundaryMessage decode_message(const std::vector<uint8_t>& bytes);

uint64_t fingerprint_bytes(const void* data, size_t len);
uint64_t fingerprint_mat(const Mat& m);

struct LedgerEntry {
    int step;
    Direction direction;
    MsgKind kind;
    int rows;
    int cols;
    uint64_t fingerprint;
};

/// Append-only record of everything that crossed the A<->B boundary.
class BoundaryLedger {
public:
    void append(LedgerEntry e) { entries_.push_back(e); }
    const std::vector<LedgerEntry>& entries() const { return entries_; }
    size_t size() const { return entries_.size(); }

private:
    std::vector<LedgerEntry> entries_;
};

/// The only path between the parties. Returns the payload as the peer
/// receives it and logs every transfer.
class BoundaryChannel {
public:
    Mat send(int step, Direction dir, MsgKind kind, const Mat& payload);
    const BoundaryLedger& ledger() const { return ledger_; }

private:
    BoundaryLedger ledger_;
};

/// Forbidden content observed during a run: every raw feature row and every
/// parameter matrix state, hashed at init and after each step.
struct FingerprintRegistry {
    std::unordered_set<uint64_t> feature_rows;
    std::unordered_set<uint64_t> parameter_mats;
    void record_feature_rows(const Mat& features);
    void record_parameters(const std::vector<Tensor*>& params);
};

struct AuditViolation {
    size_t entry_index;
    int step;
    std::string reason;
};

struct AuditReport {
    bool pass = true;
    std::vector<AuditViolation> violations;
    size_t messages_checked = 0;
    std::string summary() const;
};

AuditReport audit_ledger(const BoundaryLedger& ledger, const FingerprintRegistry& registry);

// ---------------------------------------------------------------------------
// Parties and models
// ---------------------------------------------------------------------------

struct ModelConfig {
    int features_a = 0;
    int features_b = 0;
    int classes = 0;
    int hidden_units = 32;
    int rep_dim_a = 32;
    int rep_dim_b = 32;
};

/// Label-owning coordinator: hosts f^A and the federated head f^AB.
struct PartyA {
    RepresentationNet h_u, h_c;
    SoftmaxClassifier f_a, f_ab;
    std::vector<Tensor*> params();
};

/// Feature-only party: hosts f^B, never sees labels.
struct PartyB {
    RepresentationNet h_u, h_c;
    SoftmaxClassifier f_b;
    std::vector<Tensor*> params();
};

struct Models {
    PartyA a;
    PartyB b;
    ModelConfig config;
    static Models init(const ModelConfig& cfg, uint64_t seed);
    std::vector<Tensor*> all_params();
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class FederationMode : uint8_t {
    Split,       // real protocol: two tapes, gradients cross as messages
    Monolithic,  // single-graph reference used by the equivalence check
};

enum class AttentionPoolScope : uint8_t { Batch, FullDataset };

struct TrainOptions {
    int epochs = 10;
    double lr = 0.05;
    LossWeights weights;
    double threshold = 0.7;
    SelectionRule rule = SelectionRule::AllAgreeingExceedT;
    OrthVariant orth = OrthVariant::InnerProduct;
    AttentionPoolScope pool = AttentionPoolScope::Batch;
    bool exclude_self = false;
    bool pseudo_in_local_sets = true;
    int batch_ol = 32;
    int batch_a = 64;
    int batch_b = 64;
    FederationMode mode = FederationMode::Split;
    uint64_t seed = 1;
    void validate() const;
};

struct StepResult {
    LossReport report;
    std::vector<Mat> param_grads;  // filled only when capture_gradients was set
};

/// Runs Algorithm-style training steps over a party pair. In Split mode all
/// cross-party tensors move through the channel; in Monolithic mode the same
/// computation is recorded on one tape (no messages).
class FederatedStepper {
public:
    enum class Variant : uint8_t { FedMvt, VanillaVfl };

    FederatedStepper(Models& models, const VerticalDataset& dataset, const TrainOptions& opts,
                     Variant variant);

    StepResult run_step(const TriBatch& batch, int step, bool capture_gradients = false);

    BoundaryChannel& channel() { return channel_; }
    FingerprintRegistry& registry() { return registry_; }

private:
    Models& models_;
    const VerticalDataset& ds_;
    TrainOptions opts_;
    Variant variant_;
    BoundaryChannel channel_;
    FingerprintRegistry registry_;
    std::unordered_map<int, int> ol_pos_of_a_row_;  // A row -> overlap list position
};

struct HeadAccuracy {
    double fa = 0.0;
    double fb = 0.0;
    double fab = 0.0;
};

/// Fully aligned test rows: both parties' features plus labels.
struct EvalSplit {
    Mat features_a;
    Mat features_b;
    Mat labels;
};

/// Top-1 accuracy (percent) of each head on its input view.
HeadAccuracy evaluate(Models& models, const EvalSplit& split);

struct EpochMetrics {
    int epoch = 0;
    LossReport mean_losses;
    HeadAccuracy accuracy;
    int pseudo_selected = 0;
};

struct TrainOutput {
    Models models;
    std::vector<EpochMetrics> history;
    std::vector<LossReport> step_losses;
    BoundaryLedger ledger;
    FingerprintRegistry fingerprints;
};

TrainOutput train_fedmvt(const VerticalDataset& ds, const EvalSplit* eval, const ModelConfig& mc,
                         const TrainOptions& opts);
TrainOutput train_vanilla_vfl(const VerticalDataset& ds, const EvalSplit* eval, const ModelConfig& mc,
                              const TrainOptions& opts);
TrainOutput train_vanilla_local(const VerticalDataset& ds, const EvalSplit* eval, const ModelConfig& mc,
                                const TrainOptions& opts);

}  // namespace fedmvt
