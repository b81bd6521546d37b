#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedmvt/data.hpp"
#include "fedmvt/federation.hpp"

namespace fedmvt {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class DataSource : uint8_t { Synthetic, Csv };

/// Flat dotted-key experiment configuration. See docs/config-reference in the
/// README for the exact key list.
struct ExperimentConfig {
    DataSource source = DataSource::Synthetic;
    SyntheticSpec synthetic;
    double test_fraction = 0.25;
    std::string csv_party_a, csv_party_b, csv_overlap_map;
    std::string csv_test_party_a, csv_test_party_b, csv_test_overlap_map;

    std::vector<int> overlap_sizes{100};
    double nl_fraction_a = 0.5;
    double nl_fraction_b = 0.5;

    int hidden_units = 32;
    int rep_dim_a = 32;
    int rep_dim_b = 32;

    int epochs = 10;
    double lr = 0.05;
    int batch_ol = 32;
    int batch_a = 64;
    int batch_b = 64;

    LossWeights weights;
    double threshold = 0.7;
    SelectionRule rule = SelectionRule::AllAgreeingExceedT;
    bool pseudo_in_local_sets = true;
    AttentionPoolScope pool = AttentionPoolScope::Batch;
    bool exclude_self = false;
    OrthVariant orth = OrthVariant::InnerProduct;
    FederationMode mode = FederationMode::Split;

    std::vector<uint64_t> seeds{1};

    /// Every violated field, empty when valid.
    std::vector<std::string> validate() const;
    /// key=value echo; parsing it reproduces this config exactly.
    std::string echo() const;

    TrainOptions train_options(uint64_t seed) const;
    ModelConfig model_config(int features_a, int features_b, int classes) const;
};

/// Parses key = value lines ('#' comments). Unknown keys and malformed
/// values are collected into `errors`; the returned config carries whatever
/// parsed cleanly.
ExperimentConfig parse_config_text(const std::string& text, std::vector<std::string>& errors);
ExperimentConfig load_config(const std::string& path, std::vector<std::string>& errors);

/// Parse + validate; throws ConfigError listing every violation.
ExperimentConfig load_config_checked(const std::string& path);

}  // namespace fedmvt
