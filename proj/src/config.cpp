#include "fedmvt/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace fedmvt {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(trim(cur));
    return out;
}

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

struct Setter {
    std::function<bool(ExperimentConfig&, const std::string&)> apply;  // false = bad value
};

bool to_int(const std::string& v, long long& out) {
    try {
        size_t pos = 0;
        out = std::stoll(v, &pos);
        return pos == v.size() && !v.empty();
    } catch (...) {
        return false;
    }
}

bool to_double(const std::string& v, double& out) {
    try {
        size_t pos = 0;
        out = std::stod(v, &pos);
        return pos == v.size() && !v.empty();
    } catch (...) {
        return false;
    }
}

bool to_bool(const std::string& v, bool& out) {
    if (v == "true" || v == "1") {
        out = true;
        return true;
    }
    if (v == "false" || v == "0") {
        out = false;
        return true;
    }
    return false;
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        auto int_field = [](auto member) {
            return Setter{[member](ExperimentConfig& c, const std::string& v) {
                long long x;
                if (!to_int(v, x)) return false;
                c.*member = static_cast<int>(x);
                return true;
            }};
        };
        auto dbl_field = [](auto member) {
            return Setter{[member](ExperimentConfig& c, const std::string& v) {
                double x;
                if (!to_double(v, x)) return false;
                c.*member = x;
                return true;
            }};
        };
        auto str_field = [](auto member) {
            return Setter{[member](ExperimentConfig& c, const std::string& v) {
                c.*member = v;
                return true;
            }};
        };
        auto bool_field = [](auto member) {
            return Setter{[member](ExperimentConfig& c, const std::string& v) {
                bool x;
                if (!to_bool(v, x)) return false;
                c.*member = x;
                return true;
            }};
        };

        t["data.source"] = {[](ExperimentConfig& c, const std::string& v) {
            if (v == "synthetic")
                c.source = DataSource::Synthetic;
            else if (v == "csv")
                c.source = DataSource::Csv;
            else
                return false;
            return true;
        }};
        t["data.synthetic.n"] = {[](ExperimentConfig& c, const std::string& v) {
            long long x;
            if (!to_int(v, x)) return false;
            c.synthetic.n = static_cast<int>(x);
            return true;
        }};
        t["data.synthetic.features_a"] = {[](ExperimentConfig& c, const std::string& v) {
            long long x;
            if (!to_int(v, x)) return false;
            c.synthetic.features_a = static_cast<int>(x);
            return true;
        }};
        t["data.synthetic.features_b"] = {[](ExperimentConfig& c, const std::string& v) {
            long long x;
            if (!to_int(v, x)) return false;
            c.synthetic.features_b = static_cast<int>(x);
            return true;
        }};
        t["data.synthetic.classes"] = {[](ExperimentConfig& c, const std::string& v) {
            long long x;
            if (!to_int(v, x)) return false;
            c.synthetic.classes = static_cast<int>(x);
            return true;
        }};
        t["data.synthetic.class_sep"] = {[](ExperimentConfig& c, const std::string& v) {
            double x;
            if (!to_double(v, x)) return false;
            c.synthetic.class_sep = x;
            return true;
        }};
        t["data.synthetic.cross_view_corr"] = {[](ExperimentConfig& c, const std::string& v) {
            double x;
            if (!to_double(v, x)) return false;
            c.synthetic.cross_view_corr = x;
            return true;
        }};
        t["data.synthetic.seed"] = {[](ExperimentConfig& c, const std::string& v) {
            long long x;
            if (!to_int(v, x)) return false;
            c.synthetic.seed = static_cast<uint64_t>(x);
            return true;
        }};
        t["data.test_fraction"] = dbl_field(&ExperimentConfig::test_fraction);
        t["data.csv.party_a"] = str_field(&ExperimentConfig::csv_party_a);
        t["data.csv.party_b"] = str_field(&ExperimentConfig::csv_party_b);
        t["data.csv.overlap_map"] = str_field(&ExperimentConfig::csv_overlap_map);
        t["data.csv.test_party_a"] = str_field(&ExperimentConfig::csv_test_party_a);
        t["data.csv.test_party_b"] = str_field(&ExperimentConfig::csv_test_party_b);
        t["data.csv.test_overlap_map"] = str_field(&ExperimentConfig::csv_test_overlap_map);

        t["split.overlap_sizes"] = {[](ExperimentConfig& c, const std::string& v) {
            std::vector<int> sizes;
            for (const std::string& tok : split_list(v)) {
                long long x;
                if (!to_int(tok, x)) return false;
                sizes.push_back(static_cast<int>(x));
            }
            c.overlap_sizes = sizes;
            return true;
        }};
        t["split.nl_fraction_a"] = dbl_field(&ExperimentConfig::nl_fraction_a);
        t["split.nl_fraction_b"] = dbl_field(&ExperimentConfig::nl_fraction_b);

        t["model.hidden_units"] = int_field(&ExperimentConfig::hidden_units);
        t["model.rep_dim_a"] = int_field(&ExperimentConfig::rep_dim_a);
        t["model.rep_dim_b"] = int_field(&ExperimentConfig::rep_dim_b);

        t["train.epochs"] = int_field(&ExperimentConfig::epochs);
        t["train.lr"] = dbl_field(&ExperimentConfig::lr);
        t["train.batch_ol"] = int_field(&ExperimentConfig::batch_ol);
        t["train.batch_a"] = int_field(&ExperimentConfig::batch_a);
        t["train.batch_b"] = int_field(&ExperimentConfig::batch_b);

        auto lambda_field = [](double LossWeights::* member) {
            return Setter{[member](ExperimentConfig& c, const std::string& v) {
                double x;
                if (!to_double(v, x)) return false;
                c.weights.*member = x;
                return true;
            }};
        };
        t["loss.lambda1"] = lambda_field(&LossWeights::lambda1);
        t["loss.lambda2"] = lambda_field(&LossWeights::lambda2);
        t["loss.lambda3"] = lambda_field(&LossWeights::lambda3);
        t["loss.lambda4"] = lambda_field(&LossWeights::lambda4);
        t["loss.lambda5"] = lambda_field(&LossWeights::lambda5);

        t["pseudo.threshold"] = dbl_field(&ExperimentConfig::threshold);
        t["pseudo.rule"] = {[](ExperimentConfig& c, const std::string& v) {
            if (v == "all-exceed")
                c.rule = SelectionRule::AllAgreeingExceedT;
            else if (v == "any-exceeds")
                c.rule = SelectionRule::AnyAgreeingExceedsT;
            else
                return false;
            return true;
        }};
        t["pseudo.in_local_sets"] = bool_field(&ExperimentConfig::pseudo_in_local_sets);

        t["attention.pool"] = {[](ExperimentConfig& c, const std::string& v) {
            if (v == "batch")
                c.pool = AttentionPoolScope::Batch;
            else if (v == "full")
                c.pool = AttentionPoolScope::FullDataset;
            else
                return false;
            return true;
        }};
        t["attention.exclude_self"] = bool_field(&ExperimentConfig::exclude_self);

        t["orth.variant"] = {[](ExperimentConfig& c, const std::string& v) {
            if (v == "inner")
                c.orth = OrthVariant::InnerProduct;
            else if (v == "outer")
                c.orth = OrthVariant::OuterProduct;
            else
                return false;
            return true;
        }};

        t["federation.mode"] = {[](ExperimentConfig& c, const std::string& v) {
            if (v == "split")
                c.mode = FederationMode::Split;
            else if (v == "monolithic")
                c.mode = FederationMode::Monolithic;
            else
                return false;
            return true;
        }};

        t["seeds"] = {[](ExperimentConfig& c, const std::string& v) {
            std::vector<uint64_t> seeds;
            for (const std::string& tok : split_list(v)) {
                long long x;
                if (!to_int(tok, x) || x < 0) return false;
                seeds.push_back(static_cast<uint64_t>(x));
            }
            c.seeds = seeds;
            return true;
        }};
        return t;
    }();
    return table;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, std::vector<std::string>& errors) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string stripped = line;
        size_t hash = stripped.find('#');
        if (hash != std::string::npos) stripped = stripped.substr(0, hash);
        stripped = trim(stripped);
        if (stripped.empty()) continue;
        size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            errors.push_back("line " + std::to_string(line_no) + ": expected key = value");
            continue;
        }
        std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));
        auto it = setters().find(key);
        if (it == setters().end()) {
            errors.push_back("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
            continue;
        }
        if (!it->second.apply(cfg, value))
            errors.push_back("line " + std::to_string(line_no) + ": bad value '" + value + "' for key '" +
                             key + "'");
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path, std::vector<std::string>& errors) {
    std::ifstream in(path);
    if (!in) {
        errors.push_back("cannot open config file: " + path);
        return {};
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), errors);
}

std::vector<std::string> ExperimentConfig::validate() const {
    std::vector<std::string> errs;
    auto req = [&](bool ok, const std::string& msg) {
        if (!ok) errs.push_back(msg);
    };
    if (source == DataSource::Synthetic) {
        req(synthetic.n >= 2, "data.synthetic.n must be >= 2");
        req(synthetic.classes >= 2, "data.synthetic.classes must be >= 2");
        req(synthetic.n >= synthetic.classes, "data.synthetic.n must be >= classes");
        req(synthetic.features_a >= 1, "data.synthetic.features_a must be >= 1");
        req(synthetic.features_b >= 1, "data.synthetic.features_b must be >= 1");
        req(synthetic.class_sep >= 0.0, "data.synthetic.class_sep must be >= 0");
        req(synthetic.cross_view_corr >= 0.0 && synthetic.cross_view_corr <= 1.0,
            "data.synthetic.cross_view_corr must be in [0,1]");
        req(test_fraction > 0.0 && test_fraction < 1.0, "data.test_fraction must be in (0,1)");
        req(!overlap_sizes.empty(), "split.overlap_sizes must be non-empty");
        for (int s : overlap_sizes) req(s >= 1, "split.overlap_sizes entries must be >= 1");
        req(nl_fraction_a >= 0.0 && nl_fraction_b >= 0.0 &&
                std::abs(nl_fraction_a + nl_fraction_b - 1.0) < 1e-9,
            "split.nl_fraction_a + split.nl_fraction_b must equal 1");
    } else {
        req(!csv_party_a.empty(), "data.csv.party_a is required for csv source");
        req(!csv_party_b.empty(), "data.csv.party_b is required for csv source");
        req(!csv_overlap_map.empty(), "data.csv.overlap_map is required for csv source");
        req(!csv_test_party_a.empty(), "data.csv.test_party_a is required for csv source");
        req(!csv_test_party_b.empty(), "data.csv.test_party_b is required for csv source");
        req(!csv_test_overlap_map.empty(), "data.csv.test_overlap_map is required for csv source");
    }
    req(hidden_units >= 1, "model.hidden_units must be >= 1");
    req(rep_dim_a >= 1, "model.rep_dim_a must be >= 1");
    req(rep_dim_b >= 1, "model.rep_dim_b must be >= 1");
    req(rep_dim_a == rep_dim_b,
        "model.rep_dim_a must equal model.rep_dim_b (shared space takes cross-party inner products)");
    req(epochs >= 0, "train.epochs must be >= 0");
    req(lr > 0.0, "train.lr must be > 0");
    req(batch_ol >= 1, "train.batch_ol must be >= 1");
    req(batch_a >= 1, "train.batch_a must be >= 1");
    req(batch_b >= 1, "train.batch_b must be >= 1");
    for (double l : {weights.lambda1, weights.lambda2, weights.lambda3, weights.lambda4, weights.lambda5})
        req(l >= 0.0 && std::isfinite(l), "loss.lambda values must be finite and >= 0");
    req(threshold > 0.0 && threshold <= 1.0, "pseudo.threshold must be in (0,1]");
    req(!seeds.empty(), "seeds must be non-empty");
    return errs;
}

std::string ExperimentConfig::echo() const {
    std::ostringstream o;
    o << "data.source = " << (source == DataSource::Synthetic ? "synthetic" : "csv") << "\n";
    if (source == DataSource::Synthetic) {
        o << "data.synthetic.n = " << synthetic.n << "\n";
        o << "data.synthetic.features_a = " << synthetic.features_a << "\n";
        o << "data.synthetic.features_b = " << synthetic.features_b << "\n";
        o << "data.synthetic.classes = " << synthetic.classes << "\n";
        o << "data.synthetic.class_sep = " << fmt(synthetic.class_sep) << "\n";
        o << "data.synthetic.cross_view_corr = " << fmt(synthetic.cross_view_corr) << "\n";
        o << "data.synthetic.seed = " << synthetic.seed << "\n";
        o << "data.test_fraction = " << fmt(test_fraction) << "\n";
    } else {
        o << "data.csv.party_a = " << csv_party_a << "\n";
        o << "data.csv.party_b = " << csv_party_b << "\n";
        o << "data.csv.overlap_map = " << csv_overlap_map << "\n";
        o << "data.csv.test_party_a = " << csv_test_party_a << "\n";
        o << "data.csv.test_party_b = " << csv_test_party_b << "\n";
        o << "data.csv.test_overlap_map = " << csv_test_overlap_map << "\n";
    }
    o << "split.overlap_sizes = ";
    for (size_t i = 0; i < overlap_sizes.size(); ++i) o << (i ? "," : "") << overlap_sizes[i];
    o << "\n";
    o << "split.nl_fraction_a = " << fmt(nl_fraction_a) << "\n";
    o << "split.nl_fraction_b = " << fmt(nl_fraction_b) << "\n";
    o << "model.hidden_units = " << hidden_units << "\n";
    o << "model.rep_dim_a = " << rep_dim_a << "\n";
    o << "model.rep_dim_b = " << rep_dim_b << "\n";
    o << "train.epochs = " << epochs << "\n";
    o << "train.lr = " << fmt(lr) << "\n";
    o << "train.batch_ol = " << batch_ol << "\n";
    o << "train.batch_a = " << batch_a << "\n";
    o << "train.batch_b = " << batch_b << "\n";
    o << "loss.lambda1 = " << fmt(weights.lambda1) << "\n";
    o << "loss.lambda2 = " << fmt(weights.lambda2) << "\n";
    o << "loss.lambda3 = " << fmt(weights.lambda3) << "\n";
    o << "loss.lambda4 = " << fmt(weights.lambda4) << "\n";
    o << "loss.lambda5 = " << fmt(weights.lambda5) << "\n";
    o << "pseudo.threshold = " << fmt(threshold) << "\n";
    o << "pseudo.rule = " << (rule == SelectionRule::AllAgreeingExceedT ? "all-exceed" : "any-exceeds") << "\n";
    o << "pseudo.in_local_sets = " << (pseudo_in_local_sets ? "true" : "false") << "\n";
    o << "attention.pool = " << (pool == AttentionPoolScope::Batch ? "batch" : "full") << "\n";
    o << "attention.exclude_self = " << (exclude_self ? "true" : "false") << "\n";
    o << "orth.variant = " << (orth == OrthVariant::InnerProduct ? "inner" : "outer") << "\n";
    o << "federation.mode = " << (mode == FederationMode::Split ? "split" : "monolithic") << "\n";
    o << "seeds = ";
    for (size_t i = 0; i < seeds.size(); ++i) o << (i ? "," : "") << seeds[i];
    o << "\n";
    return o.str();
}

TrainOptions ExperimentConfig::train_options(uint64_t seed) const {
    TrainOptions t;
    t.epochs = epochs;
    t.lr = lr;
    t.weights = weights;
    t.threshold = threshold;
    t.rule = rule;
    t.orth = orth;
    t.pool = pool;
    t.exclude_self = exclude_self;
    t.pseudo_in_local_sets = pseudo_in_local_sets;
    t.batch_ol = batch_ol;
    t.batch_a = batch_a;
    t.batch_b = batch_b;
    t.mode = mode;
    t.seed = seed;
    return t;
}

ModelConfig ExperimentConfig::model_config(int features_a, int features_b, int classes) const {
    ModelConfig mc;
    mc.features_a = features_a;
    mc.features_b = features_b;
    mc.classes = classes;
    mc.hidden_units = hidden_units;
    mc.rep_dim_a = rep_dim_a;
    mc.rep_dim_b = rep_dim_b;
    return mc;
}

ExperimentConfig load_config_checked(const std::string& path) {
    std::vector<std::string> errors;
    ExperimentConfig cfg = load_config(path, errors);
    if (errors.empty()) {
        std::vector<std::string> v = cfg.validate();
        errors.insert(errors.end(), v.begin(), v.end());
    }
    if (!errors.empty()) {
        std::string msg = "invalid configuration:";
        for (const std::string& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
    return cfg;
}

}  // namespace fedmvt
