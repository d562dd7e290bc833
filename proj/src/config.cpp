#include "trajrep/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace trajrep {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

const char* kAblationKeys[] = {"transfer_prob", "time_emb", "time_interval",
                               "hop", "log_decay", "adaptive"};

} // namespace

void ExperimentConfig::add_default(const std::string& key, const std::string& value,
                                   const std::string& origin) {
    entries_[key] = {value, origin};
}

ExperimentConfig ExperimentConfig::defaults() {
    ExperimentConfig c;
    c.add_default("seed", "42", "desk-scale");
    c.add_default("data.nodes_path", "", "desk-scale");
    c.add_default("data.edges_path", "", "desk-scale");
    c.add_default("data.corpus_path", "", "desk-scale");
    c.add_default("data.train_ratio", "0.6", "paper");
    c.add_default("data.val_ratio", "0.2", "paper");
    c.add_default("data.test_ratio", "0.2", "paper");
    c.add_default("data.min_user_trajectories", "1", "desk-scale");

    c.add_default("gen.grid_n", "10", "desk-scale");
    c.add_default("gen.trajectories", "2000", "desk-scale");
    c.add_default("gen.days", "14", "desk-scale");
    c.add_default("gen.detour_prob", "0.1", "desk-scale");

    c.add_default("model.d", "64", "desk-scale");
    c.add_default("model.gat_heads", "8,16,1", "paper");
    c.add_default("model.gat_head_dims", "8,4,64", "desk-scale");
    c.add_default("model.enc_layers", "2", "desk-scale");
    c.add_default("model.enc_heads", "4", "desk-scale");
    c.add_default("model.omega_dim", "8", "desk-scale");
    c.add_default("model.dropout", "0.1", "paper");

    c.add_default("train.batch_size", "64", "paper");
    c.add_default("train.epochs", "30", "paper");
    c.add_default("train.lr", "0.0002", "paper");
    c.add_default("train.warmup_epochs", "5", "paper");
    c.add_default("train.weight_decay", "0.01", "desk-scale");
    c.add_default("train.lambda", "0.6", "paper");
    c.add_default("train.tau", "0.05", "paper");
    c.add_default("train.mask_ratio", "0.15", "paper");
    c.add_default("train.mask_span", "2", "paper");
    c.add_default("train.aug1", "trim", "paper");
    c.add_default("train.aug2", "temporal_shift", "paper");

    c.add_default("finetune.epochs", "15", "desk-scale");
    c.add_default("finetune.batch_size", "64", "paper");
    c.add_default("finetune.lr", "0.0002", "paper");
    c.add_default("finetune.warmup_epochs", "5", "paper");
    c.add_default("finetune.weight_decay", "0.01", "desk-scale");

    c.add_default("task.label_source", "label", "desk-scale");
    c.add_default("task.num_classes", "0", "desk-scale");

    c.add_default("sim.n_q", "50", "desk-scale");
    c.add_default("sim.n_neg", "500", "desk-scale");
    c.add_default("sim.p_d", "0.2", "paper");
    c.add_default("sim.t_d", "0.2", "paper");
    c.add_default("sim.k_max", "10", "desk-scale");
    c.add_default("sim.knn_k", "5", "paper");

    for (const char* k : kAblationKeys) {
        c.add_default(std::string("ablation.") + k,
                      std::string(k) == "hop" ? "off" : "on", "desk-scale");
    }
    return c;
}

void ExperimentConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + " line " + std::to_string(line_no) +
                              ": expected key = value");
        }
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    std::string k = key;
    if (k.find('.') == std::string::npos) {
        // Bare ablation switch names are accepted as shorthand.
        for (const char* a : kAblationKeys) {
            if (k == a) {
                k = std::string("ablation.") + a;
                break;
            }
        }
    }
    auto it = entries_.find(k);
    if (it == entries_.end()) throw ConfigError("unknown configuration key: " + key);
    it->second = {value, "user"};
}

const std::string& ExperimentConfig::get(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("unknown configuration key: " + key);
    return it->second.value;
}

double ExperimentConfig::get_double(const std::string& key) const {
    try {
        std::size_t pos = 0;
        const double v = std::stod(get(key), &pos);
        if (pos != get(key).size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("configuration key " + key + " is not a number: '" + get(key) + "'");
    }
}

long ExperimentConfig::get_long(const std::string& key) const {
    try {
        std::size_t pos = 0;
        const long v = std::stol(get(key), &pos);
        if (pos != get(key).size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("configuration key " + key + " is not an integer: '" + get(key) + "'");
    }
}

bool ExperimentConfig::get_switch(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw ConfigError("configuration key " + key + " must be on/off, got '" + v + "'");
}

std::vector<int> ExperimentConfig::get_int_list(const std::string& key) const {
    std::vector<int> out;
    std::stringstream ss(get(key));
    std::string field;
    while (std::getline(ss, field, ',')) {
        try {
            out.push_back(std::stoi(field));
        } catch (const std::exception&) {
            throw ConfigError("configuration key " + key + " has a bad list element: '" + field + "'");
        }
    }
    if (out.empty()) throw ConfigError("configuration key " + key + " must be a non-empty list");
    return out;
}

std::string ExperimentConfig::echo() const {
    std::string out;
    for (const auto& [key, entry] : entries_) {
        out += key + " = " + entry.value + "  # " + entry.origin + "\n";
    }
    return out;
}

ModelConfig ExperimentConfig::model_config() const {
    ModelConfig m;
    m.d = static_cast<int>(get_long("model.d"));
    m.gat.heads = get_int_list("model.gat_heads");
    m.gat.head_dims = get_int_list("model.gat_head_dims");
    m.enc_layers = static_cast<int>(get_long("model.enc_layers"));
    m.enc_heads = static_cast<int>(get_long("model.enc_heads"));
    m.omega_dim = static_cast<int>(get_long("model.omega_dim"));
    m.dropout = get_double("model.dropout");
    m.validate();
    return m;
}

PretrainConfig ExperimentConfig::pretrain_config() const {
    PretrainConfig p;
    p.lambda = get_double("train.lambda");
    p.tau = get_double("train.tau");
    p.batch_size = static_cast<int>(get_long("train.batch_size"));
    p.epochs = static_cast<int>(get_long("train.epochs"));
    p.lr = get_double("train.lr");
    p.warmup_epochs = static_cast<int>(get_long("train.warmup_epochs"));
    p.weight_decay = get_double("train.weight_decay");
    p.mask_ratio = get_double("train.mask_ratio");
    p.mask_span = static_cast<int>(get_long("train.mask_span"));
    p.aug1 = parse_augment_strategy(get("train.aug1"));
    p.aug2 = parse_augment_strategy(get("train.aug2"));
    p.seed = seed();
    p.validate();
    return p;
}

FinetuneConfig ExperimentConfig::finetune_config() const {
    FinetuneConfig f;
    f.epochs = static_cast<int>(get_long("finetune.epochs"));
    f.batch_size = static_cast<int>(get_long("finetune.batch_size"));
    f.lr = get_double("finetune.lr");
    f.warmup_epochs = static_cast<int>(get_long("finetune.warmup_epochs"));
    f.weight_decay = get_double("finetune.weight_decay");
    f.seed = seed();
    return f;
}

Ablations ExperimentConfig::ablations() const {
    Ablations a;
    a.transfer_prob = get_switch("ablation.transfer_prob");
    a.time_emb = get_switch("ablation.time_emb");
    a.time_interval = get_switch("ablation.time_interval");
    a.hop = get_switch("ablation.hop");
    a.log_decay = get_switch("ablation.log_decay");
    a.adaptive = get_switch("ablation.adaptive");
    return a;
}

SyntheticConfig ExperimentConfig::synthetic_config() const {
    SyntheticConfig s;
    s.grid_n = static_cast<int>(get_long("gen.grid_n"));
    s.trajectory_count = static_cast<int>(get_long("gen.trajectories"));
    s.days = static_cast<int>(get_long("gen.days"));
    s.step_detour_prob = get_double("gen.detour_prob");
    return s;
}

DetourParams ExperimentConfig::detour_params() const {
    DetourParams d;
    d.p_d = get_double("sim.p_d");
    d.t_d = get_double("sim.t_d");
    d.k_max = static_cast<int>(get_long("sim.k_max"));
    return d;
}

SplitRatios ExperimentConfig::split_ratios() const {
    SplitRatios r;
    r.train = get_double("data.train_ratio");
    r.val = get_double("data.val_ratio");
    r.test = get_double("data.test_ratio");
    return r;
}

} // namespace trajrep
