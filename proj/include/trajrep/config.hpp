#ifndef TRAJREP_CONFIG_HPP
#define TRAJREP_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trajrep/downstream.hpp"
#include "trajrep/model.hpp"
#include "trajrep/pretrain.hpp"
#include "trajrep/simsearch.hpp"
#include "trajrep/synthetic.hpp"

namespace trajrep {

/// Flat dotted-key configuration with annotated defaults. Unknown keys are
/// rejected; every value remembers whether it came from the paper-scale
/// defaults, the desk-scale defaults, or the user.
class ExperimentConfig {
public:
    static ExperimentConfig defaults();

    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);

    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    long get_long(const std::string& key) const;
    bool get_switch(const std::string& key) const;  // on/off/true/false
    std::vector<int> get_int_list(const std::string& key) const;

    std::uint64_t seed() const { return static_cast<std::uint64_t>(get_long("seed")); }

    /// Deterministic, origin-annotated key = value listing.
    std::string echo() const;

    ModelConfig model_config() const;
    PretrainConfig pretrain_config() const;
    FinetuneConfig finetune_config() const;
    Ablations ablations() const;
    SyntheticConfig synthetic_config() const;
    DetourParams detour_params() const;
    SplitRatios split_ratios() const;

private:
    struct Entry {
        std::string value;
        std::string origin;
    };
    std::map<std::string, Entry> entries_;

    void add_default(const std::string& key, const std::string& value, const std::string& origin);
};

} // namespace trajrep

#endif // TRAJREP_CONFIG_HPP
