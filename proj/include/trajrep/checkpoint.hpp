#ifndef TRAJREP_CHECKPOINT_HPP
#define TRAJREP_CHECKPOINT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "trajrep/model.hpp"

namespace trajrep {

/// Versioned binary container of named parameter arrays (32-bit float
/// payload), optimizer state, and run bookkeeping. Save -> load -> save
/// produces identical bytes.
struct Checkpoint {
    std::string config_echo;
    std::vector<std::pair<std::string, Mat>> params;
    bool has_optimizer = false;
    std::int64_t opt_steps = 0;
    std::vector<Mat> opt_m;
    std::vector<Mat> opt_v;
    std::uint64_t rng_seed = 0;
    std::int32_t epoch = 0;
};

Checkpoint make_checkpoint(const ParamStore& store, const AdamW* opt,
                           const std::string& config_echo, std::uint64_t rng_seed,
                           std::int32_t epoch);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

/// Throws ParseError on malformed files and on version mismatch.
Checkpoint load_checkpoint(const std::string& path);

/// Copies every checkpoint array whose name and shape match a parameter in
/// `store`. Returns the number of arrays applied. With `strict`, every store
/// parameter must be matched.
std::size_t apply_checkpoint_params(const Checkpoint& ckpt, ParamStore& store, bool strict);

/// Restores optimizer moments (shapes must align with the store).
void apply_checkpoint_optimizer(const Checkpoint& ckpt, const ParamStore& store, AdamW& opt);

} // namespace trajrep

#endif // TRAJREP_CHECKPOINT_HPP
