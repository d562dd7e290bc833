#include "trajrep/checkpoint.hpp"

#include <algorithm>
#include <fstream>

namespace trajrep {

namespace {

constexpr char kMagic[8] = {'T', 'R', 'J', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    write_u32(out, static_cast<std::uint32_t>(v));
    write_u32(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw ParseError("checkpoint: truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t read_u64(std::istream& in) {
    const std::uint64_t lo = read_u32(in);
    const std::uint64_t hi = read_u32(in);
    return lo | (hi << 32);
}

void write_string(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
    const std::uint32_t n = read_u32(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw ParseError("checkpoint: truncated string");
    return s;
}

void write_matrix(std::ostream& out, const Mat& m) {
    write_u32(out, static_cast<std::uint32_t>(m.rows()));
    write_u32(out, static_cast<std::uint32_t>(m.cols()));
    std::vector<float> buf(static_cast<std::size_t>(m.size()));
    std::size_t at = 0;
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) buf[at++] = static_cast<float>(m(i, j));
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

Mat read_matrix(std::istream& in) {
    const std::uint32_t rows = read_u32(in);
    const std::uint32_t cols = read_u32(in);
    std::vector<float> buf(static_cast<std::size_t>(rows) * cols);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw ParseError("checkpoint: truncated matrix payload");
    Mat m(rows, cols);
    std::size_t at = 0;
    for (std::uint32_t i = 0; i < rows; ++i) {
        for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = static_cast<double>(buf[at++]);
    }
    return m;
}

} // namespace

Checkpoint make_checkpoint(const ParamStore& store, const AdamW* opt,
                           const std::string& config_echo, std::uint64_t rng_seed,
                           std::int32_t epoch) {
    Checkpoint c;
    c.config_echo = config_echo;
    for (std::size_t i = 0; i < store.count(); ++i) {
        c.params.emplace_back(store.name(i), store.value(i));
    }
    if (opt) {
        c.has_optimizer = true;
        c.opt_steps = opt->steps_taken();
        c.opt_m = opt->moment1();
        c.opt_v = opt->moment2();
    }
    c.rng_seed = rng_seed;
    c.epoch = epoch;
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open for writing: " + path);
    out.write(kMagic, sizeof kMagic);
    write_u32(out, kVersion);
    write_string(out, ckpt.config_echo);
    write_u32(out, static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& [name, m] : ckpt.params) {
        write_string(out, name);
        write_matrix(out, m);
    }
    out.put(ckpt.has_optimizer ? 1 : 0);
    if (ckpt.has_optimizer) {
        write_u64(out, static_cast<std::uint64_t>(ckpt.opt_steps));
        for (const Mat& m : ckpt.opt_m) write_matrix(out, m);
        for (const Mat& m : ckpt.opt_v) write_matrix(out, m);
    }
    write_u64(out, ckpt.rng_seed);
    write_u32(out, static_cast<std::uint32_t>(ckpt.epoch));
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || !std::equal(magic, magic + 8, kMagic)) {
        throw ParseError("checkpoint: bad magic in " + path);
    }
    const std::uint32_t version = read_u32(in);
    if (version != kVersion) {
        throw ParseError("checkpoint: version " + std::to_string(version) +
                         " not supported (expected " + std::to_string(kVersion) + ")");
    }
    Checkpoint c;
    c.config_echo = read_string(in);
    const std::uint32_t count = read_u32(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = read_string(in);
        c.params.emplace_back(std::move(name), read_matrix(in));
    }
    const int has_opt = in.get();
    if (has_opt < 0) throw ParseError("checkpoint: truncated optimizer flag");
    c.has_optimizer = has_opt != 0;
    if (c.has_optimizer) {
        c.opt_steps = static_cast<std::int64_t>(read_u64(in));
        for (std::uint32_t i = 0; i < count; ++i) c.opt_m.push_back(read_matrix(in));
        for (std::uint32_t i = 0; i < count; ++i) c.opt_v.push_back(read_matrix(in));
    }
    c.rng_seed = read_u64(in);
    c.epoch = static_cast<std::int32_t>(read_u32(in));
    return c;
}

std::size_t apply_checkpoint_params(const Checkpoint& ckpt, ParamStore& store, bool strict) {
    std::size_t applied = 0;
    std::size_t matched_targets = 0;
    for (const auto& [name, m] : ckpt.params) {
        if (!store.has(name)) continue;
        Mat& target = store.at(name);
        if (target.rows() != m.rows() || target.cols() != m.cols()) {
            // Vocabulary-sized heads legitimately differ across networks.
            if (strict && !name.starts_with("head.")) {
                throw ValidationError("checkpoint: shape mismatch for " + name);
            }
            continue;
        }
        target = m;
        ++applied;
    }
    // Strictness covers the shared encoder; prediction heads may be fresh.
    std::size_t required = 0;
    for (std::size_t i = 0; i < store.count(); ++i) {
        if (store.name(i).starts_with("head.")) continue;
        ++required;
        for (const auto& [name, m] : ckpt.params) {
            if (name == store.name(i) && m.rows() == store.value(i).rows() &&
                m.cols() == store.value(i).cols()) {
                ++matched_targets;
                break;
            }
        }
    }
    if (strict && matched_targets != required) {
        throw ValidationError("checkpoint: strict load matched " +
                              std::to_string(matched_targets) + " of " +
                              std::to_string(required) + " encoder parameters");
    }
    return applied;
}

void apply_checkpoint_optimizer(const Checkpoint& ckpt, const ParamStore& store, AdamW& opt) {
    if (!ckpt.has_optimizer) return;
    if (ckpt.opt_m.size() != store.count() || ckpt.opt_v.size() != store.count()) return;
    for (std::size_t i = 0; i < store.count(); ++i) {
        if (ckpt.opt_m[i].rows() != store.value(i).rows() ||
            ckpt.opt_m[i].cols() != store.value(i).cols()) {
            return;  // incompatible layout (e.g. different head): keep fresh moments
        }
    }
    opt.set_steps(ckpt.opt_steps);
    opt.moment1() = ckpt.opt_m;
    opt.moment2() = ckpt.opt_v;
}

} // namespace trajrep
