#include "ganloc/checkpoint.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ganloc::ckpt {

namespace {

constexpr char kMagic[8] = {'G', 'L', 'C', 'K', 'P', 'T', '0', '1'};

void write_u64(std::ostream& out, uint64_t v) {
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::istream& in) {
    uint8_t b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw CheckpointError("truncated checkpoint record");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_str(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& in) {
    const uint64_t n = read_u64(in);
    if (n > (uint64_t(1) << 32)) throw CheckpointError("corrupt string length in checkpoint");
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw CheckpointError("truncated checkpoint record");
    return s;
}

} // namespace

std::string Checkpoint::id() const {
    char buf[24];
    std::snprintf(buf, sizeof buf, "iter_%07" PRId64, iteration);
    return buf;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof kMagic);

    std::ostringstream cfg;
    for (const auto& [k, v] : ckpt.config.to_map()) cfg << k << '=' << v << '\n';
    write_str(out, cfg.str());
    write_u64(out, static_cast<uint64_t>(ckpt.iteration));
    write_str(out, ckpt.rng_state);

    write_u64(out, ckpt.tensors.size());
    for (const auto& [name, t] : ckpt.tensors) {
        write_str(out, name);
        write_u64(out, t.shape.size());
        for (int64_t d : t.shape) write_u64(out, static_cast<uint64_t>(d));
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    if (!out) throw CheckpointError("short write while saving checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot read checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw CheckpointError("not a checkpoint file: " + path);

    Checkpoint ckpt;
    std::map<std::string, std::string> kv;
    std::istringstream cfg(read_str(in));
    std::string line;
    while (std::getline(cfg, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw CheckpointError("corrupt config block in " + path);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    ckpt.config = nn::GanConfig::from_map(kv);
    ckpt.iteration = static_cast<int64_t>(read_u64(in));
    ckpt.rng_state = read_str(in);

    const uint64_t count = read_u64(in);
    for (uint64_t i = 0; i < count; ++i) {
        const std::string name = read_str(in);
        const uint64_t ndim = read_u64(in);
        if (ndim > 8) throw CheckpointError("corrupt tensor rank in " + path);
        std::vector<int64_t> shape(ndim);
        for (auto& d : shape) {
            d = static_cast<int64_t>(read_u64(in));
            if (d <= 0 || d > (int64_t(1) << 32))
                throw CheckpointError("corrupt tensor shape in " + path);
        }
        Tensor<float> t(shape);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(float)));
        if (!in) throw CheckpointError("truncated checkpoint: " + path);
        ckpt.tensors.emplace(name, std::move(t));
    }
    if (!in) throw CheckpointError("truncated checkpoint: " + path);
    return ckpt;
}

void store_model_state(Checkpoint& ckpt, nn::Generator<float>& generator,
                       nn::Discriminator<float>& discriminator) {
    for (auto* p : generator.params()) ckpt.tensors[p->name] = p->value;
    for (auto* p : discriminator.params()) ckpt.tensors[p->name] = p->value;
    for (auto& [name, t] : generator.buffers()) ckpt.tensors[name] = *t;
    for (auto& [name, t] : discriminator.buffers()) ckpt.tensors[name] = *t;
}

void load_model_state(const Checkpoint& ckpt, nn::Generator<float>& generator,
                      nn::Discriminator<float>& discriminator) {
    auto restore = [&](const std::string& name, Tensor<float>& dst) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end())
            throw CheckpointError("checkpoint is missing tensor " + name);
        if (it->second.shape != dst.shape)
            throw CheckpointError("checkpoint tensor " + name + " has shape " +
                                  it->second.shape_str() + ", model expects " + dst.shape_str());
        dst = it->second;
    };
    for (auto* p : generator.params()) restore(p->name, p->value);
    for (auto* p : discriminator.params()) restore(p->name, p->value);
    for (auto& [name, t] : generator.buffers()) restore(name, *t);
    for (auto& [name, t] : discriminator.buffers()) restore(name, *t);
}

} // namespace ganloc::ckpt
