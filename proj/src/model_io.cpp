#include "etd/model_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "etd/config_io.hpp"

namespace etd {

namespace {

constexpr char kMagic[4] = {'E', 'T', 'D', 'M'};
constexpr std::uint32_t kVersion = 1;

template <typename V>
void write_pod(std::ofstream& f, const V& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::ifstream& f) {
    V v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!f) throw parse_error("checkpoint: truncated file");
    return v;
}

} // namespace

void save_model(Model<float>& model, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw parse_error("checkpoint: cannot open '" + path + "' for writing");
    f.write(kMagic, 4);
    write_pod(f, kVersion);
    const std::string cfg = serialize_config(model.config());
    write_pod(f, static_cast<std::uint32_t>(cfg.size()));
    f.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    auto slots = model.params();
    write_pod(f, static_cast<std::uint64_t>(slots.size()));
    for (const auto& s : slots) {
        write_pod(f, static_cast<std::uint64_t>(s.value->size()));
        f.write(reinterpret_cast<const char*>(s.value->data()),
                static_cast<std::streamsize>(s.value->size() * sizeof(float)));
    }
    if (!f) throw parse_error("checkpoint: write failed for '" + path + "'");
}

Model<float> load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw parse_error("checkpoint: cannot open '" + path + "'");
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw parse_error("checkpoint: bad magic header in '" + path + "'");
    const auto version = read_pod<std::uint32_t>(f);
    if (version != kVersion)
        throw parse_error("checkpoint: unsupported version " + std::to_string(version));
    const auto cfg_len = read_pod<std::uint32_t>(f);
    std::string cfg_text(cfg_len, '\0');
    f.read(cfg_text.data(), cfg_len);
    if (!f) throw parse_error("checkpoint: truncated config block");
    ModelConfig cfg = parse_config_text(cfg_text);
    Model<float> model = build_model<float>(cfg, 0);
    auto slots = model.params();
    const auto slot_count = read_pod<std::uint64_t>(f);
    if (slot_count != slots.size())
        throw parse_error("checkpoint: parameter slot count mismatch");
    for (auto& s : slots) {
        const auto n = read_pod<std::uint64_t>(f);
        if (n != s.value->size())
            throw parse_error("checkpoint: size mismatch in slot '" + s.name + "'");
        f.read(reinterpret_cast<char*>(s.value->data()),
               static_cast<std::streamsize>(n * sizeof(float)));
        if (!f) throw parse_error("checkpoint: truncated payload in slot '" + s.name + "'");
    }
    return model;
}

} // namespace etd
