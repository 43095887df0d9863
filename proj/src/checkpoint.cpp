#include "bear/checkpoint.hpp"

#include "bear/tensor_io.hpp"

namespace bear::train {

namespace {

constexpr std::string_view hash_key{"config_hash"};

std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace

const std::string* Checkpoint::find_metadata(std::string_view key) const {
    for (const auto& [k, v] : metadata) {
        if (k == key) {
            return &v;
        }
    }
    return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    model::check_parameters(ckpt.params, ckpt.config);
    io::KeyValues header;
    ckpt.config.write(header);
    header.set(std::string(hash_key), hex64(ckpt.config.hash()));
    for (const auto& [k, v] : ckpt.metadata) {
        if (header.contains(k)) {
            throw ConfigError("checkpoint metadata key '" + k + "' collides with a header key");
        }
        header.set(k, v);
    }
    const std::string text = header.to_text();

    std::vector<std::uint8_t> out(bc1_magic.begin(), bc1_magic.end());
    io::append_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& e : ckpt.params) {
        io::append_u32(out, static_cast<std::uint32_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        io::encode_bt1(e.value, out);
    }
    return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    io::ByteReader reader(bytes);
    const auto magic = reader.take(std::min(bc1_magic.size(), reader.remaining()), "BC1 magic");
    for (std::size_t i = 0; i < bc1_magic.size(); ++i) {
        if (i >= magic.size() || magic[i] != static_cast<std::uint8_t>(bc1_magic[i])) {
            throw FormatError("bad BC1 magic", i);
        }
    }
    const std::uint32_t header_len = reader.u32("BC1 header length");
    const std::size_t header_at = reader.offset();
    const auto header_bytes = reader.take(header_len, "BC1 header");
    io::KeyValues header;
    try {
        header = io::KeyValues::parse(
            std::string_view(reinterpret_cast<const char*>(header_bytes.data()), header_bytes.size()), "BC1 header");
    } catch (const ConfigError& e) {
        throw FormatError(e.what(), header_at);
    }

    Checkpoint ckpt;
    ckpt.config = model::BearConfig::read(header);
    try {
        ckpt.config.validate();
    } catch (const ConfigError& e) {
        throw FormatError(e.what(), header_at);
    }
    std::string stored_hash;
    if (!header.take(hash_key, stored_hash) || stored_hash != hex64(ckpt.config.hash())) {
        throw FormatError("BC1 header config_hash does not match its architecture keys", header_at);
    }
    for (const auto& [k, v] : header.items()) {
        if (k == hash_key) {
            continue;
        }
        bool is_config = false;
        io::KeyValues probe;
        ckpt.config.write(probe);
        is_config = probe.contains(k);
        if (!is_config) {
            ckpt.metadata.emplace_back(k, v);
        }
    }

    const auto layout = model::parameter_layout(ckpt.config);
    std::size_t next = 0;
    while (!reader.at_end()) {
        const std::size_t name_at = reader.offset();
        const std::uint32_t name_len = reader.u32("parameter name length");
        const auto name_bytes = reader.take(name_len, "parameter name");
        const std::string name(reinterpret_cast<const char*>(name_bytes.data()), name_bytes.size());
        if (next >= layout.size()) {
            throw FormatError("unexpected parameter '" + name + "' after the last expected parameter", name_at);
        }
        if (name != layout[next].first) {
            bool known = false;
            for (const auto& [n, s] : layout) {
                known = known || n == name;
            }
            throw FormatError(std::string(known ? "out-of-order" : "unknown") + " parameter '" + name + "' (expected '" +
                                  layout[next].first + "')",
                              name_at);
        }
        const std::size_t tensor_at = reader.offset();
        Tensor<float> value = io::decode_bt1(reader);
        if (value.shape() != layout[next].second) {
            throw FormatError("parameter '" + name + "' has shape " + shape_to_string(value.shape()) + ", expected " +
                                  shape_to_string(layout[next].second),
                              tensor_at);
        }
        ckpt.params.add(name, std::move(value));
        ++next;
    }
    if (next != layout.size()) {
        throw FormatError("truncated BC1 file: missing parameter '" + layout[next].first + "'", reader.offset());
    }
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    io::write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

Checkpoint load_checkpoint(const std::filesystem::path& path, const model::BearConfig& expected) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.config.hash() != expected.hash()) {
        throw ConfigError("checkpoint '" + path.string() + "' was built for a different BEAR configuration (hash " +
                          hex64(ckpt.config.hash()) + ", expected " + hex64(expected.hash()) + ")");
    }
    return ckpt;
}

}  // namespace bear::train
