#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace bear::io {

/// Ordered `key=value` lines. Blank lines and lines starting with '#' are
/// ignored; whitespace around keys and values is trimmed.
class KeyValues {
public:
    static KeyValues parse(std::string_view text, std::string_view source = "config");
    static KeyValues load(const std::string& path);

    void set(std::string key, std::string value);
    bool contains(std::string_view key) const;
    const std::string& get(std::string_view key) const;

    /// Consumes the key if present; later check_consumed() reports leftovers.
    bool take(std::string_view key, std::string& out);
    bool take_size(std::string_view key, std::size_t& out);
    bool take_u64(std::string_view key, std::uint64_t& out);
    bool take_double(std::string_view key, double& out);

    /// Throws ConfigError naming the first key nobody consumed.
    void check_consumed() const;

    std::string to_text() const;
    const std::vector<std::pair<std::string, std::string>>& items() const noexcept { return items_; }

private:
    std::vector<std::pair<std::string, std::string>> items_;
    std::vector<bool> consumed_;
    std::vector<std::size_t> lines_;
    std::string source_;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace bear::io
