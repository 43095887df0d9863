#include "bear/kv_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "bear/errors.hpp"

namespace bear::io {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

KeyValues KeyValues::parse(std::string_view text, std::string_view source) {
    KeyValues kv;
    kv.source_ = std::string(source);
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        const std::string_view line = trim(text.substr(0, nl));
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (line.empty() || line.front() == '#') {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(kv.source_ + ":" + std::to_string(line_no) + ": expected key=value");
        }
        const std::string key(trim(line.substr(0, eq)));
        if (key.empty()) {
            throw ConfigError(kv.source_ + ":" + std::to_string(line_no) + ": empty key");
        }
        if (kv.contains(key)) {
            throw ConfigError(kv.source_ + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
        }
        kv.items_.emplace_back(key, std::string(trim(line.substr(eq + 1))));
        kv.consumed_.push_back(false);
        kv.lines_.push_back(line_no);
    }
    return kv;
}

KeyValues KeyValues::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

void KeyValues::set(std::string key, std::string value) {
    for (auto& [k, v] : items_) {
        if (k == key) {
            v = std::move(value);
            return;
        }
    }
    items_.emplace_back(std::move(key), std::move(value));
    consumed_.push_back(false);
    lines_.push_back(0);
}

bool KeyValues::contains(std::string_view key) const {
    for (const auto& [k, v] : items_) {
        if (k == key) {
            return true;
        }
    }
    return false;
}

const std::string& KeyValues::get(std::string_view key) const {
    for (const auto& [k, v] : items_) {
        if (k == key) {
            return v;
        }
    }
    throw ConfigError("missing key '" + std::string(key) + "'");
}

bool KeyValues::take(std::string_view key, std::string& out) {
    for (std::size_t i = 0; i < items_.size(); ++i) {
        if (items_[i].first == key) {
            consumed_[i] = true;
            out = items_[i].second;
            return true;
        }
    }
    return false;
}

namespace {

template <class U>
bool parse_number(const std::string& text, U& out) {
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

}  // namespace

bool KeyValues::take_size(std::string_view key, std::size_t& out) {
    std::string text;
    if (!take(key, text)) {
        return false;
    }
    if (!parse_number(text, out)) {
        throw ConfigError("key '" + std::string(key) + "' expects a non-negative integer, got '" + text + "'");
    }
    return true;
}

bool KeyValues::take_u64(std::string_view key, std::uint64_t& out) {
    std::string text;
    if (!take(key, text)) {
        return false;
    }
    if (!parse_number(text, out)) {
        throw ConfigError("key '" + std::string(key) + "' expects a non-negative integer, got '" + text + "'");
    }
    return true;
}

bool KeyValues::take_double(std::string_view key, double& out) {
    std::string text;
    if (!take(key, text)) {
        return false;
    }
    if (!parse_number(text, out)) {
        throw ConfigError("key '" + std::string(key) + "' expects a number, got '" + text + "'");
    }
    return true;
}

void KeyValues::check_consumed() const {
    for (std::size_t i = 0; i < items_.size(); ++i) {
        if (!consumed_[i]) {
            std::string where = source_;
            if (lines_[i] != 0) {
                where += ":" + std::to_string(lines_[i]);
            }
            throw ConfigError(where + ": unknown key '" + items_[i].first + "'");
        }
    }
}

std::string KeyValues::to_text() const {
    std::string out;
    for (const auto& [k, v] : items_) {
        out += k + "=" + v + "\n";
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace bear::io
