// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace wmgm::config {

enum class ValueKind { integer, real, boolean, text, choice };

struct KeySpec {
    std::string key;
    ValueKind kind;
    std::string fallback;
    std::vector<std::string> choices;
    std::string help;
};

/// Every accepted key with its type and default.
const std::vector<KeySpec>& schema();

/// Flat key=value run configuration. Lines are `key = value`; `#` starts a
/// comment; blank lines are ignored. Unknown keys, repeated keys and values
/// of the wrong type are rejected.
class RunConfig {
public:
    RunConfig();

    static RunConfig parse(const std::string& text, const std::string& origin = "<config>");
    static RunConfig load(const std::filesystem::path& path);

    /// Validates and stores one value (normalized to canonical form).
    void set(const std::string& key, const std::string& value);
    /// Applies "key=value".
    void apply(const std::string& assignment);

    const std::string& raw(const std::string& key) const;
    std::int64_t integer(const std::string& key) const;
    std::size_t count(const std::string& key) const;
    double real(const std::string& key) const;
    bool boolean(const std::string& key) const;
    const std::string& text(const std::string& key) const;

    /// Every key in lexicographic order, one `key=value` per line.
    std::string canonical() const;
    /// FNV-1a 64 of canonical(), as 16 hex digits.
    std::string hash() const;

private:
    std::map<std::string, std::string> values_;
};

/// FNV-1a 64 of `text` as 16 lowercase hex digits.
std::string fnv_hex(const std::string& text);

}  // namespace wmgm::config
