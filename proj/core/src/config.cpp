// SPDX-License-Identifier: Apache-2.0
#include "wmgm/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "wmgm/error.hpp"
#include "wmgm/io.hpp"
#include "wmgm/rng.hpp"

namespace wmgm::config {

const std::vector<KeySpec>& schema() {
    using K = ValueKind;
    static const std::vector<KeySpec> s = {
        {"image_size", K::integer, "16", {}, "side of corpus images after ingestion (power of two)"},
        {"channels", K::integer, "1", {}, "image channels (1 or 3)"},
        {"levels", K::integer, "2", {}, "wavelet levels S"},
        {"seed", K::integer, "0", {}, "master seed"},
        {"corpus", K::text, "", {}, "directory of PGM/PPM images; empty selects the synthetic corpus"},
        {"corpus.count", K::integer, "256", {}, "synthetic corpus size"},
        {"outdir", K::text, "run", {}, "output directory for checkpoints and logs"},
        {"log_wall_time", K::boolean, "false", {}, "record wall-clock milliseconds in training logs"},
        {"diffusion.T", K::real, "3", {}, "diffusion horizon"},
        {"diffusion.N", K::integer, "16", {}, "reverse chain steps"},
        {"score.arch", K::choice, "unet", {"unet", "mlp"}, "score network family"},
        {"score.width", K::integer, "16", {}, "score network width"},
        {"score.depth", K::integer, "2", {}, "score network depth"},
        {"score.iterations", K::integer, "2000", {}, "score training iterations"},
        {"score.batch", K::integer, "64", {}, "score training batch"},
        {"score.lr", K::real, "0.0001", {}, "score learning rate (Adam)"},
        {"msal.mode", K::choice, "MS", {"MS", "SS"}, "share generator/critic across scales (MS) or not (SS)"},
        {"msal.epochs", K::integer, "30", {}, "adversarial training epochs"},
        {"msal.batch", K::integer, "128", {}, "adversarial training batch"},
        {"msal.lr_g", K::real, "0.0001", {}, "generator learning rate (AdamW)"},
        {"msal.lr_d", K::real, "0.00001", {}, "critic learning rate (AdamW)"},
        {"msal.weight_decay", K::real, "0.01", {}, "AdamW decoupled weight decay"},
        {"msal.l2", K::real, "10", {}, "L2 loss weight"},
        {"msal.ssim", K::real, "1", {}, "SSIM loss weight"},
        {"msal.adversarial", K::real, "0.01", {}, "adversarial loss weight"},
        {"msal.clip", K::real, "0.01", {}, "critic weight clip bound"},
        {"msal.n_critic", K::integer, "5", {}, "critic steps per generator step"},
        {"msal.gen_width", K::integer, "16", {}, "generator width"},
        {"msal.gen_depth", K::integer, "2", {}, "generator depth"},
        {"msal.critic_width", K::integer, "16", {}, "critic width"},
        {"msal.critic_depth", K::integer, "2", {}, "critic depth"},
    };
    return s;
}

namespace {

const KeySpec& lookup(const std::string& key) {
    for (const auto& k : schema())
        if (k.key == key) return k;
    fail("unknown config key '", key, "'");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string normalize(const KeySpec& spec, const std::string& value) {
    switch (spec.kind) {
        case ValueKind::integer: {
            std::int64_t v = 0;
            const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
            require(ec == std::errc() && p == value.data() + value.size() && !value.empty(), "config key '",
                    spec.key, "' expects an integer, got '", value, "'");
            require(v >= 0, "config key '", spec.key, "' must be non-negative, got ", v);
            return std::to_string(v);
        }
        case ValueKind::real: {
            double v = 0;
            const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
            require(ec == std::errc() && p == value.data() + value.size() && !value.empty(), "config key '",
                    spec.key, "' expects a number, got '", value, "'");
            require(std::isfinite(v) && v >= 0, "config key '", spec.key, "' must be finite and non-negative");
            return io::format_number(v);
        }
        case ValueKind::boolean:
            if (value == "true" || value == "1" || value == "yes") return "true";
            if (value == "false" || value == "0" || value == "no") return "false";
            fail("config key '", spec.key, "' expects true or false, got '", value, "'");
        case ValueKind::text: return value;
        case ValueKind::choice:
            require(std::find(spec.choices.begin(), spec.choices.end(), value) != spec.choices.end(), "config key '",
                    spec.key, "' must be one of the listed choices, got '", value, "'");
            return value;
    }
    return value;
}

}  // namespace

RunConfig::RunConfig() {
    for (const auto& k : schema()) set(k.key, k.fallback);
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const KeySpec& spec = lookup(key);
    values_[key] = normalize(spec, value);
}

void RunConfig::apply(const std::string& assignment) {
    const auto eq = assignment.find('=');
    require(eq != std::string::npos, "expected key=value, got '", assignment, "'");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        try {
            const auto eq = line.find('=');
            require(eq != std::string::npos, "expected key=value");
            const std::string key = trim(line.substr(0, eq));
            require(seen.insert(key).second, "repeated key '", key, "'");
            cfg.set(key, trim(line.substr(eq + 1)));
        } catch (const Error& e) {
            fail(origin, ":", lineno, ": ", e.what());
        }
    }
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return parse(io::read_text(path), path.string()); }

const std::string& RunConfig::raw(const std::string& key) const {
    lookup(key);
    return values_.at(key);
}

std::int64_t RunConfig::integer(const std::string& key) const {
    require(lookup(key).kind == ValueKind::integer, "config key '", key, "' is not an integer");
    return std::stoll(values_.at(key));
}

std::size_t RunConfig::count(const std::string& key) const { return static_cast<std::size_t>(integer(key)); }

double RunConfig::real(const std::string& key) const {
    require(lookup(key).kind == ValueKind::real, "config key '", key, "' is not a number");
    return std::stod(values_.at(key));
}

bool RunConfig::boolean(const std::string& key) const {
    require(lookup(key).kind == ValueKind::boolean, "config key '", key, "' is not a boolean");
    return values_.at(key) == "true";
}

const std::string& RunConfig::text(const std::string& key) const {
    const auto kind = lookup(key).kind;
    require(kind == ValueKind::text || kind == ValueKind::choice, "config key '", key, "' is not text");
    return values_.at(key);
}

std::string RunConfig::canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
}

std::string fnv_hex(const std::string& text) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_label(text)));
    return buf;
}

std::string RunConfig::hash() const { return fnv_hex(canonical()); }

}  // namespace wmgm::config
