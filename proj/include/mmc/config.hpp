#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "mmc/core.hpp"

// Key/value configuration files. Sections ([converter], [range], ...) are
// organizational only; key names are globally unique and fixed.

namespace mmc {

struct Config {
    ConverterParams params;
    RequiredRange range;
};

namespace detail {

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::map<std::string, std::string> parse_key_values(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section header");
            continue;  // section names carry no meaning
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
        if (kv.count(key))
            throw ConfigError("config: duplicate key '" + key + "'");
        kv[key] = val;
    }
    return kv;
}

inline double to_double(const std::string& key, const std::string& val) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(val, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' has non-numeric value '" + val + "'");
    }
    if (pos != val.size())
        throw ConfigError("config: key '" + key + "' has trailing junk in value '" + val + "'");
    return v;
}

}  // namespace detail

inline Config parse_config(std::istream& in) {
    auto kv = detail::parse_key_values(in);
    Config cfg;
    cfg.params = ConverterParams{};
    cfg.params.u_cap_ref = 0.0;

    auto take = [&](const char* key, bool required) -> const std::string* {
        auto it = kv.find(key);
        if (it == kv.end()) {
            if (required) throw ConfigError(std::string("config: missing key '") + key + "'");
            return nullptr;
        }
        return &it->second;
    };
    auto num = [&](const char* key, bool required, double fallback) {
        const std::string* v = take(key, required);
        return v ? detail::to_double(key, *v) : fallback;
    };

    cfg.params.u_dc_nominal = num("u_dc_nominal_v", true, 0);
    cfg.params.n_submodules = static_cast<int>(num("n_submodules", true, 0));
    cfg.params.c_sm = num("c_sm_farads", true, 0);
    cfg.params.s_rated = num("s_rated_va", true, 0);
    cfg.params.p_rated = num("p_rated_w", true, 0);
    cfg.params.x_eq_pu = num("x_eq_pu", true, 0);
    cfg.params.x_arm_pu = num("x_arm_pu", true, 0);
    cfg.params.x_t_pu = num("x_t_pu", true, 0);
    cfg.params.u_acv_pu = num("u_acv_pu", true, 0);
    cfg.params.frequency = num("frequency_hz", true, 0);
    cfg.params.u_cap_ref = num("u_cap_ref_v", false, 0.0);
    cfg.range.q_max_pu = num("q_max_pu", true, 0);

    static const char* known[] = {"u_dc_nominal_v", "n_submodules", "c_sm_farads", "s_rated_va",
                                  "p_rated_w",      "x_eq_pu",      "x_arm_pu",    "x_t_pu",
                                  "u_acv_pu",       "frequency_hz", "u_cap_ref_v", "q_max_pu"};
    for (const auto& [k, v] : kv) {
        bool ok = false;
        for (auto* name : known)
            if (k == name) ok = true;
        if (!ok) throw ConfigError("config: unknown key '" + k + "'");
    }

    cfg.params.validate();
    cfg.range.validate();
    return cfg;
}

inline Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse_config(in);
}

inline Config preset_config(const std::string& name) {
    if (name == "table1") return Config{preset_table1(), preset_table1_range()};
    throw ConfigError("unknown preset: " + name);
}

}  // namespace mmc
