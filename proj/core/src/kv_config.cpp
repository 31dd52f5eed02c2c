// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#include "pcmot/kv_config.hpp"

#include "pcmot/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace pcmot {
namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> items;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) items.push_back(item);
    }
    return items;
}

double to_double(const std::string& key, const std::string& text) {
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(v)) {
        throw ConfigError("invalid value for '" + key + "': '" + text + "' is not a number");
    }
    return v;
}

long long to_int(const std::string& key, const std::string& text) {
    char* end = nullptr;
    const long long v = std::strtoll(text.c_str(), &end, 10);
    if (text.empty() || end != text.c_str() + text.size()) {
        throw ConfigError("invalid value for '" + key + "': '" + text + "' is not an integer");
    }
    return v;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& source) {
    KeyValueConfig config;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(source, number, "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ParseError(source, number, "empty key");
        config.set(key, trim(line.substr(eq + 1)));
    }
    return config;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    return parse(in, path.string());
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : to_double(key, it->second);
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : to_int(key, it->second);
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::string v = it->second;
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError("invalid value for '" + key + "': '" + it->second + "' is not a boolean");
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key,
                                                    const std::vector<double>& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    for (const auto& item : split_list(it->second)) out.push_back(to_double(key, item));
    return out;
}

std::vector<long long> KeyValueConfig::get_int_list(const std::string& key,
                                                    const std::vector<long long>& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    // "a,b,...,z" expands to the arithmetic progression a, b, ..., z.
    const auto items = split_list(it->second);
    std::vector<long long> out;
    for (std::size_t k = 0; k < items.size(); ++k) {
        if (items[k] != "...") {
            out.push_back(to_int(key, items[k]));
            continue;
        }
        if (out.size() < 2 || k + 1 >= items.size()) {
            throw ConfigError("invalid value for '" + key + "': '...' needs two leading items and an end");
        }
        const long long step = out.back() - out[out.size() - 2];
        const long long end = to_int(key, items[k + 1]);
        if (step == 0 || (end - out.back()) % step != 0 || (end - out.back()) / step < 0) {
            throw ConfigError("invalid value for '" + key + "': '...' end is not reachable");
        }
        while (out.back() + step != end) out.push_back(out.back() + step);
    }
    return out;
}

void KeyValueConfig::check_known(const std::set<std::string>& allowed) const {
    for (const auto& [key, value] : values_) {
        if (!allowed.count(key)) throw ConfigError("unknown config key '" + key + "'");
    }
}

void KeyValueConfig::set_number(const std::string& key, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    values_[key] = std::string(buf, res.ptr);
}

std::string KeyValueConfig::to_string() const {
    std::string out;
    for (const auto& [key, value] : values_) out += key + " = " + value + "\n";
    return out;
}

}  // namespace pcmot
