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

#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace pcmot {

// Flat "key = value" configuration with '#' comments. Later sets override
// earlier ones, so a file can be loaded first and command-line flags applied
// on top.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::istream& in, const std::string& source = "<stream>");
    static KeyValueConfig load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    // Shortest text that parses back to exactly v.
    void set_number(const std::string& key, double v);
    bool contains(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    // Typed getters; a present but unparsable value throws ConfigError naming
    // the key.
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& fallback) const;
    // Integer lists also accept "a,b,...,z" for an arithmetic progression.
    std::vector<long long> get_int_list(const std::string& key,
                                        const std::vector<long long>& fallback) const;

    // Throws ConfigError naming the first key not in allowed.
    void check_known(const std::set<std::string>& allowed) const;

    std::string to_string() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace pcmot
