// SPDX-License-Identifier: Apache-2.0
//
// sbce - semi-blind MMSE channel estimation for massive MIMO
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef SBCE_CONFIG_HPP
#define SBCE_CONFIG_HPP

#include "sbce/common.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace sbce {

/// Flat key-value configuration with [section] headers, '#' comments and
/// one `key = value` pair per line.
class ConfigFile {
  public:
    static ConfigFile parse(const std::string& text) {
        ConfigFile cfg;
        std::istringstream in(text);
        std::string line;
        std::string section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos)
                line.erase(hash);
            line = trim(line);
            if (line.empty())
                continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw config_error("config line " + std::to_string(lineno) +
                                       ": unterminated section header");
                section = trim(line.substr(1, line.size() - 2));
                cfg.sections_[section];
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw config_error("config line " + std::to_string(lineno) +
                                   ": expected 'key = value'");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty())
                throw config_error("config line " + std::to_string(lineno) + ": empty key");
            cfg.sections_[section][key] = value;
        }
        return cfg;
    }

    static ConfigFile load(const std::string& path) {
        std::ifstream is(path);
        if (!is)
            throw io_error("cannot open config file '" + path + "'");
        std::ostringstream buf;
        buf << is.rdbuf();
        return parse(buf.str());
    }

    bool has(const std::string& section, const std::string& key) const {
        const auto s = sections_.find(section);
        return s != sections_.end() && s->second.count(key) > 0;
    }

    std::string get_string(const std::string& section, const std::string& key) const {
        const auto s = sections_.find(section);
        if (s == sections_.end() || !s->second.count(key))
            throw config_error("missing config entry [" + section + "] " + key);
        return s->second.at(key);
    }

    std::string get_string_or(const std::string& section, const std::string& key,
                              const std::string& fallback) const {
        return has(section, key) ? get_string(section, key) : fallback;
    }

    long get_int(const std::string& section, const std::string& key) const {
        return to_int(get_string(section, key), section, key);
    }

    long get_int_or(const std::string& section, const std::string& key, long fallback) const {
        return has(section, key) ? get_int(section, key) : fallback;
    }

    std::uint64_t get_u64_or(const std::string& section, const std::string& key,
                             std::uint64_t fallback) const {
        if (!has(section, key))
            return fallback;
        const std::string v = get_string(section, key);
        try {
            size_t pos = 0;
            const std::uint64_t out = std::stoull(v, &pos);
            if (pos != v.size())
                throw std::invalid_argument(v);
            return out;
        } catch (const std::exception&) {
            throw config_error("config entry [" + section + "] " + key +
                               " is not an unsigned integer: '" + v + "'");
        }
    }

    double get_double(const std::string& section, const std::string& key) const {
        return to_double(get_string(section, key), section, key);
    }

    double get_double_or(const std::string& section, const std::string& key,
                         double fallback) const {
        return has(section, key) ? get_double(section, key) : fallback;
    }

    std::vector<double> get_double_list(const std::string& section, const std::string& key) const {
        std::vector<double> out;
        for (const std::string& item : split_csv(get_string(section, key)))
            out.push_back(to_double(item, section, key));
        return out;
    }

    std::vector<std::string> get_string_list(const std::string& section,
                                             const std::string& key) const {
        return split_csv(get_string(section, key));
    }

    const std::map<std::string, std::map<std::string, std::string>>& sections() const {
        return sections_;
    }

    /// One-line-per-entry canonical dump, used to embed the resolved
    /// configuration into result files.
    std::string dump() const {
        std::ostringstream out;
        for (const auto& [name, entries] : sections_) {
            out << "[" << name << "]\n";
            for (const auto& [key, value] : entries)
                out << key << " = " << value << "\n";
        }
        return out.str();
    }

    void set(const std::string& section, const std::string& key, const std::string& value) {
        sections_[section][key] = value;
    }

  private:
    static std::string trim(const std::string& s) {
        const auto begin = s.find_first_not_of(" \t\r");
        if (begin == std::string::npos)
            return "";
        const auto end = s.find_last_not_of(" \t\r");
        return s.substr(begin, end - begin + 1);
    }

    static std::vector<std::string> split_csv(const std::string& s) {
        std::vector<std::string> out;
        std::string item;
        std::istringstream in(s);
        while (std::getline(in, item, ',')) {
            item = trim(item);
            if (!item.empty())
                out.push_back(item);
        }
        return out;
    }

    static long to_int(const std::string& v, const std::string& section, const std::string& key) {
        try {
            size_t pos = 0;
            const long out = std::stol(v, &pos);
            if (pos != v.size())
                throw std::invalid_argument(v);
            return out;
        } catch (const std::exception&) {
            throw config_error("config entry [" + section + "] " + key +
                               " is not an integer: '" + v + "'");
        }
    }

    static double to_double(const std::string& v, const std::string& section,
                            const std::string& key) {
        try {
            size_t pos = 0;
            const double out = std::stod(v, &pos);
            if (pos != v.size())
                throw std::invalid_argument(v);
            return out;
        } catch (const std::exception&) {
            throw config_error("config entry [" + section + "] " + key + " is not a number: '" +
                               v + "'");
        }
    }

    std::map<std::string, std::map<std::string, std::string>> sections_;
};

} // namespace sbce

#endif
