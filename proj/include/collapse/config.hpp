#pragma once
// Minimal structured-text configuration format shared by experiment
// configs and the QA dataset files:
//
//   # comment
//   key = value            (top-level entries come before any section)
//   [section]
//   key = value            repeated keys form lists
//   list_key = a, b, c
//
// Section names may repeat; documents are kept in file order.

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace collapse {

struct ConfigError : std::runtime_error {
    std::vector<std::string> issues;

    explicit ConfigError(std::vector<std::string> problems)
        : std::runtime_error(join(problems)), issues(std::move(problems)) {}

    static std::string join(const std::vector<std::string>& problems) {
        std::string out = "configuration invalid:";
        for (const auto& p : problems) {
            out += "\n  - ";
            out += p;
        }
        return out;
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

}  // namespace detail

struct ConfigSection {
    std::string name;  // "" for the top-level block
    std::vector<std::pair<std::string, std::string>> entries;

    std::vector<std::string> values(std::string_view key) const {
        std::vector<std::string> out;
        for (const auto& [k, v] : entries) {
            if (k == key) out.push_back(v);
        }
        return out;
    }

    bool has(std::string_view key) const {
        for (const auto& [k, v] : entries) {
            if (k == key) return true;
        }
        return false;
    }
};

class ConfigDoc {
public:
    static ConfigDoc parse_string(std::string_view text, std::string_view origin = "<string>") {
        ConfigDoc doc;
        doc.sections_.push_back(ConfigSection{});  // top-level
        std::size_t line_no = 0;
        std::size_t pos = 0;
        std::vector<std::string> problems;
        while (pos <= text.size()) {
            const std::size_t eol = text.find('\n', pos);
            std::string_view line = text.substr(
                pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
            pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
            ++line_no;

            const std::size_t hash = line.find('#');
            if (hash != std::string_view::npos) line = line.substr(0, hash);
            line = detail::trim(line);
            if (line.empty()) continue;

            if (line.front() == '[') {
                if (line.back() != ']' || line.size() < 3) {
                    problems.push_back(std::string(origin) + ":" + std::to_string(line_no) +
                                       ": malformed section header");
                    continue;
                }
                ConfigSection section;
                section.name = std::string(detail::trim(line.substr(1, line.size() - 2)));
                doc.sections_.push_back(std::move(section));
                continue;
            }

            const std::size_t eq = line.find('=');
            if (eq == std::string_view::npos) {
                problems.push_back(std::string(origin) + ":" + std::to_string(line_no) +
                                   ": expected 'key = value'");
                continue;
            }
            const std::string key(detail::trim(line.substr(0, eq)));
            const std::string value(detail::trim(line.substr(eq + 1)));
            if (key.empty()) {
                problems.push_back(std::string(origin) + ":" + std::to_string(line_no) +
                                   ": empty key");
                continue;
            }
            doc.sections_.back().entries.emplace_back(key, value);
        }
        if (!problems.empty()) throw ConfigError(std::move(problems));
        return doc;
    }

    static ConfigDoc parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) {
            throw ConfigError({"cannot open config file: " + path});
        }
        std::ostringstream buffer;
        buffer << in.rdbuf();
        return parse_string(buffer.str(), path);
    }

    const std::vector<ConfigSection>& sections() const { return sections_; }

    const ConfigSection& top_level() const { return sections_.front(); }

    const ConfigSection* find(std::string_view name) const {
        for (const auto& s : sections_) {
            if (s.name == name) return &s;
        }
        return nullptr;
    }

    std::vector<const ConfigSection*> all(std::string_view name) const {
        std::vector<const ConfigSection*> out;
        for (const auto& s : sections_) {
            if (s.name == name) out.push_back(&s);
        }
        return out;
    }

private:
    std::vector<ConfigSection> sections_;
};

// Collects validation problems so a config is rejected with every
// violated field listed, not just the first.
class ConfigIssues {
public:
    void add(std::string message) { messages_.push_back(std::move(message)); }
    bool ok() const { return messages_.empty(); }
    const std::vector<std::string>& messages() const { return messages_; }
    void raise_if_any() const {
        if (!ok()) throw ConfigError(messages_);
    }

private:
    std::vector<std::string> messages_;
};

// Typed access to one section's keys; missing/malformed values are
// reported through the shared ConfigIssues collector.
class SectionView {
public:
    SectionView(const ConfigSection* section, std::string label, ConfigIssues& issues)
        : section_(section), label_(std::move(label)), issues_(&issues) {}

    bool present() const { return section_ != nullptr; }

    std::optional<std::string> raw(std::string_view key) const {
        if (section_ == nullptr) return std::nullopt;
        auto values = section_->values(key);
        if (values.empty()) return std::nullopt;
        if (values.size() > 1) {
            issues_->add(where(key) + ": given " + std::to_string(values.size()) +
                         " times, expected once");
            return std::nullopt;
        }
        return values.front();
    }

    std::vector<std::string> raw_list(std::string_view key) const {
        if (section_ == nullptr) return {};
        return section_->values(key);
    }

    std::string text(std::string_view key, std::string_view fallback) const {
        auto v = raw(key);
        return v ? *v : std::string(fallback);
    }

    std::optional<std::string> required_text(std::string_view key) const {
        auto v = raw(key);
        if (!v) issues_->add(where(key) + ": required");
        return v;
    }

    std::optional<double> number(std::string_view key) const {
        auto v = raw(key);
        if (!v) return std::nullopt;
        return parse_number(key, *v);
    }

    double number(std::string_view key, double fallback) const {
        auto v = number(key);
        return v ? *v : fallback;
    }

    std::optional<double> required_number(std::string_view key) const {
        auto v = raw(key);
        if (!v) {
            issues_->add(where(key) + ": required");
            return std::nullopt;
        }
        return parse_number(key, *v);
    }

    std::optional<long long> integer(std::string_view key) const {
        auto v = raw(key);
        if (!v) return std::nullopt;
        return parse_integer(key, *v);
    }

    long long integer(std::string_view key, long long fallback) const {
        auto v = integer(key);
        return v ? *v : fallback;
    }

    std::optional<long long> required_integer(std::string_view key) const {
        auto v = raw(key);
        if (!v) {
            issues_->add(where(key) + ": required");
            return std::nullopt;
        }
        return parse_integer(key, *v);
    }

    bool flag(std::string_view key, bool fallback) const {
        auto v = raw(key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        issues_->add(where(key) + ": expected true/false, got '" + *v + "'");
        return fallback;
    }

    std::optional<std::vector<double>> number_list(std::string_view key) const {
        auto v = raw(key);
        if (!v) return std::nullopt;
        std::vector<double> out;
        for (const auto& piece : split_list(*v)) {
            auto num = parse_number(key, piece);
            if (!num) return std::nullopt;
            out.push_back(*num);
        }
        if (out.empty()) {
            issues_->add(where(key) + ": empty list");
            return std::nullopt;
        }
        return out;
    }

    std::optional<std::vector<long long>> integer_list(std::string_view key) const {
        auto v = raw(key);
        if (!v) return std::nullopt;
        std::vector<long long> out;
        for (const auto& piece : split_list(*v)) {
            auto num = parse_integer(key, piece);
            if (!num) return std::nullopt;
            out.push_back(*num);
        }
        if (out.empty()) {
            issues_->add(where(key) + ": empty list");
            return std::nullopt;
        }
        return out;
    }

    void reject(std::string_view key, std::string_view why) const {
        issues_->add(where(key) + ": " + std::string(why));
    }

    std::string where(std::string_view key) const {
        return label_ + " " + std::string(key);
    }

    static std::vector<std::string> split_list(std::string_view value) {
        std::vector<std::string> out;
        std::size_t pos = 0;
        while (pos <= value.size()) {
            std::size_t comma = value.find(',', pos);
            if (comma == std::string_view::npos) comma = value.size();
            auto piece = detail::trim(value.substr(pos, comma - pos));
            if (!piece.empty()) out.emplace_back(piece);
            pos = comma + 1;
        }
        return out;
    }

private:
    std::optional<double> parse_number(std::string_view key, const std::string& value) const {
        errno = 0;
        char* end = nullptr;
        const double parsed = std::strtod(value.c_str(), &end);
        if (end == value.c_str() || *end != '\0' || errno == ERANGE) {
            issues_->add(where(key) + ": not a number: '" + value + "'");
            return std::nullopt;
        }
        return parsed;
    }

    std::optional<long long> parse_integer(std::string_view key, const std::string& value) const {
        errno = 0;
        char* end = nullptr;
        const long long parsed = std::strtoll(value.c_str(), &end, 10);
        if (end == value.c_str() || *end != '\0' || errno == ERANGE) {
            issues_->add(where(key) + ": not an integer: '" + value + "'");
            return std::nullopt;
        }
        return parsed;
    }

    const ConfigSection* section_;
    std::string label_;
    ConfigIssues* issues_;
};

}  // namespace collapse
