#include "kzmsim/kvdoc.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kzmsim/errors.hpp"

namespace kzmsim {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

KvDoc KvDoc::parse(const std::string& text, const std::string& origin) {
    KvDoc doc;
    std::istringstream in(text);
    std::string line;
    std::string current;  // "" = global section
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw SchemaError(origin + " line " + std::to_string(lineno) +
                                  ": unterminated section header");
            current = trim(line.substr(1, line.size() - 2));
            doc.section_ref(current);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw SchemaError(origin + " line " + std::to_string(lineno) +
                              ": expected `key = value`");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw SchemaError(origin + " line " + std::to_string(lineno) + ": empty key");
        doc.set(current, key, value);
    }
    return doc;
}

KvDoc KvDoc::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

std::string KvDoc::serialize() const {
    std::ostringstream out;
    bool first = true;
    for (const auto& sec : sections_) {
        if (!sec.name.empty()) {
            if (!first) out << "\n";
            out << "[" << sec.name << "]\n";
        }
        for (const auto& e : sec.entries) out << e.key << " = " << e.value << "\n";
        first = false;
    }
    return out.str();
}

void KvDoc::save_atomic(const std::string& path) const {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot write: " + tmp.string());
        out << serialize();
        out.flush();
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("rename failed: " + tmp.string() + " -> " + path + " (" +
                          ec.message() + ")");
}

KvDoc::Section& KvDoc::section_ref(const std::string& name) {
    for (auto& s : sections_)
        if (s.name == name) return s;
    sections_.push_back({name, {}});
    return sections_.back();
}

const KvDoc::Section* KvDoc::section_ptr(const std::string& name) const {
    for (const auto& s : sections_)
        if (s.name == name) return &s;
    return nullptr;
}

bool KvDoc::has_section(const std::string& section) const {
    return section_ptr(section) != nullptr;
}

bool KvDoc::has(const std::string& section, const std::string& key) const {
    return find(section, key).has_value();
}

std::optional<std::string> KvDoc::find(const std::string& section,
                                       const std::string& key) const {
    const Section* s = section_ptr(section);
    if (!s) return std::nullopt;
    for (const auto& e : s->entries)
        if (e.key == key) return e.value;
    return std::nullopt;
}

std::string KvDoc::get(const std::string& section, const std::string& key) const {
    auto v = find(section, key);
    if (!v) throw SchemaError("missing config key [" + section + "] " + key);
    return *v;
}

std::string KvDoc::get_or(const std::string& section, const std::string& key,
                          const std::string& fallback) const {
    auto v = find(section, key);
    return v ? *v : fallback;
}

namespace {

double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw SchemaError(where + ": not a number: '" + s + "'");
    }
}

}  // namespace

double KvDoc::get_double(const std::string& section, const std::string& key) const {
    return parse_double(get(section, key), "[" + section + "] " + key);
}

double KvDoc::get_double_or(const std::string& section, const std::string& key,
                            double fallback) const {
    auto v = find(section, key);
    return v ? parse_double(*v, "[" + section + "] " + key) : fallback;
}

long KvDoc::get_int(const std::string& section, const std::string& key) const {
    const std::string s = get(section, key);
    try {
        std::size_t pos = 0;
        const long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw SchemaError("[" + section + "] " + key + ": not an integer: '" + s + "'");
    }
}

long KvDoc::get_int_or(const std::string& section, const std::string& key,
                       long fallback) const {
    return has(section, key) ? get_int(section, key) : fallback;
}

bool KvDoc::get_bool_or(const std::string& section, const std::string& key,
                        bool fallback) const {
    auto v = find(section, key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw SchemaError("[" + section + "] " + key + ": not a boolean: '" + *v + "'");
}

std::vector<double> KvDoc::get_double_list(const std::string& section,
                                           const std::string& key) const {
    const std::string s = get(section, key);
    std::vector<double> out;
    std::istringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        const std::string t = cell;
        out.push_back(parse_double(t, "[" + section + "] " + key));
    }
    if (out.empty()) throw SchemaError("[" + section + "] " + key + ": empty list");
    return out;
}

void KvDoc::set(const std::string& section, const std::string& key,
                const std::string& value) {
    Section& s = section_ref(section);
    for (auto& e : s.entries) {
        if (e.key == key) {
            e.value = value;
            return;
        }
    }
    s.entries.push_back({key, value});
}

void KvDoc::set_double(const std::string& section, const std::string& key, double value) {
    set(section, key, format_double(value));
}

void KvDoc::set_int(const std::string& section, const std::string& key, long value) {
    set(section, key, std::to_string(value));
}

}  // namespace kzmsim
