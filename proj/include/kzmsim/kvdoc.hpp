// Structured key-value text documents: the config format and the run
// manifest. Sections in brackets, `key = value` lines, '#' comments.
// Serialization preserves insertion order so manifests diff cleanly.

#pragma once

#include <optional>
#include <string>
#include <vector>

namespace kzmsim {

class KvDoc {
  public:
    struct Entry {
        std::string key;
        std::string value;
    };
    struct Section {
        std::string name;
        std::vector<Entry> entries;
    };

    static KvDoc parse(const std::string& text, const std::string& origin = "<string>");
    static KvDoc load(const std::string& path);

    std::string serialize() const;
    // write via temp file + rename so readers never see a partial document
    void save_atomic(const std::string& path) const;

    bool has(const std::string& section, const std::string& key) const;
    std::optional<std::string> find(const std::string& section, const std::string& key) const;

    std::string get(const std::string& section, const std::string& key) const;
    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key) const;
    double get_double_or(const std::string& section, const std::string& key,
                         double fallback) const;
    long get_int(const std::string& section, const std::string& key) const;
    long get_int_or(const std::string& section, const std::string& key, long fallback) const;
    bool get_bool_or(const std::string& section, const std::string& key, bool fallback) const;
    std::vector<double> get_double_list(const std::string& section,
                                        const std::string& key) const;

    void set(const std::string& section, const std::string& key, const std::string& value);
    void set_double(const std::string& section, const std::string& key, double value);
    void set_int(const std::string& section, const std::string& key, long value);

    const std::vector<Section>& sections() const { return sections_; }
    bool has_section(const std::string& section) const;

  private:
    Section& section_ref(const std::string& name);
    const Section* section_ptr(const std::string& name) const;

    std::vector<Section> sections_;
};

// round-trip exact double formatting (17 significant digits)
std::string format_double(double v);

}  // namespace kzmsim
