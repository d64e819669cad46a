// Versioned key=value configuration with [section] headers.  Parsing is
// permissive (unknown keys are kept verbatim); typed access goes through a
// Reader that records every violation so a bad file reports all offending
// keys at once instead of failing on the first.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "cwg/common.hpp"

namespace cwg::config {

struct ConfigFile {
    std::string schema;  // must be "cwg/1"
    std::map<std::string, std::map<std::string, std::string>> sections;
    std::uint64_t hash = 0;  // of the raw text

    bool has(const std::string& section, const std::string& key) const;
    static ConfigFile parse_text(const std::string& text);
    static ConfigFile parse_file(const std::string& path);
};

class Reader {
  public:
    explicit Reader(const ConfigFile& file) : file_(file) {}

    std::string text(const std::string& section, const std::string& key, const std::string& def);
    double number(const std::string& section, const std::string& key, double def);
    double need_number(const std::string& section, const std::string& key);
    long integer(const std::string& section, const std::string& key, long def);
    std::vector<double> numbers(const std::string& section, const std::string& key,
                                const std::vector<double>& def);
    Vec2 vec2(const std::string& section, const std::string& key, const Vec2& def);

    // record a violation against a key the caller validated itself
    void flag(const std::string& section, const std::string& key, const std::string& message);
    bool ok() const { return errors_.empty(); }
    // throws ValidationError naming every recorded key
    void finish() const;

  private:
    const std::string* raw(const std::string& section, const std::string& key) const;
    const ConfigFile& file_;
    std::vector<std::string> errors_;
};

}  // namespace cwg::config
