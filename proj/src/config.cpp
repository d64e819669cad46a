#include "cwg/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace cwg::config {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    auto s = sections.find(section);
    return s != sections.end() && s->second.count(key) > 0;
}

ConfigFile ConfigFile::parse_text(const std::string& text) {
    ConfigFile f;
    f.hash = fnv1a(text.data(), text.size());
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hashpos = line.find('#');
        if (hashpos != std::string::npos) line.erase(hashpos);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            require(line.back() == ']',
                    "config line " + std::to_string(lineno) + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            require(!section.empty(),
                    "config line " + std::to_string(lineno) + ": empty section name");
            f.sections[section];
            continue;
        }
        std::size_t eq = line.find('=');
        require(eq != std::string::npos,
                "config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        require(!key.empty(), "config line " + std::to_string(lineno) + ": empty key");
        f.sections[section][key] = value;
    }
    auto top = f.sections.find("");
    if (top != f.sections.end()) {
        auto it = top->second.find("schema");
        if (it != top->second.end()) f.schema = it->second;
    }
    require(f.schema == "cwg/1",
            "config: missing or unsupported schema line (expected `schema = cwg/1` before any "
            "section)");
    return f;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
}

const std::string* Reader::raw(const std::string& section, const std::string& key) const {
    auto s = file_.sections.find(section);
    if (s == file_.sections.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    return &k->second;
}

std::string Reader::text(const std::string& section, const std::string& key,
                         const std::string& def) {
    const std::string* v = raw(section, key);
    return v ? *v : def;
}

double Reader::number(const std::string& section, const std::string& key, double def) {
    const std::string* v = raw(section, key);
    if (!v) return def;
    char* end = nullptr;
    double x = std::strtod(v->c_str(), &end);
    if (end == v->c_str() || trim(end) != "") {
        flag(section, key, "not a number: `" + *v + "`");
        return def;
    }
    return x;
}

double Reader::need_number(const std::string& section, const std::string& key) {
    if (!raw(section, key)) {
        flag(section, key, "required key missing");
        return 0.0;
    }
    return number(section, key, 0.0);
}

long Reader::integer(const std::string& section, const std::string& key, long def) {
    const std::string* v = raw(section, key);
    if (!v) return def;
    char* end = nullptr;
    long x = std::strtol(v->c_str(), &end, 10);
    if (end == v->c_str() || trim(end) != "") {
        flag(section, key, "not an integer: `" + *v + "`");
        return def;
    }
    return x;
}

std::vector<double> Reader::numbers(const std::string& section, const std::string& key,
                                    const std::vector<double>& def) {
    const std::string* v = raw(section, key);
    if (!v) return def;
    std::istringstream in(*v);
    std::vector<double> out;
    double x;
    while (in >> x) out.push_back(x);
    if (!in.eof()) {
        flag(section, key, "not a number list: `" + *v + "`");
        return def;
    }
    return out;
}

Vec2 Reader::vec2(const std::string& section, const std::string& key, const Vec2& def) {
    std::vector<double> xs = numbers(section, key, {def.x(), def.y()});
    if (xs.size() != 2) {
        flag(section, key, "expected exactly two numbers");
        return def;
    }
    return Vec2(xs[0], xs[1]);
}

void Reader::flag(const std::string& section, const std::string& key, const std::string& message) {
    std::string where = section.empty() ? key : section + "." + key;
    errors_.push_back(where + ": " + message);
}

void Reader::finish() const {
    if (errors_.empty()) return;
    std::string msg = "config validation failed (" + std::to_string(errors_.size()) + " keys):";
    for (const std::string& e : errors_) msg += "\n  " + e;
    throw ValidationError(msg);
}

}  // namespace cwg::config
