#include "mcad/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mcad/version.hpp"

namespace mcad::io {

using nlohmann::json;

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        lines.push_back(line);
    }
    return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path);
    for (const std::string& l : lines) out << l << '\n';
    if (!out) throw IoError("write failed: " + path);
}

// --- quantized container ---------------------------------------------------------

namespace {

template <typename T>
void write_raw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

}  // namespace

void write_quantized(const std::string& path, const std::vector<QuantizedSequence>& seqs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path);
    out.write("MCAD1", 5);
    write_raw(out, uint32_t(seqs.size()));
    for (const auto& q : seqs) {
        out.write(reinterpret_cast<const char*>(q.command_ids.data()), kMaxSeqLen);
        out.write(reinterpret_cast<const char*>(q.param_bins.data()),
                  std::streamsize(sizeof(uint16_t) * q.param_bins.size()));
    }
    if (!out) throw IoError("write failed: " + path);
}

std::vector<QuantizedSequence> read_quantized(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[5];
    in.read(magic, 5);
    if (!in || std::memcmp(magic, "MCAD1", 5) != 0)
        throw IoError("bad magic in " + path);
    uint32_t count = read_raw<uint32_t>(in);
    std::vector<QuantizedSequence> seqs(count);
    for (auto& q : seqs) {
        in.read(reinterpret_cast<char*>(q.command_ids.data()), kMaxSeqLen);
        in.read(reinterpret_cast<char*>(q.param_bins.data()),
                std::streamsize(sizeof(uint16_t) * q.param_bins.size()));
    }
    if (!in) throw IoError("truncated file " + path);
    return seqs;
}

// --- checkpoint container ----------------------------------------------------------

void write_checkpoint(const std::string& path, const std::vector<NamedArrayData>& arrays,
                      const std::string& meta_json) {
    json manifest = json::array();
    uint64_t offset = 0;
    for (const auto& a : arrays) {
        manifest.push_back(
            {{"name", a.name}, {"shape", a.shape}, {"offset", offset}, {"count", a.data.size()}});
        offset += a.data.size();
    }
    std::string manifest_s = manifest.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path);
    out.write("MCPT1", 5);
    write_raw(out, uint32_t(1));
    write_raw(out, uint64_t(meta_json.size()));
    out.write(meta_json.data(), std::streamsize(meta_json.size()));
    write_raw(out, uint64_t(manifest_s.size()));
    out.write(manifest_s.data(), std::streamsize(manifest_s.size()));
    for (const auto& a : arrays)
        out.write(reinterpret_cast<const char*>(a.data.data()),
                  std::streamsize(a.data.size() * sizeof(float)));
    if (!out) throw IoError("write failed: " + path);
}

std::pair<std::vector<NamedArrayData>, std::string> read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[5];
    in.read(magic, 5);
    if (!in || std::memcmp(magic, "MCPT1", 5) != 0) throw IoError("bad magic in " + path);
    uint32_t version = read_raw<uint32_t>(in);
    if (version != 1) throw IoError("unsupported checkpoint version");
    uint64_t meta_len = read_raw<uint64_t>(in);
    std::string meta(meta_len, '\0');
    in.read(meta.data(), std::streamsize(meta_len));
    uint64_t manifest_len = read_raw<uint64_t>(in);
    std::string manifest_s(manifest_len, '\0');
    in.read(manifest_s.data(), std::streamsize(manifest_len));
    json manifest = json::parse(manifest_s);

    std::vector<NamedArrayData> arrays;
    for (const auto& e : manifest) {
        NamedArrayData a;
        a.name = e["name"].get<std::string>();
        a.shape = e["shape"].get<std::vector<int>>();
        a.data.resize(e["count"].get<size_t>());
        arrays.push_back(std::move(a));
    }
    for (auto& a : arrays)
        in.read(reinterpret_cast<char*>(a.data.data()),
                std::streamsize(a.data.size() * sizeof(float)));
    if (!in) throw IoError("truncated checkpoint " + path);
    return {std::move(arrays), std::move(meta)};
}

// --- config -------------------------------------------------------------------------

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

Config Config::parse(const std::string& text) {
    Config cfg;
    std::string section;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // strip comments outside quotes
        bool in_quote = false;
        for (size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_quote = !in_quote;
            else if (line[i] == '#' && !in_quote) {
                line.resize(i);
                break;
            }
        }
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t\r");
            size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("bad section header at line " + std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key = value at line " + std::to_string(lineno));
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);
        if (key.empty()) throw ConfigError("empty key at line " + std::to_string(lineno));
        cfg.kv_[section.empty() ? key : section + "." + key] = value;
    }
    return cfg;
}

std::string Config::get_str(const std::string& key, const std::string& def) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
}

double Config::get_num(const std::string& key, double def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
        return std::stod(it->second);
    } catch (...) {
        throw ConfigError("key '" + key + "' is not a number: " + it->second);
    }
}

int Config::get_int(const std::string& key, int def) const {
    return int(std::llround(get_num(key, double(def))));
}

uint64_t Config::get_u64(const std::string& key, uint64_t def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
        return std::stoull(it->second);
    } catch (...) {
        throw ConfigError("key '" + key + "' is not an integer: " + it->second);
    }
}

bool Config::get_bool(const std::string& key, bool def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("key '" + key + "' is not a bool: " + it->second);
}

uint64_t Config::hash() const {
    uint64_t h = 14695981039346656037ull;
    auto mix = [&](const std::string& s) {
        for (char c : s) {
            h ^= uint64_t(uint8_t(c));
            h *= 1099511628211ull;
        }
    };
    for (const auto& [k, v] : kv_) {
        mix(k);
        mix("=");
        mix(v);
        mix("\n");
    }
    return h;
}

std::string Config::dump() const {
    std::string out;
    for (const auto& [k, v] : kv_) out += k + " = " + v + "\n";
    return out;
}

void write_meta(const std::string& out_path, const std::string& command, uint64_t config_hash,
                uint64_t seed) {
    json j;
    j["tool"] = "mcad";
    j["version"] = kVersion;
    j["command"] = command;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    std::ofstream out(out_path + ".meta.json");
    if (!out) throw IoError("cannot open " + out_path + ".meta.json");
    out << j.dump(2) << '\n';
}

}  // namespace mcad::io
