#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mcad/codec.hpp"
#include "mcad/errors.hpp"
#include "mcad/nn/tensor.hpp"

namespace mcad::io {

// --- corpus files (JSONL, one record per line) --------------------------------

std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

// --- quantized tensor container ------------------------------------------------
// Little-endian binary: magic "MCAD1", u32 record count, then per record
// 128 bytes of command ids followed by 128*16 u16 parameter bins.

void write_quantized(const std::string& path, const std::vector<QuantizedSequence>& seqs);
std::vector<QuantizedSequence> read_quantized(const std::string& path);

// --- checkpoint container --------------------------------------------------------
// Versioned flat named-array file: magic "MCPT1", u32 version, u64 meta length,
// meta JSON, u64 manifest length, manifest JSON
// [{"name","shape","offset","count"}...], then raw float32 data.

struct NamedArrayData {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
};

void write_checkpoint(const std::string& path, const std::vector<NamedArrayData>& arrays,
                      const std::string& meta_json);
std::pair<std::vector<NamedArrayData>, std::string> read_checkpoint(const std::string& path);

/// Live view of a model's state for save/load.
template <typename T>
using StateMap = std::vector<std::pair<std::string, nn::Tensor<T>*>>;

template <typename T>
void save_state(const StateMap<T>& state, const std::string& path,
                const std::string& meta_json) {
    std::vector<NamedArrayData> arrays;
    for (const auto& [name, tensor] : state) {
        NamedArrayData a;
        a.name = name;
        for (int i = 0; i < tensor->shape.rank(); ++i) a.shape.push_back(tensor->shape[i]);
        a.data.resize(size_t(tensor->size()));
        for (int64_t i = 0; i < tensor->size(); ++i) a.data[size_t(i)] = float((*tensor)[i]);
        arrays.push_back(std::move(a));
    }
    write_checkpoint(path, arrays, meta_json);
}

template <typename T>
std::string load_state(const StateMap<T>& state, const std::string& path) {
    auto [arrays, meta] = read_checkpoint(path);
    std::map<std::string, const NamedArrayData*> by_name;
    for (const auto& a : arrays) by_name[a.name] = &a;
    for (const auto& [name, tensor] : state) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw IoError("checkpoint missing array '" + name + "'");
        const NamedArrayData& a = *it->second;
        if (int64_t(a.data.size()) != tensor->size())
            throw IoError("checkpoint array '" + name + "' has wrong size");
        for (int64_t i = 0; i < tensor->size(); ++i) (*tensor)[i] = T(a.data[size_t(i)]);
    }
    return meta;
}

// --- config (TOML-style subset) --------------------------------------------------
// [section] headers, key = value lines, # comments, quoted strings, numbers,
// true/false. Keys address as "section.key".

class Config {
public:
    static Config load(const std::string& path);
    static Config parse(const std::string& text);

    void set(const std::string& key, const std::string& value) { kv_[key] = value; }
    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string get_str(const std::string& key, const std::string& def) const;
    double get_num(const std::string& key, double def) const;
    int get_int(const std::string& key, int def) const;
    bool get_bool(const std::string& key, bool def) const;
    uint64_t get_u64(const std::string& key, uint64_t def) const;

    /// FNV-1a over the sorted key=value list; stable provenance hash.
    uint64_t hash() const;
    std::string dump() const;

private:
    std::map<std::string, std::string> kv_;
};

/// Deterministic provenance sidecar (no timestamps): version, command,
/// config hash, seed.
void write_meta(const std::string& out_path, const std::string& command, uint64_t config_hash,
                uint64_t seed);

}  // namespace mcad::io
