#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "pinnlab/errors.hpp"

namespace pinnlab {

/// Layout of a flat parameter vector: named (rows x cols) slices in
/// registration order. Offsets are a pure function of the registered
/// shapes, so a fixed architecture config always maps to the same layout.
class ParamLayout {
 public:
  struct Slice {
    std::string name;
    int64_t offset = 0;
    int rows = 0;
    int cols = 0;  // cols == 1 for vectors
    int64_t size() const { return int64_t(rows) * cols; }
  };

  int64_t add(const std::string& name, int rows, int cols = 1) {
    Slice s;
    s.name = name;
    s.offset = total_;
    s.rows = rows;
    s.cols = cols;
    total_ += s.size();
    slices_.push_back(std::move(s));
    return slices_.back().offset;
  }

  int64_t size() const { return total_; }
  const std::vector<Slice>& slices() const { return slices_; }

  const Slice& find(const std::string& name) const {
    for (const auto& s : slices_)
      if (s.name == name) return s;
    throw UsageError("param slice not found: " + name);
  }

  /// FNV-1a over names and shapes; used to guard checkpoint loads.
  uint64_t digest() const {
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const void* p, size_t n) {
      const unsigned char* b = static_cast<const unsigned char*>(p);
      for (size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ull;
      }
    };
    for (const auto& s : slices_) {
      mix(s.name.data(), s.name.size());
      int64_t shape[2] = {s.rows, s.cols};
      mix(shape, sizeof shape);
    }
    return h;
  }

 private:
  std::vector<Slice> slices_;
  int64_t total_ = 0;
};

/// Flat 64-bit parameter vector paired with its layout.
struct ParamVector {
  std::vector<double> data;
  uint64_t layout_digest = 0;

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  double* raw() { return data.data(); }
  const double* raw() const { return data.data(); }
  std::span<double> slice(const ParamLayout::Slice& s) {
    return {data.data() + s.offset, static_cast<size_t>(s.size())};
  }
  std::span<const double> slice(const ParamLayout::Slice& s) const {
    return {data.data() + s.offset, static_cast<size_t>(s.size())};
  }

  static ParamVector zeros(const ParamLayout& layout) {
    ParamVector p;
    p.data.assign(static_cast<size_t>(layout.size()), 0.0);
    p.layout_digest = layout.digest();
    return p;
  }
};

// Checkpoint file: magic, layout digest, count, then count little-endian
// float64 values. Loads refuse on digest mismatch.
namespace checkpoint {

inline constexpr char kMagic[8] = {'P', 'L', 'C', 'K', '0', '0', '0', '1'};

inline void save(const std::string& path, const ParamVector& theta) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw ConfigError("cannot open checkpoint for writing: " + path);
  uint64_t count = static_cast<uint64_t>(theta.data.size());
  std::fwrite(kMagic, 1, 8, f);
  std::fwrite(&theta.layout_digest, 8, 1, f);
  std::fwrite(&count, 8, 1, f);
  std::fwrite(theta.data.data(), 8, count, f);
  std::fclose(f);
}

inline ParamVector load(const std::string& path, uint64_t expected_digest) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw ConfigError("cannot open checkpoint: " + path);
  char magic[8];
  uint64_t digest = 0, count = 0;
  bool ok = std::fread(magic, 1, 8, f) == 8 &&
            std::memcmp(magic, kMagic, 8) == 0 &&
            std::fread(&digest, 8, 1, f) == 1 && std::fread(&count, 8, 1, f) == 1;
  if (!ok) {
    std::fclose(f);
    throw ConfigError("malformed checkpoint: " + path);
  }
  if (digest != expected_digest) {
    std::fclose(f);
    throw ConfigError("checkpoint layout digest mismatch: " + path);
  }
  ParamVector theta;
  theta.layout_digest = digest;
  theta.data.resize(count);
  ok = std::fread(theta.data.data(), 8, count, f) == count;
  std::fclose(f);
  if (!ok) throw ConfigError("truncated checkpoint: " + path);
  return theta;
}

}  // namespace checkpoint
}  // namespace pinnlab
