#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "facet/embedding.hpp"
#include "facet/errors.hpp"

namespace facet {

inline constexpr char kStoreMagic[4] = {'F', 'C', 'T', 'E'};
inline constexpr std::uint32_t kStoreFormatVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t x) {
  out.push_back(static_cast<char>(x & 0xff));
  out.push_back(static_cast<char>((x >> 8) & 0xff));
  out.push_back(static_cast<char>((x >> 16) & 0xff));
  out.push_back(static_cast<char>((x >> 24) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t x) {
  put_u32(out, static_cast<std::uint32_t>(x & 0xffffffffULL));
  put_u32(out, static_cast<std::uint32_t>(x >> 32));
}

inline void put_f32(std::string& out, float x) {
  std::uint32_t bits;
  std::memcpy(&bits, &x, sizeof(bits));
  put_u32(out, bits);
}

class ByteReader {
 public:
  ByteReader(const std::string& data, std::string context)
      : data_(data), context_(std::move(context)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t x = 0;
    for (int i = 3; i >= 0; --i) {
      x = (x << 8) | static_cast<std::uint8_t>(data_[pos_ + static_cast<std::size_t>(i)]);
    }
    pos_ += 4;
    return x;
  }

  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return lo | (hi << 32);
  }

  float f32() {
    const std::uint32_t bits = u32();
    float x;
    std::memcpy(&x, &bits, sizeof(x));
    return x;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool exhausted() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > data_.size()) {
      throw FormatError(context_ + ": truncated file");
    }
  }

  const std::string& data_;
  std::string context_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Immutable-after-construction collection of unit-norm embedding rows keyed
// by item id. One store exists per prompt, plus one "general" store.
class EmbeddingStore {
 public:
  EmbeddingStore(std::string tag, std::size_t dim) : tag_(std::move(tag)), dim_(dim) {
    if (dim_ == 0) {
      throw InvalidArgumentError("EmbeddingStore: dim must be positive");
    }
  }

  void add(const ItemId& id, const EmbeddingVector& v) {
    validate_item_id(id);
    if (v.dim() != dim_) {
      throw DimMismatchError("EmbeddingStore::add: vector dim " + std::to_string(v.dim()) +
                             " does not match store dim " + std::to_string(dim_));
    }
    if (index_.contains(id)) {
      throw DuplicateIdError("EmbeddingStore::add: duplicate id " + id);
    }
    check_unit_norm(v.span(), kNormTolerance, "EmbeddingStore::add(" + id + ")");
    index_.emplace(id, ids_.size());
    ids_.push_back(id);
    rows_.insert(rows_.end(), v.values().begin(), v.values().end());
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const std::string& tag() const { return tag_; }
  const std::vector<ItemId>& ids() const { return ids_; }

  bool contains(const ItemId& id) const { return index_.contains(id); }

  std::size_t index_of(const ItemId& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) {
      throw UnknownIdError("EmbeddingStore: unknown id " + id);
    }
    return it->second;
  }

  std::span<const float> row(std::size_t index) const {
    return std::span<const float>(rows_.data() + index * dim_, dim_);
  }

  EmbeddingVector get(const ItemId& id) const {
    const auto r = row(index_of(id));
    return EmbeddingVector(std::vector<float>(r.begin(), r.end()));
  }

  // Binary format, little-endian: magic "FCTE", version u32, dim u32,
  // count u64, tag (u32 length + bytes), count id records (u32 length +
  // bytes), then count*dim f32 row-major. Byte-identical for equal stores.
  void save(const std::filesystem::path& path) const {
    std::string buf;
    buf.reserve(24 + rows_.size() * 4);
    buf.append(kStoreMagic, sizeof(kStoreMagic));
    detail::put_u32(buf, kStoreFormatVersion);
    detail::put_u32(buf, static_cast<std::uint32_t>(dim_));
    detail::put_u64(buf, static_cast<std::uint64_t>(ids_.size()));
    detail::put_u32(buf, static_cast<std::uint32_t>(tag_.size()));
    buf.append(tag_);
    for (const auto& id : ids_) {
      validate_item_id(id);
      detail::put_u32(buf, static_cast<std::uint32_t>(id.size()));
      buf.append(id);
    }
    for (float x : rows_) detail::put_f32(buf, x);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("store save: cannot open " + path.string());
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) {
      throw IoError("store save: write failed for " + path.string());
    }
  }

  static EmbeddingStore load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      throw IoError("store load: cannot open " + path.string());
    }
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    detail::ByteReader r(data, "store load " + path.string());

    const std::string magic = r.bytes(4);
    if (std::memcmp(magic.data(), kStoreMagic, 4) != 0) {
      throw FormatError("store load: bad magic in " + path.string());
    }
    const std::uint32_t version = r.u32();
    if (version != kStoreFormatVersion) {
      throw FormatError("store load: unsupported version " + std::to_string(version));
    }
    const std::uint32_t dim = r.u32();
    if (dim == 0) {
      throw FormatError("store load: zero dim");
    }
    const std::uint64_t count = r.u64();
    const std::uint32_t tag_len = r.u32();
    EmbeddingStore store(r.bytes(tag_len), dim);

    std::vector<ItemId> ids;
    ids.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint32_t id_len = r.u32();
      ids.push_back(r.bytes(id_len));
    }
    store.ids_.reserve(count);
    store.rows_.reserve(count * dim);
    for (std::uint64_t i = 0; i < count; ++i) {
      std::vector<float> row(dim);
      for (std::uint32_t j = 0; j < dim; ++j) row[j] = r.f32();
      check_unit_norm(row, kNormToleranceLoad, "store load row " + ids[i]);
      validate_item_id(ids[i]);
      if (store.index_.contains(ids[i])) {
        throw DuplicateIdError("store load: duplicate id " + ids[i]);
      }
      store.index_.emplace(ids[i], store.ids_.size());
      store.ids_.push_back(ids[i]);
      store.rows_.insert(store.rows_.end(), row.begin(), row.end());
    }
    if (!r.exhausted()) {
      throw FormatError("store load: trailing bytes in " + path.string());
    }
    return store;
  }

  bool operator==(const EmbeddingStore& other) const {
    return tag_ == other.tag_ && dim_ == other.dim_ && ids_ == other.ids_ &&
           rows_ == other.rows_;
  }

 private:
  std::string tag_;
  std::size_t dim_;
  std::vector<ItemId> ids_;
  std::vector<float> rows_;  // size() * dim_, row-major
  std::unordered_map<ItemId, std::size_t> index_;
};

}  // namespace facet
