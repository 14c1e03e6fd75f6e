#include "staytime/embedding_table.hpp"

#include <cmath>

#include "binary_io.hpp"
#include "staytime/error.hpp"

namespace staytime {

EmbeddingTable::EmbeddingTable(std::uint32_t dim) : dim_(dim) {
  if (dim == 0) throw ValidationError("embedding table dim must be positive");
}

void EmbeddingTable::insert(Id id, std::vector<double> values) {
  if (values.size() != dim_) {
    throw ValidationError("embedding for id " + std::to_string(id) + " has length " + std::to_string(values.size()) +
                          ", table dim is " + std::to_string(dim_));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError("embedding for id " + std::to_string(id) + " is not finite");
  }
  if (!entries_.emplace(id, std::move(values)).second) {
    throw ValidationError("duplicate embedding id " + std::to_string(id));
  }
}

const std::vector<double>* EmbeddingTable::find(Id id) const {
  const auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : &it->second;
}

double to_storage_precision(double v) { return static_cast<double>(static_cast<float>(v)); }

std::vector<char> encode_embedding_table(const EmbeddingTable& table) {
  detail::ByteWriter w;
  w.put_bytes(std::string_view(kEmbeddingMagic, 4));
  w.put<std::uint32_t>(kEmbeddingVersion);
  w.put<std::uint32_t>(table.dim());
  w.put<std::uint64_t>(table.size());
  for (const auto& [id, values] : table.entries()) {
    w.put<std::uint64_t>(static_cast<std::uint64_t>(id));
    for (double v : values) w.put<float>(static_cast<float>(v));
  }
  return w.bytes();
}

EmbeddingTable decode_embedding_table(const std::vector<char>& bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 4 || r.get_string(4, "magic") != std::string_view(kEmbeddingMagic, 4)) {
    throw FormatError("bad embedding-table magic", 0);
  }
  const auto version_offset = r.offset();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kEmbeddingVersion) {
    throw FormatError("unsupported embedding-table version " + std::to_string(version), version_offset);
  }
  const auto dim_offset = r.offset();
  const auto dim = r.get<std::uint32_t>("dim");
  if (dim == 0) throw FormatError("embedding-table dim is zero", dim_offset);
  const auto count = r.get<std::uint64_t>("count");
  const std::uint64_t record_size = sizeof(std::uint64_t) + static_cast<std::uint64_t>(dim) * sizeof(float);
  if (count > r.remaining() / record_size) {
    throw FormatError("truncated payload: header promises " + std::to_string(count) + " records", r.offset());
  }
  EmbeddingTable table(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto record_offset = r.offset();
    const auto id = static_cast<Id>(r.get<std::uint64_t>("id"));
    std::vector<double> values(dim);
    for (auto& v : values) {
      v = static_cast<double>(r.get<float>("vector"));
      if (!std::isfinite(v)) throw FormatError("non-finite value for id " + std::to_string(id), r.offset() - 4);
    }
    if (table.contains(id)) throw FormatError("duplicate id " + std::to_string(id), record_offset);
    table.insert(id, std::move(values));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after last record", r.offset());
  return table;
}

EmbeddingTable read_embedding_table(const std::string& path) {
  return decode_embedding_table(detail::read_file_bytes(path));
}

void write_embedding_table(const EmbeddingTable& table, const std::string& path) {
  detail::write_file_bytes(path, encode_embedding_table(table));
}

}  // namespace staytime
