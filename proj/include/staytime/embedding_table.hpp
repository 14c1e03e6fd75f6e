#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "staytime/domain.hpp"

namespace staytime {

/// Pretrained id -> vector table (video or comment embeddings).
///
/// On disk (little-endian):
///   "LCUE" | version u32 = 1 | dim u32 | count u64 | count x { id u64 | dim x f32 }
/// Records are written in ascending id order. Values are stored as f32 and
/// widened to double on read, so only f32-representable values survive a
/// round trip bit-exactly.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::uint32_t dim);

  std::uint32_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(Id id) const { return entries_.contains(id); }

  /// Inserts a vector; throws ValidationError on a duplicate id, wrong
  /// length or non-finite value.
  void insert(Id id, std::vector<double> values);
  /// nullptr when absent.
  const std::vector<double>* find(Id id) const;
  const std::map<Id, std::vector<double>>& entries() const { return entries_; }

  bool operator==(const EmbeddingTable& other) const = default;

 private:
  std::uint32_t dim_ = 0;
  std::map<Id, std::vector<double>> entries_;
};

inline constexpr char kEmbeddingMagic[4] = {'L', 'C', 'U', 'E'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

/// Throws FormatError (with byte offset) on bad magic, version mismatch,
/// truncated payload, duplicate id or non-finite value.
EmbeddingTable read_embedding_table(const std::string& path);
EmbeddingTable decode_embedding_table(const std::vector<char>& bytes);
void write_embedding_table(const EmbeddingTable& table, const std::string& path);
std::vector<char> encode_embedding_table(const EmbeddingTable& table);

/// Rounds a value to the nearest f32, the precision the file stores.
double to_storage_precision(double v);

}  // namespace staytime
