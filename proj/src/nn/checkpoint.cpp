#include "staytime/nn/checkpoint.hpp"

#include <limits>
#include <unordered_set>

#include "../binary_io.hpp"
#include "staytime/error.hpp"

namespace staytime::nn {

void write_checkpoint(const std::string& path, const std::vector<Section>& sections) {
  detail::ByteWriter w;
  w.put_bytes(std::string_view(kCheckpointMagic, 4));
  w.put<std::uint32_t>(kCheckpointVersion);
  for (const Section& s : sections) {
    if (s.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw IoError("checkpoint section name too long: " + s.name.substr(0, 32) + "...");
    }
    w.put<std::uint16_t>(static_cast<std::uint16_t>(s.name.size()));
    w.put_bytes(s.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.data.rows()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.data.cols()));
    for (double v : s.data.values()) w.put<double>(v);
  }
  detail::write_file_bytes(path, w.bytes());
}

std::vector<Section> read_checkpoint(const std::string& path) {
  const std::vector<char> bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes);
  if (r.get_string(4, "magic") != std::string_view(kCheckpointMagic, 4)) {
    throw FormatError("bad checkpoint magic in '" + path + "'", 0);
  }
  const auto version_offset = r.offset();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_offset);
  }
  std::vector<Section> sections;
  std::unordered_set<std::string> seen;
  while (!r.at_end()) {
    const auto section_offset = r.offset();
    const auto name_len = r.get<std::uint16_t>("section name length");
    Section s;
    s.name = r.get_string(name_len, "section name");
    if (!seen.insert(s.name).second) {
      throw FormatError("duplicate checkpoint section '" + s.name + "'", section_offset);
    }
    const auto rows = r.get<std::uint32_t>("rows");
    const auto cols = r.get<std::uint32_t>("cols");
    const std::uint64_t count = static_cast<std::uint64_t>(rows) * cols;
    if (count > r.remaining() / sizeof(double)) {
      throw FormatError("truncated payload for section '" + s.name + "'", r.offset());
    }
    std::vector<double> data(count);
    for (auto& v : data) v = r.get<double>("payload");
    s.data = Tensor(rows, cols, std::move(data));
    sections.push_back(std::move(s));
  }
  return sections;
}

std::vector<Section> sections_from_params(std::span<Param* const> params) {
  std::vector<Section> out;
  out.reserve(params.size());
  for (const Param* p : params) out.push_back({p->name, p->value});
  return out;
}

const Section* find_section(const std::vector<Section>& sections, const std::string& name) {
  for (const Section& s : sections) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

void load_params(std::span<Param* const> params, const std::vector<Section>& sections) {
  for (Param* p : params) {
    const Section* s = find_section(sections, p->name);
    if (s == nullptr) throw ShapeError("checkpoint has no section '" + p->name + "'");
    require_same_shape(p->value, s->data, ("checkpoint section '" + p->name + "'").c_str());
    p->value = s->data;
  }
}

}  // namespace staytime::nn
