#pragma once

#include <string>
#include <vector>

#include "staytime/nn/layers.hpp"

namespace staytime::nn {

/// One named tensor inside a checkpoint.
struct Section {
  std::string name;
  Tensor data;
};

/// Checkpoint layout (little-endian):
///   "LCUW" | version u32 | repeated { name_len u16 | name | rows u32 | cols u32 | rows*cols f64 }
/// Sections run to end of file.
inline constexpr char kCheckpointMagic[4] = {'L', 'C', 'U', 'W'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::string& path, const std::vector<Section>& sections);
std::vector<Section> read_checkpoint(const std::string& path);

/// Section list from parameter values, in list order.
std::vector<Section> sections_from_params(std::span<Param* const> params);
/// Copies values back by name; throws ShapeError on a missing name or shape mismatch.
void load_params(std::span<Param* const> params, const std::vector<Section>& sections);

const Section* find_section(const std::vector<Section>& sections, const std::string& name);

}  // namespace staytime::nn
