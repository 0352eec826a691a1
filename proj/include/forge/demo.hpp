#pragma once

#include <cstdint>
#include <filesystem>

namespace forge {

/// Writes the synthetic desk-scale dataset: two 8x8 videos of three 4-frame
/// moments, class images, source annotations, a target query corpus, the
/// embedder projection and a ready-to-run forge.ini.
void write_demo_data(const std::filesystem::path& dir, std::uint64_t seed = 7);

}  // namespace forge
