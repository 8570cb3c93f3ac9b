#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "augment/image.hpp"

namespace augment {

std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_png(const std::vector<std::uint8_t>& bytes);

void write_png(const Image& image, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

}  // namespace augment
