#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "augment/types.hpp"

namespace augment {

struct CocoParseError : std::runtime_error {
    explicit CocoParseError(const std::string& msg) : std::runtime_error(msg) {}
};

struct AnnotationValidationError : std::runtime_error {
    AnnotationValidationError(std::int64_t annotation_id, const std::string& msg)
        : std::runtime_error("annotation " + std::to_string(annotation_id) + ": " + msg),
          annotation_id(annotation_id) {}
    std::int64_t annotation_id;
};

/// Loads COCO detection JSON into per-image Layouts with synthesized captions.
/// `shot_list` optionally restricts to a newline-delimited set of annotation ids.
FewShotSet load_coco(const std::filesystem::path& path,
                     const std::optional<std::filesystem::path>& shot_list = std::nullopt);

/// Ground-truth oversampling: alpha copies of every layout, each copy
/// x-flipped with probability 1/2 under the given seed.
std::vector<Layout> oversample_gtos(const FewShotSet& set, int alpha, std::uint64_t rng_seed);

/// Flips every box of a layout around the vertical axis.
Layout flip_layout_x(const Layout& layout);

/// Writes layouts plus their image file references as COCO detection JSON.
/// image_files[i] is the emitted file_name for layouts[i].
void emit_coco(const std::vector<Layout>& layouts,
               const std::vector<std::string>& image_files,
               const std::filesystem::path& path);

}  // namespace augment
