#pragma once

#include <optional>
#include <string>

#include "assl/data/types.hpp"

namespace assl::data {

/// Decodes a PNG/JPEG file into 8-bit RGB. Returns nullopt when the file is
/// missing or not decodable.
std::optional<Image8> decode_image(const std::string& path);

/// Encodes an image by extension (.png or .jpg/.jpeg). Throws on IO failure.
void write_image(const std::string& path, const Image8& image);

/// decode_image + record invariants; throws when undecodable.
ImageRecord load_record(const std::string& path,
                        std::optional<RoofClass> label = std::nullopt);

}  // namespace assl::data
