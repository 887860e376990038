#pragma once

#include <string>

#include "stylefp/datamodel.hpp"

namespace stylefp {

// Decodes a raster file (png/jpg/bmp/...) into the canonical ImageTensor.
// Grayscale inputs are replicated to 3 channels and alpha is dropped; a
// warning line goes to stderr when that happens.
ImageTensor load_image(const std::string& path);

// Encodes as PNG (lossless) or JPEG depending on the file extension.
void save_image(const ImageTensor& image, const std::string& path);

bool is_supported_image_file(const std::string& path);

}  // namespace stylefp
