#pragma once

#include <filesystem>

#include "geos/image.hpp"

namespace geos {

// Dispatches on extension: .ppm/.pgm native, .png via libpng, .jpg/.jpeg via
// libjpeg. Throws IngestionError on unreadable files, ParseError on malformed
// content, ConfigError on unsupported extensions.
ImageU8 load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const ImageU8& im);

ImageU8 read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const ImageU8& im);
ImageU8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageU8& im);
ImageU8 read_jpeg(const std::filesystem::path& path);
void write_jpeg(const std::filesystem::path& path, const ImageU8& im, int quality = 92);

}  // namespace geos
