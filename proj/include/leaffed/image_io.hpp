#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "leaffed/dataset.hpp"

namespace leaffed {

// Binary PGM (P5, one channel) and PPM (P6, three channels) with maxval up
// to 255. Decoded images are (H, W, C) tensors with values sample / maxval.
Tensor decode_pnm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pnm(const Tensor& image);

Tensor read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const Tensor& image);

// Area-averaging resize of an (H, W, C) image. Same-size input is returned
// unchanged.
Tensor resize_area(const Tensor& image, std::size_t height, std::size_t width);

// root/<class_name>/*.pgm|*.ppm; labels follow sorted class-directory names,
// files are read in sorted name order.
Dataset load_dataset(const std::filesystem::path& root, std::size_t height, std::size_t width);

// Writes the directory layout above (P5 for grayscale, P6 for RGB) plus
// manifest.json. Pixels are quantized to 8 bits.
void write_dataset(const Dataset& dataset, const std::filesystem::path& root);

// Class names, per-class counts, image shape and provenance as JSON text.
std::string dataset_manifest(const Dataset& dataset);

}  // namespace leaffed
