#pragma once

#include <filesystem>
#include <string>

#include "smm/tensor.hpp"

namespace smm {

struct GridImage {
    Index rows = 0;  // pixel rows
    Index cols = 0;
    int tiles = 0;
    std::string pixels;  // 8-bit grey, row-major
};

// Tiles an [N,1,H,W] batch in (-1,1) into a near-square grid with a 1-pixel
// black gutter; values are mapped back to [0,255].
GridImage make_grid(const Tensor& images);

// Binary PGM (P5).
void write_pgm(const GridImage& image, const std::filesystem::path& path);
GridImage read_pgm(const std::filesystem::path& path);

}  // namespace smm
