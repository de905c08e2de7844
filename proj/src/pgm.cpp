#include "smm/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace smm {

GridImage make_grid(const Tensor& images) {
    if (images.rank() != 4 || images.dim(1) != 1) {
        throw ShapeError("make_grid", "expected [N,1,H,W] images, got " + to_string(images.shape()));
    }
    const Index n = images.dim(0), h = images.dim(2), w = images.dim(3);
    GridImage g;
    g.tiles = static_cast<int>(n);
    if (n == 0) return g;
    const Index per_row = static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(n))));
    const Index grid_rows = (n + per_row - 1) / per_row;
    g.rows = grid_rows * (h + 1) + 1;
    g.cols = per_row * (w + 1) + 1;
    g.pixels.assign(static_cast<std::size_t>(g.rows * g.cols), '\0');
    const Vector& v = images.data();
    for (Index k = 0; k < n; ++k) {
        const Index top = (k / per_row) * (h + 1) + 1;
        const Index left = (k % per_row) * (w + 1) + 1;
        for (Index r = 0; r < h; ++r) {
            for (Index c = 0; c < w; ++c) {
                const double x = static_cast<double>(v[(k * h + r) * w + c]);
                const double byte = std::clamp(std::round((x + 1.0) * 127.5), 0.0, 255.0);
                g.pixels[static_cast<std::size_t>((top + r) * g.cols + left + c)] =
                    static_cast<char>(static_cast<unsigned char>(byte));
            }
        }
    }
    return g;
}

void write_pgm(const GridImage& image, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("write_pgm", "cannot write '" + path.string() + "'");
    out << "P5\n" << image.cols << ' ' << image.rows << "\n255\n";
    out.write(image.pixels.data(), static_cast<std::streamsize>(image.pixels.size()));
}

GridImage read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("read_pgm", "cannot read '" + path.string() + "'");
    std::string magic;
    int maxval = 0;
    GridImage g;
    in >> magic >> g.cols >> g.rows >> maxval;
    if (magic != "P5" || maxval != 255) throw FormatError("read_pgm", "not an 8-bit binary PGM");
    in.get();
    g.pixels.resize(static_cast<std::size_t>(g.rows * g.cols));
    in.read(g.pixels.data(), static_cast<std::streamsize>(g.pixels.size()));
    if (!in) throw FormatError("read_pgm", "truncated PGM");
    return g;
}

}  // namespace smm
