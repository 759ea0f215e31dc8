#include "cmfuse/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "cmfuse/error.hpp"

namespace cmfuse {

namespace {

struct Rgb {
    std::uint8_t r, g, b;
};

Rgb lerp(Rgb a, Rgb b, double t) {
    const auto mix = [t](std::uint8_t x, std::uint8_t y) {
        return static_cast<std::uint8_t>(std::lround(x + t * (y - x)));
    };
    return {mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b)};
}

constexpr Rgb kWhite{255, 255, 255};
constexpr Rgb kBlue{40, 70, 220};
constexpr Rgb kYellow{235, 195, 25};
constexpr Rgb kDarkRed{150, 20, 20};

template <typename T>
void put_pod(std::vector<std::uint8_t>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
    }
}

}  // namespace

void write_heatmap_bmp(const std::string& path, const Tensor& m, bool diverging) {
    const int n_rows = m.rows();
    const int n_cols = m.cols();
    if (n_rows == 0 || n_cols == 0) throw invariant_error("write_heatmap_bmp: empty matrix");

    double lo = m[0], hi = m[0];
    for (std::size_t i = 0; i < m.size(); ++i) {
        lo = std::min(lo, m[i]);
        hi = std::max(hi, m[i]);
    }
    const double vmax = std::max(std::fabs(lo), std::fabs(hi));

    const int scale = std::max(1, 256 / std::max(n_rows, n_cols));
    const int w = n_cols * scale;
    const int h = n_rows * scale;
    const int row_bytes = (w * 3 + 3) / 4 * 4;

    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(row_bytes) * h, 0);
    for (int i = 0; i < n_rows; ++i) {
        for (int j = 0; j < n_cols; ++j) {
            const double v = m.at(i, j);
            Rgb c = kWhite;
            if (diverging) {
                if (vmax > 0.0) {
                    const double t = std::min(1.0, std::fabs(v) / vmax);
                    c = v >= 0.0 ? lerp(kWhite, kYellow, t) : lerp(kWhite, kBlue, t);
                }
            } else {
                const double t = hi > lo ? (v - lo) / (hi - lo) : 0.0;
                c = lerp(kWhite, kDarkRed, t);
            }
            for (int di = 0; di < scale; ++di) {
                // BMP rows run bottom-up.
                const int y = h - 1 - (i * scale + di);
                for (int dj = 0; dj < scale; ++dj) {
                    const int x = j * scale + dj;
                    std::uint8_t* px = &pixels[static_cast<std::size_t>(y) * row_bytes + 3 * x];
                    px[0] = c.b;
                    px[1] = c.g;
                    px[2] = c.r;
                }
            }
        }
    }

    std::vector<std::uint8_t> header;
    const std::uint32_t data_size = static_cast<std::uint32_t>(pixels.size());
    const std::uint32_t file_size = 54 + data_size;
    header.push_back('B');
    header.push_back('M');
    put_pod<std::uint32_t>(header, file_size);
    put_pod<std::uint32_t>(header, 0);
    put_pod<std::uint32_t>(header, 54);
    put_pod<std::uint32_t>(header, 40);
    put_pod<std::int32_t>(header, w);
    put_pod<std::int32_t>(header, h);
    put_pod<std::uint16_t>(header, 1);
    put_pod<std::uint16_t>(header, 24);
    put_pod<std::uint32_t>(header, 0);
    put_pod<std::uint32_t>(header, data_size);
    put_pod<std::int32_t>(header, 2835);
    put_pod<std::int32_t>(header, 2835);
    put_pod<std::uint32_t>(header, 0);
    put_pod<std::uint32_t>(header, 0);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!out) throw io_error("write failed: " + path);
}

}  // namespace cmfuse
