#include "simbil/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "simbil/error.hpp"

namespace simbil {

Image::Image(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels),
      data_(static_cast<std::size_t>(width) * height * channels, fill)
{
    if (width <= 0 || height <= 0 || channels <= 0)
        throw ValidationError("image dimensions must be positive");
}

namespace {

std::uint8_t to_byte(double v)
{
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

struct PngReadState {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

void png_read_from_span(png_structp png, png_bytep out, png_size_t n)
{
    auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
    if (st->offset + n > st->bytes.size()) png_error(png, "truncated PNG stream");
    std::memcpy(out, st->bytes.data() + st->offset, n);
    st->offset += n;
}

void png_write_to_vector(png_structp png, png_bytep data, png_size_t n)
{
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + n);
}

void png_flush_noop(png_structp) {}

// Decodes to 8-bit gray or RGB rows; returns channel count.
int decode_rows(std::span<const std::uint8_t> bytes, int& width, int& height, std::vector<std::uint8_t>& pixels)
{
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
        throw ValidationError("not a PNG stream");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw RuntimeError("libpng initialisation failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ValidationError("corrupt PNG stream");
    }
    PngReadState st{bytes, 0};
    png_set_read_fn(png, &st, png_read_from_span);
    png_read_info(png, info);

    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    const int channels = png_get_channels(png, info);
    const auto rowbytes = png_get_rowbytes(png, info);
    pixels.assign(rowbytes * height, 0);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) rows[y] = pixels.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return channels;
}

std::vector<std::uint8_t> encode_rows(int width, int height, int channels, const std::vector<std::uint8_t>& pixels)
{
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw RuntimeError("libpng initialisation failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw RuntimeError("PNG encoding failed");
    }
    png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
    png_set_IHDR(png, info, width, height, 8, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y)
        rows[y] = const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(y) * width * channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

} // namespace

Image quantize8(const Image& img)
{
    Image out = img;
    for (auto& v : out.data()) v = to_byte(v) / 255.0;
    return out;
}

Image decode_png(std::span<const std::uint8_t> bytes)
{
    int w = 0, h = 0;
    std::vector<std::uint8_t> px;
    const int ch = decode_rows(bytes, w, h, px);
    Image img(w, h, ch);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c)
                img.at(c, y, x) = px[(static_cast<std::size_t>(y) * w + x) * ch + c] / 255.0;
    return img;
}

Image read_png(const std::filesystem::path& path)
{
    const auto bytes = read_file(path);
    try {
        return decode_png(bytes);
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_png(const Image& img)
{
    if (img.channels() != 1 && img.channels() != 3)
        throw ValidationError("PNG output supports 1 or 3 channels");
    const int w = img.width(), h = img.height(), ch = img.channels();
    std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h * ch);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c)
                px[(static_cast<std::size_t>(y) * w + x) * ch + c] = to_byte(img.at(c, y, x));
    return encode_rows(w, h, ch, px);
}

void write_png(const std::filesystem::path& path, const Image& img)
{
    write_file(path, encode_png(img));
}

Gray8 decode_png_gray(std::span<const std::uint8_t> bytes)
{
    Gray8 g;
    std::vector<std::uint8_t> px;
    const int ch = decode_rows(bytes, g.width, g.height, px);
    g.pixels.resize(static_cast<std::size_t>(g.width) * g.height);
    for (std::size_t i = 0; i < g.pixels.size(); ++i) g.pixels[i] = px[i * ch];
    return g;
}

std::vector<std::uint8_t> encode_png_gray(const Gray8& g)
{
    return encode_rows(g.width, g.height, 1, g.pixels);
}

Image crop(const Image& img, const PixelRect& r)
{
    if (r.empty() || r.x0 < 0 || r.y0 < 0 || r.x1 > img.width() || r.y1 > img.height())
        throw ValidationError("crop rectangle outside image");
    Image out(r.width(), r.height(), img.channels());
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < r.height(); ++y)
            for (int x = 0; x < r.width(); ++x) out.at(c, y, x) = img.at(c, r.y0 + y, r.x0 + x);
    return out;
}

Image resize_bilinear(const Image& img, int width, int height)
{
    Image out(width, height, img.channels());
    const double sx = static_cast<double>(img.width()) / width;
    const double sy = static_cast<double>(img.height()) / height;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height() - 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width() - 1);
            const double wx = fx - x0;
            for (int c = 0; c < img.channels(); ++c) {
                if (wx == 0.0 && wy == 0.0) {
                    out.at(c, y, x) = img.at(c, y0, x0);
                    continue;
                }
                const double top = img.at(c, y0, x0) * (1.0 - wx) + img.at(c, y0, x1) * wx;
                const double bot = img.at(c, y1, x0) * (1.0 - wx) + img.at(c, y1, x1) * wx;
                out.at(c, y, x) = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const std::filesystem::path& path)
{
    const auto bytes = read_file(path);
    return {bytes.begin(), bytes.end()};
}

} // namespace simbil
