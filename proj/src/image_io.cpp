#include "planmae/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "planmae/error.hpp"

namespace planmae {

namespace {

std::uint8_t to_byte(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

struct ReadCursor {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;
};

void read_callback(png_structp png, png_bytep out, png_size_t length) {
    auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cursor->pos + length > cursor->bytes.size()) png_error(png, "truncated PNG data");
    std::memcpy(out, cursor->bytes.data() + cursor->pos, length);
    cursor->pos += length;
}

void write_callback(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void flush_callback(png_structp) {}

[[noreturn]] void error_callback(png_structp, png_const_charp message) {
    throw Error(ErrorCode::BadImage, std::string("png: ") + message);
}

void warning_callback(png_structp, png_const_charp) {}

constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

std::vector<std::uint8_t> encode_png(const Raster& image) {
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, error_callback,
                                              warning_callback);
    if (!png) throw Error(ErrorCode::IoError, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* png;
        png_infop* info;
        ~Guard() { png_destroy_write_struct(png, info); }
    } guard{&png, &info};

    const int ch = image.channels();
    png_set_write_fn(png, &out, write_callback, flush_callback);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()),
                 static_cast<png_uint_32>(image.height()), 8,
                 ch == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(image.width()) * ch);
    const auto data = image.data();
    for (int y = 0; y < image.height(); ++y) {
        for (std::size_t i = 0; i < row.size(); ++i) row[i] = to_byte(data[image.index(y, 0, 0) + i]);
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    return out;
}

Raster decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw Error(ErrorCode::BadImage, "not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, error_callback,
                                             warning_callback);
    if (!png) throw Error(ErrorCode::IoError, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* png;
        png_infop* info;
        ~Guard() { png_destroy_read_struct(png, info, nullptr); }
    } guard{&png, &info};

    ReadCursor cursor{bytes, 0};
    png_set_read_fn(png, &cursor, read_callback);
    png_read_info(png, info);

    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png), png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int ch = png_get_channels(png, info);
    if (ch != 1 && ch != 3) throw Error(ErrorCode::BadImage, "unsupported PNG channel layout");
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width) * height * ch);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
        rows[static_cast<std::size_t>(y)] = pixels.data() + static_cast<std::size_t>(y) * width * ch;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);

    std::vector<float> data(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) data[i] = static_cast<float>(pixels[i]) / 255.0f;
    return Raster(height, width, ch == 3 ? Mode::colored : Mode::line_drawing, std::move(data));
}

void write_png(const Raster& image, const std::filesystem::path& path) {
    const auto bytes = encode_png(image);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
}

Raster read_png(const std::filesystem::path& path, std::optional<int> expected_size, bool resize,
                std::optional<Mode> mode) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                          std::istreambuf_iterator<char>());
    Raster image = decode_png(bytes);
    if (expected_size && (image.height() != *expected_size || image.width() != *expected_size)) {
        if (!resize) {
            throw Error(ErrorCode::GeometryMismatch,
                        path.string() + " is " + std::to_string(image.width()) + "x" +
                            std::to_string(image.height()) + ", expected " +
                            std::to_string(*expected_size) + " square");
        }
        image = resize_nearest(image, *expected_size);
    }
    if (mode) image = convert_mode(image, *mode);
    return image;
}

Raster resize_nearest(const Raster& image, int size) {
    const int ch = image.channels();
    std::vector<float> data(static_cast<std::size_t>(size) * size * ch);
    for (int y = 0; y < size; ++y) {
        const int sy = static_cast<int>(static_cast<long>(y) * image.height() / size);
        for (int x = 0; x < size; ++x) {
            const int sx = static_cast<int>(static_cast<long>(x) * image.width() / size);
            for (int c = 0; c < ch; ++c) {
                data[(static_cast<std::size_t>(y) * size + x) * ch + c] = image.at(sy, sx, c);
            }
        }
    }
    return Raster(size, size, image.mode(), std::move(data));
}

Raster convert_mode(const Raster& image, Mode mode) {
    if (image.mode() == mode) return image;
    const auto n = static_cast<std::size_t>(image.height()) * image.width();
    const auto src = image.data();
    std::vector<float> data;
    if (mode == Mode::line_drawing) {
        data.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            data[i] = (src[3 * i] + src[3 * i + 1] + src[3 * i + 2]) / 3.0f;
        }
    } else {
        data.resize(3 * n);
        for (std::size_t i = 0; i < n; ++i) data[3 * i] = data[3 * i + 1] = data[3 * i + 2] = src[i];
    }
    return Raster(image.height(), image.width(), mode, std::move(data));
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += kAlphabet[v & 63];
    }
    if (i + 1 == bytes.size()) {
        const std::uint32_t v = bytes[i] << 16;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == bytes.size()) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) throw Error(ErrorCode::BadImage, "base64 length not a multiple of 4");
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        std::uint32_t v = 0;
        int pad = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            const char c = text[i + k];
            if (c == '=') {
                if (i + 4 != text.size() || k < 2) throw Error(ErrorCode::BadImage, "misplaced base64 padding");
                ++pad;
                v <<= 6;
                continue;
            }
            if (pad > 0) throw Error(ErrorCode::BadImage, "data after base64 padding");
            const auto pos = kAlphabet.find(c);
            if (pos == std::string_view::npos) throw Error(ErrorCode::BadImage, "invalid base64 character");
            v = (v << 6) | static_cast<std::uint32_t>(pos);
        }
        out.push_back(static_cast<std::uint8_t>(v >> 16));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
    }
    return out;
}

}  // namespace planmae
