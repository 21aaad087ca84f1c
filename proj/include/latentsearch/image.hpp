#pragma once

#include "errors.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace latentsearch {

/// RGB image, values in [0, 1], row-major with interleaved channels:
/// index = (y * width + x) * 3 + c.
struct ImageTensor {
    static constexpr int channels = 3;

    int width = 0;
    int height = 0;
    std::vector<double> values;

    static ImageTensor filled(int width, int height, double value = 0.0)
    {
        if (width < 1 || height < 1)
            throw ShapeError("image dimensions must be >= 1");
        return {width, height,
                std::vector<double>(static_cast<std::size_t>(width) * height * channels, value)};
    }

    std::size_t index(int y, int x, int c) const noexcept
    {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double& at(int y, int x, int c) noexcept { return values[index(y, x, c)]; }
    double at(int y, int x, int c) const noexcept { return values[index(y, x, c)]; }

    std::size_t size() const noexcept { return values.size(); }

    friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

/// Square crop window in pixel coordinates.
struct Window {
    int x = 0;
    int y = 0;
    int side = 1;

    friend bool operator==(const Window&, const Window&) = default;
};

namespace detail {

struct Tap {
    int lo;
    int hi;
    double frac; // weight of `hi`
};

/// Corner-aligned sample positions: output 0 maps to the first source pixel,
/// output n-1 to the last. A single output sample takes the window centre.
inline std::vector<Tap> bilinear_taps(int origin, int extent, int out)
{
    std::vector<Tap> taps(static_cast<std::size_t>(out));
    for (int i = 0; i < out; ++i) {
        const double pos = out == 1 ? 0.5 * (extent - 1)
                                    : static_cast<double>(i) * (extent - 1) / (out - 1);
        const int lo = std::min(static_cast<int>(std::floor(pos)), extent - 1);
        const int hi = std::min(lo + 1, extent - 1);
        taps[static_cast<std::size_t>(i)] = {origin + lo, origin + hi, pos - lo};
    }
    return taps;
}

} // namespace detail

/// Crops `window` and resizes it bilinearly to `out_width` x `out_height`.
inline ImageTensor resize_region(const ImageTensor& img, int x0, int y0, int region_width,
                                 int region_height, int out_width, int out_height)
{
    if (x0 < 0 || y0 < 0 || region_width < 1 || region_height < 1 || x0 + region_width > img.width
        || y0 + region_height > img.height)
        throw ShapeError("resize region outside the image");
    const auto xs = detail::bilinear_taps(x0, region_width, out_width);
    const auto ys = detail::bilinear_taps(y0, region_height, out_height);
    ImageTensor out = ImageTensor::filled(out_width, out_height);
    for (int i = 0; i < out_height; ++i) {
        const auto& ty = ys[static_cast<std::size_t>(i)];
        for (int j = 0; j < out_width; ++j) {
            const auto& tx = xs[static_cast<std::size_t>(j)];
            for (int c = 0; c < ImageTensor::channels; ++c) {
                const double top = (1.0 - tx.frac) * img.at(ty.lo, tx.lo, c) + tx.frac * img.at(ty.lo, tx.hi, c);
                const double bottom = (1.0 - tx.frac) * img.at(ty.hi, tx.lo, c) + tx.frac * img.at(ty.hi, tx.hi, c);
                out.at(i, j, c) = (1.0 - ty.frac) * top + ty.frac * bottom;
            }
        }
    }
    return out;
}

inline ImageTensor crop_resize(const ImageTensor& img, const Window& window, int out_size)
{
    return resize_region(img, window.x, window.y, window.side, window.side, out_size, out_size);
}

inline ImageTensor resize_image(const ImageTensor& img, int out_width, int out_height)
{
    return resize_region(img, 0, 0, img.width, img.height, out_width, out_height);
}

/// Adjoint of crop_resize: accumulates d(out) into d(img).
inline void crop_resize_adjoint(const Window& window, int out_size, const ImageTensor& grad_out,
                                ImageTensor& grad_img)
{
    if (grad_out.width != out_size || grad_out.height != out_size)
        throw ShapeError("crop gradient has the wrong size");
    const auto xs = detail::bilinear_taps(window.x, window.side, out_size);
    const auto ys = detail::bilinear_taps(window.y, window.side, out_size);
    for (int i = 0; i < out_size; ++i) {
        const auto& ty = ys[static_cast<std::size_t>(i)];
        for (int j = 0; j < out_size; ++j) {
            const auto& tx = xs[static_cast<std::size_t>(j)];
            for (int c = 0; c < ImageTensor::channels; ++c) {
                const double g = grad_out.at(i, j, c);
                grad_img.at(ty.lo, tx.lo, c) += (1.0 - ty.frac) * (1.0 - tx.frac) * g;
                grad_img.at(ty.lo, tx.hi, c) += (1.0 - ty.frac) * tx.frac * g;
                grad_img.at(ty.hi, tx.lo, c) += ty.frac * (1.0 - tx.frac) * g;
                grad_img.at(ty.hi, tx.hi, c) += ty.frac * tx.frac * g;
            }
        }
    }
}

// PNG persistence, 8 bits per channel.

inline void write_png(const std::string& path, const ImageTensor& img)
{
    std::vector<png_byte> bytes(img.values.size());
    for (std::size_t i = 0; i < bytes.size(); ++i)
        bytes[i] = static_cast<png_byte>(std::lround(std::clamp(img.values[i], 0.0, 1.0) * 255.0));

    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr))
        throw ConfigError("cannot write PNG " + path + ": " + image.message);
}

inline ImageTensor read_png(const std::string& path)
{
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw ConfigError("cannot read PNG " + path + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<png_byte> bytes(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
        png_image_free(&image);
        throw ConfigError("cannot decode PNG " + path + ": " + image.message);
    }
    ImageTensor img = ImageTensor::filled(static_cast<int>(image.width), static_cast<int>(image.height));
    for (std::size_t i = 0; i < bytes.size(); ++i)
        img.values[i] = bytes[i] / 255.0;
    return img;
}

} // namespace latentsearch
