#include "sttvc/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace sttvc::io {

namespace fs = std::filesystem;

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

void check_frame(const Tensor& f, const char* what)
{
    if (f.rank() != 3 || f.dim(0) != 3) throw std::invalid_argument(std::string(what) + ": expected a 3 x H x W frame");
}

struct FileCloser {
    void operator()(FILE* f) const
    {
        if (f) std::fclose(f);
    }
};

std::string lower_ext(const std::string& path)
{
    std::string e = fs::path(path).extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e;
}

}  // namespace

std::vector<std::uint8_t> to_rgb24(const Tensor& frame)
{
    check_frame(frame, "to_rgb24");
    const int h = frame.dim(1), w = frame.dim(2);
    std::vector<std::uint8_t> out(static_cast<std::size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) out[(static_cast<std::size_t>(y) * w + x) * 3 + c] = to_byte(frame.at(c, y, x));
    return out;
}

Tensor from_rgb24(const std::uint8_t* bytes, int width, int height)
{
    Tensor f({3, height, width});
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c)
                f.at(c, y, x) = bytes[(static_cast<std::size_t>(y) * width + x) * 3 + c] / 255.0;
    return f;
}

Tensor read_png(const std::string& path)
{
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw std::runtime_error("read_png: " + path + ": " + img.message);
    img.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&img);
        throw std::runtime_error("read_png: " + path + ": " + img.message);
    }
    return from_rgb24(buf.data(), static_cast<int>(img.width), static_cast<int>(img.height));
}

void write_png(const std::string& path, const Tensor& frame)
{
    const auto rgb = to_rgb24(frame);
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(frame.dim(2));
    img.height = static_cast<png_uint_32>(frame.dim(1));
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, rgb.data(), 0, nullptr))
        throw std::runtime_error("write_png: " + path + ": " + img.message);
}

Tensor read_ppm(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_ppm: cannot open " + path);
    auto token = [&]() {
        std::string t;
        char c;
        while (in.get(c)) {
            if (c == '#') {
                std::string skip;
                std::getline(in, skip);
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (!t.empty()) break;
                continue;
            }
            t.push_back(c);
        }
        return t;
    };
    if (token() != "P6") throw std::runtime_error("read_ppm: " + path + " is not a binary PPM");
    const int w = std::stoi(token()), h = std::stoi(token()), maxval = std::stoi(token());
    if (maxval != 255) throw std::runtime_error("read_ppm: only 8-bit PPM is supported");
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw std::runtime_error("read_ppm: truncated " + path);
    return from_rgb24(buf.data(), w, h);
}

void write_ppm(const std::string& path, const Tensor& frame)
{
    const auto rgb = to_rgb24(frame);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_ppm: cannot open " + path);
    out << "P6\n" << frame.dim(2) << ' ' << frame.dim(1) << "\n255\n";
    out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
}

Tensor read_image(const std::string& path)
{
    const std::string e = lower_ext(path);
    if (e == ".png") return read_png(path);
    if (e == ".ppm") return read_ppm(path);
    throw std::invalid_argument("read_image: unsupported extension " + e);
}

void write_image(const std::string& path, const Tensor& frame)
{
    const std::string e = lower_ext(path);
    if (e == ".png") return write_png(path, frame);
    if (e == ".ppm") return write_ppm(path, frame);
    throw std::invalid_argument("write_image: unsupported extension " + e);
}

std::vector<Tensor> read_sequence(const std::string& path, int max_frames, int width, int height)
{
    std::vector<Tensor> frames;
    if (fs::is_directory(path)) {
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(path)) {
            const std::string ext = lower_ext(e.path().string());
            if (ext == ".png" || ext == ".ppm") files.push_back(e.path().string());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            if (max_frames >= 0 && static_cast<int>(frames.size()) >= max_frames) break;
            frames.push_back(read_image(f));
        }
    } else {
        if (width <= 0 || height <= 0) throw std::invalid_argument("read_sequence: raw input needs width and height");
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("read_sequence: cannot open " + path);
        std::vector<std::uint8_t> buf(static_cast<std::size_t>(width) * height * 3);
        while (max_frames < 0 || static_cast<int>(frames.size()) < max_frames) {
            in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
            if (in.gcount() == 0) break;
            if (in.gcount() != static_cast<std::streamsize>(buf.size()))
                throw std::runtime_error("read_sequence: " + path + " ends in a partial frame");
            frames.push_back(from_rgb24(buf.data(), width, height));
        }
    }
    for (std::size_t i = 1; i < frames.size(); ++i)
        if (frames[i].shape() != frames[0].shape())
            throw std::runtime_error("read_sequence: frame " + std::to_string(i) + " has a different size");
    return frames;
}

void write_sequence(const std::string& dir, const std::vector<Tensor>& frames)
{
    fs::create_directories(dir);
    char name[32];
    for (std::size_t i = 0; i < frames.size(); ++i) {
        std::snprintf(name, sizeof name, "frame_%04zu.png", i);
        write_png((fs::path(dir) / name).string(), frames[i]);
    }
}

Tensor quantize_8bit(const Tensor& frame)
{
    Tensor out = frame;
    for (auto& v : out.storage()) v = to_byte(v) / 255.0;
    return out;
}

Tensor pad_replicate(const Tensor& frame, int multiple)
{
    check_frame(frame, "pad_replicate");
    const int h = frame.dim(1), w = frame.dim(2);
    const int ph = (h + multiple - 1) / multiple * multiple;
    const int pw = (w + multiple - 1) / multiple * multiple;
    if (ph == h && pw == w) return frame;
    Tensor out({3, ph, pw});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < ph; ++y)
            for (int x = 0; x < pw; ++x) out.at(c, y, x) = frame.at(c, std::min(y, h - 1), std::min(x, w - 1));
    return out;
}

Tensor crop(const Tensor& frame, int height, int width)
{
    check_frame(frame, "crop");
    if (height > frame.dim(1) || width > frame.dim(2)) throw std::invalid_argument("crop: larger than frame");
    Tensor out({3, height, width});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) out.at(c, y, x) = frame.at(c, y, x);
    return out;
}

}  // namespace sttvc::io
