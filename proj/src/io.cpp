#include "mptc/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <png.h>

#include "mptc/errors.hpp"

namespace mptc {

namespace fs = std::filesystem;

namespace {

constexpr char kRawMagic[4] = {'T', 'N', 'S', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

std::vector<std::uint8_t> read_all(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_atomically(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    fs::path tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            out.close();
            fs::remove(tmp);
            throw IoError("short write to " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

ImageFile read_png(const fs::path& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw IoError("cannot open " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng initialization failed");
    }
    // Everything touched after setjmp is either POD or owned by libpng.
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("corrupt PNG " + path.string());
    }
    png_init_io(png, file.get());
    png_read_png(png, info, PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_STRIP_ALPHA, nullptr);

    const png_uint_32 h = png_get_image_height(png, info);
    const png_uint_32 w = png_get_image_width(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int channels = png_get_channels(png, info);
    png_bytepp rows = png_get_rows(png, info);

    ImageFile img;
    img.bit_depth = depth;
    if ((depth != 8 && depth != 16) || (channels != 1 && channels != 3)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw UnsupportedBitDepth(path.string() + ": " + std::to_string(depth) + "-bit, " + std::to_string(channels) +
                                  " channel(s)");
    }
    img.pixels = Tensor3(Shape{h, w, static_cast<std::size_t>(channels)});
    for (png_uint_32 y = 0; y < h; ++y) {
        const png_bytep row = rows[y];
        for (png_uint_32 x = 0; x < w; ++x) {
            for (int c = 0; c < channels; ++c) {
                const std::size_t k = static_cast<std::size_t>(x) * channels + c;
                const double v = depth == 8 ? row[k] : static_cast<double>((row[2 * k] << 8) | row[2 * k + 1]);
                img.pixels(y, x, static_cast<std::size_t>(c)) = v;
            }
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

// Binary PGM (P5) / PPM (P6), maxval up to 65535.
ImageFile read_pnm(const fs::path& path) {
    const auto bytes = read_all(path);
    std::size_t pos = 2;
    auto next_token = [&]() -> long {
        for (;;) {
            while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
            if (pos < bytes.size() && bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        long v = 0;
        bool any = false;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos++] - '0');
            any = true;
        }
        if (!any) throw IoError("malformed PNM header in " + path.string());
        return v;
    };
    const int channels = bytes[1] == '5' ? 1 : 3;
    const long w = next_token();
    const long h = next_token();
    const long maxval = next_token();
    ++pos;  // single whitespace before the raster
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw IoError("bad PNM geometry in " + path.string());
    const int depth = maxval < 256 ? 8 : 16;
    const std::size_t bps = depth == 8 ? 1 : 2;
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * channels;
    if (bytes.size() < pos + n * bps) throw TruncatedFile(path.string() + ": raster shorter than header");

    ImageFile img;
    img.bit_depth = depth;
    img.pixels = Tensor3(Shape{static_cast<std::size_t>(h), static_cast<std::size_t>(w), static_cast<std::size_t>(channels)});
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* p = &bytes[pos + i * bps];
        img.pixels[i] = bps == 1 ? p[0] : static_cast<double>((p[0] << 8) | p[1]);
    }
    return img;
}

}  // namespace

std::vector<std::uint8_t> encode_raw(const Tensor3& t, std::uint32_t flags) {
    std::vector<std::uint8_t> out;
    out.reserve(kRawHeaderSize + 8 * t.size());
    out.insert(out.end(), std::begin(kRawMagic), std::end(kRawMagic));
    put_u32(out, static_cast<std::uint32_t>(t.height()));
    put_u32(out, static_cast<std::uint32_t>(t.width()));
    put_u32(out, static_cast<std::uint32_t>(t.channels()));
    put_u32(out, flags);
    for (double v : t.data()) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    return out;
}

RawTensor decode_raw(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kRawMagic, 4) != 0) {
        throw BadMagic("not a raw tensor file");
    }
    if (bytes.size() < kRawHeaderSize) throw TruncatedFile("header shorter than 20 bytes");
    const Shape shape{get_u32(&bytes[4]), get_u32(&bytes[8]), get_u32(&bytes[12])};
    const std::uint32_t flags = get_u32(&bytes[16]);
    if (shape.size() == 0) throw InvalidArgument("raw tensor has a zero dimension");
    const std::size_t expected = kRawHeaderSize + 8 * shape.size();
    if (bytes.size() < expected) {
        throw TruncatedFile("payload has " + std::to_string(bytes.size() - kRawHeaderSize) + " bytes, expected " +
                            std::to_string(expected - kRawHeaderSize));
    }
    if (bytes.size() > expected) throw InvalidArgument("trailing bytes after raw tensor payload");
    std::vector<double> values(shape.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t v = 0;
        const std::uint8_t* p = &bytes[kRawHeaderSize + 8 * i];
        for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(p[k]) << (8 * k);
        values[i] = std::bit_cast<double>(v);
    }
    return {Tensor3(shape, std::move(values)), flags};
}

void save_raw(const Tensor3& t, const fs::path& path, std::uint32_t flags) {
    write_atomically(path, encode_raw(t, flags));
}

RawTensor load_raw(const fs::path& path) { return decode_raw(read_all(path)); }

std::string to_string(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::ColorImage: return "color-image";
        case DatasetKind::Hyperspectral: return "hyperspectral";
        case DatasetKind::Video: return "video";
    }
    return "unknown";
}

DatasetKind parse_dataset_kind(const std::string& name) {
    if (name == "color-image" || name == "color" || name == "rgb") return DatasetKind::ColorImage;
    if (name == "hyperspectral" || name == "hsi" || name == "msi") return DatasetKind::Hyperspectral;
    if (name == "video" || name == "grayscale-video") return DatasetKind::Video;
    throw InvalidArgument("unknown dataset kind '" + name + "'");
}

double peak_for(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::ColorImage: return 255.0;
        case DatasetKind::Hyperspectral: return 65535.0;
        case DatasetKind::Video: return 256.0;
    }
    return 255.0;
}

int bit_depth_for(DatasetKind kind) { return kind == DatasetKind::Hyperspectral ? 16 : 8; }

ImageFile read_image(const fs::path& path) {
    std::FILE* probe = std::fopen(path.c_str(), "rb");
    if (!probe) throw IoError("cannot open " + path.string());
    unsigned char sig[8] = {};
    const std::size_t got = std::fread(sig, 1, sizeof sig, probe);
    std::fclose(probe);
    if (got == 8 && png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
    if (got >= 2 && sig[0] == 'P' && (sig[1] == '5' || sig[1] == '6')) return read_pnm(path);
    throw IoError(path.string() + ": unsupported image format (PNG, PGM or PPM expected)");
}

void write_png(const Tensor3& t, const fs::path& path, int bit_depth) {
    if (t.channels() != 1 && t.channels() != 3) throw InvalidArgument("PNG export needs 1 or 3 channels");
    if (bit_depth != 8 && bit_depth != 16) throw UnsupportedBitDepth("PNG export supports 8 or 16 bits");
    const double maxval = bit_depth == 8 ? 255.0 : 65535.0;
    const std::size_t bps = bit_depth / 8;
    const std::size_t stride = t.width() * t.channels() * bps;
    std::vector<png_byte> raster(t.height() * stride);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto v = static_cast<unsigned>(std::clamp(std::round(t[i]), 0.0, maxval));
        if (bps == 1) {
            raster[i] = static_cast<png_byte>(v);
        } else {
            raster[2 * i] = static_cast<png_byte>(v >> 8);
            raster[2 * i + 1] = static_cast<png_byte>(v & 0xff);
        }
    }
    std::vector<png_bytep> rows(t.height());
    for (std::size_t y = 0; y < t.height(); ++y) rows[y] = raster.data() + y * stride;

    fs::path tmp = path;
    tmp += ".partial";
    FilePtr file(std::fopen(tmp.c_str(), "wb"));
    if (!file) throw IoError("cannot write " + tmp.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        file.reset();
        std::error_code ec;
        fs::remove(tmp, ec);
        throw IoError("PNG encoding failed for " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(t.width()), static_cast<png_uint_32>(t.height()), bit_depth,
                 t.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_rows(png, info, rows.data());
    png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
    png_destroy_write_struct(&png, &info);
    file.reset();
    fs::rename(tmp, path);
}

DatasetSample load_image_stack(const std::vector<fs::path>& paths, DatasetKind kind, std::string name) {
    if (paths.empty()) throw InvalidArgument("no image paths given");
    std::vector<ImageFile> images;
    images.reserve(paths.size());
    std::size_t channels = 0;
    for (const auto& p : paths) {
        ImageFile img = read_image(p);
        if (img.bit_depth != bit_depth_for(kind)) {
            throw UnsupportedBitDepth(p.string() + " is " + std::to_string(img.bit_depth) + "-bit but " +
                                      to_string(kind) + " data must be " + std::to_string(bit_depth_for(kind)) +
                                      "-bit");
        }
        if (!images.empty() && (img.pixels.height() != images.front().pixels.height() ||
                                img.pixels.width() != images.front().pixels.width())) {
            throw InconsistentStack(p.string() + " is " + std::to_string(img.pixels.height()) + "x" +
                                    std::to_string(img.pixels.width()) + ", expected " +
                                    std::to_string(images.front().pixels.height()) + "x" +
                                    std::to_string(images.front().pixels.width()));
        }
        channels += img.pixels.channels();
        images.push_back(std::move(img));
    }

    const std::size_t h = images.front().pixels.height();
    const std::size_t w = images.front().pixels.width();
    Tensor3 stack(Shape{h, w, channels});
    std::size_t offset = 0;
    for (const auto& img : images) {
        for (std::size_t c = 0; c < img.pixels.channels(); ++c) stack.set_band(offset + c, img.pixels.band(c));
        offset += img.pixels.channels();
    }
    if (name.empty()) name = paths.front().stem().string();
    return {std::move(name), std::move(stack), peak_for(kind), kind};
}

DatasetSample load_sample(const std::vector<fs::path>& paths, DatasetKind kind, std::string name) {
    if (paths.size() == 1 && paths.front().extension() == ".tns") {
        RawTensor raw = load_raw(paths.front());
        if (name.empty()) name = paths.front().stem().string();
        return {std::move(name), std::move(raw.tensor), peak_for(kind), kind};
    }
    return load_image_stack(paths, kind, std::move(name));
}

}  // namespace mptc
