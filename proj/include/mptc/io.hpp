#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mptc/tensor.hpp"

namespace mptc {

// Raw tensor file: 20-byte header -- magic "TNS1", then H, W, C, flags as
// uint32 little-endian -- followed by H*W*C binary64 little-endian values in
// (h, w, c) order.
inline constexpr std::size_t kRawHeaderSize = 20;

/// Header flag bits.
enum RawFlags : std::uint32_t {
    kRawNone = 0,
    kRawMask = 1u << 0,        ///< payload is a 0/1 sampling mask
    kRawNormalized = 1u << 1,  ///< payload is scaled to [0, 1]
};

struct RawTensor {
    Tensor3 tensor;
    std::uint32_t flags = kRawNone;
};

[[nodiscard]] std::vector<std::uint8_t> encode_raw(const Tensor3& t, std::uint32_t flags = kRawNone);
[[nodiscard]] RawTensor decode_raw(const std::vector<std::uint8_t>& bytes);

/// Writes via a temporary file and rename, so a failed write leaves no file.
void save_raw(const Tensor3& t, const std::filesystem::path& path, std::uint32_t flags = kRawNone);
/// Throws BadMagic or TruncatedFile.
[[nodiscard]] RawTensor load_raw(const std::filesystem::path& path);

enum class DatasetKind { ColorImage, Hyperspectral, Video };

[[nodiscard]] std::string to_string(DatasetKind kind);
[[nodiscard]] DatasetKind parse_dataset_kind(const std::string& name);
/// Declared upper bound per kind: 255, 65535 and 256.
[[nodiscard]] double peak_for(DatasetKind kind);
/// Bit depth the kind's image files must have: 8, 16 and 8.
[[nodiscard]] int bit_depth_for(DatasetKind kind);

struct DatasetSample {
    std::string name;
    Tensor3 tensor;
    double peak = 255.0;
    DatasetKind kind = DatasetKind::ColorImage;
};

/// A decoded image file: channels-last, native integer values as doubles.
struct ImageFile {
    Tensor3 pixels;  // H x W x (1 or 3)
    int bit_depth = 8;
};

/// Reads an 8/16-bit grayscale or RGB image (PNG or binary PGM/PPM). Alpha is
/// dropped; palette images are expanded to RGB.
[[nodiscard]] ImageFile read_image(const std::filesystem::path& path);

/// Writes a 1- or 3-channel tensor as PNG, rounding and clamping to the bit
/// depth's range.
void write_png(const Tensor3& t, const std::filesystem::path& path, int bit_depth = 8);

/// Stacks the channels of each image along mode 3 in path order. Throws
/// InconsistentStack on differing dimensions and UnsupportedBitDepth when a
/// file's depth does not match the kind.
[[nodiscard]] DatasetSample load_image_stack(const std::vector<std::filesystem::path>& paths, DatasetKind kind,
                                             std::string name = {});

/// Loads a sample from a raw tensor file or from one or more image files.
[[nodiscard]] DatasetSample load_sample(const std::vector<std::filesystem::path>& paths, DatasetKind kind,
                                        std::string name = {});

}  // namespace mptc
