#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <sys/types.h>
#include <vector>

#include "mptc/tensor.hpp"

namespace mptc {

// Bridge wire format, shared by request and response:
//   bytes 0..3   magic "TDN1"
//   bytes 4..15  H, W, C as uint32 little-endian
//   bytes 16..23 sigma as IEEE-754 binary64 little-endian
//   then H*W*C binary64 little-endian values in (h, w, c) order.
inline constexpr std::size_t kBridgeHeaderSize = 24;

struct BridgeFrame {
    Tensor3 tensor;
    double sigma = 0.0;
};

[[nodiscard]] std::vector<std::uint8_t> encode_bridge_frame(const Tensor3& t, double sigma);

/// Parses a complete frame; throws BridgeFailure on bad magic, zero
/// dimensions, or a length that does not match the header.
[[nodiscard]] BridgeFrame decode_bridge_frame(std::span<const std::uint8_t> bytes);

/// Total frame length announced by a 24-byte header.
[[nodiscard]] std::size_t bridge_frame_size(std::span<const std::uint8_t> header);

/// A child denoiser process spoken to over its standard input/output. The
/// endpoint is a shell command line. In one-shot mode every request spawns a
/// fresh process that must answer one frame and exit 0; in persistent mode
/// the process stays alive and answers framed requests in order.
class BridgeSession {
 public:
    BridgeSession(std::string endpoint, bool persistent, double timeout_seconds);
    ~BridgeSession();
    BridgeSession(const BridgeSession&) = delete;
    BridgeSession& operator=(const BridgeSession&) = delete;

    /// Sends t at sigma and returns the validated response tensor. Throws
    /// BridgeFailure; a failed persistent session is torn down and respawned
    /// on the next request.
    [[nodiscard]] Tensor3 request(const Tensor3& t, double sigma);

    [[nodiscard]] const std::string& endpoint() const { return endpoint_; }

 private:
    struct Child {
        pid_t pid = -1;
        int in_fd = -1;   // our end of the child's stdin
        int out_fd = -1;  // our end of the child's stdout
        int err_fd = -1;  // child's stderr
    };

    Child spawn() const;
    void shutdown(Child& child, bool force) const;
    std::vector<std::uint8_t> exchange(Child& child, const std::vector<std::uint8_t>& frame, bool one_shot) const;

    std::string endpoint_;
    bool persistent_;
    double timeout_seconds_;
    Child child_;
};

/// One-shot bridge call: spawn endpoint, send t, return the response.
[[nodiscard]] Tensor3 bridge_denoise(const Tensor3& t, double sigma, const std::string& endpoint,
                                     double timeout_seconds = 120.0);

}  // namespace mptc
