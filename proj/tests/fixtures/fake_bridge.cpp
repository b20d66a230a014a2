// Test double for the denoiser bridge. Reads request frames on stdin and
// answers on stdout according to the mode given as argv[1]:
//   identity     echo the payload
//   halve        multiply every value by 0.5
//   persistent   like halve, but keep serving frames until stdin closes
//   bad-magic    answer with a corrupted magic
//   wrong-shape  answer with the payload relabelled as (H*W*C) x 1 x 1
//   wrong-sigma  answer with sigma + 1
//   nan          answer with NaN in the first slot
//   crash        print a diagnostic to stderr and exit 3 without answering
//   sleep        never answer
//   ignore       exit 0 without reading anything
// Malformed requests are rejected with exit code 2 and no output.
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <thread>
#include <chrono>
#include <unistd.h>
#include <vector>

namespace {

bool read_exact(std::uint8_t* p, std::size_t n) {
    while (n > 0) {
        const ssize_t k = ::read(STDIN_FILENO, p, n);
        if (k <= 0) return false;
        p += k;
        n -= static_cast<std::size_t>(k);
    }
    return true;
}

void write_all(const std::vector<std::uint8_t>& buf) {
    std::size_t off = 0;
    while (off < buf.size()) {
        const ssize_t k = ::write(STDOUT_FILENO, buf.data() + off, buf.size() - off);
        if (k <= 0) return;
        off += static_cast<std::size_t>(k);
    }
}

std::uint32_t u32(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

double f64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = v << 8 | p[i];
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

void put_f64(std::uint8_t* p, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    for (int i = 0; i < 8; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

// Returns 0 on a served frame, 1 on clean EOF before a header, 2 on a bad request.
int serve_one(const std::string& mode) {
    std::uint8_t header[24];
    const ssize_t first = ::read(STDIN_FILENO, header, 1);
    if (first == 0) return 1;
    if (first < 0 || !read_exact(header + 1, 23)) return 2;
    if (std::memcmp(header, "TDN1", 4) != 0) return 2;
    const std::uint64_t h = u32(header + 4), w = u32(header + 8), c = u32(header + 12);
    if (h == 0 || w == 0 || c == 0) return 2;
    std::vector<std::uint8_t> frame(24 + 8 * h * w * c);
    std::memcpy(frame.data(), header, 24);
    if (!read_exact(frame.data() + 24, frame.size() - 24)) return 2;

    if (mode == "halve" || mode == "persistent") {
        for (std::size_t off = 24; off < frame.size(); off += 8) put_f64(&frame[off], 0.5 * f64(&frame[off]));
    } else if (mode == "bad-magic") {
        frame[0] = 'X';
    } else if (mode == "wrong-shape") {
        frame[4] = static_cast<std::uint8_t>(h * w * c);
        frame[5] = frame[6] = frame[7] = 0;
        frame[8] = 1;
        frame[9] = frame[10] = frame[11] = 0;
        frame[12] = 1;
        frame[13] = frame[14] = frame[15] = 0;
    } else if (mode == "wrong-sigma") {
        put_f64(&frame[16], f64(&frame[16]) + 1.0);
    } else if (mode == "nan") {
        put_f64(&frame[24], std::nan(""));
    }
    write_all(frame);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string mode = argc > 1 ? argv[1] : "identity";
    if (mode == "crash") {
        std::fprintf(stderr, "fake bridge: simulated failure\n");
        return 3;
    }
    if (mode == "ignore") return 0;
    if (mode == "sleep") {
        std::this_thread::sleep_for(std::chrono::seconds(30));
        return 0;
    }
    if (mode == "persistent") {
        for (;;) {
            const int rc = serve_one(mode);
            if (rc == 1) return 0;
            if (rc == 2) return 2;
        }
    }
    const int rc = serve_one(mode);
    return rc == 0 ? 0 : 2;
}
