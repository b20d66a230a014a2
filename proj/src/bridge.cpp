#include "mptc/bridge.hpp"

#include <bit>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include "mptc/errors.hpp"

extern char** environ;

namespace mptc {

namespace {

constexpr char kMagic[4] = {'T', 'D', 'N', '1'};
constexpr std::size_t kStderrCap = 4096;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

double get_f64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(v);
}

void close_fd(int& fd) {
    if (fd >= 0) {
        ::close(fd);
        fd = -1;
    }
}

void set_nonblocking(int fd) {
    const int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

std::string trim_diag(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s.empty() ? std::string{} : " (stderr: " + s + ")";
}

}  // namespace

std::vector<std::uint8_t> encode_bridge_frame(const Tensor3& t, double sigma) {
    std::vector<std::uint8_t> out;
    out.reserve(kBridgeHeaderSize + 8 * t.size());
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_u32(out, static_cast<std::uint32_t>(t.height()));
    put_u32(out, static_cast<std::uint32_t>(t.width()));
    put_u32(out, static_cast<std::uint32_t>(t.channels()));
    put_f64(out, sigma);
    for (double v : t.data()) put_f64(out, v);
    return out;
}

std::size_t bridge_frame_size(std::span<const std::uint8_t> header) {
    if (header.size() < kBridgeHeaderSize) throw BridgeFailure("short header");
    if (std::memcmp(header.data(), kMagic, 4) != 0) throw BridgeFailure("malformed header: bad magic");
    const std::uint64_t h = get_u32(header.data() + 4);
    const std::uint64_t w = get_u32(header.data() + 8);
    const std::uint64_t c = get_u32(header.data() + 12);
    if (h == 0 || w == 0 || c == 0) throw BridgeFailure("malformed header: zero dimension");
    return kBridgeHeaderSize + 8 * h * w * c;
}

BridgeFrame decode_bridge_frame(std::span<const std::uint8_t> bytes) {
    const std::size_t expected = bridge_frame_size(bytes);
    if (bytes.size() != expected) {
        throw BridgeFailure("frame length " + std::to_string(bytes.size()) + " does not match header (" +
                            std::to_string(expected) + ")");
    }
    const Shape shape{get_u32(bytes.data() + 4), get_u32(bytes.data() + 8), get_u32(bytes.data() + 12)};
    std::vector<double> values(shape.size());
    const std::uint8_t* p = bytes.data() + kBridgeHeaderSize;
    for (std::size_t i = 0; i < values.size(); ++i, p += 8) values[i] = get_f64(p);
    return {Tensor3(shape, std::move(values)), get_f64(bytes.data() + 16)};
}

BridgeSession::BridgeSession(std::string endpoint, bool persistent, double timeout_seconds)
    : endpoint_(std::move(endpoint)), persistent_(persistent), timeout_seconds_(timeout_seconds) {
    if (endpoint_.empty()) throw BridgeFailure("empty endpoint");
}

BridgeSession::~BridgeSession() { shutdown(child_, false); }

BridgeSession::Child BridgeSession::spawn() const {
    int in_pair[2];
    int out_pair[2];
    int err_pipe[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, in_pair) != 0) {
        throw BridgeFailure(std::string("socketpair: ") + std::strerror(errno));
    }
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, out_pair) != 0) {
        ::close(in_pair[0]);
        ::close(in_pair[1]);
        throw BridgeFailure(std::string("socketpair: ") + std::strerror(errno));
    }
    if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
        for (int fd : {in_pair[0], in_pair[1], out_pair[0], out_pair[1]}) ::close(fd);
        throw BridgeFailure(std::string("pipe: ") + std::strerror(errno));
    }

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_pair[1], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out_pair[1], STDOUT_FILENO);
    posix_spawn_file_actions_adddup2(&actions, err_pipe[1], STDERR_FILENO);

    const char* argv[] = {"/bin/sh", "-c", endpoint_.c_str(), nullptr};
    pid_t pid = -1;
    const int rc = ::posix_spawn(&pid, "/bin/sh", &actions, nullptr, const_cast<char* const*>(argv), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(in_pair[1]);
    ::close(out_pair[1]);
    ::close(err_pipe[1]);
    if (rc != 0) {
        ::close(in_pair[0]);
        ::close(out_pair[0]);
        ::close(err_pipe[0]);
        throw BridgeFailure("cannot spawn '" + endpoint_ + "': " + std::strerror(rc));
    }
    Child child{pid, in_pair[0], out_pair[0], err_pipe[0]};
    set_nonblocking(child.in_fd);
    set_nonblocking(child.out_fd);
    set_nonblocking(child.err_fd);
    return child;
}

void BridgeSession::shutdown(Child& child, bool force) const {
    close_fd(child.in_fd);
    close_fd(child.out_fd);
    close_fd(child.err_fd);
    if (child.pid > 0) {
        if (force) ::kill(child.pid, SIGKILL);
        int status = 0;
        ::waitpid(child.pid, &status, 0);
        child.pid = -1;
    }
}

std::vector<std::uint8_t> BridgeSession::exchange(Child& child, const std::vector<std::uint8_t>& frame,
                                                  bool one_shot) const {
    using clock = std::chrono::steady_clock;
    const auto deadline = clock::now() + std::chrono::duration<double>(timeout_seconds_);

    std::vector<std::uint8_t> response;
    std::string diag;
    std::size_t written = 0;
    std::size_t expected = 0;  // known once the response header has arrived
    bool out_open = true;

    auto fail = [&](const std::string& why) -> BridgeFailure {
        return BridgeFailure(why + " [endpoint '" + endpoint_ + "']" + trim_diag(diag));
    };

    for (;;) {
        if (!one_shot && expected != 0 && response.size() >= expected) break;
        if (one_shot && !out_open) break;

        pollfd fds[3];
        nfds_t n = 0;
        const bool writing = child.in_fd >= 0 && written < frame.size();
        int in_slot = -1, out_slot = -1, err_slot = -1;
        if (writing) {
            in_slot = static_cast<int>(n);
            fds[n++] = {child.in_fd, POLLOUT, 0};
        }
        if (out_open) {
            out_slot = static_cast<int>(n);
            fds[n++] = {child.out_fd, POLLIN, 0};
        }
        if (child.err_fd >= 0) {
            err_slot = static_cast<int>(n);
            fds[n++] = {child.err_fd, POLLIN, 0};
        }

        const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
        if (remaining.count() <= 0) throw fail("timeout after " + std::to_string(timeout_seconds_) + " s");
        const int ready = ::poll(fds, n, static_cast<int>(std::min<long long>(remaining.count(), 1000)));
        if (ready < 0) {
            if (errno == EINTR) continue;
            throw fail(std::string("poll: ") + std::strerror(errno));
        }

        if (in_slot >= 0 && (fds[in_slot].revents & (POLLOUT | POLLERR | POLLHUP))) {
            const ssize_t k = ::send(child.in_fd, frame.data() + written, frame.size() - written, MSG_NOSIGNAL);
            if (k > 0) {
                written += static_cast<std::size_t>(k);
                if (written == frame.size() && one_shot) close_fd(child.in_fd);
            } else if (k < 0 && errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR) {
                // The child stopped reading; keep draining stdout/stderr for a diagnostic.
                close_fd(child.in_fd);
            }
        }
        if (err_slot >= 0 && (fds[err_slot].revents & (POLLIN | POLLHUP | POLLERR))) {
            char buf[512];
            const ssize_t k = ::read(child.err_fd, buf, sizeof buf);
            if (k > 0) {
                if (diag.size() < kStderrCap) diag.append(buf, static_cast<std::size_t>(k));
            } else if (k == 0) {
                close_fd(child.err_fd);
            }
        }
        if (out_slot >= 0 && (fds[out_slot].revents & (POLLIN | POLLHUP | POLLERR))) {
            std::uint8_t buf[65536];
            std::size_t want = sizeof buf;
            if (!one_shot && expected != 0) want = std::min(want, expected - response.size());
            if (!one_shot && expected == 0) want = std::min(want, kBridgeHeaderSize - response.size());
            const ssize_t k = ::read(child.out_fd, buf, want);
            if (k > 0) {
                response.insert(response.end(), buf, buf + k);
                if (expected == 0 && response.size() >= kBridgeHeaderSize) {
                    try {
                        expected = bridge_frame_size(response);
                    } catch (const BridgeFailure& e) {
                        throw fail(e.what());
                    }
                }
            } else if (k == 0) {
                out_open = false;
                if (!one_shot) throw fail("bridge process closed its output");
            } else if (errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR) {
                throw fail(std::string("read: ") + std::strerror(errno));
            }
        }
    }

    if (written != frame.size()) {
        // Collect whatever the child said on stderr before it went away.
        while (child.err_fd >= 0) {
            pollfd p{child.err_fd, POLLIN, 0};
            if (::poll(&p, 1, 200) <= 0) break;
            char buf[512];
            const ssize_t k = ::read(child.err_fd, buf, sizeof buf);
            if (k <= 0) break;
            if (diag.size() < kStderrCap) diag.append(buf, static_cast<std::size_t>(k));
        }
        throw fail("bridge process did not consume the request");
    }
    return response;
}

Tensor3 BridgeSession::request(const Tensor3& t, double sigma) {
    const auto frame = encode_bridge_frame(t, sigma);
    std::vector<std::uint8_t> response;

    if (persistent_) {
        if (child_.pid <= 0) child_ = spawn();
        try {
            response = exchange(child_, frame, false);
        } catch (...) {
            shutdown(child_, true);
            throw;
        }
    } else {
        Child child = spawn();
        try {
            response = exchange(child, frame, true);
        } catch (...) {
            shutdown(child, true);
            throw;
        }
        const pid_t pid = child.pid;
        child.pid = -1;
        shutdown(child, false);
        int status = 0;
        ::waitpid(pid, &status, 0);
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
            throw BridgeFailure("bridge process '" + endpoint_ + "' exited abnormally (status " +
                                std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1) + ")");
        }
    }

    if (response.empty()) throw BridgeFailure("empty response from '" + endpoint_ + "'");
    BridgeFrame reply = decode_bridge_frame(response);
    if (!(reply.tensor.shape() == t.shape())) {
        throw BridgeFailure("shape mismatch: sent " + t.shape().str() + ", received " + reply.tensor.shape().str());
    }
    if (std::bit_cast<std::uint64_t>(reply.sigma) != std::bit_cast<std::uint64_t>(sigma)) {
        throw BridgeFailure("response sigma does not echo the request");
    }
    if (!reply.tensor.all_finite()) throw BridgeFailure("response contains non-finite values");
    return std::move(reply.tensor);
}

Tensor3 bridge_denoise(const Tensor3& t, double sigma, const std::string& endpoint, double timeout_seconds) {
    BridgeSession session(endpoint, false, timeout_seconds);
    return session.request(t, sigma);
}

}  // namespace mptc
