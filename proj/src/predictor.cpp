#include "iprop/predictor.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>
#include <wordexp.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <istream>
#include <mutex>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "iprop/encoding.hpp"
#include "iprop/error.hpp"

extern char** environ;

namespace iprop {

namespace {

using ordered_json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

std::string quote_raw(std::string_view line) {
    constexpr std::size_t limit = 200;
    std::string shown(line.substr(0, limit));
    if (line.size() > limit) shown += "...";
    return "'" + shown + "'";
}

nlohmann::json parse_object(std::string_view line, std::string_view what) {
    nlohmann::json value = nlohmann::json::parse(line, nullptr, false);
    if (value.is_discarded() || !value.is_object())
        fail(ErrorKind::protocol, std::string(what) + " is not a JSON object: " + quote_raw(line));
    return value;
}

template <typename T>
T unsigned_field(const nlohmann::json& object, const char* key, std::string_view line) {
    const auto it = object.find(key);
    if (it == object.end() || !it->is_number_unsigned())
        fail(ErrorKind::protocol, std::string("missing or non-integer \"") + key + "\" in " + quote_raw(line));
    const auto value = it->get<std::uint64_t>();
    if (value > std::numeric_limits<T>::max())
        fail(ErrorKind::protocol, std::string("\"") + key + "\" out of range in " + quote_raw(line));
    return static_cast<T>(value);
}

void ignore_sigpipe() {
    static std::once_flag once;
    std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

}  // namespace

// ---------------------------------------------------------------------------
// Wire format

std::string handshake_line() {
    ordered_json j;
    j["protocol"] = kProtocolName;
    j["version"] = kProtocolVersion;
    return j.dump() + "\n";
}

void check_handshake(std::string_view line) {
    const auto j = parse_object(line, "handshake");
    const auto protocol = j.find("protocol");
    const auto version = j.find("version");
    if (protocol == j.end() || !protocol->is_string() || protocol->get<std::string>() != kProtocolName)
        fail(ErrorKind::protocol, "handshake does not announce " + std::string(kProtocolName) + ": " + quote_raw(line));
    if (version == j.end() || !version->is_number_integer())
        fail(ErrorKind::protocol, "handshake has no integer version: " + quote_raw(line));
    if (version->get<long long>() != kProtocolVersion)
        fail(ErrorKind::protocol, "protocol version mismatch: predictor speaks " +
                                      std::to_string(version->get<long long>()) + ", expected " +
                                      std::to_string(kProtocolVersion));
}

std::string encode_request(const PredictRequest& request) {
    ordered_json j;
    j["id"] = request.id;
    j["image"] = request.image;
    j["class_index"] = request.class_index;
    return j.dump() + "\n";
}

PredictRequest parse_request(std::string_view line) {
    const auto j = parse_object(line, "request");
    PredictRequest request;
    request.id = unsigned_field<std::uint64_t>(j, "id", line);
    request.class_index = unsigned_field<std::uint32_t>(j, "class_index", line);
    const auto image = j.find("image");
    if (image == j.end() || !image->is_string())
        fail(ErrorKind::protocol, "missing or non-string \"image\" in request " + std::to_string(request.id));
    request.image = image->get<std::string>();
    return request;
}

std::string encode_response(const PredictResponse& response) {
    ordered_json j;
    j["id"] = response.id;
    j["prob"] = response.prob;
    j["argmax_class"] = response.argmax_class;
    return j.dump() + "\n";
}

PredictResponse parse_response(std::string_view line) {
    const auto j = parse_object(line, "response");
    PredictResponse response;
    response.id = unsigned_field<std::uint64_t>(j, "id", line);
    response.argmax_class = unsigned_field<std::uint32_t>(j, "argmax_class", line);
    const auto prob = j.find("prob");
    if (prob == j.end() || !prob->is_number())
        fail(ErrorKind::protocol, "missing or non-numeric \"prob\" in " + quote_raw(line));
    response.prob = prob->get<double>();
    if (!std::isfinite(response.prob) || response.prob < 0.0 || response.prob > 1.0)
        fail(ErrorKind::protocol, "\"prob\" outside [0, 1] in " + quote_raw(line));
    return response;
}

// ---------------------------------------------------------------------------
// Session

PredictorSession PredictorSession::open(const std::vector<std::string>& argv, SessionOptions options) {
    if (argv.empty() || argv.front().empty()) fail(ErrorKind::spawn, "empty predictor command");
    ignore_sigpipe();

    int to_child[2];
    int from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) fail(ErrorKind::spawn, std::string("pipe: ") + std::strerror(errno));
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
        const int saved = errno;
        ::close(to_child[0]);
        ::close(to_child[1]);
        fail(ErrorKind::spawn, std::string("pipe: ") + std::strerror(saved));
    }

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);

    std::vector<char*> args;
    args.reserve(argv.size() + 1);
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);

    pid_t pid = -1;
    const int rc = ::posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(to_child[0]);
    ::close(from_child[1]);
    if (rc != 0) {
        ::close(to_child[1]);
        ::close(from_child[0]);
        fail(ErrorKind::spawn, "cannot start '" + argv.front() + "': " + std::strerror(rc));
    }

    PredictorSession session;
    session.pid_ = pid;
    session.to_child_ = to_child[1];
    session.from_child_ = from_child[0];
    session.options_ = options;

    const std::string line = session.read_line(options.handshake_timeout);
    try {
        check_handshake(line);
    } catch (const Error& e) {
        session.die(e.kind(), std::string("handshake: ") + e.what());
    }
    return session;
}

PredictorSession::PredictorSession(PredictorSession&& other) noexcept
    : pid_(std::exchange(other.pid_, -1)),
      to_child_(std::exchange(other.to_child_, -1)),
      from_child_(std::exchange(other.from_child_, -1)),
      dead_(other.dead_),
      last_id_(other.last_id_),
      buffer_(std::move(other.buffer_)),
      options_(other.options_) {}

PredictorSession& PredictorSession::operator=(PredictorSession&& other) noexcept {
    if (this != &other) {
        terminate_child();
        pid_ = std::exchange(other.pid_, -1);
        to_child_ = std::exchange(other.to_child_, -1);
        from_child_ = std::exchange(other.from_child_, -1);
        dead_ = other.dead_;
        last_id_ = other.last_id_;
        buffer_ = std::move(other.buffer_);
        options_ = other.options_;
    }
    return *this;
}

PredictorSession::~PredictorSession() { close(); }

void PredictorSession::close() {
    if (to_child_ >= 0) {
        ::close(to_child_);
        to_child_ = -1;
    }
    if (pid_ > 0) {
        // Give a well-behaved child a moment to exit on EOF.
        const auto deadline = Clock::now() + std::chrono::milliseconds(1000);
        while (Clock::now() < deadline) {
            int status = 0;
            const pid_t r = ::waitpid(pid_, &status, WNOHANG);
            if (r == pid_ || (r < 0 && errno == ECHILD)) {
                pid_ = -1;
                break;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
    }
    terminate_child();
}

void PredictorSession::terminate_child() noexcept {
    if (to_child_ >= 0) {
        ::close(to_child_);
        to_child_ = -1;
    }
    if (from_child_ >= 0) {
        ::close(from_child_);
        from_child_ = -1;
    }
    if (pid_ > 0) {
        ::kill(pid_, SIGKILL);
        int status = 0;
        while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
        }
        pid_ = -1;
    }
    dead_ = true;
}

void PredictorSession::die(ErrorKind kind, const std::string& message) {
    terminate_child();
    fail(kind, message);
}

std::string PredictorSession::read_line(std::chrono::milliseconds timeout) {
    const auto deadline = Clock::now() + timeout;
    while (true) {
        const std::size_t eol = buffer_.find('\n');
        if (eol != std::string::npos) {
            std::string line = buffer_.substr(0, eol);
            buffer_.erase(0, eol + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        }
        const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
        if (remaining.count() <= 0) die(ErrorKind::timeout, "predictor did not answer within " +
                                                                std::to_string(timeout.count()) + " ms");
        pollfd fd{from_child_, POLLIN, 0};
        const int ready = ::poll(&fd, 1, static_cast<int>(remaining.count()));
        if (ready < 0) {
            if (errno == EINTR) continue;
            die(ErrorKind::session_dead, std::string("poll: ") + std::strerror(errno));
        }
        if (ready == 0) continue;
        char chunk[65536];
        const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            die(ErrorKind::session_dead, std::string("read: ") + std::strerror(errno));
        }
        if (n == 0) die(ErrorKind::session_dead, "predictor closed its output (process exited?)");
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

void PredictorSession::write_all(std::string_view data) {
    while (!data.empty()) {
        const ssize_t n = ::write(to_child_, data.data(), data.size());
        if (n < 0) {
            if (errno == EINTR) continue;
            die(ErrorKind::session_dead, std::string("write to predictor failed: ") + std::strerror(errno));
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
}

PredictResponse PredictorSession::predict(const PredictRequest& request) {
    if (!alive()) fail(ErrorKind::session_dead, "predictor session is no longer usable");
    if (request.id <= last_id_)
        fail(ErrorKind::argument, "request ids must increase (got " + std::to_string(request.id) + " after " +
                                      std::to_string(last_id_) + ")");
    last_id_ = request.id;
    write_all(encode_request(request));
    const std::string line = read_line(options_.request_timeout);
    PredictResponse response;
    try {
        response = parse_response(line);
    } catch (const Error& e) {
        die(ErrorKind::protocol, e.what());
    }
    if (response.id != request.id)
        die(ErrorKind::protocol, "response id " + std::to_string(response.id) + " does not match request " +
                                     std::to_string(request.id) + ": " + quote_raw(line));
    return response;
}

double PredictorSession::score(const RgbImage& image, std::uint32_t class_index) {
    PredictRequest request{next_id(), base64_encode(encode_png(image)), class_index};
    return predict(request).prob;
}

std::vector<std::string> split_command(std::string_view command) {
    wordexp_t words;
    const std::string text(command);
    const int rc = ::wordexp(text.c_str(), &words, WRDE_NOCMD | WRDE_UNDEF);
    if (rc != 0) {
        if (rc == WRDE_NOSPACE) ::wordfree(&words);
        fail(ErrorKind::argument, "cannot parse predictor command '" + text + "'");
    }
    std::vector<std::string> out(words.we_wordv, words.we_wordv + words.we_wordc);
    ::wordfree(&words);
    if (out.empty()) fail(ErrorKind::argument, "empty predictor command");
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic model

SyntheticModel SyntheticModel::region_mean(GridShape shape, std::vector<std::uint8_t> region) {
    if (region.size() != shape.size() || shape.size() == 0)
        fail(ErrorKind::dimension, "region mask does not match " + to_string(shape));
    SyntheticModel model;
    model.mode_ = Mode::region_mean;
    model.shape_ = shape;
    model.region_ = std::move(region);
    for (const auto cell : model.region_) model.region_size_ += cell != 0 ? 1 : 0;
    if (model.region_size_ == 0) fail(ErrorKind::argument, "region mask is empty");
    return model;
}

SyntheticModel SyntheticModel::constant(double prob) {
    if (!(prob >= 0.0 && prob <= 1.0)) fail(ErrorKind::argument, "constant probability must lie in [0, 1]");
    SyntheticModel model;
    model.mode_ = Mode::constant;
    model.constant_ = prob;
    return model;
}

double SyntheticModel::probability(const RgbImage& image) const {
    if (mode_ == Mode::constant) return constant_;
    if (image.shape() != shape_)
        fail(ErrorKind::dimension, "image is " + to_string(image.shape()) + " but the region mask is " +
                                       to_string(shape_));
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < region_.size(); ++i) {
        if (region_[i] == 0) continue;
        const Rgb& p = image[i];
        total += static_cast<std::uint64_t>(p.r) + p.g + p.b;
    }
    return static_cast<double>(total) / (3.0 * 255.0 * static_cast<double>(region_size_));
}

int serve_predictor(const SyntheticModel& model, std::istream& in, std::ostream& out, std::ostream& err) {
    out << handshake_line() << std::flush;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            const PredictRequest request = parse_request(line);
            const RgbImage image = decode_image(base64_decode(request.image));
            const PredictResponse response{request.id, model.probability(image), request.class_index};
            out << encode_response(response) << std::flush;
        } catch (const Error& e) {
            err << "synthetic predictor: " << e.what() << '\n';
            return 2;
        }
    }
    return 0;
}

}  // namespace iprop
