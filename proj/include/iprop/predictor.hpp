#pragma once

#include <sys/types.h>

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "iprop/error.hpp"
#include "iprop/imaging.hpp"

namespace iprop {

// Newline-delimited JSON over the child's stdin/stdout:
//   child  -> {"protocol":"iprop-predict","version":1}
//   parent -> {"id":<u64>,"image":"<base64 png>","class_index":<u32>}
//   child  -> {"id":<u64>,"prob":<float>,"argmax_class":<u32>}
inline constexpr std::string_view kProtocolName = "iprop-predict";
inline constexpr int kProtocolVersion = 1;

struct PredictRequest {
    std::uint64_t id = 0;
    std::string image;  // base64-encoded PNG
    std::uint32_t class_index = 0;
};

struct PredictResponse {
    std::uint64_t id = 0;
    double prob = 0.0;
    std::uint32_t argmax_class = 0;
};

std::string handshake_line();
/// Throws ErrorKind::protocol for anything but a well-formed version-1 handshake.
void check_handshake(std::string_view line);

std::string encode_request(const PredictRequest& request);
PredictRequest parse_request(std::string_view line);
std::string encode_response(const PredictResponse& response);
/// Rejects missing fields, wrong types, and prob outside [0, 1].
PredictResponse parse_response(std::string_view line);

/// Anything that can score an image for a target class.
class ImageScorer {
public:
    virtual ~ImageScorer() = default;
    virtual double score(const RgbImage& image, std::uint32_t class_index) = 0;
};

struct SessionOptions {
    std::chrono::milliseconds handshake_timeout{10'000};
    std::chrono::milliseconds request_timeout{30'000};
};

/// One child process serving one lockstep request stream. Any protocol
/// violation kills the session; later calls throw ErrorKind::session_dead.
class PredictorSession final : public ImageScorer {
public:
    static PredictorSession open(const std::vector<std::string>& argv, SessionOptions options = {});

    PredictorSession(PredictorSession&& other) noexcept;
    PredictorSession& operator=(PredictorSession&& other) noexcept;
    PredictorSession(const PredictorSession&) = delete;
    PredictorSession& operator=(const PredictorSession&) = delete;
    ~PredictorSession() override;

    PredictResponse predict(const PredictRequest& request);
    double score(const RgbImage& image, std::uint32_t class_index) override;

    bool alive() const noexcept { return pid_ > 0 && !dead_; }
    std::uint64_t next_id() const noexcept { return last_id_ + 1; }

    /// Closes the child's stdin and reaps it.
    void close();

private:
    PredictorSession() = default;

    std::string read_line(std::chrono::milliseconds timeout);
    void write_all(std::string_view data);
    [[noreturn]] void die(ErrorKind kind, const std::string& message);
    void terminate_child() noexcept;

    pid_t pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    bool dead_ = false;
    std::uint64_t last_id_ = 0;
    std::string buffer_;
    SessionOptions options_;
};

/// Shell-like word splitting of a predictor command line (no substitution).
std::vector<std::string> split_command(std::string_view command);

/// Test double standing in for a real classifier.
///  region_mean: prob = mean over the region of (r + g + b) / (3 * 255)
///  constant:    prob = a fixed value
/// argmax_class always echoes the queried class.
class SyntheticModel {
public:
    enum class Mode { region_mean, constant };

    static SyntheticModel region_mean(GridShape shape, std::vector<std::uint8_t> region);
    static SyntheticModel constant(double prob);

    Mode mode() const noexcept { return mode_; }
    double probability(const RgbImage& image) const;

private:
    Mode mode_ = Mode::constant;
    double constant_ = 0.0;
    GridShape shape_;
    std::vector<std::uint8_t> region_;
    std::size_t region_size_ = 0;
};

class SyntheticScorer final : public ImageScorer {
public:
    explicit SyntheticScorer(SyntheticModel model) : model_(std::move(model)) {}
    double score(const RgbImage& image, std::uint32_t) override { return model_.probability(image); }

private:
    SyntheticModel model_;
};

/// Writes the handshake, then answers requests from `in` until EOF.
/// Returns a process exit status; diagnostics go to `err`.
int serve_predictor(const SyntheticModel& model, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace iprop
