#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "crystal/error.hpp"
#include "crystal/model_io.hpp"
#include "crystal/simd/kernels.hpp"

namespace crystal {
using nlohmann::json;

ScoringChannel::ScoringChannel(std::size_t batch_limit) : batch_limit_(batch_limit) {
  if (batch_limit_ == 0) throw Error(ErrorCode::InvalidConfig, "batch_limit must be positive");
}

std::vector<double> score_batch(ScoringChannel& channel, const RowMatrix& rows) {
  std::vector<double> scores;
  const std::size_t n = rows.rows();
  scores.reserve(n);
  for (std::size_t first = 0; first < n; first += channel.batch_limit()) {
    const std::size_t count = std::min(channel.batch_limit(), n - first);
    std::vector<double> chunk = channel.score_chunk(rows.slice(first, count));
    if (chunk.size() != count) {
      throw Error(ErrorCode::ChannelBroken, "channel returned " + std::to_string(chunk.size()) +
                                                " scores for " + std::to_string(count) + " rows");
    }
    for (std::size_t i = 0; i < count; ++i) {
      if (!std::isfinite(chunk[i])) {
        throw Error(ErrorCode::NonFiniteScore,
                    "non-finite score for row " + std::to_string(first + i));
      }
    }
    scores.insert(scores.end(), chunk.begin(), chunk.end());
  }
  return scores;
}

// --- LinearChannel ----------------------------------------------------------

LinearChannel::LinearChannel(std::vector<double> coefficients, double intercept,
                             std::size_t batch_limit)
    : ScoringChannel(batch_limit), coefficients_(std::move(coefficients)), intercept_(intercept) {}

double LinearChannel::evaluate(std::span<const double> row) const {
  if (row.size() != coefficients_.size()) {
    throw Error(ErrorCode::LengthMismatch, "row width " + std::to_string(row.size()) +
                                               " != model width " +
                                               std::to_string(coefficients_.size()));
  }
  return intercept_ + simd::dot(row, coefficients_);
}

std::vector<double> LinearChannel::score_chunk(const RowMatrix& rows) {
  std::vector<double> out;
  out.reserve(rows.rows());
  for (std::size_t r = 0; r < rows.rows(); ++r) out.push_back(evaluate(rows.row(r)));
  return out;
}

// --- StumpEnsembleChannel ---------------------------------------------------

double Stump::evaluate(std::span<const double> row) const {
  if (row[root_feature] < root_threshold) {
    return row[left_feature] < left_threshold ? leaves[0] : leaves[1];
  }
  return row[right_feature] < right_threshold ? leaves[2] : leaves[3];
}

StumpEnsembleChannel::StumpEnsembleChannel(std::vector<Stump> stumps, double bias,
                                           std::size_t batch_limit)
    : ScoringChannel(batch_limit), stumps_(std::move(stumps)), bias_(bias) {}

StumpEnsembleChannel StumpEnsembleChannel::random(std::size_t features, std::size_t n_stumps,
                                                  std::uint64_t seed, double lo, double hi) {
  if (features == 0) throw Error(ErrorCode::InvalidConfig, "stump ensemble needs features");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, features - 1);
  std::uniform_real_distribution<double> threshold(lo, hi);
  std::uniform_real_distribution<double> leaf(-1.0, 1.0);
  std::vector<Stump> stumps(n_stumps);
  for (Stump& s : stumps) {
    s.root_feature = pick(rng);
    s.root_threshold = threshold(rng);
    s.left_feature = pick(rng);
    s.left_threshold = threshold(rng);
    s.right_feature = pick(rng);
    s.right_threshold = threshold(rng);
    for (double& v : s.leaves) v = leaf(rng);
  }
  return StumpEnsembleChannel(std::move(stumps), leaf(rng));
}

double StumpEnsembleChannel::evaluate(std::span<const double> row) const {
  double sum = bias_;
  for (const Stump& s : stumps_) sum += s.evaluate(row);
  return sum;
}

std::vector<double> StumpEnsembleChannel::score_chunk(const RowMatrix& rows) {
  std::vector<double> out;
  out.reserve(rows.rows());
  for (std::size_t r = 0; r < rows.rows(); ++r) out.push_back(evaluate(rows.row(r)));
  return out;
}

// --- FunctionChannel ----------------------------------------------------------

FunctionChannel::FunctionChannel(Model model, std::size_t batch_limit)
    : ScoringChannel(batch_limit), model_(std::move(model)) {}

std::vector<double> FunctionChannel::score_chunk(const RowMatrix& rows) {
  std::vector<double> out;
  out.reserve(rows.rows());
  for (std::size_t r = 0; r < rows.rows(); ++r) out.push_back(model_(rows.row(r)));
  return out;
}

// --- ExternalProcessChannel ---------------------------------------------------

ExternalProcessChannel::ExternalProcessChannel(std::vector<std::string> argv,
                                               std::size_t batch_limit,
                                               std::chrono::milliseconds timeout)
    : ScoringChannel(batch_limit), timeout_(timeout) {
  if (argv.empty()) throw Error(ErrorCode::InvalidConfig, "empty scoring command");

  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
    throw Error(ErrorCode::ChannelBroken, std::string("socketpair: ") + std::strerror(errno));
  }
  std::vector<char*> c_argv;
  for (std::string& arg : argv) c_argv.push_back(arg.data());
  c_argv.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    throw Error(ErrorCode::ChannelBroken, std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(fds[1], STDIN_FILENO);
    ::dup2(fds[1], STDOUT_FILENO);
    ::execvp(c_argv[0], c_argv.data());
    ::_exit(127);
  }
  ::close(fds[1]);
  socket_fd_ = fds[0];
  child_pid_ = pid;

  try {
    const std::string line = read_line();
    json handshake;
    try {
      handshake = json::parse(line);
    } catch (const json::parse_error&) {
      throw Error(ErrorCode::ChannelBroken, "malformed handshake: " + line);
    }
    if (!handshake.is_object() || handshake.value("protocol", "") != "score/1") {
      throw Error(ErrorCode::ChannelBroken, "unexpected handshake: " + line);
    }
  } catch (...) {
    shutdown();
    throw;
  }
}

ExternalProcessChannel::~ExternalProcessChannel() { shutdown(); }

void ExternalProcessChannel::shutdown() noexcept {
  if (socket_fd_ >= 0) {
    ::shutdown(socket_fd_, SHUT_WR);
  }
  if (child_pid_ > 0) {
    int status = 0;
    // Give the child a moment to exit on end-of-input, then kill it.
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(child_pid_, &status, WNOHANG) == child_pid_) {
        child_pid_ = -1;
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    if (child_pid_ > 0) {
      ::kill(child_pid_, SIGKILL);
      ::waitpid(child_pid_, &status, 0);
      child_pid_ = -1;
    }
  }
  if (socket_fd_ >= 0) {
    ::close(socket_fd_);
    socket_fd_ = -1;
  }
}

void ExternalProcessChannel::write_all(std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(socket_fd_, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::ChannelBroken, std::string("write to scorer: ") + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

std::string ExternalProcessChannel::read_line() {
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  for (;;) {
    if (const auto pos = buffer_.find('\n'); pos != std::string::npos) {
      std::string line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      return line;
    }
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) throw Error(ErrorCode::ChannelBroken, "scorer timed out");
    pollfd pfd{socket_fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::ChannelBroken, std::string("poll: ") + std::strerror(errno));
    }
    if (ready == 0) throw Error(ErrorCode::ChannelBroken, "scorer timed out");
    char chunk[4096];
    const ssize_t n = ::recv(socket_fd_, chunk, sizeof(chunk), 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::ChannelBroken, std::string("read from scorer: ") + std::strerror(errno));
    }
    if (n == 0) throw Error(ErrorCode::ChannelBroken, "scorer closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::vector<double> ExternalProcessChannel::score_chunk(const RowMatrix& rows) {
  if (socket_fd_ < 0) throw Error(ErrorCode::ChannelBroken, "channel already failed");
  const std::int64_t id = next_id_++;
  json request;
  request["id"] = id;
  json json_rows = json::array();
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    const auto row = rows.row(r);
    json_rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  request["rows"] = std::move(json_rows);

  try {
    write_all(request.dump() + "\n");
    const std::string line = read_line();
    json reply;
    try {
      reply = json::parse(line);
    } catch (const json::parse_error&) {
      throw Error(ErrorCode::ChannelBroken, "malformed reply: " + line);
    }
    if (!reply.is_object() || !reply.contains("id") || !reply["id"].is_number_integer()) {
      throw Error(ErrorCode::ChannelBroken, "reply without id: " + line);
    }
    if (reply["id"].get<std::int64_t>() != id) {
      throw Error(ErrorCode::ChannelBroken, "reply id " + reply["id"].dump() +
                                                " does not match request " + std::to_string(id));
    }
    if (reply.contains("error")) {
      throw Error(ErrorCode::ChannelBroken, "scorer error: " + reply["error"].dump());
    }
    const auto scores = reply.find("scores");
    if (scores == reply.end() || !scores->is_array()) {
      throw Error(ErrorCode::ChannelBroken, "reply without scores: " + line);
    }
    std::vector<double> out;
    out.reserve(scores->size());
    for (const auto& v : *scores) {
      if (!v.is_number()) throw Error(ErrorCode::ChannelBroken, "non-numeric score in reply");
      out.push_back(v.get<double>());
    }
    return out;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ChannelBroken) shutdown();
    throw;
  }
}

}  // namespace crystal
