#include "aot/executor.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <mutex>

#include "aot/error.hpp"
#include "aot/text_util.hpp"

namespace aot::exec {

using nlohmann::json;

std::string_view to_string(ExecStatus s) {
  switch (s) {
    case ExecStatus::kSuccess: return "success";
    case ExecStatus::kException: return "exception";
    case ExecStatus::kTimeout: return "timeout";
  }
  return "exception";
}

namespace {

ExecStatus status_from_string(std::string_view s) {
  if (s == "success") return ExecStatus::kSuccess;
  if (s == "exception") return ExecStatus::kException;
  if (s == "timeout") return ExecStatus::kTimeout;
  throw Error(ErrorCode::kMalformedRecord, "unknown execution status \"" + std::string(s) + "\"");
}

// Owns one file descriptor.
class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Fd() { reset(); }

  int get() const { return fd_; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

struct Pipe {
  Fd read;
  Fd write;
};

Pipe make_pipe() {
  std::array<int, 2> fds{};
  if (::pipe2(fds.data(), O_CLOEXEC) != 0) {
    throw Error(ErrorCode::kExecutorUnavailable, std::string("pipe: ") + std::strerror(errno));
  }
  return Pipe{Fd(fds[0]), Fd(fds[1])};
}

// Runs between fork and exec: no allocation allowed.
[[noreturn]] void child_exec(char* const* argv, int in_fd, int out_fd, int err_fd,
                             int result_fd) {
  // Move everything above the target range first so dup2 cannot clobber.
  int fds[4] = {in_fd, out_fd, err_fd, result_fd};
  for (int& fd : fds) fd = ::fcntl(fd, F_DUPFD_CLOEXEC, 10);
  for (int target = 0; target < 4; ++target) {
    if (fds[target] < 0 || ::dup2(fds[target], target) < 0) ::_exit(126);
  }
  ::execvp(argv[0], argv);
  ::_exit(127);
}

}  // namespace

ExecutionResult result_from_json(const json& j) {
  if (!j.is_object() || !j.contains("status")) {
    throw Error(ErrorCode::kMalformedRecord, "execution result lacks \"status\"");
  }
  ExecutionResult r;
  r.status = status_from_string(j.at("status").get<std::string>());
  r.stdout_text = j.value("stdout", std::string{});
  if (j.contains("returned") && !j.at("returned").is_null()) {
    r.returned = j.at("returned").get<std::string>();
  }
  r.elapsed = j.value("elapsed", 0.0);
  r.detail = j.value("detail", std::string{});
  return r;
}

json result_to_json(const ExecutionResult& r) {
  json j = {{"status", to_string(r.status)},
            {"stdout", r.stdout_text},
            {"elapsed", r.elapsed},
            {"detail", r.detail}};
  j["returned"] = r.returned ? json(*r.returned) : json(nullptr);
  return j;
}

std::optional<std::string> last_printed_line(const ExecutionResult& r) {
  auto lines = text::split_lines(r.stdout_text);
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    auto t = text::trim(*it);
    if (!t.empty()) return std::string(t);
  }
  return std::nullopt;
}

ShimExecutor::ShimExecutor(std::vector<std::string> command, std::chrono::milliseconds grace)
    : command_(std::move(command)), grace_(grace) {
  if (command_.empty()) throw Error(ErrorCode::kExecutorUnavailable, "empty shim command");
}

ExecutionResult ShimExecutor::run(std::string_view source, double timeout_seconds) {
  if (!(timeout_seconds > 0)) throw Error(ErrorCode::kInvalidArgument, "timeout must be positive");
  // A shim that exits before reading its request must not take us down.
  static std::once_flag ignore_sigpipe;
  std::call_once(ignore_sigpipe, [] { ::signal(SIGPIPE, SIG_IGN); });

  Pipe in = make_pipe();
  Pipe out = make_pipe();
  Pipe err = make_pipe();
  Pipe res = make_pipe();

  std::vector<char*> argv;
  for (const auto& a : command_) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);

  const auto started = std::chrono::steady_clock::now();
  pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorCode::kExecutorUnavailable, std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    child_exec(argv.data(), in.read.get(), out.write.get(), err.write.get(), res.write.get());
  }

  in.read.reset();
  out.write.reset();
  err.write.reset();
  res.write.reset();

  const std::string request =
      json{{"source", std::string(source)}, {"timeout", timeout_seconds}}.dump();

  // Non-blocking stdin so a shim that never reads cannot wedge us.
  ::fcntl(in.write.get(), F_SETFL, O_NONBLOCK);
  std::size_t written = 0;

  std::string out_buf, err_buf, res_buf;
  struct Stream {
    Fd* fd;
    std::string* buf;
  };
  std::array<Stream, 3> streams = {Stream{&out.read, &out_buf}, Stream{&err.read, &err_buf},
                                   Stream{&res.read, &res_buf}};
  constexpr std::size_t kMaxCapture = 16 << 20;

  const auto deadline = started + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                      std::chrono::duration<double>(timeout_seconds)) +
                        grace_;
  bool killed = false;
  for (;;) {
    std::vector<pollfd> pfds;
    std::vector<int> which;
    if (in.write.get() >= 0) {
      pfds.push_back({in.write.get(), POLLOUT, 0});
      which.push_back(-1);
    }
    for (int s = 0; s < 3; ++s) {
      if (streams[s].fd->get() >= 0) {
        pfds.push_back({streams[s].fd->get(), POLLIN, 0});
        which.push_back(s);
      }
    }
    if (which.empty() || (which.size() == 1 && which[0] == -1)) break;

    auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      ::kill(pid, SIGKILL);
      killed = true;
      break;
    }
    int wait_ms = static_cast<int>(
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count()) + 1;
    int rc = ::poll(pfds.data(), pfds.size(), wait_ms);
    if (rc < 0) {
      if (errno == EINTR) continue;
      ::kill(pid, SIGKILL);
      ::waitpid(pid, nullptr, 0);
      throw Error(ErrorCode::kExecutorUnavailable, std::string("poll: ") + std::strerror(errno));
    }
    for (std::size_t k = 0; k < pfds.size(); ++k) {
      if (pfds[k].revents == 0) continue;
      if (which[k] == -1) {
        ssize_t n = ::write(in.write.get(), request.data() + written, request.size() - written);
        if (n > 0) written += static_cast<std::size_t>(n);
        if (n < 0 && errno != EAGAIN && errno != EINTR) in.write.reset();
        if (written == request.size()) in.write.reset();
        continue;
      }
      Stream& s = streams[which[k]];
      char chunk[65536];
      ssize_t n = ::read(s.fd->get(), chunk, sizeof chunk);
      if (n > 0) {
        if (s.buf->size() < kMaxCapture) s.buf->append(chunk, static_cast<std::size_t>(n));
      } else if (n == 0 || (errno != EAGAIN && errno != EINTR)) {
        s.fd->reset();
      }
    }
  }

  int wstatus = 0;
  ::waitpid(pid, &wstatus, 0);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (killed) {
    ExecutionResult r;
    r.status = ExecStatus::kTimeout;
    r.elapsed = elapsed;
    r.detail = "shim exceeded deadline and was killed";
    return r;
  }
  if (!WIFEXITED(wstatus) || WEXITSTATUS(wstatus) != 0) {
    std::string why = WIFEXITED(wstatus) ? "exit code " + std::to_string(WEXITSTATUS(wstatus))
                                         : "terminated by signal";
    throw Error(ErrorCode::kExecutorUnavailable, "sandbox shim failed (" + why + ")");
  }

  std::string payload(text::trim(res_buf));
  if (payload.empty()) {
    constexpr std::string_view kPrefix = "RESULT:";
    auto lines = text::split_lines(err_buf);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
      if (it->starts_with(kPrefix)) {
        payload = std::string(it->substr(kPrefix.size()));
        break;
      }
      if (!text::trim(*it).empty()) break;
    }
  }
  if (payload.empty()) throw Error(ErrorCode::kExecutorUnavailable, "sandbox shim produced no result");
  try {
    return result_from_json(json::parse(payload));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kExecutorUnavailable, std::string("unparseable shim result: ") + e.what());
  }
}

StubExecutor::StubExecutor(std::vector<Rule> rules) : rules_(std::move(rules)) {}

StubExecutor StubExecutor::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open executor stub " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw Error(ErrorCode::kMalformedRecord, path.string() + ": expected array");
  std::vector<Rule> rules;
  for (const auto& item : j) {
    rules.push_back({item.at("contains").get<std::string>(), result_from_json(item)});
  }
  return StubExecutor(std::move(rules));
}

ExecutionResult StubExecutor::run(std::string_view source, double timeout_seconds) {
  for (const auto& rule : rules_) {
    if (source.find(rule.contains) != std::string_view::npos) {
      ExecutionResult r = rule.result;
      if (r.status == ExecStatus::kTimeout) r.elapsed = timeout_seconds;
      return r;
    }
  }
  ExecutionResult r;
  r.status = ExecStatus::kException;
  r.detail = "no stub rule matched";
  return r;
}

}  // namespace aot::exec
