#include "qbench/sandbox.hpp"

#include "qbench/errors.hpp"
#include "qbench/util.hpp"

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <sstream>

#include <fcntl.h>
#include <poll.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

namespace qbench {

namespace {

constexpr double kGraceSeconds = 1.0;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

bool is_executable_file(const std::string& path) {
  struct stat st{};
  if (::stat(path.c_str(), &st) != 0) {
    return false;
  }
  return S_ISREG(st.st_mode) && ::access(path.c_str(), X_OK) == 0;
}

bool resolve_on_path(const std::string& name) {
  if (name.find('/') != std::string::npos) {
    return is_executable_file(name);
  }
  const char* path_env = std::getenv("PATH");
  if (!path_env) {
    return false;
  }
  std::stringstream ss(path_env);
  std::string dir;
  while (std::getline(ss, dir, ':')) {
    if (dir.empty()) {
      dir = ".";
    }
    if (is_executable_file(dir + "/" + name)) {
      return true;
    }
  }
  return false;
}

// Expands the {file} placeholder; appends the path when no argument uses it.
std::vector<std::string> build_argv(const InterpreterProfile& profile,
                                    const std::string& file_path) {
  std::vector<std::string> argv;
  argv.reserve(profile.jail_command.size() + profile.command.size() + 1);
  argv.insert(argv.end(), profile.jail_command.begin(), profile.jail_command.end());
  bool substituted = false;
  for (const auto& arg : profile.command) {
    std::string expanded = arg;
    std::size_t pos;
    while ((pos = expanded.find("{file}")) != std::string::npos) {
      expanded.replace(pos, 6, file_path);
      substituted = true;
    }
    argv.push_back(std::move(expanded));
  }
  if (!substituted) {
    argv.push_back(file_path);
  }
  return argv;
}

struct Pipe {
  int read_fd = -1;
  int write_fd = -1;

  Pipe() {
    int fds[2];
    if (::pipe(fds) != 0) {
      throw EnvironmentError("pipe() failed: " + std::string(std::strerror(errno)));
    }
    read_fd = fds[0];
    write_fd = fds[1];
  }
  ~Pipe() {
    close_read();
    close_write();
  }
  void close_read() {
    if (read_fd >= 0) {
      ::close(read_fd);
      read_fd = -1;
    }
  }
  void close_write() {
    if (write_fd >= 0) {
      ::close(write_fd);
      write_fd = -1;
    }
  }
};

struct Capture {
  std::string text;
  std::size_t total = 0;
  bool truncated = false;

  void feed(const char* data, std::size_t len) {
    total += len;
    if (text.size() >= kOutputCapBytes) {
      truncated = true;
      return;
    }
    std::size_t room = kOutputCapBytes - text.size();
    if (len > room) {
      text.append(data, room);
      truncated = true;
    } else {
      text.append(data, len);
    }
  }
  std::string finish() {
    if (truncated) {
      text += kTruncationMarker;
    }
    return std::move(text);
  }
};

}  // namespace

std::string to_string(ExecStatus s) {
  switch (s) {
    case ExecStatus::Ok:
      return "ok";
    case ExecStatus::RuntimeError:
      return "runtime_error";
    case ExecStatus::Timeout:
      return "timeout";
    case ExecStatus::InterpreterMissing:
      return "interpreter_missing";
  }
  return "runtime_error";
}

ExecutionResult SandboxExecutor::execute(const std::string& code, const std::string& harness,
                                         const InterpreterProfile& profile) {
  if (profile.command.empty()) {
    throw ConfigError("interpreter profile '" + profile.name + "' has an empty command");
  }
  if (profile.timeout_seconds <= 0) {
    throw ConfigError("interpreter profile '" + profile.name + "' has a non-positive timeout");
  }

  const std::string& argv0 =
      profile.jail_command.empty() ? profile.command.front() : profile.jail_command.front();
  if (!resolve_on_path(argv0)) {
    ExecutionResult missing;
    missing.status = ExecStatus::InterpreterMissing;
    missing.stderr_text = "interpreter not found: " + argv0;
    return missing;
  }

  auto temp_dir = util::make_temp_dir("qbench-exec-");
  struct DirGuard {
    std::filesystem::path dir;
    ~DirGuard() {
      std::error_code ec;
      std::filesystem::remove_all(dir, ec);
    }
  } guard{temp_dir};

  std::string program = code;
  program += '\n';
  program += harness;
  if (program.empty() || program.back() != '\n') {
    program += '\n';
  }
  auto file_path = temp_dir / ("program" + profile.file_extension);
  util::write_file(file_path, program);

  auto argv_strings = build_argv(profile, file_path.string());
  std::vector<char*> argv;
  argv.reserve(argv_strings.size() + 1);
  for (auto& s : argv_strings) {
    argv.push_back(s.data());
  }
  argv.push_back(nullptr);

  Pipe out_pipe;
  Pipe err_pipe;
  Pipe status_pipe;  // child writes errno here when exec fails
  ::fcntl(status_pipe.write_fd, F_SETFD, FD_CLOEXEC);

  auto start = std::chrono::steady_clock::now();
  pid_t pid = ::fork();
  if (pid < 0) {
    throw EnvironmentError("fork() failed: " + std::string(std::strerror(errno)));
  }

  if (pid == 0) {
    ::setpgid(0, 0);
    if (::chdir(temp_dir.c_str()) != 0) {
      _exit(126);
    }
    int devnull = ::open("/dev/null", O_RDONLY);
    if (devnull >= 0) {
      ::dup2(devnull, STDIN_FILENO);
      ::close(devnull);
    }
    ::dup2(out_pipe.write_fd, STDOUT_FILENO);
    ::dup2(err_pipe.write_fd, STDERR_FILENO);
    out_pipe.close_read();
    out_pipe.close_write();
    err_pipe.close_read();
    err_pipe.close_write();
    status_pipe.close_read();
    for (const auto& [key, value] : profile.env_overrides) {
      ::setenv(key.c_str(), value.c_str(), 1);
    }
    ::execvp(argv[0], argv.data());
    int err = errno;
    ssize_t ignored = ::write(status_pipe.write_fd, &err, sizeof(err));
    (void)ignored;
    _exit(127);
  }

  ::setpgid(pid, pid);  // best effort; the child also sets it
  out_pipe.close_write();
  err_pipe.close_write();
  status_pipe.close_write();

  Capture out_cap;
  Capture err_cap;
  bool timed_out = false;
  const double deadline = profile.timeout_seconds;

  struct pollfd fds[2];
  bool open_fds[2] = {true, true};
  char buf[8192];
  while (open_fds[0] || open_fds[1]) {
    fds[0] = {out_pipe.read_fd, POLLIN, 0};
    fds[1] = {err_pipe.read_fd, POLLIN, 0};
    double elapsed = seconds_since(start);
    double budget = timed_out ? (deadline + kGraceSeconds * 0.5) - elapsed : deadline - elapsed;
    if (budget <= 0) {
      if (!timed_out) {
        timed_out = true;
        ::kill(-pid, SIGKILL);
        continue;
      }
      // The pipes outlived the grace window (e.g. an orphan inherited them);
      // stop reading so the wall-time bound holds.
      break;
    }
    int timeout_ms = static_cast<int>(budget * 1000) + 1;
    int rc = ::poll(fds, 2, timeout_ms);
    if (rc < 0) {
      if (errno == EINTR) {
        continue;
      }
      break;
    }
    if (rc == 0) {
      continue;  // deadline handling happens at the top of the loop
    }
    for (int i = 0; i < 2; ++i) {
      if (!open_fds[i] || fds[i].revents == 0) {
        continue;
      }
      if (fds[i].revents & (POLLIN | POLLHUP)) {
        ssize_t n = ::read(fds[i].fd, buf, sizeof(buf));
        if (n > 0) {
          (i == 0 ? out_cap : err_cap).feed(buf, static_cast<std::size_t>(n));
        } else {
          open_fds[i] = false;
        }
      } else if (fds[i].revents & (POLLERR | POLLNVAL)) {
        open_fds[i] = false;
      }
    }
  }
  out_pipe.close_read();
  err_pipe.close_read();

  if (timed_out) {
    ::kill(-pid, SIGKILL);  // idempotent; covers the break path
  }
  int wait_status = 0;
  while (::waitpid(pid, &wait_status, 0) < 0 && errno == EINTR) {
  }

  ExecutionResult result;
  result.duration_seconds = seconds_since(start);
  result.stdout_text = out_cap.finish();
  result.stderr_text = err_cap.finish();
  result.output_truncated = out_cap.truncated || err_cap.truncated;

  int exec_errno = 0;
  ssize_t n = ::read(status_pipe.read_fd, &exec_errno, sizeof(exec_errno));
  if (n == static_cast<ssize_t>(sizeof(exec_errno))) {
    if (exec_errno == ENOENT || exec_errno == EACCES || exec_errno == ENOTDIR) {
      result.status = ExecStatus::InterpreterMissing;
      result.stderr_text = "interpreter not found: " + argv_strings.front();
    } else {
      result.status = ExecStatus::RuntimeError;
      result.stderr_text = "exec failed: " + std::string(std::strerror(exec_errno));
    }
    return result;
  }

  if (timed_out) {
    result.status = ExecStatus::Timeout;
    if (result.duration_seconds < deadline) {
      result.duration_seconds = deadline;
    }
    return result;
  }
  if (WIFEXITED(wait_status)) {
    result.exit_code = WEXITSTATUS(wait_status);
    result.status = *result.exit_code == 0 ? ExecStatus::Ok : ExecStatus::RuntimeError;
  } else {
    result.status = ExecStatus::RuntimeError;
    if (WIFSIGNALED(wait_status)) {
      result.stderr_text += "\n[terminated by signal " + std::to_string(WTERMSIG(wait_status)) + "]";
    }
  }
  return result;
}

ExecutionResult StubExecutor::execute(const std::string& code, const std::string& harness,
                                      const InterpreterProfile& profile) {
  ExecutionResult result;
  result.exit_code = 0;
  std::optional<std::string> output;
  std::optional<std::string> fallback;

  for (const auto& raw : util::split_lines(code)) {
    std::string line = util::trim(raw);
    if (line == "stub:crash") {
      result.status = ExecStatus::RuntimeError;
      result.exit_code = 1;
      result.stderr_text = "stub: crash\n";
      return result;
    }
    if (line == "stub:hang") {
      result.status = ExecStatus::Timeout;
      result.exit_code.reset();
      result.duration_seconds = profile.timeout_seconds;
      return result;
    }
    if (util::starts_with(line, "stub:on ")) {
      std::size_t sep = line.find(" => ");
      if (sep == std::string::npos) {
        continue;
      }
      std::string needle = line.substr(8, sep - 8);
      if (!output && !needle.empty() && harness.find(needle) != std::string::npos) {
        output = line.substr(sep + 4);
      }
    } else if (util::starts_with(line, "stub:const ")) {
      if (!fallback) {
        fallback = line.substr(11);
      }
    }
  }

  if (!output) {
    output = fallback;
  }
  if (output) {
    result.stdout_text = *output + "\n";
  }
  result.status = ExecStatus::Ok;
  return result;
}

std::unique_ptr<Executor> make_executor(const InterpreterProfile& profile) {
  if (!profile.command.empty() && profile.command.front() == "builtin:stub") {
    return std::make_unique<StubExecutor>();
  }
  return std::make_unique<SandboxExecutor>();
}

bool interpreter_available(const InterpreterProfile& profile) {
  if (profile.command.empty()) {
    return false;
  }
  if (profile.command.front() == "builtin:stub") {
    return true;
  }
  const std::string& argv0 =
      profile.jail_command.empty() ? profile.command.front() : profile.jail_command.front();
  return resolve_on_path(argv0);
}

}  // namespace qbench
