#include "dlrepro/util/subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "dlrepro/util/error.hpp"

extern char** environ;

namespace dlrepro {
namespace {

using Clock = std::chrono::steady_clock;

struct Pipe {
  int fd[2] = {-1, -1};
  Pipe() {
    if (::pipe2(fd, O_CLOEXEC) != 0) throw Error(ErrorKind::SandboxFailure, "pipe2 failed");
  }
  ~Pipe() {
    close_read();
    close_write();
  }
  void close_read() {
    if (fd[0] >= 0) ::close(fd[0]);
    fd[0] = -1;
  }
  void close_write() {
    if (fd[1] >= 0) ::close(fd[1]);
    fd[1] = -1;
  }
};

[[noreturn]] void child_exec(const ProcessSpec& spec, Pipe& in, Pipe& out, Pipe& err,
                             Pipe& status) {
  ::setpgid(0, 0);
  ::dup2(in.fd[0], STDIN_FILENO);
  ::dup2(out.fd[1], STDOUT_FILENO);
  ::dup2(err.fd[1], STDERR_FILENO);
  if (!spec.cwd.empty() && ::chdir(spec.cwd.c_str()) != 0) {
    int e = errno;
    (void)!::write(status.fd[1], &e, sizeof e);
    ::_exit(127);
  }
  for (const auto& [k, v] : spec.env) ::setenv(k.c_str(), v.c_str(), 1);
  std::vector<char*> argv;
  argv.reserve(spec.argv.size() + 1);
  for (const auto& a : spec.argv) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  ::execvp(argv[0], argv.data());
  int e = errno;
  (void)!::write(status.fd[1], &e, sizeof e);
  ::_exit(127);
}

}  // namespace

ProcessResult run_process(const ProcessSpec& spec) {
  if (spec.argv.empty()) throw Error(ErrorKind::InvalidArgument, "run_process: empty argv");

  Pipe in, out, err, status;
  auto start = Clock::now();
  pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorKind::SandboxFailure, std::string("fork failed: ") + std::strerror(errno));
  if (pid == 0) child_exec(spec, in, out, err, status);

  ::setpgid(pid, pid);
  in.close_read();
  out.close_write();
  err.close_write();
  status.close_write();

  ProcessResult result;
  int exec_errno = 0;
  if (::read(status.fd[0], &exec_errno, sizeof exec_errno) == sizeof exec_errno) {
    result.spawn_failed = true;
  }

  // Feed stdin; inputs here are small so a blocking write is fine.
  if (!spec.stdin_data.empty() && !result.spawn_failed) {
    std::size_t off = 0;
    while (off < spec.stdin_data.size()) {
      auto n = ::write(in.fd[1], spec.stdin_data.data() + off, spec.stdin_data.size() - off);
      if (n <= 0) break;
      off += static_cast<std::size_t>(n);
    }
  }
  in.close_write();

  pollfd fds[2] = {{out.fd[0], POLLIN, 0}, {err.fd[0], POLLIN, 0}};
  std::string* sinks[2] = {&result.out, &result.err};
  int open = 2;
  char buf[8192];
  while (open > 0) {
    int wait_ms = -1;
    if (spec.timeout.count() > 0) {
      auto left = spec.timeout - std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
      if (left.count() <= 0) {
        result.timed_out = true;
        ::kill(-pid, SIGKILL);
        break;
      }
      wait_ms = static_cast<int>(left.count());
    }
    int rc = ::poll(fds, 2, wait_ms);
    if (rc < 0) {
      if (errno == EINTR) continue;
      break;
    }
    for (int i = 0; i < 2; ++i) {
      if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      auto n = ::read(fds[i].fd, buf, sizeof buf);
      if (n > 0) {
        sinks[i]->append(buf, static_cast<std::size_t>(n));
      } else {
        fds[i].fd = -1;
        --open;
      }
    }
  }

  int wstatus = 0;
  ::waitpid(pid, &wstatus, 0);
  // Orphaned grandchildren may still hold the group; make sure nothing outlives the trial.
  ::kill(-pid, SIGKILL);
  result.wall = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
  if (WIFEXITED(wstatus)) {
    result.exit_code = WEXITSTATUS(wstatus);
  } else if (WIFSIGNALED(wstatus)) {
    result.term_signal = WTERMSIG(wstatus);
  }
  if (result.spawn_failed) {
    result.err += std::string("failed to execute '") + spec.argv[0] + "': " + std::strerror(exec_errno);
  }
  return result;
}

}  // namespace dlrepro
