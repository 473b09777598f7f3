#pragma once

// Subprocess runner for untrusted candidate programs: scratch working
// directory, empty environment, wall-clock limit, capped output, and (where
// the kernel supports Landlock) no filesystem writes outside the scratch
// directory. Not a full OS sandbox: reads, network and process creation are
// unrestricted.

#include <fcntl.h>
#include <linux/landlock.h>
#include <poll.h>
#include <signal.h>
#include <sys/prctl.h>
#include <sys/resource.h>
#include <sys/syscall.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace toolcoder {

inline constexpr std::size_t kDefaultOutputCap = 64 * 1024;

struct SandboxRequest {
    std::vector<std::string> command;  // argv; the program path is appended
    std::string program;               // source written to the scratch dir
    std::string program_name = "candidate.py";
    std::chrono::milliseconds timeout{10000};
    std::size_t output_cap = kDefaultOutputCap;
    std::filesystem::path scratch_parent = std::filesystem::temp_directory_path();
    bool keep_scratch = false;
};

struct SandboxResult {
    int exit_code = -1;  // valid when !signaled && !timed_out
    bool signaled = false;
    bool timed_out = false;
    std::string out;
    std::string err;
    double wall_ms = 0.0;
    bool write_isolation = false;  // Landlock ruleset was available
    std::filesystem::path scratch_dir;
};

namespace detail {

inline int landlock_abi() {
#ifdef SYS_landlock_create_ruleset
    const long abi = syscall(SYS_landlock_create_ruleset, nullptr, 0, LANDLOCK_CREATE_RULESET_VERSION);
    return abi < 0 ? 0 : static_cast<int>(abi);
#else
    return 0;
#endif
}

/// Called in the child after fork. Returns false if the ruleset could not be applied.
inline bool restrict_writes_to(const char* dir, int abi) {
#ifdef SYS_landlock_create_ruleset
    if (abi <= 0) return false;
    std::uint64_t write_rights = LANDLOCK_ACCESS_FS_WRITE_FILE | LANDLOCK_ACCESS_FS_REMOVE_DIR |
                                 LANDLOCK_ACCESS_FS_REMOVE_FILE | LANDLOCK_ACCESS_FS_MAKE_CHAR |
                                 LANDLOCK_ACCESS_FS_MAKE_DIR | LANDLOCK_ACCESS_FS_MAKE_REG |
                                 LANDLOCK_ACCESS_FS_MAKE_SOCK | LANDLOCK_ACCESS_FS_MAKE_FIFO |
                                 LANDLOCK_ACCESS_FS_MAKE_BLOCK | LANDLOCK_ACCESS_FS_MAKE_SYM;
#ifdef LANDLOCK_ACCESS_FS_REFER
    if (abi >= 2) write_rights |= LANDLOCK_ACCESS_FS_REFER;
#endif
    std::uint64_t file_rights = LANDLOCK_ACCESS_FS_WRITE_FILE;
#ifdef LANDLOCK_ACCESS_FS_TRUNCATE
    if (abi >= 3) {
        write_rights |= LANDLOCK_ACCESS_FS_TRUNCATE;
        file_rights |= LANDLOCK_ACCESS_FS_TRUNCATE;
    }
#endif
    landlock_ruleset_attr attr{};
    attr.handled_access_fs = write_rights;
    const int ruleset = static_cast<int>(syscall(SYS_landlock_create_ruleset, &attr, sizeof(attr), 0));
    if (ruleset < 0) return false;

    auto allow = [&](const char* path, std::uint64_t rights) {
        const int fd = open(path, O_PATH | O_CLOEXEC);
        if (fd < 0) return false;
        landlock_path_beneath_attr beneath{};
        beneath.allowed_access = rights;
        beneath.parent_fd = fd;
        const long rc = syscall(SYS_landlock_add_rule, ruleset, LANDLOCK_RULE_PATH_BENEATH, &beneath, 0);
        close(fd);
        return rc == 0;
    };
    bool ok = allow(dir, write_rights);
    allow("/dev/null", file_rights);
    ok = ok && prctl(PR_SET_NO_NEW_PRIVS, 1, 0, 0, 0) == 0;
    ok = ok && syscall(SYS_landlock_restrict_self, ruleset, 0) == 0;
    close(ruleset);
    return ok;
#else
    (void)dir;
    (void)abi;
    return false;
#endif
}

inline std::string resolve_executable(const std::string& name) {
    if (name.find('/') != std::string::npos) return name;
    const char* path = std::getenv("PATH");
    std::string dirs = path ? path : "/usr/local/bin:/usr/bin:/bin";
    std::size_t start = 0;
    while (start <= dirs.size()) {
        std::size_t end = dirs.find(':', start);
        if (end == std::string::npos) end = dirs.size();
        std::string candidate = dirs.substr(start, end - start) + "/" + name;
        if (access(candidate.c_str(), X_OK) == 0) return candidate;
        start = end + 1;
    }
    return name;
}

inline void append_capped(std::string& dst, const char* data, std::size_t n, std::size_t cap) {
    if (dst.size() < cap) dst.append(data, std::min(n, cap - dst.size()));
}

}  // namespace detail

inline bool write_isolation_available() { return detail::landlock_abi() > 0; }

/// Throws std::runtime_error only when the process cannot be started at all.
inline SandboxResult run_sandboxed(const SandboxRequest& req) {
    namespace fs = std::filesystem;
    if (req.command.empty()) throw std::invalid_argument("sandbox: empty command");

    std::string templ = (req.scratch_parent / "toolcoder-XXXXXX").string();
    std::vector<char> buf(templ.begin(), templ.end());
    buf.push_back('\0');
    if (!mkdtemp(buf.data())) throw std::runtime_error("sandbox: cannot create scratch dir: " + std::string(std::strerror(errno)));
    SandboxResult result;
    result.scratch_dir = fs::path(buf.data());
    {
        std::ofstream f(result.scratch_dir / req.program_name, std::ios::binary);
        f << req.program;
    }

    const std::string exe = detail::resolve_executable(req.command.front());
    std::vector<std::string> args = req.command;
    args.push_back(req.program_name);
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    char* envp[] = {nullptr};
    const int abi = detail::landlock_abi();
    result.write_isolation = abi > 0;
    const std::string scratch = result.scratch_dir.string();

    int out_pipe[2];
    int err_pipe[2];
    if (pipe2(out_pipe, O_CLOEXEC) != 0 || pipe2(err_pipe, O_CLOEXEC) != 0)
        throw std::runtime_error("sandbox: pipe failed");

    const auto t0 = std::chrono::steady_clock::now();
    const pid_t pid = fork();
    if (pid < 0) throw std::runtime_error("sandbox: fork failed");
    if (pid == 0) {
        setpgid(0, 0);
        const int devnull = open("/dev/null", O_RDONLY);
        dup2(devnull, STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        dup2(err_pipe[1], STDERR_FILENO);
        if (chdir(scratch.c_str()) != 0) _exit(127);
        rlimit core{0, 0};
        setrlimit(RLIMIT_CORE, &core);
        rlimit fsize{64u << 20, 64u << 20};
        setrlimit(RLIMIT_FSIZE, &fsize);
        if (abi > 0 && !detail::restrict_writes_to(scratch.c_str(), abi)) {
            static const char msg[] = "sandbox: failed to apply write isolation\n";
            (void)!write(STDERR_FILENO, msg, sizeof(msg) - 1);
            _exit(126);
        }
        execve(exe.c_str(), argv.data(), envp);
        _exit(127);
    }
    setpgid(pid, pid);
    close(out_pipe[1]);
    close(err_pipe[1]);

    const auto deadline = t0 + req.timeout;
    std::array<pollfd, 2> fds{{{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}}};
    int open_fds = 2;
    char chunk[4096];
    while (open_fds > 0) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            result.timed_out = true;
            break;
        }
        const int rc = poll(fds.data(), fds.size(), static_cast<int>(left.count()));
        if (rc < 0 && errno == EINTR) continue;
        if (rc <= 0) continue;
        for (std::size_t i = 0; i < fds.size(); ++i) {
            if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
            const ssize_t n = read(fds[i].fd, chunk, sizeof(chunk));
            if (n <= 0) {
                close(fds[i].fd);
                fds[i].fd = -1;
                --open_fds;
                continue;
            }
            detail::append_capped(i == 0 ? result.out : result.err, chunk, static_cast<std::size_t>(n), req.output_cap);
        }
    }
    if (result.timed_out) kill(-pid, SIGKILL);

    int status = 0;
    while (true) {
        if (!result.timed_out) {
            // Output closed; the process may still be running (e.g. closed its streams).
            const auto left = deadline - std::chrono::steady_clock::now();
            const pid_t w = waitpid(pid, &status, WNOHANG);
            if (w == pid) break;
            if (left.count() <= 0) {
                result.timed_out = true;
                kill(-pid, SIGKILL);
                continue;
            }
            usleep(1000);
            continue;
        }
        if (waitpid(pid, &status, 0) == pid || errno != EINTR) break;
    }
    kill(-pid, SIGKILL);  // stray children of the candidate
    for (auto& f : fds)
        if (f.fd >= 0) close(f.fd);
    result.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    if (!result.timed_out) {
        if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
        else if (WIFSIGNALED(status)) result.signaled = true;
    }
    if (!req.keep_scratch) {
        std::error_code ec;
        fs::remove_all(result.scratch_dir, ec);
    }
    return result;
}

}  // namespace toolcoder
