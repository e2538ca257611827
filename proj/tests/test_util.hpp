#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "patcherizer/common.hpp"

namespace testutil {

inline std::filesystem::path data_dir() { return PATCHERIZER_DATA_DIR; }

// Fresh scratch directory per fixture, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& stem) {
        dir_ = std::filesystem::temp_directory_path() /
               (stem + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
        std::filesystem::create_directories(dir_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(dir_, ec);
    }
    const std::filesystem::path& path() const { return dir_; }
    std::string file(const std::string& name) const { return (dir_ / name).string(); }

private:
    std::filesystem::path dir_;
    static inline int counter_ = 0;
};

struct CommandResult {
    int exit_code;
    std::string output;  // stdout and stderr interleaved
};

inline CommandResult run_command(const std::string& cmd) {
    std::string full = cmd + " 2>&1";
    FILE* pipe = ::popen(full.c_str(), "r");
    if (!pipe) return {-1, "popen failed"};
    std::string out;
    char buf[4096];
    std::size_t n;
    while ((n = ::fread(buf, 1, sizeof(buf), pipe)) > 0) out.append(buf, n);
    int status = ::pclose(pipe);
    int code = (status >= 0 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
    return {code, out};
}

}  // namespace testutil
