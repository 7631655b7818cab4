#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hdpo {

inline constexpr const char* kToolVersion = "0.1.0";

// FNV-1a 64-bit digest of a byte string, used to fingerprint emitted files
// in the run manifest.
std::uint64_t fnv1a64(const std::string& bytes);

// Digest formatted the way the manifest records it: "fnv1a64:" followed by
// 16 lowercase hex digits.
std::string digest_string(const std::string& bytes);

// Command-line overrides applied on top of the config file.
struct RunOptions {
    std::string config_path;
    std::string output_dir;  // empty means take the config value
    bool has_seed = false;
    std::uint64_t seed = 0;
    int threads = 1;
};

// Loads the JSON config, runs the named experiment, and writes every
// artifact plus manifest.json under the output directory. Throws
// ConfigError for malformed configs, NumericError (or a subclass) for
// numeric failures, IoError for filesystem problems.
void run_experiment(const RunOptions& opts);

// Full command-line entry point. Returns the process exit code: 0 on
// success, 2 for config errors, 3 for numeric errors, 4 for I/O errors.
// On failure a single-line JSON error record goes to stderr.
int cli_main(int argc, const char* const* argv);
int cli_main(const std::vector<std::string>& args);

}  // namespace hdpo
