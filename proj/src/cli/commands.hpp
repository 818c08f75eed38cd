#pragma once

#include "cli/config.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace icse::cli {

enum ExitCode : int { kOk = 0, kConfig = 2, kData = 3, kNumerical = 4 };

struct Invocation {
    std::string command;  // fit, mc-study, limit-sim, orthant, eb
    std::optional<std::filesystem::path> config;
    std::vector<std::string> overrides;  // key=value, applied after the file
    unsigned threads = 1;
};

/// Runs one subcommand; results go to the `output` key's file or to `out`,
/// diagnostics to `err`. Returns an ExitCode.
int run(const Invocation& inv, std::ostream& out, std::ostream& err);

/// Full command-line entry point.
int icse_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// "# icse-kit <version> seed=<seed>"
std::string output_banner(std::uint64_t seed);

}  // namespace icse::cli
