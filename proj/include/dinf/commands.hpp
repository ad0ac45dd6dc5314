#pragma once

#include <filesystem>
#include <string>

#include "dinf/config.hpp"

namespace dinf {

// One CLI subcommand, run against a config and an artifact directory.
// Commands chain through container files in `out_dir` (model.dinf,
// samples.dinf, factors.dinf, scores.dinf, ...) and verify the embedded
// config hash before any compute. Returns the process exit status.
int run_command(const std::string& cmd, const RunConfig& cfg,
                const std::filesystem::path& out_dir);

std::vector<std::string> command_names();

}  // namespace dinf
