// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace hava::cli {

/// Runs the `hava` command line. Returns 0 on success, 2 on usage errors and
/// 1 on runtime errors.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace hava::cli
