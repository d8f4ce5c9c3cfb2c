// Copyright 2026 The l2ieval Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace l2i {

inline constexpr std::string_view kVersion = "0.1.0";

/// Stable exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // validation or metric failure
  kExitIo = 2,       // I/O or configuration error
};

/// Environment variable that overrides the embedding service URL.
inline constexpr const char* kEmbedUrlEnv = "L2IEVAL_EMBED_URL";

/// Runs the command line `args` (args[0] is the program name). Normal output
/// goes to `out`, diagnostics and warnings to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string sha256_hex(std::string_view data);
/// Throws IoError if the file cannot be read.
std::string file_sha256(const std::string& path);

}  // namespace l2i
