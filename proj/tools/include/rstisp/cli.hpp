// Copyright 2026 The rstisp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rstisp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Environment variable naming the default dataset root.
inline constexpr const char* kDataRootEnv = "RSTISP_DATA_ROOT";

/// Runs one subcommand (train, eval, infer, synth, viz). `args` excludes the
/// program name. Failures print a single line
///   error: code=<kind> message="<text>"
/// on `err` and return 1 (runtime) or 2 (usage).
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rstisp::cli
