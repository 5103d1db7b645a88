/*
 * Copyright 2026 The lossattr Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef LOSSATTR_TOOLS_COMMANDS_HPP_
#define LOSSATTR_TOOLS_COMMANDS_HPP_

#include <iosfwd>
#include <string>
#include <vector>

#include "lossattr/run_config.hpp"

namespace lossattr::cli {

inline constexpr int kManifestSchemaVersion = 1;
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitInternal = 2;

// Each command reads all inputs before touching `config.out`, so a failed
// run leaves no artifacts behind.
void cmd_train(const RunConfig& config);
void cmd_explain(const RunConfig& config);
void cmd_evaluate(const RunConfig& config);
void cmd_synth_gen(const RunConfig& config);
void cmd_severity_sweep(const RunConfig& config);

// Full command line, args[0] being the program name. Diagnostics go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace lossattr::cli

#endif  // LOSSATTR_TOOLS_COMMANDS_HPP_
