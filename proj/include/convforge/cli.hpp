// Copyright 2026 The ConvForge Authors.
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

// Command-line entry point shared by the `convforge` binary and the Python
// package.

#ifndef CONVFORGE_CLI_HPP_
#define CONVFORGE_CLI_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace convforge {

// `args` excludes the program name. Returns the process exit code: 0 on
// success, 2 on validation errors and bad usage, 1 on runtime failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace convforge

#endif  // CONVFORGE_CLI_HPP_
