// tools/include/nvl/cli.hpp

// Copyright 2026  The nvl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef NVL_CLI_HPP_
#define NVL_CLI_HPP_

#include <ostream>
#include <stdexcept>
#include <string>

namespace nvl::cli {

/// Exit codes of the `nvl` binary.
enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2 };

/// Bad invocation or missing inputs; maps to kValidation.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Runs one command line.  Normal output goes to `out`; failures produce a
/// single "nvl: error: kind=<kind> message=<text>" line on `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nvl::cli

#endif  // NVL_CLI_HPP_
