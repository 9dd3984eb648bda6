/*
   Copyright 2026 The pstrat Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace pstrat::cli {

/// Exit codes: stable contract.
enum ExitCode : int { kOk = 0, kRuntimeError = 1, kConfigError = 2 };

struct GlobalOptions {
    std::optional<std::uint64_t> seed;  // overrides the scenario seed
    int threads = 0;                    // 0 = all cores
    std::string out = ".";
};

struct Streams {
    std::ostream& out;
    std::ostream& err;
};

struct SimulateOptions {
    std::string scenario_file;
    std::optional<std::int64_t> n;
    bool keep_y = false;
};

enum class EffectMethod { Quadrature, MonteCarlo, Both };

struct TrueEffectOptions {
    std::string scenario_file;
    EffectMethod method = EffectMethod::Both;
    std::optional<std::int64_t> n;
    int nodes = 64;
};

struct CalibrateOptions {
    std::string scenario_file;
    std::string estimator = "plugin";
    int R = 200;
    std::optional<std::int64_t> n;
    bool keep_y = true;
};

struct PaperDemoOptions {
    std::string scenario_dir;  // bundled scenarios
};

int cmd_simulate(SimulateOptions const& opt, GlobalOptions const& global, Streams io);
int cmd_true_effect(TrueEffectOptions const& opt, GlobalOptions const& global, Streams io);
int cmd_calibrate(CalibrateOptions const& opt, GlobalOptions const& global, Streams io);
int cmd_paper_demo(PaperDemoOptions const& opt, GlobalOptions const& global, Streams io);

/// Parses argv and dispatches to a subcommand.
int run(int argc, char const* const* argv, Streams io);

/// Directory holding the bundled scenario files.
std::string default_scenario_dir();

}  // namespace pstrat::cli
