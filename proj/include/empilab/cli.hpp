#pragma once

namespace empilab {

/// Dispatches one CLI invocation. Exit codes: 0 success, 1 a campaign found
/// an invariant or bound violation, 2 usage or input-file error.
int run_cli(int argc, const char* const* argv);

}  // namespace empilab
