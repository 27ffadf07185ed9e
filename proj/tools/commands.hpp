#pragma once

namespace gridlex::cli {

/// Exit codes: 0 success, 1 validation or usage error, 2 analysis error.
int run(int argc, char** argv);

}  // namespace gridlex::cli
