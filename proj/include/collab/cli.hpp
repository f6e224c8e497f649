#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace collab {

/// Runs one pipeline subcommand (synth, stats, train, eval, segment, groups).
/// Returns 0 on success, 2 on a usage or configuration error and 1 on a
/// runtime failure. Logs and usage text go to `log`.
int dispatch(int argc, const char* const* argv, std::ostream& log);

/// Same as above; `args` excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& log);

}  // namespace collab
