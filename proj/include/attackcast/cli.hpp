#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace attackcast {

/// Environment variable naming a JSON config file read before flags are
/// applied. --config overrides it.
inline constexpr const char* kConfigEnv = "ATTACKCAST_CONFIG";

/// Runs one command line. Returns 0 on success, 2 for usage errors and 1 for
/// any other failure, which is reported as a single "error: ..." line on
/// `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace attackcast
