#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace satcalc {

// Exit statuses: 0 success, 1 user error (bad flags, bad files), 2 internal error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUser = 1;
inline constexpr int kExitInternal = 2;

// args[0] is the program name.
int parse_and_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace satcalc
