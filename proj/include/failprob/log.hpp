#pragma once

#include <string_view>

namespace failprob {

// Thread-safe warning sink on stderr; silenced with set_quiet(true).
void warn(std::string_view msg);
void set_quiet(bool quiet);

}  // namespace failprob
