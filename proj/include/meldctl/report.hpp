#pragma once

#include <functional>
#include <ostream>
#include <string>

namespace meldctl {

// Shortest decimal string that round-trips a double exactly.
std::string fmt_g17(double v);

// Writes through a temp file in the destination directory and renames into
// place, so readers never observe a partial file.
void atomic_write(const std::string& path, const std::function<void(std::ostream&)>& emit);

}  // namespace meldctl
