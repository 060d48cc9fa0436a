#include "meldctl/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace meldctl {

std::string fmt_g17(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(buf, "%lf", &back);
        if (back == v) return buf;
    }
    return buf;
}

void atomic_write(const std::string& path, const std::function<void(std::ostream&)>& emit) {
    namespace fs = std::filesystem;
    fs::path dst(path);
    fs::path dir = dst.parent_path();
    if (dir.empty()) dir = ".";
    fs::path tmp = dir / (dst.filename().string() + ".tmp");
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open " + tmp.string());
        emit(os);
        os.flush();
        if (!os) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, dst);
}

}  // namespace meldctl
