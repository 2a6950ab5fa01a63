#include "nexusflow/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nexusflow/error.hpp"

namespace nexusflow {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ShapeMismatch: return "shape mismatch";
        case ErrorKind::InvalidArgument: return "invalid argument";
        case ErrorKind::NotSymmetric: return "not symmetric";
        case ErrorKind::StaleCache: return "stale cache";
        case ErrorKind::NonFinite: return "non-finite value";
        case ErrorKind::Divergence: return "divergence";
        case ErrorKind::Io: return "io error";
        case ErrorKind::Schema: return "schema error";
        case ErrorKind::Version: return "version error";
    }
    return "error";
}

namespace io {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw Error(ErrorKind::Io, "failed to format double");
    return std::string(buf, end);
}

double parse_double(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\r' || text.back() == '\t'))
        text.remove_suffix(1);
    if (text == "nan") return std::nan("");
    if (text == "inf") return INFINITY;
    if (text == "-inf") return -INFINITY;
    double v = 0.0;
    const char* first = text.data();
    if (!text.empty() && text.front() == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
        throw Error(ErrorKind::Io, "cannot parse number '" + std::string(text) + "'");
    return v;
}

long long parse_int(std::string_view text) {
    while (!text.empty() && (text.back() == '\r' || text.back() == ' ')) text.remove_suffix(1);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
        throw Error(ErrorKind::Io, "cannot parse integer '" + std::string(text) + "'");
    return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error(ErrorKind::Io, "short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot rename " + tmp.string() + " to " + path.string());
}

}  // namespace io
}  // namespace nexusflow
