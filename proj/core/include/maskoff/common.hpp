#ifndef MASKOFF_COMMON_HPP
#define MASKOFF_COMMON_HPP

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace maskoff {

// Thrown for every recoverable failure (bad input, missing file,
// shape mismatch, format mismatch). The CLI maps it to exit code 2.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    format_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
[[noreturn]] void fail(const Args&... args) {
    std::ostringstream os;
    detail::format_into(os, args...);
    throw Error(os.str());
}

}  // namespace maskoff

#define MASKOFF_CHECK(cond, ...)            \
    do {                                    \
        if (!(cond)) ::maskoff::fail(__VA_ARGS__); \
    } while (0)

#endif
