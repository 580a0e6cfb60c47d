#pragma once

#include <stdexcept>
#include <string>

namespace ptlab {

// error categories, mapped onto C API status codes and CLI exit codes
enum class errc {
    internal   = 1,
    config     = 2,
    data       = 3,
    checkpoint = 4,
    argument   = 5,
    dimension  = 6,
    numeric    = 7,
};

struct error : std::runtime_error {
    errc kind;
    error(errc k, const std::string & msg) : std::runtime_error(msg), kind(k) {}
};

[[noreturn]] inline void throw_config(const std::string & msg)     { throw error(errc::config, msg); }
[[noreturn]] inline void throw_data(const std::string & msg)       { throw error(errc::data, msg); }
[[noreturn]] inline void throw_checkpoint(const std::string & msg) { throw error(errc::checkpoint, msg); }
[[noreturn]] inline void throw_arg(const std::string & msg)        { throw error(errc::argument, msg); }
[[noreturn]] inline void throw_dim(const std::string & msg)        { throw error(errc::dimension, msg); }
[[noreturn]] inline void throw_numeric(const std::string & msg)    { throw error(errc::numeric, msg); }

} // namespace ptlab
