#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "uvoc/errors.hpp"

namespace uvoc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitSchema = 2;
inline constexpr int kExitNumerical = 3;

/// Schema-like failures (bad input) map to 2, numerical aborts to 3.
int exit_code_for(ErrorKind kind);

/// {"code": ..., "message": ..., "context": ...} on a single line.
std::string error_json(ErrorKind kind, const std::string& message, const std::string& context);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t h);

/// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const std::string& path, const std::string& contents);

/// Worker count for sweeps: hardware concurrency capped by UVOC_THREADS.
unsigned worker_count(std::size_t jobs);

/// Entry point shared by the executable and the tests.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace uvoc::cli
