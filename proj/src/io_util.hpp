#pragma once

// Internal file helpers shared by the persistence code.

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace cbr::detail {

// Calls `fn(line, line_number)` for each line of a plain or gzip file.
// Line numbers are 1-based. Returning false from `fn` stops the scan.
void for_each_line(const std::string& path,
                   const std::function<bool(std::string_view, std::size_t)>& fn);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

std::uint64_t fnv1a(std::string_view bytes,
                    std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// Number of bytes in the UTF-8 sequence starting with `lead`.
std::size_t utf8_length(unsigned char lead);

// Directory part of a path ("" when none) and path joining.
std::string parent_dir(const std::string& path);
std::string join_path(const std::string& dir, const std::string& name);

}  // namespace cbr::detail
