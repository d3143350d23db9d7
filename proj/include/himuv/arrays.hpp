#pragma once

// Little-endian binary arrays used by the feature cache and mel outputs.
//
//   offset 0   "HMVA"
//          4   u32 version (1)
//          8   u32 dtype (1 = f64, 2 = i64)
//         12   u32 reserved (0)
//         16   u64 rows
//         24   u64 cols
//         32   rows * cols elements, row-major

#include "himuv/autograd.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace himuv {

// Writes to a temporary sibling then renames, so readers never see partial files.
void write_array(const std::filesystem::path& path, const Matrix& values);
Matrix read_array(const std::filesystem::path& path);

void write_int_array(const std::filesystem::path& path, std::span<const std::int64_t> values);
std::vector<std::int64_t> read_int_array(const std::filesystem::path& path);

// Writes `bytes` to path atomically (temp file + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace himuv
