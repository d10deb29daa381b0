#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace xpose {

// Whole-file helpers. Writes go through a temp-then-rename pattern so partial
// outputs never exist; reads raise PrereqError naming the missing path.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);
bool file_exists(const std::string& path);

void put_u32le(std::string& out, uint32_t v);
uint32_t get_u32le(const std::string& in, size_t off);

void put_f32le(std::string& out, const float* data, size_t count);
// Returns false if fewer than count floats remain at off.
bool get_f32le(const std::string& in, size_t off, float* data, size_t count);

}  // namespace xpose
