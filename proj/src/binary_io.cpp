#include "xpose/binary_io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "xpose/errors.hpp"

namespace xpose {

namespace fs = std::filesystem;

void write_file_atomic(const std::string& path, const std::string& bytes) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw PrereqError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw PrereqError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, p);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PrereqError("missing file '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

bool file_exists(const std::string& path) { return fs::exists(path); }

void put_u32le(std::string& out, uint32_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
  out.push_back(char((v >> 16) & 0xff));
  out.push_back(char((v >> 24) & 0xff));
}

uint32_t get_u32le(const std::string& in, size_t off) {
  return uint32_t(uint8_t(in[off])) | uint32_t(uint8_t(in[off + 1])) << 8 |
         uint32_t(uint8_t(in[off + 2])) << 16 | uint32_t(uint8_t(in[off + 3])) << 24;
}

void put_f32le(std::string& out, const float* data, size_t count) {
  for (size_t i = 0; i < count; ++i) {
    uint32_t bits;
    std::memcpy(&bits, &data[i], 4);
    put_u32le(out, bits);
  }
}

bool get_f32le(const std::string& in, size_t off, float* data, size_t count) {
  if (off + count * 4 > in.size()) return false;
  for (size_t i = 0; i < count; ++i) {
    uint32_t bits = get_u32le(in, off + i * 4);
    std::memcpy(&data[i], &bits, 4);
  }
  return true;
}

}  // namespace xpose
