#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "privalign/errors.hpp"
#include "privalign/fm.hpp"

namespace privalign::fm {

namespace {

constexpr char kMagic[4] = {'F', 'M', 'I', 'X'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::ostream& os, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

void save_index(const FmIndex& index, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open index file for writing: " + path.string());

  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u64(os, index.text_len);
  put_u32(os, static_cast<std::uint32_t>(index.alphabet.size()));
  put_u32(os, static_cast<std::uint32_t>(index.alphabet.width));
  for (const auto& s : index.alphabet.symbols) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  for (std::uint16_t c : index.bwt) put_u16(os, c);
  for (const auto& row : index.matrix.ranks01)
    for (std::uint32_t v : row) put_u32(os, v);

  if (!os) throw InputError("failed writing index file: " + path.string());
}

FmIndex load_index(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open index file: " + path.string());

  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw InputError("not an index file: " + path.string());
  if (std::uint32_t v = get_u32(is); v != kVersion)
    throw InputError("unsupported index file version " + std::to_string(v));

  FmIndex index;
  std::uint64_t text_len = get_u64(is);
  std::uint32_t sigma = get_u32(is);
  std::uint32_t width = get_u32(is);
  if (!is || text_len == 0 || sigma < 2 || width == 0 || width > 16 ||
      text_len > (std::uint64_t{1} << 32) - 2)
    throw InputError("index file header is implausible: " + path.string());

  index.text_len = static_cast<std::uint32_t>(text_len);
  index.alphabet.width = static_cast<int>(width);
  for (std::uint32_t i = 0; i < sigma; ++i) {
    std::uint32_t len = get_u32(is);
    if (!is || len > 4096) throw InputError("index file is truncated: " + path.string());
    std::string s(len, '\0');
    is.read(s.data(), len);
    index.alphabet.symbols.push_back(std::move(s));
  }
  if (index.alphabet.symbols.front() != "$" || index.alphabet.symbols.back() != ";")
    throw InputError("index alphabet is malformed: " + path.string());

  index.bwt.resize(index.text_len);
  for (auto& c : index.bwt) c = get_u16(is);
  if (!is) throw InputError("index file is truncated: " + path.string());

  // Ranks are rebuilt from the transformed text and must match the stored
  // copy bit for bit; disagreement means the file was damaged.
  index.matrix = build_wavelet_matrix(index.bwt, index.alphabet);
  for (const auto& row : index.matrix.ranks01)
    for (std::uint32_t expect : row) {
      std::uint32_t got = get_u32(is);
      if (!is || got != expect)
        throw InputError("index file is corrupt: " + path.string());
    }
  return index;
}

}  // namespace privalign::fm
