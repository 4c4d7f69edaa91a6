#pragma once

// On-disk formats: binary PGM (P5) label masks, binary PPM (P6) images,
// SSDDPM1 probability maps and SSDDCKPT1 checkpoints. All writers go through
// a temporary file followed by a rename.

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "ssdd/image.hpp"
#include "ssdd/masks.hpp"
#include "ssdd/nets.hpp"
#include "ssdd/tensor.hpp"

namespace ssdd {

namespace fs = std::filesystem;

inline constexpr std::string_view kProbMapMagic = "SSDDPM1\n";
inline constexpr std::string_view kCheckpointMagic = "SSDDCKPT1";

using Bytes = std::vector<std::uint8_t>;

inline Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void atomic_write(const fs::path& path, const Bytes& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline void atomic_write(const fs::path& path, std::string_view text) {
  atomic_write(path, Bytes(text.begin(), text.end()));
}

namespace detail {

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(Bytes& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class ByteReader {
 public:
  ByteReader(const Bytes& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw IoError(source_ + ": truncated file (expected " + std::to_string(n) +
                    " more bytes for " + what + ", found " + std::to_string(remaining()) + ")");
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  const std::uint8_t* raw(std::size_t n, const char* what) {
    need(n, what);
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  [[noreturn]] void fail(const std::string& msg) const { throw IoError(source_ + ": " + msg); }

  // Whitespace-separated header token of a netpbm file; '#' starts a comment.
  std::string pnm_token() {
    while (pos_ < bytes_.size()) {
      const char c = static_cast<char>(bytes_[pos_]);
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      tok.push_back(static_cast<char>(bytes_[pos_++]));
    }
    if (tok.empty()) fail("truncated header");
    return tok;
  }
  std::size_t pnm_number() {
    const auto tok = pnm_token();
    std::size_t idx = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(tok, &idx);
    } catch (const std::exception&) {
      fail("bad header field '" + tok + "'");
    }
    if (idx != tok.size()) fail("bad header field '" + tok + "'");
    return v;
  }
  void single_whitespace() {
    need(1, "header terminator");
    if (!std::isspace(static_cast<unsigned char>(bytes_[pos_]))) fail("malformed header");
    ++pos_;
  }

 private:
  const Bytes& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

struct PnmHeader {
  std::size_t width, height;
};

inline PnmHeader read_pnm_header(ByteReader& r, std::string_view magic) {
  if (r.pnm_token() != magic) r.fail("expected netpbm magic " + std::string(magic));
  PnmHeader h{};
  h.width = r.pnm_number();
  h.height = r.pnm_number();
  const auto maxval = r.pnm_number();
  if (maxval != 255) r.fail("only maxval 255 is supported");
  if (h.width == 0 || h.height == 0) r.fail("zero image dimension");
  r.single_whitespace();
  return h;
}

inline Bytes pnm_header(std::string_view magic, std::size_t w, std::size_t h) {
  const std::string s = std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  return Bytes(s.begin(), s.end());
}

}  // namespace detail

// ---- label masks (PGM P5) ------------------------------------------------------------

inline Bytes encode_pgm(const LabelMask& m) {
  auto out = detail::pnm_header("P5", m.width, m.height);
  out.insert(out.end(), m.labels.begin(), m.labels.end());
  return out;
}

inline LabelMask decode_pgm(const Bytes& bytes, const std::string& source) {
  detail::ByteReader r(bytes, source);
  const auto h = detail::read_pnm_header(r, "P5");
  LabelMask m(h.height, h.width);
  const auto* p = r.raw(m.size(), "pixel data");
  std::copy(p, p + m.size(), m.labels.begin());
  return m;
}

inline void write_mask(const fs::path& path, const LabelMask& m) { atomic_write(path, encode_pgm(m)); }
inline LabelMask read_mask(const fs::path& path) { return decode_pgm(read_file(path), path.string()); }

// ---- images (PPM P6) -----------------------------------------------------------------

inline Bytes encode_ppm(const Image& img) {
  auto out = detail::pnm_header("P6", img.width, img.height);
  for (double v : img.rgb) {
    out.push_back(static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)));
  }
  return out;
}

inline Image decode_ppm(const Bytes& bytes, const std::string& source) {
  detail::ByteReader r(bytes, source);
  const auto h = detail::read_pnm_header(r, "P6");
  Image img(h.height, h.width);
  const auto* p = r.raw(img.rgb.size(), "pixel data");
  for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = p[i];
  return img;
}

inline void write_image(const fs::path& path, const Image& img) { atomic_write(path, encode_ppm(img)); }
inline Image read_image(const fs::path& path) { return decode_ppm(read_file(path), path.string()); }

// ---- probability maps ----------------------------------------------------------------

/// Header "SSDDPM1\n", u32 H, W, C, then H*W*C float32 values with the
/// channel index varying fastest. All little-endian.
template <typename T>
Bytes encode_probmap(const BasicTensor<T>& p) {
  require_rank(p, 3, "encode_probmap");
  const std::size_t c = p.dim(0), h = p.dim(1), w = p.dim(2), plane = h * w;
  Bytes out(kProbMapMagic.begin(), kProbMapMagic.end());
  out.reserve(out.size() + 12 + 4 * p.size());
  detail::put_u32(out, static_cast<std::uint32_t>(h));
  detail::put_u32(out, static_cast<std::uint32_t>(w));
  detail::put_u32(out, static_cast<std::uint32_t>(c));
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t k = 0; k < c; ++k) detail::put_f32(out, static_cast<float>(p[k * plane + i]));
  }
  return out;
}

inline Tensor decode_probmap(const Bytes& bytes, const std::string& source) {
  detail::ByteReader r(bytes, source);
  if (r.text(kProbMapMagic.size(), "magic") != kProbMapMagic) r.fail("not an SSDDPM1 probability map");
  const std::size_t h = r.u32("height"), w = r.u32("width"), c = r.u32("channels");
  const std::size_t plane = h * w;
  r.need(4 * plane * c, "probability values");
  Tensor p({c, h, w});
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t k = 0; k < c; ++k) p[k * plane + i] = r.f32("probability value");
  }
  if (!r.at_end()) r.fail("trailing bytes after probability values");
  return p;
}

template <typename T>
void write_probmap(const fs::path& path, const BasicTensor<T>& p) {
  atomic_write(path, encode_probmap(p));
}
inline Tensor read_probmap(const fs::path& path) { return decode_probmap(read_file(path), path.string()); }

// ---- checkpoints ---------------------------------------------------------------------

/// Magic "SSDDCKPT1", then per parameter set: u32 name length, name bytes,
/// u32 tensor count, and per tensor u32 rank, u32 dims, float32 values.
template <typename T>
Bytes encode_checkpoint(const std::vector<ParamSet<T>>& sets) {
  Bytes out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  for (const auto& set : sets) {
    detail::put_u32(out, static_cast<std::uint32_t>(set.name.size()));
    out.insert(out.end(), set.name.begin(), set.name.end());
    detail::put_u32(out, static_cast<std::uint32_t>(set.tensors.size()));
    for (const auto& t : set.tensors) {
      detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
      for (auto d : t.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
      for (auto v : t.values()) detail::put_f32(out, static_cast<float>(v));
    }
  }
  return out;
}

inline std::vector<ParamSet<float>> decode_checkpoint(const Bytes& bytes, const std::string& source) {
  detail::ByteReader r(bytes, source);
  if (r.text(kCheckpointMagic.size(), "magic") != kCheckpointMagic) r.fail("not an SSDDCKPT1 checkpoint");
  std::vector<ParamSet<float>> sets;
  while (!r.at_end()) {
    ParamSet<float> set;
    set.name = r.text(r.u32("name length"), "name");
    const std::size_t count = r.u32("tensor count");
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t rank = r.u32("rank");
      if (rank > 8) r.fail("implausible tensor rank " + std::to_string(rank));
      Shape shape(rank);
      for (auto& d : shape) d = r.u32("dimension");
      const std::size_t n = shape_volume(shape);
      r.need(4 * n, "tensor values");
      std::vector<float> values(n);
      for (auto& v : values) v = r.f32("tensor value");
      set.tensors.emplace_back(std::move(shape), std::move(values));
    }
    sets.push_back(std::move(set));
  }
  return sets;
}

template <typename T>
void write_checkpoint(const fs::path& path, const std::vector<ParamSet<T>>& sets) {
  atomic_write(path, encode_checkpoint(sets));
}

inline std::vector<ParamSet<float>> read_checkpoint(const fs::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

inline const ParamSet<float>& find_param_set(const std::vector<ParamSet<float>>& sets,
                                             const std::string& name, const std::string& source) {
  for (const auto& s : sets) {
    if (s.name == name) return s;
  }
  throw IoError(source + ": checkpoint has no parameter set '" + name + "'");
}

}  // namespace ssdd
