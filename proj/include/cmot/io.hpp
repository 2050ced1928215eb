#pragma once

// MOTChallenge text records and the little-endian binary containers for
// density grids ("CMDG") and detection embeddings ("CMEB").

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cmot/error.hpp"
#include "cmot/grid.hpp"
#include "cmot/model.hpp"

namespace cmot {

struct MotRecord {
  int frame = 1;
  int id = -1;
  double bb_left = 0.0;
  double bb_top = 0.0;
  double bb_width = 0.0;
  double bb_height = 0.0;
  double conf = -1.0;
  double x = -1.0;
  double y = -1.0;
  double z = -1.0;

  BBox box() const { return {bb_left, bb_top, bb_width, bb_height}; }
  friend bool operator==(const MotRecord&, const MotRecord&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view s, std::size_t line, int field) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v))
    fail(Errc::parse, "line " + std::to_string(line) + ": field " + std::to_string(field) +
                          " is not a number: '" + std::string(s) + "'");
  return v;
}

inline int parse_int_field(std::string_view s, std::size_t line, int field) {
  const double v = parse_double(s, line, field);
  if (v != std::floor(v) || std::abs(v) > 2.0e9)
    fail(Errc::parse, "line " + std::to_string(line) + ": field " + std::to_string(field) +
                          " is not an integer");
  return static_cast<int>(v);
}

}  // namespace detail

// Shortest decimal with at most two fractional digits: 10, 0.9, 12.25.
inline std::string format_mot_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  if (s == "-0") s = "0";
  return s;
}

inline std::vector<MotRecord> read_mot(std::istream& in) {
  std::vector<MotRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view body = detail::trim(line);
    if (body.empty()) continue;
    std::vector<std::string_view> f;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = body.find(',', start);
      f.push_back(body.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (f.size() < 7 || f.size() > 10)
      fail(Errc::parse, "line " + std::to_string(lineno) + ": expected 7 to 10 fields, got " +
                            std::to_string(f.size()));
    MotRecord r;
    r.frame = detail::parse_int_field(f[0], lineno, 1);
    r.id = detail::parse_int_field(f[1], lineno, 2);
    r.bb_left = detail::parse_double(f[2], lineno, 3);
    r.bb_top = detail::parse_double(f[3], lineno, 4);
    r.bb_width = detail::parse_double(f[4], lineno, 5);
    r.bb_height = detail::parse_double(f[5], lineno, 6);
    r.conf = detail::parse_double(f[6], lineno, 7);
    if (f.size() > 7) r.x = detail::parse_double(f[7], lineno, 8);
    if (f.size() > 8) r.y = detail::parse_double(f[8], lineno, 9);
    if (f.size() > 9) r.z = detail::parse_double(f[9], lineno, 10);
    if (r.frame < 1) fail(Errc::parse, "line " + std::to_string(lineno) + ": frame must be >= 1");
    out.push_back(r);
  }
  return out;
}

inline std::vector<MotRecord> read_mot(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open " + path);
  try {
    return read_mot(in);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
}

// Ten comma-separated fields per line, sorted by (frame, id).
inline void write_mot(std::ostream& out, std::vector<MotRecord> recs) {
  std::stable_sort(recs.begin(), recs.end(), [](const MotRecord& a, const MotRecord& b) {
    return a.frame != b.frame ? a.frame < b.frame : a.id < b.id;
  });
  for (const MotRecord& r : recs) {
    if (r.frame < 1) fail(Errc::invalid_argument, "write_mot: frame must be >= 1");
    if (!(r.bb_width > 0.0 && r.bb_height > 0.0))
      fail(Errc::invalid_argument, "write_mot: box width and height must be positive");
    out << r.frame << ',' << r.id << ',' << format_mot_number(r.bb_left) << ','
        << format_mot_number(r.bb_top) << ',' << format_mot_number(r.bb_width) << ','
        << format_mot_number(r.bb_height) << ',' << format_mot_number(r.conf) << ','
        << format_mot_number(r.x) << ',' << format_mot_number(r.y) << ','
        << format_mot_number(r.z) << '\n';
  }
}

inline void write_mot(const std::string& path, std::vector<MotRecord> recs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io, "cannot write " + path);
  write_mot(out, std::move(recs));
  if (!out) fail(Errc::io, "write failed: " + path);
}

inline MotRecord to_record(const TrackBox& t) {
  return {t.frame, t.id, t.box.x, t.box.y, t.box.w, t.box.h, t.confidence, -1, -1, -1};
}

inline MotRecord to_record(int frame, const Detection& d) {
  return {frame, -1, d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h, d.confidence, -1, -1, -1};
}

inline TrackBox to_track_box(const MotRecord& r) { return {r.frame, r.id, r.box(), r.conf}; }

// Ground-truth style files mark ignored rows with conf == 0.
inline std::vector<TrackBox> to_track_boxes(const std::vector<MotRecord>& recs, bool drop_zero_conf = false) {
  std::vector<TrackBox> out;
  out.reserve(recs.size());
  for (const MotRecord& r : recs)
    if (!(drop_zero_conf && r.conf == 0.0)) out.push_back(to_track_box(r));
  return out;
}

// Detection records grouped into frames 1..n_frames (file order within a frame).
inline std::vector<std::vector<Detection>> group_detections(const std::vector<MotRecord>& recs, int n_frames) {
  std::vector<std::vector<Detection>> frames(static_cast<std::size_t>(std::max(n_frames, 0)));
  for (const MotRecord& r : recs) {
    if (r.frame > n_frames) continue;
    Detection d;
    d.bbox = r.box();
    d.confidence = r.conf;
    frames[static_cast<std::size_t>(r.frame - 1)].push_back(d);
  }
  return frames;
}

inline int max_frame(const std::vector<MotRecord>& recs) {
  int m = 0;
  for (const MotRecord& r : recs) m = std::max(m, r.frame);
  return m;
}

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                              static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b.data(), 4);
}

inline void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class ByteReader {
 public:
  ByteReader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

  std::uint32_t u32(const char* what) {
    std::array<unsigned char, 4> b{};
    in_.read(reinterpret_cast<char*>(b.data()), 4);
    if (in_.gcount() != 4) fail(Errc::truncated, name_ + ": truncated while reading " + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  std::array<char, 4> magic() {
    std::array<char, 4> m{};
    in_.read(m.data(), 4);
    if (in_.gcount() != 4) fail(Errc::truncated, name_ + ": file shorter than its magic");
    return m;
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& in_;
  std::string name_;
};

}  // namespace detail

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kDensityHeaderBytes = 24;

struct DensitySequence {
  std::uint32_t r = 4;
  std::uint32_t grid_h = 0;
  std::uint32_t grid_w = 0;
  std::vector<DensityGrid> frames;
};

struct DensityExpectation {
  std::uint32_t grid_h = 0;
  std::uint32_t grid_w = 0;
  std::uint32_t r = 0;
};

// Payload is float32; values not representable in float32 are rounded.
inline void write_density(std::ostream& out, const DensitySequence& seq) {
  for (const DensityGrid& g : seq.frames)
    if (g.height() != static_cast<int>(seq.grid_h) || g.width() != static_cast<int>(seq.grid_w))
      fail(Errc::dimension_mismatch, "write_density: frame shape differs from header");
  out.write("CMDG", 4);
  detail::put_u32(out, kFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(seq.frames.size()));
  detail::put_u32(out, seq.grid_h);
  detail::put_u32(out, seq.grid_w);
  detail::put_u32(out, seq.r);
  for (const DensityGrid& g : seq.frames)
    for (double v : g.values()) detail::put_f32(out, static_cast<float>(v));
}

inline DensitySequence read_density(std::istream& in, const std::string& name = "density",
                                    std::optional<DensityExpectation> expect = std::nullopt) {
  detail::ByteReader rd(in, name);
  const auto m = rd.magic();
  if (std::memcmp(m.data(), "CMDG", 4) != 0) fail(Errc::bad_magic, name + ": not a CMDG density file");
  const std::uint32_t version = rd.u32("version");
  if (version != kFormatVersion)
    fail(Errc::bad_version, name + ": unsupported version " + std::to_string(version));
  DensitySequence seq;
  const std::uint32_t n = rd.u32("frame count");
  seq.grid_h = rd.u32("grid height");
  seq.grid_w = rd.u32("grid width");
  seq.r = rd.u32("downsample factor");
  if (expect && (expect->grid_h != seq.grid_h || expect->grid_w != seq.grid_w ||
                 (expect->r != 0 && expect->r != seq.r)))
    fail(Errc::dimension_mismatch,
         name + ": grid " + std::to_string(seq.grid_h) + "x" + std::to_string(seq.grid_w) + " (r=" +
             std::to_string(seq.r) + ") but expected " + std::to_string(expect->grid_h) + "x" +
             std::to_string(expect->grid_w) + " (r=" + std::to_string(expect->r) + ")");
  if (seq.grid_h > (1u << 16) || seq.grid_w > (1u << 16))
    fail(Errc::dimension_mismatch, name + ": implausible grid size");
  seq.frames.reserve(n);
  for (std::uint32_t f = 0; f < n; ++f) {
    DensityGrid g(static_cast<int>(seq.grid_h), static_cast<int>(seq.grid_w));
    for (double& v : g.raw()) v = rd.f32("payload");
    seq.frames.push_back(std::move(g));
  }
  if (!rd.at_end()) fail(Errc::dimension_mismatch, name + ": trailing bytes after payload");
  return seq;
}

inline void write_density(const std::string& path, const DensitySequence& seq) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io, "cannot write " + path);
  write_density(out, seq);
  if (!out) fail(Errc::io, "write failed: " + path);
}

inline DensitySequence read_density(const std::string& path,
                                    std::optional<DensityExpectation> expect = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path);
  return read_density(in, path, expect);
}

// Plain-text view of one grid for inspection: one CSV row per grid row.
inline void write_density_csv(std::ostream& out, const DensityGrid& g) {
  char buf[32];
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      std::snprintf(buf, sizeof buf, "%.9g", g(y, x));
      if (x) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

struct EmbeddingRow {
  std::uint32_t det_index = 0;
  std::vector<float> values;
  friend bool operator==(const EmbeddingRow&, const EmbeddingRow&) = default;
};

struct EmbeddingSequence {
  std::uint32_t dim = kEmbeddingDim;
  std::vector<std::vector<EmbeddingRow>> frames;
};

inline void write_embeddings(std::ostream& out, const EmbeddingSequence& seq) {
  out.write("CMEB", 4);
  detail::put_u32(out, kFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(seq.frames.size()));
  detail::put_u32(out, seq.dim);
  for (const auto& rows : seq.frames) {
    detail::put_u32(out, static_cast<std::uint32_t>(rows.size()));
    for (const EmbeddingRow& r : rows) {
      if (r.values.size() != seq.dim) fail(Errc::dimension_mismatch, "write_embeddings: row dimension");
      detail::put_u32(out, r.det_index);
      for (float v : r.values) detail::put_f32(out, v);
    }
  }
}

inline EmbeddingSequence read_embeddings(std::istream& in, const std::string& name = "embeddings") {
  detail::ByteReader rd(in, name);
  const auto m = rd.magic();
  if (std::memcmp(m.data(), "CMEB", 4) != 0) fail(Errc::bad_magic, name + ": not a CMEB embedding file");
  const std::uint32_t version = rd.u32("version");
  if (version != kFormatVersion)
    fail(Errc::bad_version, name + ": unsupported version " + std::to_string(version));
  EmbeddingSequence seq;
  const std::uint32_t n = rd.u32("frame count");
  seq.dim = rd.u32("dimension");
  if (seq.dim == 0 || seq.dim > 4096) fail(Errc::dimension_mismatch, name + ": implausible dimension");
  seq.frames.resize(n);
  for (auto& rows : seq.frames) {
    const std::uint32_t count = rd.u32("row count");
    for (std::uint32_t i = 0; i < count; ++i) {
      EmbeddingRow r;
      r.det_index = rd.u32("detection index");
      r.values.resize(seq.dim);
      for (float& v : r.values) v = rd.f32("embedding");
      rows.push_back(std::move(r));
    }
  }
  if (!rd.at_end()) fail(Errc::dimension_mismatch, name + ": trailing bytes after payload");
  return seq;
}

inline void write_embeddings(const std::string& path, const EmbeddingSequence& seq) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io, "cannot write " + path);
  write_embeddings(out, seq);
  if (!out) fail(Errc::io, "write failed: " + path);
}

inline EmbeddingSequence read_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path);
  return read_embeddings(in, path);
}

// Attaches file embeddings (renormalized) to per-frame detections.
inline void attach_embeddings(std::vector<std::vector<Detection>>& frames, const EmbeddingSequence& seq) {
  for (std::size_t f = 0; f < frames.size() && f < seq.frames.size(); ++f)
    for (const EmbeddingRow& r : seq.frames[f]) {
      if (r.det_index >= frames[f].size())
        fail(Errc::dimension_mismatch, "embedding row for detection " + std::to_string(r.det_index) +
                                           " in frame " + std::to_string(f + 1) + " has no detection");
      Embedding e(r.values.begin(), r.values.end());
      frames[f][r.det_index].embedding = normalized(std::move(e));
    }
}

}  // namespace cmot
