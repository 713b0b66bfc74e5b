#pragma once

#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "advdet/binary_io.hpp"
#include "advdet/image.hpp"
#include "advdet/net.hpp"

namespace advdet {

// ---------------------------------------------------------------------------
// SNET model archive (little-endian):
//   "SNET" | version u32 | layer_count u32 | input h,w,c u32 x3
//   | layer_count x { kind u32, units u32 } | param_count x f64
// layer_count counts the real layers; the weight payload length is implied by
// the architecture and must match exactly.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kSnetVersion = 1;

inline bytes encode_model(const NetworkModel& m) {
  ByteWriter w;
  w.tag("SNET");
  w.u32(kSnetVersion);
  w.u32(static_cast<std::uint32_t>(m.layers().size()));
  w.u32(static_cast<std::uint32_t>(m.input_shape().height));
  w.u32(static_cast<std::uint32_t>(m.input_shape().width));
  w.u32(static_cast<std::uint32_t>(m.input_shape().channels));
  for (const LayerSpec& l : m.layers()) {
    w.u32(static_cast<std::uint32_t>(l.kind));
    w.u32(l.units);
  }
  for (double v : m.weights()) w.f64(v);
  return std::move(w.data());
}

inline NetworkModel decode_model(const bytes& data) {
  ByteReader r(data);
  require(data.size() >= 4 && r.tag() == "SNET", errc::format, "not an SNET model (bad magic)");
  const std::uint32_t version = r.u32();
  require(version == kSnetVersion, errc::format, "unsupported SNET version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  require(count > 0 && count < 4096, errc::format, "implausible SNET layer count");
  Shape in;
  in.height = r.u32();
  in.width = r.u32();
  in.channels = r.u32();
  std::vector<LayerSpec> layers;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t kind = r.u32();
    const std::uint32_t units = r.u32();
    require(kind >= 1 && kind <= 6, errc::format, "unknown SNET layer kind " + std::to_string(kind));
    layers.push_back({static_cast<LayerKind>(kind), units});
  }
  NetworkModel m(in, std::move(layers));
  require(r.remaining() == m.param_count() * 8, errc::consistency,
          "SNET payload holds " + std::to_string(r.remaining()) + " bytes, architecture needs " +
              std::to_string(m.param_count() * 8));
  std::vector<double> w(m.param_count());
  for (double& v : w) v = r.f64();
  m.set_weights(std::move(w));
  return m;
}

inline void save_model(const NetworkModel& m, const std::filesystem::path& path) {
  write_file_atomic(path, encode_model(m));
}

inline NetworkModel load_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

// ---------------------------------------------------------------------------
// FMAP raw map dump: "FMAP" | rows u32 | cols u32 | channels u32 | f64 payload
// ---------------------------------------------------------------------------

inline bytes encode_fmap(RasterView m) {
  ByteWriter w;
  w.tag("FMAP");
  w.u32(static_cast<std::uint32_t>(m.shape.height));
  w.u32(static_cast<std::uint32_t>(m.shape.width));
  w.u32(static_cast<std::uint32_t>(m.shape.channels));
  for (double v : m.values) w.f64(v);
  return std::move(w.data());
}

inline FeatureMap decode_fmap(const bytes& data) {
  ByteReader r(data);
  require(data.size() >= 16 && r.tag() == "FMAP", errc::format, "not an FMAP file (bad magic)");
  Shape s;
  s.height = r.u32();
  s.width = r.u32();
  s.channels = r.u32();
  require(r.remaining() == s.size() * 8, errc::consistency, "FMAP payload length does not match header");
  std::vector<double> v(s.size());
  for (double& x : v) x = r.f64();
  return FeatureMap(s, std::move(v));
}

inline void save_fmap(RasterView m, const std::filesystem::path& path) { write_file_atomic(path, encode_fmap(m)); }
inline FeatureMap load_fmap(const std::filesystem::path& path) { return decode_fmap(read_file(path)); }

// ---------------------------------------------------------------------------
// ADVS image batch: "ADVS" | version u32 | count u32 | h,w,c u32 x3 | f64 payload
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kAdvsVersion = 1;

inline bytes encode_advs(const std::vector<ImageTensor>& images) {
  ByteWriter w;
  w.tag("ADVS");
  w.u32(kAdvsVersion);
  w.u32(static_cast<std::uint32_t>(images.size()));
  const Shape s = images.empty() ? Shape{} : images[0].shape();
  w.u32(static_cast<std::uint32_t>(s.height));
  w.u32(static_cast<std::uint32_t>(s.width));
  w.u32(static_cast<std::uint32_t>(s.channels));
  for (const auto& img : images) {
    require(img.shape() == s, errc::invalid_input, "ADVS batch images differ in shape");
    for (double v : img.values()) w.f64(v);
  }
  return std::move(w.data());
}

inline std::vector<ImageTensor> decode_advs(const bytes& data) {
  ByteReader r(data);
  require(data.size() >= 4 && r.tag() == "ADVS", errc::format, "not an ADVS file (bad magic)");
  require(r.u32() == kAdvsVersion, errc::format, "unsupported ADVS version");
  const std::uint32_t count = r.u32();
  Shape s;
  s.height = r.u32();
  s.width = r.u32();
  s.channels = r.u32();
  require(r.remaining() == static_cast<std::size_t>(count) * s.size() * 8, errc::consistency,
          "ADVS payload length does not match header");
  std::vector<ImageTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::vector<double> v(s.size());
    for (double& x : v) x = r.f64();
    out.emplace_back(s, std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Binary PGM (1 channel) / PPM (3 channels), maxval 255.
// ---------------------------------------------------------------------------

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
}

inline void save_pnm(const ImageTensor& img, const std::filesystem::path& path) {
  require(img.channels() == 1 || img.channels() == 3, errc::invalid_input, "PNM export needs 1 or 3 channels");
  std::ostringstream head;
  head << (img.channels() == 1 ? "P5" : "P6") << "\n" << img.width() << " " << img.height() << "\n255\n";
  const std::string h = head.str();
  bytes out(h.begin(), h.end());
  for (double v : img.values()) out.push_back(to_byte(v));
  write_file_atomic(path, out);
}

inline ImageTensor load_pnm(const std::filesystem::path& path) {
  const bytes data = read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    std::string t;
    while (pos < data.size()) {
      const char c = static_cast<char>(data[pos]);
      if (c == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        ++pos;
      } else {
        t.push_back(c);
        ++pos;
      }
    }
    return t;
  };
  const std::string magic = token();
  require(magic == "P5" || magic == "P6", errc::format, "'" + path.string() + "' is not a binary PGM/PPM");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    fail(errc::format, "malformed PNM header in '" + path.string() + "'");
  }
  require(maxval == 255, errc::format, "only maxval 255 is supported");
  ++pos;  // single whitespace after maxval
  const std::size_t c = magic == "P5" ? 1 : 3;
  const Shape s{h, w, c};
  require(data.size() >= pos + s.size(), errc::io, "'" + path.string() + "' is truncated");
  std::vector<double> v(s.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = data[pos + i] / 255.0;
  return ImageTensor(s, std::move(v));
}

}  // namespace advdet
