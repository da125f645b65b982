// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#include <pe3d/error.hpp>
#include <pe3d/io.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pe3d {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  void expect(std::string_view magic, const char* what) {
    if (bytes_.substr(pos_, magic.size()) != magic) throw Error(ErrorCode::kParse, std::string(what) + ": bad header");
    pos_ += magic.size();
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f32(const char* what) {
    const std::uint32_t bits = u32(what);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::uint8_t byte(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  void finish(const char* what) const {
    if (pos_ != bytes_.size()) throw Error(ErrorCode::kParse, std::string(what) + ": trailing bytes");
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::kParse, std::string(what) + ": truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

// Guards allocations driven by header fields.
constexpr std::uint64_t kMaxElements = 1ull << 28;

}  // namespace

std::string encode_pe_grid(const PEGrid& grid) {
  std::string out("PE3D", 4);
  out.push_back('\0');
  const int c = grid.channels();
  put_u32(out, static_cast<std::uint32_t>(c));
  put_u32(out, static_cast<std::uint32_t>(grid.height));
  put_u32(out, static_cast<std::uint32_t>(grid.width));
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < grid.cells(); ++i) put_f32(out, grid.values(ch, i));
  }
  for (int i = 0; i < grid.cells(); ++i) out.push_back(grid.mask.empty() ? 0 : static_cast<char>(grid.mask[i] ? 1 : 0));
  return out;
}

PEGrid decode_pe_grid(std::string_view bytes) {
  Reader r(bytes);
  r.expect(std::string_view("PE3D\0", 5), "PE3D");
  const std::uint64_t c = r.u32("PE3D"), h = r.u32("PE3D"), w = r.u32("PE3D");
  if (c * h * w > kMaxElements) throw Error(ErrorCode::kParse, "PE3D: grid too large");
  PEGrid g;
  g.height = static_cast<int>(h);
  g.width = static_cast<int>(w);
  g.values.resize(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(h * w));
  for (Eigen::Index ch = 0; ch < g.values.rows(); ++ch) {
    for (Eigen::Index i = 0; i < g.values.cols(); ++i) g.values(ch, i) = r.f32("PE3D");
  }
  g.mask.resize(h * w);
  for (auto& m : g.mask) m = r.byte("PE3D");
  r.finish("PE3D");
  return g;
}

std::string encode_depth_map(const DepthMap& map) {
  std::string out("DPTH");
  put_u32(out, static_cast<std::uint32_t>(map.height));
  put_u32(out, static_cast<std::uint32_t>(map.width));
  for (double d : map.depth) put_f32(out, d);
  for (auto v : map.valid) out.push_back(static_cast<char>(v ? 1 : 0));
  return out;
}

DepthMap decode_depth_map(std::string_view bytes) {
  Reader r(bytes);
  r.expect("DPTH", "DPTH");
  const std::uint64_t h = r.u32("DPTH"), w = r.u32("DPTH");
  if (h * w > kMaxElements) throw Error(ErrorCode::kParse, "DPTH: map too large");
  DepthMap m(static_cast<int>(h), static_cast<int>(w), 0.0, false);
  for (auto& d : m.depth) d = r.f32("DPTH");
  for (auto& v : m.valid) v = r.byte("DPTH");
  r.finish("DPTH");
  return m;
}

std::string similarity_to_csv(const SimilarityMap& map) {
  std::string out = "view,u,v,similarity\n";
  char buf[96];
  for (std::size_t v = 0; v < map.views.size(); ++v) {
    const auto& vs = map.views[v];
    for (int row = 0; row < vs.height; ++row) {
      for (int col = 0; col < vs.width; ++col) {
        const double s = vs.values[row * vs.width + col];
        if (std::isnan(s)) {
          std::snprintf(buf, sizeof(buf), "%zu,%d,%d,nan\n", v, col, row);
        } else {
          std::snprintf(buf, sizeof(buf), "%zu,%d,%d,%.9g\n", v, col, row, static_cast<double>(static_cast<float>(s)));
        }
        out += buf;
      }
    }
  }
  return out;
}

SimilarityMap similarity_from_csv(std::string_view text, const CellRef& reference) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != "view,u,v,similarity") throw Error(ErrorCode::kParse, "similarity csv: bad header");
  struct Entry {
    int view, u, v;
    double s;
  };
  std::vector<Entry> entries;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Entry e{};
    char val[64] = {0};
    if (std::sscanf(line.c_str(), "%d,%d,%d,%63s", &e.view, &e.u, &e.v, val) != 4 || e.view < 0 || e.u < 0 ||
        e.v < 0) {
      throw Error(ErrorCode::kParse, "similarity csv: line " + std::to_string(line_no));
    }
    e.s = std::string(val) == "nan" ? std::nan("") : static_cast<double>(std::strtof(val, nullptr));
    entries.push_back(e);
  }
  SimilarityMap map{reference, {}};
  for (const auto& e : entries) {
    if (e.view >= static_cast<int>(map.views.size())) map.views.resize(e.view + 1);
    auto& vs = map.views[e.view];
    vs.width = std::max(vs.width, e.u + 1);
    vs.height = std::max(vs.height, e.v + 1);
  }
  for (auto& vs : map.views) vs.values.assign(static_cast<std::size_t>(vs.width) * vs.height, std::nan(""));
  for (const auto& e : entries) map.views[e.view].values[e.v * map.views[e.view].width + e.u] = e.s;
  return map;
}

std::string similarity_to_pgm(const ViewSimilarity& view) {
  std::string out = "P5\n" + std::to_string(view.width) + " " + std::to_string(view.height) + "\n255\n";
  for (double s : view.values) {
    if (std::isnan(s)) {
      out.push_back(0);
      continue;
    }
    const double level = std::round((std::clamp(s, -1.0, 1.0) + 1.0) * 127.5);
    out.push_back(static_cast<char>(static_cast<unsigned char>(level)));
  }
  return out;
}

std::string annotations_to_json(const SimScene& scene) {
  nlohmann::ordered_json objs = nlohmann::ordered_json::array();
  for (const auto& o : scene.objects) {
    objs.push_back({{"primitive", o.primitive}, {"class", o.class_id}, {"center", {o.center.x(), o.center.y(), o.center.z()}}});
  }
  nlohmann::ordered_json root;
  root["objects"] = objs;
  return root.dump(2) + "\n";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for '" + path + "'");
}

}  // namespace pe3d
