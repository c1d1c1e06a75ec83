#include "a2clpt/data.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <random>
#include <sstream>

namespace a2clpt {
namespace fs = std::filesystem;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

long parse_int(const std::string& s, const std::string& what) {
  long v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw LoadError("malformed " + what + ": '" + s + "'");
  return v;
}

void write_f32_matrix(const fs::path& path, const Tensor2& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  std::vector<unsigned char> bytes;
  bytes.reserve(static_cast<std::size_t>(m.size()) * 4);
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c)));
      for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<unsigned char>(bits >> (8 * b)));
    }
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Tensor2 read_f32_matrix(const fs::path& path, Index rows, Index cols, const std::string& id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("video '" + id + "': missing feature file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const auto expected = static_cast<std::size_t>(rows * cols) * 4;
  if (bytes.size() != expected) {
    throw LoadError("video '" + id + "': " + path.filename().string() + " has " +
                    std::to_string(bytes.size()) + " bytes, expected " + std::to_string(expected));
  }
  Tensor2 m(rows, cols);
  std::size_t k = 0;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c, k += 4) {
      const std::uint32_t bits = std::uint32_t(bytes[k]) | (std::uint32_t(bytes[k + 1]) << 8) |
                                 (std::uint32_t(bytes[k + 2]) << 16) |
                                 (std::uint32_t(bytes[k + 3]) << 24);
      m(r, c) = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  if (!m.allFinite()) throw LoadError("video '" + id + "': non-finite value in " + path.string());
  return m;
}

}  // namespace

void validate_sample(const VideoSample& v, int num_classes, int feature_dim, bool require_label) {
  auto fail = [&](const std::string& msg) { throw InvalidInput("video '" + v.id + "': " + msg); };
  if (v.rgb.rows() != feature_dim || v.flow.rows() != feature_dim) fail("feature dimension mismatch");
  if (v.rgb.cols() != v.flow.cols()) fail("rgb and flow lengths differ");
  if (v.rgb.cols() < 1) fail("empty feature sequence");
  if (!v.rgb.allFinite() || !v.flow.allFinite()) fail("non-finite feature value");
  if (v.labels.size() != num_classes) fail("label vector length mismatch");
  for (Index j = 0; j < v.labels.size(); ++j) {
    if (v.labels(j) != 0.0 && v.labels(j) != 1.0) fail("labels must be 0/1");
  }
  if (require_label && v.labels.sum() < 1.0) fail("no positive label");
  for (const auto& s : v.gt_segments) {
    if (s.cls < 0 || s.cls >= num_classes) fail("segment class out of range");
    if (s.start < 1 || s.start > s.end || s.end > v.length()) fail("segment bounds out of range");
    if (v.labels(s.cls) != 1.0) fail("segment class is not a video label");
  }
}

void validate_dataset(const Dataset& ds, bool require_labels) {
  if (ds.num_classes < 1 || ds.feature_dim < 1) throw InvalidInput("dataset: empty dimensions");
  for (const auto& v : ds.samples) validate_sample(v, ds.num_classes, ds.feature_dim, require_labels);
}

Dataset load_dataset(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw LoadError("cannot open manifest: " + manifest_path.string());
  std::string header;
  std::getline(in, header);
  Dataset ds;
  {
    std::istringstream hs(header);
    std::string magic, version, dtok, ctok;
    hs >> magic >> version >> dtok >> ctok;
    if (magic != "A2CLPT-MANIFEST" || version != "v1" || dtok.rfind("D=", 0) != 0 ||
        ctok.rfind("C=", 0) != 0) {
      throw LoadError("malformed manifest header: '" + header + "'");
    }
    ds.feature_dim = static_cast<int>(parse_int(dtok.substr(2), "feature dimension"));
    ds.num_classes = static_cast<int>(parse_int(ctok.substr(2), "class count"));
    if (ds.feature_dim < 1 || ds.num_classes < 1) throw LoadError("manifest header: D and C must be positive");
  }
  const fs::path root = manifest_path.parent_path();
  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    const std::string id = fields.empty() ? std::string() : fields[0];
    auto bad = [&](const std::string& msg) -> LoadError {
      return LoadError("manifest line " + std::to_string(line_no) + " (video '" + id + "'): " + msg);
    };
    if (fields.size() != 4 || id.empty()) throw bad("expected 4 tab-separated fields");
    VideoSample v;
    v.id = id;
    long length = 0;
    try {
      length = parse_int(fields[1], "length");
    } catch (const LoadError& e) {
      throw bad(e.what());
    }
    if (length < 1) throw bad("length must be positive");
    v.labels = Vector::Zero(ds.num_classes);
    try {
      if (fields[2] != "-") {
        for (const auto& tok : split(fields[2], ',')) {
          const long c = parse_int(tok, "class index");
          if (c < 1 || c > ds.num_classes) throw LoadError("class index out of range: " + tok);
          v.labels(c - 1) = 1.0;
        }
      }
      if (fields[3] != "-") {
        for (const auto& tok : split(fields[3], ',')) {
          const auto colon = tok.find(':');
          const auto dash = tok.find('-', colon == std::string::npos ? 0 : colon);
          if (colon == std::string::npos || dash == std::string::npos) {
            throw LoadError("malformed segment: '" + tok + "'");
          }
          Segment s;
          s.cls = static_cast<int>(parse_int(tok.substr(0, colon), "segment class")) - 1;
          s.start = parse_int(tok.substr(colon + 1, dash - colon - 1), "segment start");
          s.end = parse_int(tok.substr(dash + 1), "segment end");
          v.gt_segments.push_back(s);
        }
      }
    } catch (const LoadError& e) {
      throw bad(e.what());
    }
    v.rgb = read_f32_matrix(root / (id + ".rgb.bin"), ds.feature_dim, length, id);
    v.flow = read_f32_matrix(root / (id + ".flow.bin"), ds.feature_dim, length, id);
    try {
      validate_sample(v, ds.num_classes, ds.feature_dim, false);
    } catch (const InvalidInput& e) {
      throw LoadError(e.what());
    }
    ds.samples.push_back(std::move(v));
  }
  return ds;
}

fs::path write_dataset(const Dataset& ds, const fs::path& dir) {
  validate_dataset(ds, false);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  const fs::path manifest = dir / kManifestName;
  std::ostringstream text;
  text << "A2CLPT-MANIFEST v1 D=" << ds.feature_dim << " C=" << ds.num_classes << "\n";
  for (const auto& v : ds.samples) {
    text << v.id << '\t' << v.length() << '\t';
    std::string classes;
    for (Index j = 0; j < v.labels.size(); ++j) {
      if (v.labels(j) == 1.0) classes += (classes.empty() ? "" : ",") + std::to_string(j + 1);
    }
    text << (classes.empty() ? "-" : classes) << '\t';
    if (v.gt_segments.empty()) {
      text << '-';
    } else {
      for (std::size_t k = 0; k < v.gt_segments.size(); ++k) {
        const auto& s = v.gt_segments[k];
        text << (k ? "," : "") << (s.cls + 1) << ':' << s.start << '-' << s.end;
      }
    }
    text << '\n';
    write_f32_matrix(dir / (v.id + ".rgb.bin"), v.rgb);
    write_f32_matrix(dir / (v.id + ".flow.bin"), v.flow);
  }
  std::ofstream out(manifest, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + manifest.string());
  out << text.str();
  if (!out) throw IoError("write failed: " + manifest.string());
  return manifest;
}

void validate_synth_config(const SynthConfig& cfg) {
  auto fail = [](const std::string& msg) { throw InvalidInput("synth config: " + msg); };
  if (cfg.num_classes < 1) fail("num_classes must be >= 1");
  if (cfg.feature_dim < 1) fail("feature_dim must be >= 1");
  if (cfg.num_videos < 0) fail("num_videos must be >= 0");
  if (cfg.min_length < 3) fail("min_length must be >= 3");
  if (cfg.max_length < cfg.min_length) fail("empty length range");
  if (cfg.min_segments < 1 || cfg.max_segments < cfg.min_segments) fail("empty segment-count range");
  if (!(cfg.noise_sigma >= 0.0) || !std::isfinite(cfg.noise_sigma)) fail("noise_sigma must be >= 0");
  // Each segment needs two steps and a one-step gap from its neighbour.
  if (3 * cfg.max_segments - 1 > cfg.min_length) {
    fail("max_segments=" + std::to_string(cfg.max_segments) + " cannot fit in min_length=" +
         std::to_string(cfg.min_length));
  }
}

namespace {

Tensor2 draw_prototypes(std::mt19937_64& rng, int dim, int count) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor2 g(dim, count);
  for (Index c = 0; c < g.cols(); ++c)
    for (Index r = 0; r < g.rows(); ++r) g(r, c) = normal(rng);
  if (dim >= count) {
    Eigen::HouseholderQR<Tensor2> qr(g);
    g = qr.householderQ() * Tensor2::Identity(dim, count);
  } else {
    for (Index c = 0; c < g.cols(); ++c) g.col(c).normalize();
  }
  // Stored features are float32; keep prototypes on the same grid so noiseless
  // columns reproduce them exactly.
  return g.cast<float>().cast<double>();
}

}  // namespace

SynthPrototypes synth_prototypes(const SynthConfig& cfg) {
  validate_synth_config(cfg);
  std::mt19937_64 rng(cfg.seed);
  SynthPrototypes p;
  p.rgb = draw_prototypes(rng, cfg.feature_dim, cfg.num_classes + 1);
  p.flow = draw_prototypes(rng, cfg.feature_dim, cfg.num_classes + 1);
  return p;
}

Dataset synth_generate(const SynthConfig& cfg) {
  validate_synth_config(cfg);
  const SynthPrototypes protos = synth_prototypes(cfg);
  // Video content uses a stream separate from the prototypes.
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> noise(0.0, 1.0);

  Dataset ds;
  ds.num_classes = cfg.num_classes;
  ds.feature_dim = cfg.feature_dim;
  for (int i = 0; i < cfg.num_videos; ++i) {
    VideoSample v;
    char name[32];
    std::snprintf(name, sizeof(name), "vid%05d", i);
    v.id = name;
    const int cls = i % cfg.num_classes;
    const Index l = std::uniform_int_distribution<Index>(cfg.min_length, cfg.max_length)(rng);
    const Index n = std::uniform_int_distribution<Index>(cfg.min_segments, cfg.max_segments)(rng);

    const Index lo = std::max<Index>(2, l / (6 * n));
    const Index hi = std::max<Index>(lo, l / (2 * n));
    std::vector<Index> lengths(static_cast<std::size_t>(n));
    Index used = n - 1;
    for (auto& len : lengths) {
      len = std::uniform_int_distribution<Index>(lo, hi)(rng);
      used += len;
    }
    std::vector<Index> slack(static_cast<std::size_t>(n + 1), 0);
    std::uniform_int_distribution<Index> slot(0, n);
    for (Index r = 0; r < l - used; ++r) ++slack[static_cast<std::size_t>(slot(rng))];

    std::vector<int> owner(static_cast<std::size_t>(l), -1);
    Index t = 0;  // 0-based cursor
    for (Index k = 0; k < n; ++k) {
      t += slack[static_cast<std::size_t>(k)] + (k > 0 ? 1 : 0);
      const Index len = lengths[static_cast<std::size_t>(k)];
      v.gt_segments.push_back(Segment{cls, t + 1, t + len});
      for (Index u = t; u < t + len; ++u) owner[static_cast<std::size_t>(u)] = cls;
      t += len;
    }

    v.labels = Vector::Zero(cfg.num_classes);
    v.labels(cls) = 1.0;
    auto fill = [&](const Tensor2& proto) {
      Tensor2 x(cfg.feature_dim, l);
      for (Index u = 0; u < l; ++u) {
        const int o = owner[static_cast<std::size_t>(u)];
        if (o >= 0) {
          x.col(u) = proto.col(o);
        } else if (cfg.background_direction) {
          x.col(u) = proto.col(cfg.num_classes);
        } else {
          x.col(u).setZero();
        }
        for (Index r = 0; r < x.rows(); ++r) {
          const double value = x(r, u) + cfg.noise_sigma * noise(rng);
          x(r, u) = static_cast<double>(static_cast<float>(value));
        }
      }
      return x;
    };
    v.rgb = fill(protos.rgb);
    v.flow = fill(protos.flow);
    ds.samples.push_back(std::move(v));
  }
  return ds;
}

}  // namespace a2clpt
