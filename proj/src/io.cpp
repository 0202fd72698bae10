#include "cbi/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace cbi {

namespace {

std::string fmt_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Model manifest + blob
// ---------------------------------------------------------------------------

namespace {

struct ManifestLine {
  std::size_t offset = 0;  // byte offset of the line start
  std::vector<std::string> tokens;
};

std::vector<ManifestLine> tokenize_manifest(const std::string& text) {
  std::vector<ManifestLine> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    ManifestLine line;
    line.offset = pos;
    std::size_t end = eol;
    const std::size_t hash = text.find('#', pos);
    if (hash != std::string::npos && hash < end) end = hash;
    std::size_t i = pos;
    while (i < end) {
      while (i < end && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      std::size_t start = i;
      while (i < end && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      if (i > start) line.tokens.push_back(text.substr(start, i - start));
    }
    if (!line.tokens.empty()) lines.push_back(std::move(line));
    pos = eol + 1;
  }
  return lines;
}

long long parse_ll(const std::string& file, std::size_t offset, const std::string& tok,
                   const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(file, offset, "expected integer for " + what + ", got '" + tok + "'");
  }
}

// "AxB" pairs, e.g. kernel=7x7 or dims=541x871.
std::pair<int, int> parse_pair(const std::string& file, std::size_t offset,
                               const std::string& tok, const std::string& what) {
  const std::size_t x = tok.find('x');
  if (x == std::string::npos)
    throw ParseError(file, offset, what + " must look like <a>x<b>, got '" + tok + "'");
  return {static_cast<int>(parse_ll(file, offset, tok.substr(0, x), what)),
          static_cast<int>(parse_ll(file, offset, tok.substr(x + 1), what))};
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t comma = s.find(',', pos);
    if (comma == std::string::npos) comma = s.size();
    out.push_back(s.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

struct BlobRange {
  std::size_t offset = 0;
  std::size_t length = 0;  // bytes
  std::size_t line_offset = 0;
};

}  // namespace

NetworkSpec load_model(const fs::path& manifest) {
  const std::string file = manifest.string();
  const std::string text = read_file(manifest);
  const std::vector<ManifestLine> lines = tokenize_manifest(text);
  if (lines.empty()) throw ParseError(file, 0, "empty manifest");

  if (lines[0].tokens.size() != 2 || lines[0].tokens[0] != "cbimodel")
    throw ParseError(file, lines[0].offset, "expected 'cbimodel <version>' header");
  if (lines[0].tokens[1] != "1")
    throw ParseError(file, lines[0].offset,
                     "unrecognized format version '" + lines[0].tokens[1] + "'");

  NetworkSpec spec;
  std::string blob_name;
  std::vector<BlobRange> weight_ranges;  // two per conv row: weights then bias
  bool have_input = false;

  for (std::size_t li = 1; li < lines.size(); ++li) {
    const ManifestLine& line = lines[li];
    const std::vector<std::string>& t = line.tokens;
    const std::string& kw = t[0];

    if (kw == "input") {
      if (t.size() != 4) throw ParseError(file, line.offset, "input takes <c> <h> <w>");
      spec.in_channels = static_cast<int>(parse_ll(file, line.offset, t[1], "channels"));
      spec.in_height = static_cast<int>(parse_ll(file, line.offset, t[2], "height"));
      spec.in_width = static_cast<int>(parse_ll(file, line.offset, t[3], "width"));
      have_input = true;
      continue;
    }
    if (kw == "blob") {
      if (t.size() != 2) throw ParseError(file, line.offset, "blob takes one filename");
      blob_name = t[1];
      continue;
    }

    LayerDesc d;
    if (kw == "conv")
      d.kind = LayerKind::Conv;
    else if (kw == "act")
      d.kind = LayerKind::Act;
    else if (kw == "pool")
      d.kind = LayerKind::Pool;
    else if (kw == "add")
      d.kind = LayerKind::Add;
    else if (kw == "concat")
      d.kind = LayerKind::Concat;
    else
      throw ParseError(file, line.offset, "unknown directive '" + kw + "'");

    if (t.size() < 2) throw ParseError(file, line.offset, kw + " needs a layer name");
    d.name = t[1];

    long long woff = -1, boff = -1;
    for (std::size_t k = 2; k < t.size(); ++k) {
      const std::string& tok = t[k];
      if (tok == "relu") {
        d.fuse_relu = true;
        continue;
      }
      const std::size_t eq = tok.find('=');
      if (eq == std::string::npos)
        throw ParseError(file, line.offset, "expected key=value, got '" + tok + "'");
      const std::string key = tok.substr(0, eq);
      const std::string val = tok.substr(eq + 1);
      if (key == "from") {
        d.from = split_csv(val);
      } else if (key == "in") {
        d.conv.in_channels = static_cast<int>(parse_ll(file, line.offset, val, key));
      } else if (key == "out") {
        d.conv.out_channels = static_cast<int>(parse_ll(file, line.offset, val, key));
      } else if (key == "kernel") {
        std::tie(d.conv.kernel_h, d.conv.kernel_w) = parse_pair(file, line.offset, val, key);
      } else if (key == "stride") {
        const int s = static_cast<int>(parse_ll(file, line.offset, val, key));
        d.conv.stride = s;
        d.pool_stride = s;
      } else if (key == "pad") {
        d.conv.padding = static_cast<int>(parse_ll(file, line.offset, val, key));
      } else if (key == "dims") {
        auto [h, w] = parse_pair(file, line.offset, val, key);
        d.conv.out_h = h;
        d.conv.out_w = w;
        d.pool_out_h = h;
        d.pool_out_w = w;
      } else if (key == "size") {
        d.pool_size = static_cast<int>(parse_ll(file, line.offset, val, key));
      } else if (key == "woff") {
        woff = parse_ll(file, line.offset, val, key);
      } else if (key == "boff") {
        boff = parse_ll(file, line.offset, val, key);
      } else {
        throw ParseError(file, line.offset, "unknown key '" + key + "'");
      }
    }

    if (d.kind == LayerKind::Conv) {
      if (woff < 0 || boff < 0)
        throw ParseError(file, line.offset, "conv row needs woff= and boff=");
      const std::size_t wlen = static_cast<std::size_t>(d.conv.out_channels) *
                               d.conv.in_channels * d.conv.kernel_h * d.conv.kernel_w *
                               sizeof(float);
      const std::size_t blen = static_cast<std::size_t>(d.conv.out_channels) * sizeof(float);
      weight_ranges.push_back({static_cast<std::size_t>(woff), wlen, line.offset});
      weight_ranges.push_back({static_cast<std::size_t>(boff), blen, line.offset});
    }
    spec.layers.push_back(std::move(d));
  }

  if (!have_input) throw ParseError(file, 0, "manifest missing 'input' line");
  if (blob_name.empty()) throw ParseError(file, 0, "manifest missing 'blob' line");

  const fs::path blob_path = manifest.parent_path() / blob_name;
  const std::string blob = read_file(blob_path);

  // Offsets must stay inside the blob and must not overlap.
  std::vector<BlobRange> sorted = weight_ranges;
  std::sort(sorted.begin(), sorted.end(),
            [](const BlobRange& a, const BlobRange& b) { return a.offset < b.offset; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i].offset + sorted[i].length > blob.size())
      throw ParseError(file, sorted[i].line_offset, "weight range exceeds blob size");
    if (i > 0 && sorted[i - 1].offset + sorted[i - 1].length > sorted[i].offset)
      throw ParseError(file, sorted[i].line_offset, "weight ranges overlap");
  }

  std::size_t range = 0;
  for (LayerDesc& d : spec.layers) {
    if (d.kind != LayerKind::Conv) continue;
    const BlobRange& wr = weight_ranges[range++];
    const BlobRange& br = weight_ranges[range++];
    d.conv.weights.resize(wr.length / sizeof(float));
    d.conv.bias.resize(br.length / sizeof(float));
    std::memcpy(d.conv.weights.data(), blob.data() + wr.offset, wr.length);
    std::memcpy(d.conv.bias.data(), blob.data() + br.offset, br.length);
  }
  return spec;
}

void save_model(const NetworkSpec& spec, const fs::path& manifest,
                const std::string& blob_name) {
  resolve(spec);  // reject broken specs before writing anything

  std::string blob;
  std::ostringstream os;
  os << "cbimodel 1\n";
  os << "input " << spec.in_channels << " " << spec.in_height << " " << spec.in_width << "\n";
  os << "blob " << blob_name << "\n";

  auto append_blob = [&blob](const std::vector<float>& v) {
    const std::size_t off = blob.size();
    blob.resize(off + v.size() * sizeof(float));
    std::memcpy(blob.data() + off, v.data(), v.size() * sizeof(float));
    return off;
  };

  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDesc& d = spec.layers[i];
    const std::string name = d.name.empty() ? "L" + std::to_string(i + 1) : d.name;
    switch (d.kind) {
      case LayerKind::Conv: {
        os << "conv " << name << " in=" << d.conv.in_channels << " out=" << d.conv.out_channels
           << " kernel=" << d.conv.kernel_h << "x" << d.conv.kernel_w
           << " stride=" << d.conv.stride << " pad=" << d.conv.padding;
        if (d.conv.out_h > 0) os << " dims=" << d.conv.out_h << "x" << d.conv.out_w;
        if (d.fuse_relu) os << " relu";
        os << " woff=" << append_blob(d.conv.weights) << " boff=" << append_blob(d.conv.bias);
        break;
      }
      case LayerKind::Act:
        os << "act " << name;
        break;
      case LayerKind::Pool:
        os << "pool " << name << " size=" << d.pool_size << " stride=" << d.pool_stride;
        if (d.pool_out_h > 0) os << " dims=" << d.pool_out_h << "x" << d.pool_out_w;
        break;
      case LayerKind::Add:
      case LayerKind::Concat:
        os << (d.kind == LayerKind::Add ? "add " : "concat ") << name;
        break;
    }
    if (!d.from.empty()) {
      os << " from=";
      for (std::size_t k = 0; k < d.from.size(); ++k) os << (k ? "," : "") << d.from[k];
    }
    os << "\n";
  }

  write_file_atomic(manifest.parent_path() / blob_name, blob);
  write_file_atomic(manifest, os.str());
}

// ---------------------------------------------------------------------------
// Frames
// ---------------------------------------------------------------------------

Tensor3 load_raw_frame(const fs::path& raw_path) {
  fs::path hdr_path = raw_path;
  hdr_path.replace_extension(".hdr");
  const std::string hdr = read_file(hdr_path);
  int c = 0, h = 0, w = 0;
  if (std::sscanf(hdr.c_str(), "%d %d %d", &c, &h, &w) != 3 || c < 1 || h < 1 || w < 1)
    throw ParseError(hdr_path.string(), 0, "header must be '<channels> <height> <width>'");

  const std::string bytes = read_file(raw_path);
  Tensor3 t(c, h, w);
  if (bytes.size() != t.data.size() * sizeof(float))
    throw ParseError(raw_path.string(), bytes.size(),
                     "raw frame has " + std::to_string(bytes.size()) + " bytes, expected " +
                         std::to_string(t.data.size() * sizeof(float)));
  std::memcpy(t.data.data(), bytes.data(), bytes.size());
  return t;
}

void save_raw_frame(const Tensor3& frame, const fs::path& raw_path) {
  fs::path hdr_path = raw_path;
  hdr_path.replace_extension(".hdr");
  write_file_atomic(hdr_path, std::to_string(frame.channels) + " " +
                                  std::to_string(frame.height) + " " +
                                  std::to_string(frame.width) + "\n");
  std::string bytes(frame.data.size() * sizeof(float), '\0');
  std::memcpy(bytes.data(), frame.data.data(), bytes.size());
  write_file_atomic(raw_path, bytes);
}

Tensor3 load_pnm(const fs::path& path) {
  const std::string file = path.string();
  const std::string bytes = read_file(path);
  std::size_t pos = 0;

  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](const std::string& what) {
    skip_space();
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos == start) throw ParseError(file, start, "expected integer for " + what);
    return std::stoi(bytes.substr(start, pos - start));
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw ParseError(file, 0, "expected binary PGM (P5) or PPM (P6)");
  const int channels = bytes[1] == '5' ? 1 : 3;
  pos = 2;
  const int w = read_int("width");
  const int h = read_int("height");
  const int maxval = read_int("maxval");
  if (maxval != 255) throw ParseError(file, pos, "only 8-bit images supported (maxval 255)");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw ParseError(file, pos, "expected single whitespace before pixel data");
  ++pos;

  const std::size_t need = static_cast<std::size_t>(w) * h * channels;
  if (bytes.size() - pos < need)
    throw ParseError(file, bytes.size(), "truncated pixel data");

  // Interleaved bytes -> planar floats, exact /255.
  Tensor3 t(channels, h, w);
  for (int j = 0; j < h; ++j)
    for (int i = 0; i < w; ++i)
      for (int c = 0; c < channels; ++c)
        t.at(c, j, i) =
            static_cast<float>(static_cast<unsigned char>(
                bytes[pos + (static_cast<std::size_t>(j) * w + i) * channels + c])) /
            255.0f;
  return t;
}

std::vector<Tensor3> load_frame_sequence(const fs::path& dir) {
  const fs::path list_path = dir / "sequence.txt";
  const std::string file = list_path.string();
  const std::string text = read_file(list_path);

  std::vector<Tensor3> frames;
  std::vector<std::string> seen;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string name = text.substr(pos, eol - pos);
    while (!name.empty() && (name.back() == '\r' || name.back() == ' ')) name.pop_back();
    const std::size_t line_off = pos;
    pos = eol + 1;
    if (name.empty()) continue;
    if (std::find(seen.begin(), seen.end(), name) != seen.end())
      throw ParseError(file, line_off, "frame '" + name + "' listed twice");
    seen.push_back(name);

    const fs::path frame_path = dir / name;
    const std::string ext = frame_path.extension().string();
    Tensor3 t;
    if (ext == ".raw")
      t = load_raw_frame(frame_path);
    else if (ext == ".pgm" || ext == ".ppm")
      t = load_pnm(frame_path);
    else
      throw ParseError(file, line_off, "unsupported frame type '" + ext + "'");

    if (!frames.empty() && !t.same_shape(frames.front()))
      throw ParseError(file, line_off, "frame '" + name + "' shape differs from the first");
    frames.push_back(std::move(t));
  }
  if (frames.empty()) throw ParseError(file, 0, "sequence lists no frames");
  return frames;
}

void save_frame_sequence(const std::vector<Tensor3>& frames, const fs::path& dir) {
  if (frames.empty()) throw InvalidInputError("save_frame_sequence: no frames");
  fs::create_directories(dir);
  std::string list;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.raw", i);
    save_raw_frame(frames[i], dir / name);
    list += name;
    list += '\n';
  }
  write_file_atomic(dir / "sequence.txt", list);
}

// ---------------------------------------------------------------------------
// Synthetic sequences and bundled topologies
// ---------------------------------------------------------------------------

namespace {

// mt19937 driven directly so outputs are byte-identical across platforms
// (std:: distributions are implementation-defined).
struct DetRng {
  explicit DetRng(std::uint32_t seed) : eng(seed) {}
  std::mt19937 eng;
  bool have_spare = false;
  float spare = 0.0f;

  float uniform() { return static_cast<float>((eng() >> 8) * (1.0 / 16777216.0)); }
  int uniform_int(int n) {  // n is tiny here; modulo bias is irrelevant
    return n > 0 ? static_cast<int>(eng() % static_cast<std::uint32_t>(n)) : 0;
  }
  float normal() {
    if (have_spare) {
      have_spare = false;
      return spare;
    }
    constexpr double two_pi = 6.283185307179586;
    const double u1 = (static_cast<double>(eng() >> 8) + 0.5) / 16777216.0;
    const double u2 = static_cast<double>(eng() >> 8) / 16777216.0;
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare = static_cast<float>(r * std::sin(two_pi * u2));
    have_spare = true;
    return static_cast<float>(r * std::cos(two_pi * u2));
  }
};

int bounce(int pos, int& vel, int size, int limit) {
  int next = pos + vel;
  if (next < 0 || next + size > limit) {
    vel = -vel;
    next = pos + vel;
    next = std::max(next, 0);
    next = std::min(next, limit - size);
  }
  return next;
}

}  // namespace

std::vector<Tensor3> gen_synthetic(const SyntheticConfig& cfg,
                                   std::vector<std::vector<PixelIndex>>* object_corners) {
  if (cfg.height < 1 || cfg.width < 1 || cfg.channels < 1 || cfg.n_frames < 1)
    throw InvalidInputError("gen_synthetic: dims, channels and n_frames must be >= 1");
  if (cfg.n_objects < 0 || cfg.noise_std < 0.0f)
    throw InvalidInputError("gen_synthetic: n_objects and noise_std must be >= 0");
  if (cfg.n_objects > 0 &&
      (cfg.object_size < 1 || cfg.object_size > cfg.height || cfg.object_size > cfg.width))
    throw InvalidInputError("gen_synthetic: objects must fit in the frame");

  DetRng rng(cfg.seed);
  Tensor3 background(cfg.channels, cfg.height, cfg.width);
  for (float& v : background.data) v = rng.uniform();

  struct Object {
    std::vector<float> color;
    int row, col, vy, vx;
  };
  std::vector<Object> objects(cfg.n_objects);
  for (int k = 0; k < cfg.n_objects; ++k) {
    Object& o = objects[k];
    o.color.resize(cfg.channels);
    for (float& c : o.color) c = rng.uniform();
    o.row = rng.uniform_int(cfg.height - cfg.object_size + 1);
    o.col = rng.uniform_int(cfg.width - cfg.object_size + 1);
    const int dir = (k % 2 == 0) ? 1 : -1;
    o.vy = dir * cfg.velocity_y;
    o.vx = dir * cfg.velocity_x;
  }

  if (object_corners) object_corners->clear();
  std::vector<Tensor3> frames;
  frames.reserve(cfg.n_frames);
  for (int t = 0; t < cfg.n_frames; ++t) {
    Tensor3 frame = background;
    if (object_corners) object_corners->emplace_back();
    for (Object& o : objects) {
      if (object_corners) object_corners->back().push_back({o.row, o.col});
      for (int c = 0; c < cfg.channels; ++c)
        for (int j = o.row; j < o.row + cfg.object_size; ++j)
          for (int i = o.col; i < o.col + cfg.object_size; ++i)
            frame.at(c, j, i) = o.color[c];
    }
    if (cfg.noise_std > 0.0f)
      for (float& v : frame.data) v += cfg.noise_std * rng.normal();
    frames.push_back(std::move(frame));

    for (Object& o : objects) {
      o.row = bounce(o.row, o.vy, cfg.object_size, cfg.height);
      o.col = bounce(o.col, o.vx, cfg.object_size, cfg.width);
    }
  }
  return frames;
}

void fill_random_weights(NetworkSpec& spec, std::uint32_t seed) {
  DetRng rng(seed);
  for (LayerDesc& d : spec.layers) {
    if (d.kind != LayerKind::Conv) continue;
    const float fan_in =
        static_cast<float>(d.conv.in_channels) * d.conv.kernel_h * d.conv.kernel_w;
    const float a = std::sqrt(6.0f / fan_in);
    d.conv.weights.resize(d.conv.weight_count());
    d.conv.bias.resize(static_cast<std::size_t>(d.conv.out_channels));
    for (float& w : d.conv.weights) w = (rng.uniform() * 2.0f - 1.0f) * a;
    for (float& b : d.conv.bias) b = (rng.uniform() * 2.0f - 1.0f) * 0.05f;
  }
}

NetworkSpec make_seg7_spec(std::uint32_t seed) {
  NetworkSpec spec;
  spec.in_channels = 3;
  spec.in_height = 776;
  spec.in_width = 1040;

  auto conv = [](std::string name, int in, int out, int k, int pad, int oh, int ow,
                 bool relu) {
    LayerDesc d;
    d.kind = LayerKind::Conv;
    d.name = std::move(name);
    d.conv.in_channels = in;
    d.conv.out_channels = out;
    d.conv.kernel_h = d.conv.kernel_w = k;
    d.conv.padding = pad;
    d.conv.out_h = oh;
    d.conv.out_w = ow;
    d.fuse_relu = relu;
    return d;
  };
  auto act = [](std::string name) {
    LayerDesc d;
    d.kind = LayerKind::Act;
    d.name = std::move(name);
    return d;
  };
  auto pool = [](std::string name, int oh, int ow) {
    LayerDesc d;
    d.kind = LayerKind::Pool;
    d.name = std::move(name);
    d.pool_size = 2;
    d.pool_stride = 2;
    d.pool_out_h = oh;
    d.pool_out_w = ow;
    return d;
  };

  spec.layers.push_back(conv("L1", 3, 16, 7, 0, 541, 871, false));
  spec.layers.push_back(act("L2a"));
  spec.layers.push_back(pool("L2b", 271, 436));
  spec.layers.push_back(conv("L3", 16, 64, 7, 3, 271, 436, false));
  spec.layers.push_back(act("L4a"));
  spec.layers.push_back(pool("L4b", 136, 218));
  spec.layers.push_back(conv("L5", 64, 256, 7, 3, 136, 218, true));
  spec.layers.push_back(conv("L6", 256, 64, 1, 0, 136, 218, true));
  spec.layers.push_back(conv("L7", 64, 8, 1, 0, 136, 218, false));

  fill_random_weights(spec, seed);
  return spec;
}

NetworkSpec make_small_spec(std::uint32_t seed, int in_channels, int height, int width) {
  NetworkSpec spec;
  spec.in_channels = in_channels;
  spec.in_height = height;
  spec.in_width = width;

  LayerDesc a;
  a.kind = LayerKind::Conv;
  a.name = "C1";
  a.conv = {in_channels, 16, 5, 5, 1, 2};
  a.fuse_relu = true;
  spec.layers.push_back(a);

  LayerDesc p;
  p.kind = LayerKind::Pool;
  p.name = "P1";
  p.pool_size = 2;
  p.pool_stride = 2;
  spec.layers.push_back(p);

  LayerDesc b;
  b.kind = LayerKind::Conv;
  b.name = "C2";
  b.conv = {16, 16, 3, 3, 1, 1};
  b.fuse_relu = true;
  spec.layers.push_back(b);

  LayerDesc c;
  c.kind = LayerKind::Conv;
  c.name = "C3";
  c.conv = {16, 8, 3, 3, 1, 1};
  spec.layers.push_back(c);

  fill_random_weights(spec, seed);
  return spec;
}

// ---------------------------------------------------------------------------
// CSV + threshold files
// ---------------------------------------------------------------------------

void write_stats_csv(std::ostream& os, const RunStats& run) {
  os << "frame,layer,changed_px,change_frac,eff_ops,wall_ns,loss\n";
  char frac[32];
  for (const FrameStats& f : run.frames) {
    for (const LayerFrameStats& l : f.layers) {
      std::snprintf(frac, sizeof frac, "%.6f", l.change_frac);
      os << f.frame << "," << l.layer << "," << l.changed_px << "," << frac << ","
         << l.eff_ops << "," << l.wall_ns << ",";
      if (f.has_loss) os << fmt_double(f.loss);
      os << "\n";
    }
  }
}

void write_tradeoff_csv(std::ostream& os, const std::vector<TradeoffRow>& curve) {
  os << "factor,loss,total_eff_ops,wall_ns\n";
  for (const TradeoffRow& r : curve)
    os << fmt_double(r.factor) << "," << fmt_double(r.loss) << "," << r.total_eff_ops << ","
       << r.wall_ns << "\n";
}

void write_calib_trace_csv(std::ostream& os, const std::vector<CalibTracePoint>& trace) {
  os << "layer,tau,loss\n";
  for (const CalibTracePoint& p : trace)
    os << p.layer << "," << fmt_double(p.tau) << "," << fmt_double(p.loss) << "\n";
}

void write_mem_report_csv(std::ostream& os, const NetworkSpec& spec) {
  os << "mode,intermediate_values,x_matrix_values,param_values,cb_extra_values,total_values\n";
  const char* names[] = {"naive", "shared", "cb"};
  const MemMode modes[] = {MemMode::Naive, MemMode::Shared, MemMode::Cb};
  for (int i = 0; i < 3; ++i) {
    const MemReport r = memory_accounting(spec, modes[i]);
    os << names[i] << "," << r.intermediate_values << "," << r.x_matrix_values << ","
       << r.param_values << "," << r.cb_extra_values << "," << r.total_values << "\n";
  }
}

void write_op_report_csv(std::ostream& os, const OpReport& report) {
  os << "layer,dense_ops,cb_ops,fg_sp_ops,fg_fm_ops\n";
  auto row = [&os](const LayerOps& l) {
    os << l.layer << "," << l.dense_ops << "," << l.cb_ops << "," << l.fg_sp_ops << ","
       << l.fg_fm_ops << "\n";
  };
  for (const LayerOps& l : report.layers) row(l);
  row(report.totals);
}

std::vector<float> load_tau_file(const fs::path& path) {
  const std::string file = path.string();
  const std::string text = read_file(path);
  std::vector<float> taus;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = text.substr(pos, eol - pos);
    const std::size_t line_off = pos;
    pos = eol + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      std::size_t used = 0;
      taus.push_back(std::stof(line, &used));
    } catch (const std::exception&) {
      throw ParseError(file, line_off, "expected one threshold per line, got '" + line + "'");
    }
  }
  return taus;
}

void save_tau_file(const std::vector<float>& taus, const fs::path& path) {
  std::string out;
  for (float t : taus) {
    out += fmt_double(t);
    out += '\n';
  }
  write_file_atomic(path, out);
}

}  // namespace cbi
