#include "panodepth/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "panodepth/errors.hpp"

namespace pano {
namespace {

// Cursor over a PNM-style ASCII header.
class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::string token() {
    skip_space_and_comments();
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) ++pos_;
    if (start == pos_) throw ParseError("unexpected end of header", start);
    return {reinterpret_cast<const char*>(bytes_.data()) + start, pos_ - start};
  }

  long integer(const char* what) {
    const std::size_t at = (skip_space_and_comments(), pos_);
    const std::string t = token();
    long v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size() || v <= 0)
      throw ParseError(std::string("bad ") + what + " '" + t + "'", at);
    return v;
  }

  // The single whitespace byte separating header and payload.
  void end_of_header() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_]))
      throw ParseError("missing whitespace after header", pos_);
    ++pos_;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

void append(std::vector<std::uint8_t>& out, const std::string& s) {
  out.insert(out.end(), s.begin(), s.end());
}

void append_f32_le(std::vector<std::uint8_t>& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

float read_f32(const std::uint8_t* p, bool little_endian) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) {
    const int shift = little_endian ? 8 * i : 8 * (3 - i);
    bits |= static_cast<std::uint32_t>(p[i]) << shift;
  }
  return std::bit_cast<float>(bits);
}

void check_payload(std::size_t have, std::size_t need, std::size_t offset) {
  if (have < need)
    throw ParseError("truncated payload: expected " + std::to_string(need) +
                         " bytes, found " + std::to_string(have),
                     offset);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::vector<std::uint8_t>& bytes,
                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------- PPM / PGM

std::vector<std::uint8_t> encode_ppm(const Panorama& pano) {
  if (pano.channels() != 3) throw DataError("write_ppm: expected 3 channels");
  const int w = pano.width(), h = pano.height();
  std::vector<std::uint8_t> out;
  append(out, "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n");
  out.reserve(out.size() + static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(pano.plane(c)(y, x), 0.f, 1.f);
        out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.f)));
      }
  return out;
}

Panorama decode_ppm(const std::vector<std::uint8_t>& bytes) {
  HeaderReader r(bytes);
  if (r.token() != "P6") throw ParseError("not a binary PPM (magic P6)", 0);
  const long w = r.integer("width");
  const long h = r.integer("height");
  const std::size_t max_at = (r.skip_space_and_comments(), r.offset());
  const long maxval = r.integer("maxval");
  if (maxval != 255)
    throw ParseError("unsupported PPM maxval " + std::to_string(maxval) +
                         " (only 255)", max_at);
  r.end_of_header();
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  check_payload(bytes.size() - r.offset(), need, r.offset());
  Panorama p(PanoramaKind::rgb, static_cast<int>(w), static_cast<int>(h));
  const std::uint8_t* src = bytes.data() + r.offset();
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) p.plane(c)(y, x) = *src++ / 255.f;
  return p;
}

Panorama read_ppm(const std::filesystem::path& path) {
  return decode_ppm(read_bytes(path));
}

void write_ppm(const Panorama& pano, const std::filesystem::path& path) {
  write_bytes(encode_ppm(pano), path);
}

void write_depth_pgm(const Panorama& depth, const std::filesystem::path& path,
                     double max_depth) {
  if (depth.channels() != 1) throw DataError("write_depth_pgm: expected 1 channel");
  const Image& d = depth.plane(0);
  if (max_depth <= 0.0) max_depth = std::max(1e-6f, d.maxCoeff());
  std::vector<std::uint8_t> out;
  append(out, "P5\n" + std::to_string(depth.width()) + " " +
                  std::to_string(depth.height()) + "\n255\n");
  for (Eigen::Index y = 0; y < d.rows(); ++y)
    for (Eigen::Index x = 0; x < d.cols(); ++x) {
      const double v = d(y, x) > 0 ? std::clamp(d(y, x) / max_depth, 0.0, 1.0) : 0.0;
      out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
  write_bytes(out, path);
}

// ---------------------------------------------------------------------- PFM

std::vector<std::uint8_t> encode_pfm(const Panorama& pano) {
  if (pano.channels() != 1) throw DataError("write_pfm: expected 1 channel");
  const Image& img = pano.plane(0);
  if (!img.isFinite().all()) throw DataError("write_pfm: map contains NaN or Inf");
  std::vector<std::uint8_t> out;
  append(out, "Pf\n" + std::to_string(pano.width()) + " " +
                  std::to_string(pano.height()) + "\n-1.0\n");
  out.reserve(out.size() + img.size() * 4);
  for (Eigen::Index y = img.rows() - 1; y >= 0; --y)
    for (Eigen::Index x = 0; x < img.cols(); ++x) append_f32_le(out, img(y, x));
  return out;
}

Panorama decode_pfm(const std::vector<std::uint8_t>& bytes, PanoramaKind kind) {
  HeaderReader r(bytes);
  const std::string magic = r.token();
  if (magic == "PF") throw ParseError("unsupported color PFM (PF)", 0);
  if (magic != "Pf") throw ParseError("not a grayscale PFM (magic Pf)", 0);
  const long w = r.integer("width");
  const long h = r.integer("height");
  const std::size_t scale_at = (r.skip_space_and_comments(), r.offset());
  const std::string scale_tok = r.token();
  double scale = 0.0;
  try {
    std::size_t used = 0;
    scale = std::stod(scale_tok, &used);
    if (used != scale_tok.size()) throw std::invalid_argument(scale_tok);
  } catch (const std::exception&) {
    throw ParseError("bad PFM scale '" + scale_tok + "'", scale_at);
  }
  if (scale == 0.0) throw ParseError("PFM scale must be non-zero", scale_at);
  r.end_of_header();
  const bool little = scale < 0.0;
  const std::size_t need = static_cast<std::size_t>(w) * h * 4;
  check_payload(bytes.size() - r.offset(), need, r.offset());
  Image img(h, w);
  const std::uint8_t* src = bytes.data() + r.offset();
  for (long y = h - 1; y >= 0; --y)
    for (long x = 0; x < w; ++x, src += 4) img(y, x) = read_f32(src, little);
  return Panorama::from_image(kind, std::move(img));
}

Panorama read_pfm(const std::filesystem::path& path, PanoramaKind kind) {
  return decode_pfm(read_bytes(path), kind);
}

void write_pfm(const Panorama& pano, const std::filesystem::path& path) {
  write_bytes(encode_pfm(pano), path);
}

// --------------------------------------------------------------- Checkpoint

std::string to_string(TrainingPhase phase) {
  switch (phase) {
    case TrainingPhase::untrained: return "untrained";
    case TrainingPhase::unsupervised: return "unsupervised";
    case TrainingPhase::supervised: return "supervised";
    case TrainingPhase::fused: return "fused";
  }
  return "untrained";
}

TrainingPhase phase_from_string(const std::string& s) {
  for (auto p : {TrainingPhase::untrained, TrainingPhase::unsupervised,
                 TrainingPhase::supervised, TrainingPhase::fused})
    if (to_string(p) == s) return p;
  throw std::invalid_argument("unknown training phase '" + s + "'");
}

const std::string* Checkpoint::find_meta(const std::string& key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return &v;
  return nullptr;
}

const NamedTensor* Checkpoint::find_tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::ostringstream head;
  head << "PANODEPTH-CHECKPOINT\nversion " << ckpt.version << "\nphase "
       << to_string(ckpt.phase) << "\n";
  for (const auto& [k, v] : ckpt.meta) {
    if (k.empty() || k.find_first_of(" \n") != std::string::npos ||
        v.find('\n') != std::string::npos)
      throw DataError("checkpoint: meta entries must be single-line, key without spaces");
    head << "meta " << k << " " << v << "\n";
  }
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    const auto& t = ckpt.tensors[i];
    for (std::size_t j = 0; j < i; ++j)
      if (ckpt.tensors[j].name == t.name)
        throw DataError("checkpoint: duplicate tensor name '" + t.name + "'");
    std::size_t count = 1;
    head << "tensor " << t.name;
    for (int d : t.shape) {
      head << " " << d;
      count *= static_cast<std::size_t>(d);
    }
    head << "\n";
    if (count != t.values.size())
      throw DataError("checkpoint: tensor '" + t.name + "' shape/value count mismatch");
  }
  head << "\n";
  std::vector<std::uint8_t> out;
  append(out, head.str());
  for (const auto& t : ckpt.tensors)
    for (float v : t.values) append_f32_le(out, v);
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Checkpoint ckpt;
  ckpt.version = 0;
  std::size_t pos = 0;
  int line_no = 0;
  auto next_line = [&](std::string& line) {
    const auto nl = std::find(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), '\n');
    if (nl == bytes.end()) throw ParseError("checkpoint: manifest not terminated", pos);
    line.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), nl);
    pos = static_cast<std::size_t>(nl - bytes.begin()) + 1;
    ++line_no;
  };
  std::string line;
  next_line(line);
  if (line != "PANODEPTH-CHECKPOINT") throw ParseError("checkpoint: bad magic", 0);
  std::size_t payload_elems = 0;
  while (true) {
    const std::size_t line_at = pos;
    next_line(line);
    if (line.empty()) break;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "version") {
      ls >> ckpt.version;
      if (ckpt.version != Checkpoint::kVersion)
        throw DataError("checkpoint: version " + std::to_string(ckpt.version) +
                        " unsupported (expected " +
                        std::to_string(Checkpoint::kVersion) + ")");
    } else if (kind == "phase") {
      std::string p;
      ls >> p;
      try {
        ckpt.phase = phase_from_string(p);
      } catch (const std::invalid_argument& e) {
        throw ParseError(e.what(), line_at);
      }
    } else if (kind == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value[0] == ' ') value.erase(0, 1);
      ckpt.meta.emplace_back(key, value);
    } else if (kind == "tensor") {
      NamedTensor t;
      ls >> t.name;
      int d;
      std::size_t count = 1;
      while (ls >> d) {
        if (d <= 0) throw ParseError("checkpoint: non-positive dimension", line_at);
        t.shape.push_back(d);
        count *= static_cast<std::size_t>(d);
      }
      if (t.name.empty() || t.shape.empty())
        throw ParseError("checkpoint: malformed tensor line", line_at);
      t.values.resize(count);
      payload_elems += count;
      ckpt.tensors.push_back(std::move(t));
    } else {
      throw ParseError("checkpoint: unknown manifest entry '" + kind + "'", line_at);
    }
  }
  if (ckpt.version != Checkpoint::kVersion)
    throw DataError("checkpoint: missing version line");
  const std::size_t have = bytes.size() - pos;
  if (have != payload_elems * 4)
    throw DataError("checkpoint: payload length mismatch: manifest needs " +
                    std::to_string(payload_elems * 4) + " bytes, found " +
                    std::to_string(have));
  const std::uint8_t* src = bytes.data() + pos;
  for (auto& t : ckpt.tensors)
    for (float& v : t.values) {
      v = read_f32(src, true);
      src += 4;
    }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_bytes(encode_checkpoint(ckpt), path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_bytes(path));
}

// ------------------------------------------------------------------- Config

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw.substr(0, raw.find('#'));
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config: expected 'key = value'", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (value.empty()) throw ParseError("config: empty value for '" + key + "'", line_no);

    auto as_double = [&]() {
      double v = 0.0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || p != value.data() + value.size() || !std::isfinite(v))
        throw ParseError("config: '" + key + "' expects a number, got '" + value + "'", line_no);
      return v;
    };
    auto as_int = [&]() {
      long long v = 0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || p != value.data() + value.size())
        throw ParseError("config: '" + key + "' expects an integer, got '" + value + "'", line_no);
      return v;
    };
    auto positive = [&](double v) {
      if (!(v > 0)) throw ParseError("config: '" + key + "' must be > 0", line_no);
      return v;
    };

    if (key == "learning_rate") {
      cfg.learning_rate = as_double();
      if (cfg.learning_rate < 0) throw ParseError("config: learning_rate must be >= 0", line_no);
    } else if (key == "batch_size") {
      cfg.batch_size = static_cast<int>(positive(static_cast<double>(as_int())));
    } else if (key == "epochs") {
      cfg.epochs = static_cast<int>(positive(static_cast<double>(as_int())));
    } else if (key == "lambda_smooth") {
      cfg.lambda_smooth = as_double();
      if (cfg.lambda_smooth < 0) throw ParseError("config: lambda_smooth must be >= 0", line_no);
    } else if (key == "depth_cap") {
      cfg.depth_cap = positive(as_double());
    } else if (key == "seed") {
      const long long s = as_int();
      if (s < 0) throw ParseError("config: seed must be >= 0", line_no);
      cfg.seed = static_cast<std::uint64_t>(s);
    } else if (key == "plateau_tolerance") {
      cfg.plateau_tolerance = positive(as_double());
    } else if (key == "plateau_patience") {
      cfg.plateau_patience = static_cast<int>(positive(static_cast<double>(as_int())));
    } else if (key == "encoder_channels") {
      cfg.encoder_channels.clear();
      std::istringstream vs(value);
      std::string item;
      while (std::getline(vs, item, ',')) {
        item = trim(item);
        int c = 0;
        auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), c);
        if (ec != std::errc() || p != item.data() + item.size() || c <= 0)
          throw ParseError("config: bad encoder_channels entry '" + item + "'", line_no);
        cfg.encoder_channels.push_back(c);
      }
    } else if (key == "su_channels") {
      cfg.su_channels = static_cast<int>(positive(static_cast<double>(as_int())));
    } else if (key == "d_max") {
      cfg.d_max = positive(as_double());
    } else {
      throw ParseError("config: unknown key '" + key + "'", line_no);
    }
  }
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("config: cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace pano
