#pragma once

// Synthetic moving-sprite videos with injectable anomalies, 8-bit frame I/O and
// frame-directory ingestion.
//
// Frame files are binary PPM (P6, RGB) or PGM (P5, gray, replicated to RGB),
// maxval 255. A byte b maps to clamp((b - 128) / 127, -1, 1), so mid-gray 128 is
// exactly 0.0; writing uses round(127 v + 128).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "cpnet/frames.hpp"
#include "cpnet/rng.hpp"

namespace cpnet {

enum class SpriteKind { square, disc, ring };
enum class Background { constant, gradient };

struct VideoSpec {
  int width = 64;
  int height = 64;
  int length = 150;
  int n_sprites = 3;
  double min_speed = 1.0;  // pixels per frame
  double max_speed = 2.5;
  double min_half = 3.0;  // sprite half-extent in pixels, drawn in steps of 0.5
  double max_half = 5.0;
  std::vector<SpriteKind> kinds{SpriteKind::square, SpriteKind::disc};
  Background background = Background::gradient;
  std::uint64_t seed = 0;

  void validate() const {
    if (width < 8 || height < 8 || length < 1 || n_sprites < 0) {
      fail(ErrorKind::config, "VideoSpec: need width, height >= 8, length >= 1, n_sprites >= 0");
    }
    if (!(min_speed > 0) || max_speed < min_speed) fail(ErrorKind::config, "VideoSpec: speeds must be positive");
    if (!(min_half >= 0.5) || max_half < min_half) fail(ErrorKind::config, "VideoSpec: sprite sizes invalid");
    if (2 * max_half + 2 * max_speed >= std::min(width, height)) {
      fail(ErrorKind::config, "VideoSpec: sprites do not fit inside the frame");
    }
    if (n_sprites > 0 && kinds.empty()) fail(ErrorKind::config, "VideoSpec: no sprite kinds");
  }
};

enum class AnomalyKind { speed_burst, direction_reversal, intruder, teleport };

inline std::string to_string(AnomalyKind k) {
  switch (k) {
    case AnomalyKind::speed_burst: return "speed_burst";
    case AnomalyKind::direction_reversal: return "direction_reversal";
    case AnomalyKind::intruder: return "intruder";
    case AnomalyKind::teleport: return "teleport";
  }
  return "unknown";
}

inline AnomalyKind parse_anomaly_kind(const std::string& s) {
  for (auto k : {AnomalyKind::speed_burst, AnomalyKind::direction_reversal, AnomalyKind::intruder,
                 AnomalyKind::teleport}) {
    if (to_string(k) == s) return k;
  }
  fail(ErrorKind::config, "unknown anomaly kind '" + s + "'");
}

// While active (frames [onset, onset + duration)):
//   speed_burst        sprite 0 steps speed_factor times its velocity
//   direction_reversal sprite 0 alternates backward and forward steps
//   intruder           a large ring, a kind never drawn in normal video, crosses the frame
//   teleport           sprite 0 jumps to a fresh random position every frame
struct AnomalySpec {
  AnomalyKind kind = AnomalyKind::speed_burst;
  int onset = 0;
  int duration = 0;
  double speed_factor = 4.0;

  void validate(int length) const {
    if (onset < 0 || duration < 0 || onset + duration > length) {
      fail(ErrorKind::config, "AnomalySpec: window [" + std::to_string(onset) + ", " +
                                  std::to_string(onset + duration) + ") exceeds video length " +
                                  std::to_string(length));
    }
    if (kind == AnomalyKind::speed_burst && !(speed_factor >= 1)) {
      fail(ErrorKind::config, "AnomalySpec: speed_factor must be >= 1");
    }
  }
};

namespace detail {

struct Sprite {
  SpriteKind kind = SpriteKind::square;
  double half = 4;
  double x = 0, y = 0;
  double vx = 0, vy = 0;
  float color[3] = {0, 0, 0};
};

// Reflects a coordinate into [lo, hi], flipping the velocity on each bounce.
inline void reflect(double& p, double& v, double lo, double hi) {
  for (int guard = 0; guard < 8 && (p < lo || p > hi); ++guard) {
    if (p < lo) {
      p = 2 * lo - p;
      v = -v;
    }
    if (p > hi) {
      p = 2 * hi - p;
      v = -v;
    }
  }
  p = std::clamp(p, lo, hi);
}

inline double half_step(Rng& rng, double lo, double hi) {
  const auto steps = static_cast<std::uint64_t>(std::floor((hi - lo) * 2 + 1e-9)) + 1;
  return lo + 0.5 * static_cast<double>(rng.below(steps));
}

// Area coverage of pixel (px, py), given by its centre, by the sprite.
inline double coverage(const Sprite& s, double px, double py) {
  const double dx = std::abs(px - s.x), dy = std::abs(py - s.y);
  switch (s.kind) {
    case SpriteKind::square:
      return std::clamp(s.half + 0.5 - dx, 0.0, 1.0) * std::clamp(s.half + 0.5 - dy, 0.0, 1.0);
    case SpriteKind::disc: return std::clamp(s.half + 0.5 - std::hypot(dx, dy), 0.0, 1.0);
    case SpriteKind::ring: {
      const double d = std::hypot(dx, dy);
      const double outer = std::clamp(s.half + 0.5 - d, 0.0, 1.0);
      const double inner = std::clamp(0.55 * s.half + 0.5 - d, 0.0, 1.0);
      return outer - inner;
    }
  }
  return 0;
}

inline Sprite random_sprite(Rng& rng, const VideoSpec& spec, SpriteKind kind, double half) {
  Sprite s;
  s.kind = kind;
  s.half = half;
  s.x = rng.uniform(half, spec.width - half);
  s.y = rng.uniform(half, spec.height - half);
  const double speed = rng.uniform(spec.min_speed, spec.max_speed);
  const double angle = rng.uniform(0, 2 * std::numbers::pi);
  s.vx = speed * std::cos(angle);
  s.vy = speed * std::sin(angle);
  // Channel values stay at least 0.5 away from mid-gray so sprites contrast
  // with the background (whose channels lie within 0.5 of it).
  for (auto& c : s.color) c = static_cast<float>((rng.below(2) ? 1.0 : -1.0) * rng.uniform(0.5, 0.9));
  return s;
}

inline void render(Tensor<float>& frame, const std::vector<float>& background, const std::vector<Sprite>& sprites) {
  const auto H = frame.dim(1), W = frame.dim(2);
  auto out = frame.data();
  std::copy(background.begin(), background.end(), out.begin());
  for (const auto& s : sprites) {
    const auto y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(s.y - s.half - 1)));
    const auto y1 = std::min<std::int64_t>(H, static_cast<std::int64_t>(std::ceil(s.y + s.half + 1)));
    const auto x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(s.x - s.half - 1)));
    const auto x1 = std::min<std::int64_t>(W, static_cast<std::int64_t>(std::ceil(s.x + s.half + 1)));
    for (auto y = y0; y < y1; ++y) {
      for (auto x = x0; x < x1; ++x) {
        const auto a = static_cast<float>(coverage(s, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5));
        if (a <= 0) continue;
        for (std::int64_t c = 0; c < 3; ++c) {
          auto& v = out[static_cast<std::size_t>((c * H + y) * W + x)];
          v = (1 - a) * v + a * s.color[c];
        }
      }
    }
  }
}

inline std::vector<float> make_background(const VideoSpec& spec, Rng& rng) {
  const auto H = spec.height, W = spec.width;
  std::vector<float> bg(static_cast<std::size_t>(3 * H * W));
  for (int c = 0; c < 3; ++c) {
    const double base = rng.uniform(-0.3, 0.3);
    const double gx = spec.background == Background::gradient ? rng.uniform(-0.1, 0.1) : 0.0;
    const double gy = spec.background == Background::gradient ? rng.uniform(-0.1, 0.1) : 0.0;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        bg[static_cast<std::size_t>((c * H + y) * W + x)] =
            static_cast<float>(base + gx * (x + 0.5) / W + gy * (y + 0.5) / H);
      }
    }
  }
  return bg;
}

inline FrameSequence simulate(const VideoSpec& spec, const AnomalySpec* anomaly) {
  spec.validate();
  if (anomaly) anomaly->validate(spec.length);
  Rng rng(spec.seed);
  const auto background = make_background(spec, rng);
  std::vector<Sprite> sprites;
  for (int i = 0; i < spec.n_sprites; ++i) {
    const auto kind = spec.kinds[rng.below(spec.kinds.size())];
    sprites.push_back(random_sprite(rng, spec, kind, half_step(rng, spec.min_half, spec.max_half)));
  }
  // Anomaly randomness has its own stream so the normal part is unaffected.
  Rng arng(hash_seed(spec.seed, 0xa7017a1));
  Sprite intruder;
  if (anomaly && anomaly->kind == AnomalyKind::intruder) {
    const double half = std::min(2.0 * spec.max_half, 0.2 * std::min(spec.width, spec.height));
    intruder = random_sprite(arng, spec, SpriteKind::ring, std::floor(half * 2) / 2);
    intruder.vx *= 1.5;
    intruder.vy *= 1.5;
    intruder.color[0] = 0.95f;
    intruder.color[1] = -0.95f;
    intruder.color[2] = 0.95f;
  }

  FrameSequence seq;
  seq.source = "synthetic:" + std::to_string(spec.seed);
  for (int t = 0; t < spec.length; ++t) {
    const bool active = anomaly && anomaly->duration > 0 && t >= anomaly->onset &&
                        t < anomaly->onset + anomaly->duration;
    if (t > 0) {
      for (std::size_t i = 0; i < sprites.size(); ++i) {
        auto& s = sprites[i];
        double mult = 1.0;
        if (active && i == 0) {
          if (anomaly->kind == AnomalyKind::speed_burst) mult = anomaly->speed_factor;
          if (anomaly->kind == AnomalyKind::direction_reversal) mult = (t - anomaly->onset) % 2 == 0 ? -1.0 : 1.0;
        }
        double dx = s.vx * mult, dy = s.vy * mult;
        const bool neg_x = dx < 0, neg_y = dy < 0;
        s.x += dx;
        s.y += dy;
        reflect(s.x, dx, s.half, spec.width - s.half);
        reflect(s.y, dy, s.half, spec.height - s.half);
        // A bounce flips the sprite's own velocity, whatever the step multiplier.
        if ((dx < 0) != neg_x) s.vx = -s.vx;
        if ((dy < 0) != neg_y) s.vy = -s.vy;
        if (active && i == 0 && anomaly->kind == AnomalyKind::teleport) {
          s.x = arng.uniform(s.half, spec.width - s.half);
          s.y = arng.uniform(s.half, spec.height - s.half);
        }
      }
      if (active && anomaly->kind == AnomalyKind::intruder && t > anomaly->onset) {
        intruder.x += intruder.vx;
        intruder.y += intruder.vy;
        reflect(intruder.x, intruder.vx, intruder.half, spec.width - intruder.half);
        reflect(intruder.y, intruder.vy, intruder.half, spec.height - intruder.half);
      }
    }
    auto drawn = sprites;
    if (active && anomaly->kind == AnomalyKind::intruder) drawn.push_back(intruder);
    Tensor<float> frame({3, spec.height, spec.width});
    render(frame, background, drawn);
    seq.frames.push_back(std::move(frame));
    seq.labels.push_back(active ? 1 : 0);
  }
  return seq;
}

}  // namespace detail

inline FrameSequence generate_normal(const VideoSpec& spec) { return detail::simulate(spec, nullptr); }

inline FrameSequence generate_anomalous(const VideoSpec& spec, const AnomalySpec& anomaly) {
  return detail::simulate(spec, &anomaly);
}

// --- 8-bit image files -------------------------------------------------------

inline std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(127.0 * v + 128.0), 0L, 255L));
}

inline float from_byte(std::uint8_t b) { return std::clamp((static_cast<float>(b) - 128.0f) / 127.0f, -1.0f, 1.0f); }

inline void write_ppm(const std::string& path, const Tensor<float>& frame) {
  if (frame.rank() != 3 || frame.dim(0) != 3) fail(ErrorKind::shape, "write_ppm: expected [3, H, W]");
  const auto H = frame.dim(1), W = frame.dim(2);
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot write '" + path + "'");
  os << "P6\n" << W << ' ' << H << "\n255\n";
  std::vector<char> bytes(static_cast<std::size_t>(3 * H * W));
  const auto d = frame.data();
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < W; ++x)
      for (std::int64_t c = 0; c < 3; ++c)
        bytes[static_cast<std::size_t>((y * W + x) * 3 + c)] =
            static_cast<char>(to_byte(d[static_cast<std::size_t>((c * H + y) * W + x)]));
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) fail(ErrorKind::io, "failed writing '" + path + "'");
}

// Reads a P6 or P5 file with maxval 255 into [3, H, W].
inline Tensor<float> read_pnm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io, "cannot open image '" + path + "'");
  auto token = [&]() {
    std::string t;
    char ch;
    while (is.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(is, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        continue;
      }
      t += ch;
    }
    return t;
  };
  const std::string magic = token();
  if (magic != "P6" && magic != "P5") fail(ErrorKind::io, "'" + path + "' is not a binary PPM/PGM file");
  std::int64_t W = 0, H = 0, maxval = 0;
  try {
    W = std::stoll(token());
    H = std::stoll(token());
    maxval = std::stoll(token());
  } catch (const std::logic_error&) {
    fail(ErrorKind::io, "'" + path + "' has a malformed header");
  }
  if (W <= 0 || H <= 0 || W > 1 << 14 || H > 1 << 14 || maxval != 255) {
    fail(ErrorKind::io, "'" + path + "' has unsupported dimensions or maxval");
  }
  const std::int64_t channels = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> bytes(static_cast<std::size_t>(channels * H * W));
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!is) fail(ErrorKind::io, "'" + path + "' is truncated");
  Tensor<float> frame({3, H, W});
  auto d = frame.data();
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < W; ++x)
      for (std::int64_t c = 0; c < 3; ++c)
        d[static_cast<std::size_t>((c * H + y) * W + x)] =
            from_byte(bytes[static_cast<std::size_t>((y * W + x) * channels + (channels == 3 ? c : 0))]);
  return frame;
}

// Bilinear resize with pixel-centre alignment (half-pixel offsets, edge clamp).
inline Tensor<float> resize_bilinear(const Tensor<float>& frame, std::int64_t out_h, std::int64_t out_w) {
  const auto C = frame.dim(0), H = frame.dim(1), W = frame.dim(2);
  if (H == out_h && W == out_w) return frame.clone();
  Tensor<float> out({C, out_h, out_w});
  const auto src = frame.data();
  auto dst = out.data();
  for (std::int64_t y = 0; y < out_h; ++y) {
    const double sy = std::clamp((static_cast<double>(y) + 0.5) * H / out_h - 0.5, 0.0, static_cast<double>(H - 1));
    const auto y0 = static_cast<std::int64_t>(sy);
    const auto y1 = std::min(y0 + 1, H - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::int64_t x = 0; x < out_w; ++x) {
      const double sx = std::clamp((static_cast<double>(x) + 0.5) * W / out_w - 0.5, 0.0, static_cast<double>(W - 1));
      const auto x0 = static_cast<std::int64_t>(sx);
      const auto x1 = std::min(x0 + 1, W - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::int64_t c = 0; c < C; ++c) {
        auto at = [&](std::int64_t yy, std::int64_t xx) {
          return static_cast<double>(src[static_cast<std::size_t>((c * H + yy) * W + xx)]);
        };
        const double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
                         fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
        dst[static_cast<std::size_t>((c * out_h + y) * out_w + x)] = static_cast<float>(v);
      }
    }
  }
  return out;
}

inline const char* kLabelFile = "labels.txt";

// Writes frames as frame_NNNNN.ppm plus labels.txt (one 0/1 per line).
inline void write_frame_dir(const std::filesystem::path& dir, const FrameSequence& seq) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    std::ostringstream name;
    name << "frame_" << std::setw(5) << std::setfill('0') << i << ".ppm";
    write_ppm((dir / name.str()).string(), seq.frames[i]);
  }
  std::ofstream labels(dir / kLabelFile);
  for (int l : seq.labels) labels << l << '\n';
  if (!labels) fail(ErrorKind::io, "failed writing labels in '" + dir.string() + "'");
}

// Loads every .ppm/.pgm file of `dir` in lexicographic order, resized to
// height x width. Labels come from labels.txt when present, else all zero.
inline FrameSequence load_frame_dir(const std::filesystem::path& dir, std::int64_t height, std::int64_t width) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorKind::io, "'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  FrameSequence seq;
  seq.source = dir.string();
  for (const auto& f : files) seq.frames.push_back(resize_bilinear(read_pnm(f.string()), height, width));
  const auto label_path = dir / kLabelFile;
  if (std::filesystem::exists(label_path)) {
    std::ifstream is(label_path);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      if (line != "0" && line != "1") fail(ErrorKind::io, label_path.string() + ": label '" + line + "' is not 0/1");
      seq.labels.push_back(line == "1");
    }
    if (seq.labels.size() != seq.frames.size()) {
      fail(ErrorKind::io, label_path.string() + " has " + std::to_string(seq.labels.size()) + " labels for " +
                              std::to_string(seq.frames.size()) + " frames");
    }
  } else {
    seq.labels.assign(seq.frames.size(), 0);
  }
  seq.validate();
  return seq;
}

// --- corpus -----------------------------------------------------------------

struct CorpusSpec {
  int n_train = 16;
  int n_test = 8;
  int train_length = 36;
  int test_length = 150;
  VideoSpec video;  // template; length and seed are set per video
  std::vector<AnomalyKind> anomaly_kinds{AnomalyKind::speed_burst, AnomalyKind::direction_reversal,
                                         AnomalyKind::intruder, AnomalyKind::teleport};
  double speed_factor = 4.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_train < 0 || n_test < 0) fail(ErrorKind::config, "corpus video counts must be >= 0");
    if (train_length < 5 || test_length < 20) {
      fail(ErrorKind::config, "corpus lengths too short (train >= 5, test >= 20 frames)");
    }
    if (n_test > 0 && anomaly_kinds.empty()) fail(ErrorKind::config, "no anomaly kinds for test videos");
    video.validate();
  }
};

struct CorpusVideo {
  std::string role;  // "train" or "test"
  std::string name;
  VideoSpec spec;
  bool anomalous = false;
  AnomalySpec anomaly;
};

// Per-video specs of a corpus: train video i uses seed hash(seed, i), test
// video j uses hash(seed, 1000000 + j). Test video j carries anomaly kind
// j mod |kinds|, with onset in [L/4, L/2) and duration in [L/5, L/3).
inline std::vector<CorpusVideo> plan_corpus(const CorpusSpec& c) {
  c.validate();
  std::vector<CorpusVideo> out;
  for (int i = 0; i < c.n_train; ++i) {
    CorpusVideo v{"train", "train_" + std::to_string(i), c.video, false, {}};
    v.spec.length = c.train_length;
    v.spec.seed = hash_seed(c.seed, static_cast<std::uint64_t>(i));
    out.push_back(v);
  }
  for (int j = 0; j < c.n_test; ++j) {
    CorpusVideo v{"test", "test_" + std::to_string(j), c.video, true, {}};
    v.spec.length = c.test_length;
    v.spec.seed = hash_seed(c.seed, 1000000u + static_cast<std::uint64_t>(j));
    Rng rng(hash_seed(v.spec.seed, 0x0a5e7));
    const int L = c.test_length;
    v.anomaly.kind = c.anomaly_kinds[static_cast<std::size_t>(j) % c.anomaly_kinds.size()];
    v.anomaly.onset = L / 4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(L / 2 - L / 4)));
    v.anomaly.duration = L / 5 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, L / 3 - L / 5))));
    v.anomaly.speed_factor = c.speed_factor;
    out.push_back(v);
  }
  return out;
}

inline FrameSequence render_video(const CorpusVideo& v) {
  auto seq = v.anomalous ? generate_anomalous(v.spec, v.anomaly) : generate_normal(v.spec);
  seq.source = v.name;
  return seq;
}

// FNV-1a 64-bit.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t digest_frames(const FrameSequence& seq) {
  std::uint64_t h = fnv1a(nullptr, 0);
  for (const auto& f : seq.frames) {
    for (float v : f.data()) {
      const auto b = to_byte(v);
      h = fnv1a(&b, 1, h);
    }
  }
  for (int l : seq.labels) {
    const auto b = static_cast<unsigned char>(l);
    h = fnv1a(&b, 1, h);
  }
  return h;
}

struct ManifestEntry {
  std::string role;
  std::string dir;     // relative to the manifest's directory
  std::string labels;  // relative path of the label file
  std::string digest;  // hex FNV-1a of the 8-bit frames and labels
};

// Manifest lines: "<role> <video dir> <label file> <digest>"; '#' starts a comment.
inline void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path);
  os << "# role dir labels digest\n";
  for (const auto& e : entries) os << e.role << ' ' << e.dir << ' ' << e.labels << ' ' << e.digest << '\n';
  if (!os) fail(ErrorKind::io, "failed writing manifest '" + path.string() + "'");
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::io, "cannot open manifest '" + path.string() + "'");
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!(ls >> e.role >> e.dir >> e.labels >> e.digest) || (e.role != "train" && e.role != "test")) {
      fail(ErrorKind::io, "malformed manifest line: '" + line + "'");
    }
    out.push_back(e);
  }
  return out;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace cpnet
