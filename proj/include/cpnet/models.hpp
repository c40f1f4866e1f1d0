#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "cpnet/ops.hpp"
#include "cpnet/rng.hpp"
#include "cpnet/serialize.hpp"
#include "cpnet/tensor.hpp"

namespace cpnet {

struct Rational {
  std::int64_t num = 1;
  std::int64_t den = 4;

  friend bool operator==(const Rational&, const Rational&) = default;
};

inline std::string to_string(const Rational& r) { return std::to_string(r.num) + "/" + std::to_string(r.den); }

inline Rational parse_rational(const std::string& text) {
  const auto slash = text.find('/');
  try {
    if (slash == std::string::npos) return {std::stoll(text), 1};
    Rational r{std::stoll(text.substr(0, slash)), std::stoll(text.substr(slash + 1))};
    if (r.den <= 0 || r.num < 0) fail(ErrorKind::value, "fraction must be non-negative with positive denominator");
    return r;
  } catch (const std::logic_error&) {
    fail(ErrorKind::value, "cannot parse fraction '" + text + "'");
  }
}

struct UNetConfig {
  int in_channels_per_frame = 3;
  int n_frames = 4;
  int base_channels = 32;
  int depth = 3;
  int out_channels = 3;
  int height = 64;
  int width = 64;

  // Feature width at a U-Net level; level == depth is the bottleneck.
  int width_at(int level) const { return base_channels << level; }

  void validate() const {
    if (in_channels_per_frame < 1 || n_frames < 1 || out_channels < 1 || base_channels < 1) {
      fail(ErrorKind::config, "UNetConfig: channel counts and n_frames must be positive");
    }
    if (depth < 2) fail(ErrorKind::config, "UNetConfig: depth must be >= 2, got " + std::to_string(depth));
    if (base_channels % (2 * n_frames) != 0) {
      fail(ErrorKind::config, "UNetConfig: base_channels " + std::to_string(base_channels) +
                                  " is not divisible by 2*n_frames = " + std::to_string(2 * n_frames));
    }
    const int factor = 1 << depth;
    if (height < 1 || width < 1 || height % factor != 0 || width % factor != 0) {
      fail(ErrorKind::config, "UNetConfig: resolution " + std::to_string(height) + "x" + std::to_string(width) +
                                  " is not divisible by 2^depth = " + std::to_string(factor));
    }
  }

  friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

enum class Variant { baseline, encoder_split, full_split };

struct CPNetConfig {
  UNetConfig base;
  bool split_encoder = true;
  bool split_decoder = true;
  bool shift_enabled = true;
  Rational shift_fraction{1, 4};

  Variant variant() const {
    if (!split_encoder) return Variant::baseline;
    return split_decoder ? Variant::full_split : Variant::encoder_split;
  }

  // Short identifier used for file names: baseline, cpnet075[_shift], cpnet037[_shift].
  std::string tag() const {
    switch (variant()) {
      case Variant::baseline: return "baseline";
      case Variant::encoder_split: return shift_enabled ? "cpnet075_shift" : "cpnet075";
      case Variant::full_split: return shift_enabled ? "cpnet037_shift" : "cpnet037";
    }
    return "unknown";
  }

  void validate() const {
    base.validate();
    if (split_decoder && !split_encoder) fail(ErrorKind::config, "CPNetConfig: split_decoder requires split_encoder");
    if (!split_encoder && shift_enabled) fail(ErrorKind::config, "CPNetConfig: shift needs parallel paths");
    if (!split_encoder) return;
    const int n = base.n_frames;
    for (int level = 0; level <= base.depth; ++level) {
      if (base.width_at(level) % n != 0) {
        fail(ErrorKind::config, "CPNetConfig: width " + std::to_string(base.width_at(level)) +
                                    " is not divisible by n_frames = " + std::to_string(n));
      }
    }
    if (!shift_enabled) return;
    if (shift_fraction.den <= 0 || shift_fraction.num <= 0 || shift_fraction.num >= shift_fraction.den) {
      fail(ErrorKind::config, "CPNetConfig: shift fraction must lie in (0, 1), got " + to_string(shift_fraction));
    }
    for (int level = 0; level <= base.depth; ++level) {
      const std::int64_t per_path = base.width_at(level) / n;
      const std::int64_t moved = per_path * shift_fraction.num;
      if (moved % shift_fraction.den != 0 || (moved / shift_fraction.den) < 2 || (moved / shift_fraction.den) % 2) {
        fail(ErrorKind::config, "CPNetConfig: shift fraction " + to_string(shift_fraction) + " of " +
                                    std::to_string(per_path) +
                                    " per-path channels must be an even integer >= 2");
      }
    }
  }

  friend bool operator==(const CPNetConfig&, const CPNetConfig&) = default;
};

inline CPNetConfig baseline_config(const UNetConfig& base) { return {base, false, false, false, {1, 4}}; }

enum class LayerKind { input, conv, conv_transpose, relu, tanh, maxpool, concat, shift };

inline std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::input: return "input";
    case LayerKind::conv: return "conv";
    case LayerKind::conv_transpose: return "conv_transpose";
    case LayerKind::relu: return "relu";
    case LayerKind::tanh: return "tanh";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::concat: return "concat";
    case LayerKind::shift: return "shift";
  }
  return "unknown";
}

enum class Stage { input, encoder, bottleneck, decoder, fusion, head };

inline std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::input: return "input";
    case Stage::encoder: return "encoder";
    case Stage::bottleneck: return "bottleneck";
    case Stage::decoder: return "decoder";
    case Stage::fusion: return "fusion";
    case Stage::head: return "head";
  }
  return "unknown";
}

// One node of the model graph. Nodes are stored in topological order.
struct Layer {
  std::string name;  // unique, e.g. "p2.enc1.conv_a"
  std::string role;  // position inside a U-Net, shared by all paths: "enc1.conv_a"
  LayerKind kind = LayerKind::input;
  Stage stage = Stage::input;
  int path = -1;  // -1 for full-width (unsplit) layers
  // Producer node ids. A shift node has {previous path, own path, next path}
  // with -1 where the temporal neighbour does not exist.
  std::vector<int> inputs;
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t kernel = 0;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  std::int64_t out_height = 0;
  std::int64_t out_width = 0;
  std::int64_t shift_slice = 0;  // channels moved per direction
  int weight = -1;               // parameter indices
  int bias = -1;
};

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
};

template <class T>
class ModelGraph {
 public:
  const CPNetConfig& config() const { return config_; }
  Variant variant() const { return config_.variant(); }
  std::string tag() const { return config_.tag(); }
  const std::vector<Layer>& layers() const { return layers_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  const std::vector<int>& frame_inputs() const { return frame_inputs_; }
  int output() const { return output_; }

  std::vector<Tensor<T>> parameter_tensors() const {
    std::vector<Tensor<T>> out;
    for (const auto& p : params_) out.push_back(p.value);
    return out;
  }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }

  Tensor<T> parameter(const std::string& name) const {
    for (const auto& p : params_) {
      if (p.name == name) return p.value;
    }
    fail(ErrorKind::value, "no parameter named '" + name + "'");
  }

 private:
  template <class>
  friend class GraphBuilder;

  CPNetConfig config_;
  std::vector<Layer> layers_;
  std::vector<Parameter<T>> params_;
  std::vector<int> frame_inputs_;
  int output_ = -1;
};

// Moves `slice` channels from the previous path into [0, slice) and from the
// next path into [slice, 2*slice); the rest of `self` passes through. A missing
// neighbour contributes zeros.
template <class T>
Tensor<T> shift_path(const Tensor<T>* previous, const Tensor<T>& self, const Tensor<T>* next, std::int64_t slice) {
  const std::int64_t C = self.dim(1);
  if (slice <= 0 || 2 * slice > C) {
    fail(ErrorKind::shape, "shift: slice " + std::to_string(slice) + " does not fit " + std::to_string(C) +
                               " channels");
  }
  std::vector<Tensor<T>> sources{self};
  std::vector<ChannelRoute> routes{{0, 2 * slice, 2 * slice, C - 2 * slice}};
  if (previous) {
    if (previous->shape() != self.shape()) fail(ErrorKind::shape, "shift: paths differ in shape");
    sources.push_back(*previous);
    routes.push_back({sources.size() - 1, 0, 0, slice});
  }
  if (next) {
    if (next->shape() != self.shape()) fail(ErrorKind::shape, "shift: paths differ in shape");
    sources.push_back(*next);
    routes.push_back({sources.size() - 1, slice, slice, slice});
  }
  return route_channels(sources, C, routes);
}

// Inter-frame feature shift over n parallel paths, each [B, C, H, W]. With
// s = C * fraction / 2, output path p takes channels [0, s) from path p-1,
// channels [s, 2s) from path p+1 and keeps [2s, C). A fraction of zero is the
// identity.
template <class T>
std::vector<Tensor<T>> shift_features(const std::vector<Tensor<T>>& paths, Rational fraction) {
  if (paths.empty()) fail(ErrorKind::shape, "shift_features: no paths");
  for (const auto& p : paths) {
    detail::require_rank(p, 4, "shift_features", "path");
    if (p.shape() != paths[0].shape()) {
      fail(ErrorKind::shape, "shift_features: paths differ in shape: " + shape_str(paths[0].shape()) + " vs " +
                                 shape_str(p.shape()));
    }
  }
  if (fraction.den <= 0 || fraction.num < 0) fail(ErrorKind::value, "shift_features: invalid fraction");
  if (fraction.num == 0) return paths;
  const std::int64_t C = paths[0].dim(1);
  const std::int64_t twice = C * fraction.num;
  if (twice % (2 * fraction.den) != 0) {
    fail(ErrorKind::shape, "shift_features: " + std::to_string(C) + " channels * " + to_string(fraction) +
                               " / 2 is not an integer");
  }
  const std::int64_t slice = twice / (2 * fraction.den);
  const auto n = paths.size();
  std::vector<Tensor<T>> out;
  for (std::size_t p = 0; p < n; ++p) {
    out.push_back(shift_path(p > 0 ? &paths[p - 1] : nullptr, paths[p], p + 1 < n ? &paths[p + 1] : nullptr, slice));
  }
  return out;
}

template <class T>
class GraphBuilder {
 public:
  GraphBuilder(const CPNetConfig& config, std::uint64_t seed) : rng_(hash_seed(seed, 0x6d6f64656c)) {
    graph_.config_ = config;
  }

  int input(int path, std::int64_t channels) {
    Layer l = base_layer("frame" + std::to_string(path), "frame", LayerKind::input, Stage::input, -1);
    l.path = path;
    l.out_channels = channels;
    l.out_height = graph_.config_.base.height;
    l.out_width = graph_.config_.base.width;
    const int id = push(std::move(l));
    graph_.frame_inputs_.push_back(id);
    return id;
  }

  int conv(const std::string& role, Stage stage, int path, int in, std::int64_t out_channels, std::int64_t kernel) {
    const Layer& src = at(in);
    Layer l = base_layer(role, role, LayerKind::conv, stage, path);
    l.inputs = {in};
    l.in_channels = src.out_channels;
    l.out_channels = out_channels;
    l.kernel = kernel;
    l.padding = kernel / 2;
    l.out_height = src.out_height;
    l.out_width = src.out_width;
    l.weight = add_parameter(l.name + ".weight", {out_channels, l.in_channels, kernel, kernel},
                             static_cast<double>(l.in_channels * kernel * kernel));
    l.bias = add_parameter(l.name + ".bias", {out_channels}, 0.0);
    return push(std::move(l));
  }

  // 2x upsampling: K = 2, stride 2.
  int up(const std::string& role, Stage stage, int path, int in, std::int64_t out_channels) {
    const Layer& src = at(in);
    Layer l = base_layer(role, role, LayerKind::conv_transpose, stage, path);
    l.inputs = {in};
    l.in_channels = src.out_channels;
    l.out_channels = out_channels;
    l.kernel = 2;
    l.stride = 2;
    l.out_height = src.out_height * 2;
    l.out_width = src.out_width * 2;
    // Each output pixel of a K=2/stride-2 transpose conv sees one tap per input channel.
    l.weight = add_parameter(l.name + ".weight", {l.in_channels, out_channels, 2, 2},
                             static_cast<double>(l.in_channels));
    l.bias = add_parameter(l.name + ".bias", {out_channels}, 0.0);
    return push(std::move(l));
  }

  int unary(LayerKind kind, const std::string& role, Stage stage, int path, int in) {
    const Layer& src = at(in);
    Layer l = base_layer(role, role, kind, stage, path);
    l.inputs = {in};
    l.in_channels = l.out_channels = src.out_channels;
    l.out_height = src.out_height;
    l.out_width = src.out_width;
    if (kind == LayerKind::maxpool) {
      l.kernel = l.stride = 2;
      l.out_height /= 2;
      l.out_width /= 2;
    }
    return push(std::move(l));
  }

  int concat(const std::string& role, Stage stage, int path, const std::vector<int>& ins) {
    Layer l = base_layer(role, role, LayerKind::concat, stage, path);
    l.inputs = ins;
    for (int id : ins) l.in_channels += at(id).out_channels;
    l.out_channels = l.in_channels;
    l.out_height = at(ins.front()).out_height;
    l.out_width = at(ins.front()).out_width;
    return push(std::move(l));
  }

  // Shift across one node per path; returns the new per-path node ids.
  std::vector<int> shift(const std::string& role, Stage stage, const std::vector<int>& paths) {
    const auto& fraction = graph_.config_.shift_fraction;
    const std::int64_t channels = at(paths.front()).out_channels;
    const std::int64_t slice = channels * fraction.num / (2 * fraction.den);
    const int n = static_cast<int>(paths.size());
    std::vector<int> out;
    for (int p = 0; p < n; ++p) {
      Layer l = base_layer(role, role, LayerKind::shift, stage, p);
      l.inputs = {p > 0 ? paths[p - 1] : -1, paths[p], p + 1 < n ? paths[p + 1] : -1};
      l.in_channels = l.out_channels = channels;
      l.out_height = at(paths[p]).out_height;
      l.out_width = at(paths[p]).out_width;
      l.shift_slice = slice;
      out.push_back(push(std::move(l)));
    }
    return out;
  }

  // conv3x3 -> relu -> conv3x3 -> relu
  int block(const std::string& prefix, Stage stage, int path, int in, std::int64_t out_channels) {
    int x = conv(prefix + ".conv_a", stage, path, in, out_channels, 3);
    x = unary(LayerKind::relu, prefix + ".relu_a", stage, path, x);
    x = conv(prefix + ".conv_b", stage, path, x, out_channels, 3);
    return unary(LayerKind::relu, prefix + ".relu_b", stage, path, x);
  }

  const Layer& at(int id) const { return graph_.layers_.at(static_cast<std::size_t>(id)); }

  ModelGraph<T> finish(int output) {
    graph_.output_ = output;
    return std::move(graph_);
  }

 private:
  static Layer base_layer(const std::string& name, const std::string& role, LayerKind kind, Stage stage, int path) {
    Layer l;
    l.name = path >= 0 ? "p" + std::to_string(path) + "." + name : name;
    l.role = role;
    l.kind = kind;
    l.stage = stage;
    l.path = path;
    return l;
  }

  int push(Layer l) {
    graph_.layers_.push_back(std::move(l));
    return static_cast<int>(graph_.layers_.size()) - 1;
  }

  // fan_in > 0: Kaiming-normal weights with std sqrt(2 / fan_in); fan_in == 0: zeros.
  int add_parameter(const std::string& name, Shape shape, double fan_in) {
    Tensor<T> t(std::move(shape));
    if (fan_in > 0) {
      const double stddev = std::sqrt(2.0 / fan_in);
      for (auto& v : t.data()) v = static_cast<T>(stddev * rng_.normal());
    }
    t.set_requires_grad(true);
    graph_.params_.push_back({name, t});
    return static_cast<int>(graph_.params_.size()) - 1;
  }

  ModelGraph<T> graph_;
  Rng rng_;
};

namespace detail {

// Encoder levels + bottleneck. Split stages run one narrow path per frame and,
// when enabled, shift after every block. Returns the bottleneck node per path
// and fills skips[level][path].
template <class T>
std::vector<int> build_encoder(GraphBuilder<T>& b, const CPNetConfig& cfg, const std::vector<int>& inputs,
                               std::vector<std::vector<int>>& skips) {
  const auto& u = cfg.base;
  const bool split = cfg.split_encoder;
  const int paths = static_cast<int>(inputs.size());
  const int divisor = split ? u.n_frames : 1;
  std::vector<int> x = inputs;
  auto run_block = [&](const std::string& prefix, Stage stage, std::int64_t width) {
    for (int p = 0; p < paths; ++p) x[p] = b.block(prefix, stage, split ? p : -1, x[p], width / divisor);
    if (split && cfg.shift_enabled) x = b.shift(prefix + ".shift", stage, x);
  };
  for (int level = 0; level < u.depth; ++level) {
    const std::string prefix = "enc" + std::to_string(level);
    run_block(prefix, Stage::encoder, u.width_at(level));
    skips.push_back(x);
    for (int p = 0; p < paths; ++p) {
      x[p] = b.unary(LayerKind::maxpool, prefix + ".pool", Stage::encoder, split ? p : -1, x[p]);
    }
  }
  run_block("bottleneck", Stage::bottleneck, u.width_at(u.depth));
  return x;
}

template <class T>
std::vector<int> build_decoder(GraphBuilder<T>& b, const CPNetConfig& cfg, std::vector<int> x,
                               const std::vector<std::vector<int>>& skips, bool split) {
  const auto& u = cfg.base;
  const int paths = static_cast<int>(x.size());
  const int divisor = split ? u.n_frames : 1;
  for (int level = u.depth - 1; level >= 0; --level) {
    const std::string prefix = "dec" + std::to_string(level);
    const std::int64_t width = u.width_at(level) / divisor;
    for (int p = 0; p < paths; ++p) {
      const int path = split ? p : -1;
      const int up = b.up(prefix + ".up", Stage::decoder, path, x[p], width);
      const int joined = b.concat(prefix + ".concat", Stage::decoder, path, {up, skips[level][p]});
      x[p] = b.block(prefix, Stage::decoder, path, joined, width);
    }
    if (split && cfg.shift_enabled) x = b.shift(prefix + ".shift", Stage::decoder, x);
  }
  return x;
}

template <class T>
int build_head(GraphBuilder<T>& b, const UNetConfig& u, int x) {
  const int out = b.conv("head.out", Stage::head, -1, x, u.out_channels, 3);
  return b.unary(LayerKind::tanh, "head.tanh", Stage::head, -1, out);
}

}  // namespace detail

// Conventional U-Net over the channel-stacked clip (n_frames * 3 input channels).
template <class T>
ModelGraph<T> build_baseline_unet(const UNetConfig& cfg, std::uint64_t seed = 0) {
  const CPNetConfig full = baseline_config(cfg);
  full.validate();
  GraphBuilder<T> b(full, seed);
  std::vector<int> frames;
  for (int i = 0; i < cfg.n_frames; ++i) frames.push_back(b.input(i, cfg.in_channels_per_frame));
  const int stacked = b.concat("input.stack", Stage::input, -1, frames);
  std::vector<std::vector<int>> skips;
  auto x = detail::build_encoder(b, full, {stacked}, skips);
  x = detail::build_decoder(b, full, x, skips, false);
  return b.finish(detail::build_head(b, cfg, x.front()));
}

// Parallel-path variants. Encoder split: one narrow encoder per frame whose
// bottleneck features and skips are concatenated into a conventional decoder.
// Full split: narrow paths end to end; their outputs are concatenated and fused
// by a full-width block at the output resolution before the output conv.
template <class T>
ModelGraph<T> build_cpnet(const CPNetConfig& cfg, std::uint64_t seed = 0) {
  if (!cfg.split_encoder) {
    if (cfg.split_decoder) fail(ErrorKind::config, "CPNetConfig: split_decoder requires split_encoder");
    if (cfg.shift_enabled) fail(ErrorKind::config, "CPNetConfig: shift needs parallel paths");
    return build_baseline_unet<T>(cfg.base, seed);
  }
  cfg.validate();
  const auto& u = cfg.base;
  GraphBuilder<T> b(cfg, seed);
  std::vector<int> frames;
  for (int i = 0; i < u.n_frames; ++i) frames.push_back(b.input(i, u.in_channels_per_frame));
  std::vector<std::vector<int>> skips;
  auto x = detail::build_encoder(b, cfg, frames, skips);

  if (!cfg.split_decoder) {
    std::vector<std::vector<int>> joined_skips;
    for (int level = 0; level < u.depth; ++level) {
      joined_skips.push_back({b.concat("enc" + std::to_string(level) + ".join", Stage::decoder, -1, skips[level])});
    }
    const int joined = b.concat("bottleneck.join", Stage::decoder, -1, x);
    auto y = detail::build_decoder(b, cfg, {joined}, joined_skips, false);
    return b.finish(detail::build_head(b, u, y.front()));
  }

  x = detail::build_decoder(b, cfg, x, skips, true);
  int fused = b.concat("fuse.concat", Stage::fusion, -1, x);
  fused = b.block("fuse", Stage::fusion, -1, fused, u.width_at(0));
  return b.finish(detail::build_head(b, u, fused));
}

// Predicts frame t+1 from clip = n_frames tensors [B, 3, H, W] (oldest first).
template <class T>
Tensor<T> forward_predict(const ModelGraph<T>& model, const std::vector<Tensor<T>>& clip) {
  const auto& u = model.config().base;
  if (static_cast<int>(clip.size()) != u.n_frames) {
    fail(ErrorKind::shape, "forward_predict: clip has " + std::to_string(clip.size()) + " frames, model expects " +
                               std::to_string(u.n_frames));
  }
  for (const auto& f : clip) {
    detail::require_rank(f, 4, "forward_predict", "frame");
    if (f.dim(1) != u.in_channels_per_frame || f.dim(2) != u.height || f.dim(3) != u.width ||
        f.dim(0) != clip[0].dim(0)) {
      fail(ErrorKind::shape, "forward_predict: frame shape " + shape_str(f.shape()) + " does not match model input [B, " +
                                 std::to_string(u.in_channels_per_frame) + ", " + std::to_string(u.height) + ", " +
                                 std::to_string(u.width) + "]");
    }
  }

  const auto& layers = model.layers();
  const auto& params = model.parameters();
  std::vector<Tensor<T>> values(layers.size());
  // Release activations after their last consumer; the autograd graph keeps
  // what backward needs.
  std::vector<std::size_t> last_use(layers.size(), 0);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (int in : layers[i].inputs) {
      if (in >= 0) last_use[static_cast<std::size_t>(in)] = i;
    }
  }
  auto param = [&](int index) { return index >= 0 ? params[static_cast<std::size_t>(index)].value : Tensor<T>{}; };

  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    auto in = [&](std::size_t k) -> const Tensor<T>& { return values[static_cast<std::size_t>(l.inputs[k])]; };
    switch (l.kind) {
      case LayerKind::input: values[i] = clip[static_cast<std::size_t>(l.path)]; break;
      case LayerKind::conv: values[i] = conv2d(in(0), param(l.weight), param(l.bias), l.stride, l.padding); break;
      case LayerKind::conv_transpose:
        values[i] = conv_transpose2d(in(0), param(l.weight), param(l.bias), l.stride, l.padding);
        break;
      case LayerKind::relu: values[i] = relu(in(0)); break;
      case LayerKind::tanh: values[i] = tanh(in(0)); break;
      case LayerKind::maxpool: values[i] = maxpool2d(in(0), l.kernel); break;
      case LayerKind::concat: {
        std::vector<Tensor<T>> parts;
        for (std::size_t k = 0; k < l.inputs.size(); ++k) parts.push_back(in(k));
        values[i] = concat_channels(parts);
        break;
      }
      case LayerKind::shift:
        values[i] = shift_path(l.inputs[0] >= 0 ? &in(0) : nullptr, in(1), l.inputs[2] >= 0 ? &in(2) : nullptr,
                               l.shift_slice);
        break;
      default: fail(ErrorKind::state, "forward_predict: unknown layer kind");
    }
    for (int src : l.inputs) {
      if (src >= 0 && last_use[static_cast<std::size_t>(src)] == i) values[static_cast<std::size_t>(src)] = Tensor<T>{};
    }
  }
  return values[static_cast<std::size_t>(model.output())];
}

// --- checkpoint sections ----------------------------------------------------

inline std::map<std::string, std::string> config_to_map(const CPNetConfig& cfg) {
  const auto& u = cfg.base;
  return {
      {"in_channels_per_frame", std::to_string(u.in_channels_per_frame)},
      {"n_frames", std::to_string(u.n_frames)},
      {"base_channels", std::to_string(u.base_channels)},
      {"depth", std::to_string(u.depth)},
      {"out_channels", std::to_string(u.out_channels)},
      {"height", std::to_string(u.height)},
      {"width", std::to_string(u.width)},
      {"split_encoder", cfg.split_encoder ? "1" : "0"},
      {"split_decoder", cfg.split_decoder ? "1" : "0"},
      {"shift_enabled", cfg.shift_enabled ? "1" : "0"},
      {"shift_fraction", to_string(cfg.shift_fraction)},
  };
}

inline CPNetConfig config_from_map(const std::map<std::string, std::string>& kv) {
  auto get = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) fail(ErrorKind::io, "checkpoint config block lacks '" + key + "'");
    return it->second;
  };
  auto get_int = [&](const std::string& key) {
    try {
      return std::stoi(get(key));
    } catch (const std::logic_error&) {
      fail(ErrorKind::io, "checkpoint config value for '" + key + "' is not an integer");
    }
  };
  CPNetConfig cfg;
  cfg.base.in_channels_per_frame = get_int("in_channels_per_frame");
  cfg.base.n_frames = get_int("n_frames");
  cfg.base.base_channels = get_int("base_channels");
  cfg.base.depth = get_int("depth");
  cfg.base.out_channels = get_int("out_channels");
  cfg.base.height = get_int("height");
  cfg.base.width = get_int("width");
  cfg.split_encoder = get_int("split_encoder") != 0;
  cfg.split_decoder = get_int("split_decoder") != 0;
  cfg.shift_enabled = get_int("shift_enabled") != 0;
  cfg.shift_fraction = parse_rational(get("shift_fraction"));
  return cfg;
}

// Model section: config block (u32 count, then name/value string pairs),
// u32 parameter count, then named tensors in construction order.
template <class T>
void write_model(std::ostream& os, const ModelGraph<T>& model) {
  const auto kv = config_to_map(model.config());
  io::write_pod(os, static_cast<std::uint32_t>(kv.size()));
  for (const auto& [k, v] : kv) {
    io::write_string(os, k);
    io::write_string(os, v);
  }
  io::write_pod(os, static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& p : model.parameters()) write_named_tensor(os, p.name, p.value);
}

inline CPNetConfig read_model_config(std::istream& is) {
  const auto n = io::read_pod<std::uint32_t>(is);
  if (n > 1024) fail(ErrorKind::io, "implausible config block size");
  std::map<std::string, std::string> kv;
  for (std::uint32_t i = 0; i < n; ++i) {
    auto k = io::read_string(is);
    kv[k] = io::read_string(is);
  }
  return config_from_map(kv);
}

// Reads parameters into an already-built model; names and shapes must match
// one for one.
template <class T>
void read_parameters(std::istream& is, ModelGraph<T>& model) {
  const auto n = io::read_pod<std::uint32_t>(is);
  if (n != model.parameters().size()) {
    fail(ErrorKind::shape, "checkpoint has " + std::to_string(n) + " parameters, model has " +
                               std::to_string(model.parameters().size()));
  }
  for (const auto& p : model.parameters()) {
    auto [name, t] = read_named_tensor<T>(is);
    if (name != p.name) fail(ErrorKind::shape, "checkpoint parameter '" + name + "' where '" + p.name + "' expected");
    if (t.shape() != p.value.shape()) {
      fail(ErrorKind::shape, "checkpoint parameter '" + name + "' has shape " + shape_str(t.shape()) +
                                 ", model expects " + shape_str(p.value.shape()));
    }
    Tensor<T> dst = p.value;
    std::copy(t.data().begin(), t.data().end(), dst.data().begin());
  }
}

// Reads a model section written by write_model, rebuilding the graph from the
// stored config.
template <class T>
ModelGraph<T> read_model(std::istream& is) {
  const CPNetConfig cfg = read_model_config(is);
  auto model = build_cpnet<T>(cfg);
  read_parameters(is, model);
  return model;
}

}  // namespace cpnet
