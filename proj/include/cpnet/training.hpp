#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cpnet/frames.hpp"
#include "cpnet/models.hpp"
#include "cpnet/ops.hpp"
#include "cpnet/rng.hpp"
#include "cpnet/serialize.hpp"

namespace cpnet {

enum class Reduction { sum, mean };
enum class Precision { f32, f64 };

struct TrainConfig {
  double lr0 = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch = 4;
  int epochs = 10;
  std::uint64_t seed = 0;
  Precision precision = Precision::f32;
  Reduction reduction = Reduction::sum;

  void validate() const {
    if (!(lr0 > 0)) fail(ErrorKind::config, "lr0 must be positive");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
      fail(ErrorKind::config, "beta1 and beta2 must lie in [0, 1)");
    }
    if (!(adam_eps > 0)) fail(ErrorKind::config, "adam_eps must be positive");
    if (batch < 1) fail(ErrorKind::config, "batch must be >= 1");
    if (epochs < 1) fail(ErrorKind::config, "epochs must be >= 1");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Clip k of a video: inputs are frames [first, first + window), the target is
// frame first + window.
struct Clip {
  std::size_t video = 0;
  std::size_t first = 0;
  std::size_t target = 0;
};

inline std::vector<Clip> make_clips(const FrameSequence& video, int window = 4, std::size_t video_id = 0) {
  std::vector<Clip> clips;
  const auto w = static_cast<std::size_t>(window);
  for (std::size_t k = 0; k + w < video.length(); ++k) clips.push_back({video_id, k, k + w});
  return clips;
}

// ||pred - target||^2, summed (the default) or averaged over elements.
template <class T>
Tensor<T> loss_l2(const Tensor<T>& pred, const Tensor<T>& target, Reduction reduction = Reduction::sum) {
  if (pred.shape() != target.shape()) {
    fail(ErrorKind::shape, "loss_l2: shapes " + shape_str(pred.shape()) + " and " + shape_str(target.shape()) +
                               " differ");
  }
  const auto p = pred.data();
  const auto t = target.data();
  double acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
    acc += d * d;
  }
  const double factor = reduction == Reduction::mean ? 1.0 / static_cast<double>(p.size()) : 1.0;
  auto pi = pred.impl_ptr();
  auto ti = target.impl_ptr();
  return record_op<T>("loss_l2", Shape{}, std::vector<T>{static_cast<T>(acc * factor)}, {pred, target},
                      [pi, ti, factor](std::span<const T> g) {
                        const T k = static_cast<T>(2 * factor) * g[0];
                        if (pi->requires_grad) {
                          auto gp = detail::grad_buffer(*pi);
                          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += k * (pi->data[i] - ti->data[i]);
                        }
                        if (ti->requires_grad) {
                          auto gt = detail::grad_buffer(*ti);
                          for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= k * (pi->data[i] - ti->data[i]);
                        }
                      });
}

// lr0 * (1 + cos(pi * epoch / epochs)) / 2
inline double cosine_lr(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs) {
    fail(ErrorKind::value, "cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                               std::to_string(cfg.epochs) + ")");
  }
  return cfg.lr0 * (1.0 + std::cos(std::numbers::pi * epoch / cfg.epochs)) / 2.0;
}

template <class T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::int64_t step = 0;
};

// One bias-corrected Adam update of every parameter from its current gradient
// (a parameter without a gradient buffer counts as zero gradient).
template <class T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state, double lr, const TrainConfig& cfg) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(static_cast<std::size_t>(p.numel()), T(0));
      state.v.emplace_back(static_cast<std::size_t>(p.numel()), T(0));
    }
  }
  if (state.m.size() != params.size()) fail(ErrorKind::shape, "adam_step: moment count does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) continue;
    for (T g : params[i].grad()) {
      if (std::isnan(g)) fail(ErrorKind::numeric, "adam_step: NaN gradient in parameter " + std::to_string(i));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != static_cast<std::size_t>(params[i].numel())) fail(ErrorKind::shape, "adam_step: moment shape");
    auto w = params[i].data();
    const bool has = params[i].has_grad();
    const auto g = has ? params[i].grad() : std::span<const T>{};
    for (std::size_t j = 0; j < w.size(); ++j) {
      const T gj = has ? g[j] : T(0);
      m[j] = b1 * m[j] + (T(1) - b1) * gj;
      v[j] = b2 * v[j] + (T(1) - b2) * gj * gj;
      const double mhat = static_cast<double>(m[j]) / c1;
      const double vhat = static_cast<double>(v[j]) / c2;
      w[j] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
    }
  }
}

template <class T>
struct TrainState {
  ModelGraph<T> model;
  AdamState<T> adam;
  TrainConfig config;
  int epoch = 0;  // next epoch to run
  std::vector<double> loss_history;  // mean per-clip loss of each finished epoch
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double mean_loss = 0;
  std::int64_t steps = 0;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  int max_epochs = -1;  // stop after this many epochs in this call; -1 runs to the end
};

// Materializes a batch of clips as n_frames input tensors plus the target.
template <class T>
std::pair<std::vector<Tensor<T>>, Tensor<T>> assemble_batch(const std::vector<FrameSequence>& videos,
                                                            std::span<const Clip> clips, int window) {
  std::vector<Tensor<T>> inputs;
  for (int f = 0; f < window; ++f) {
    std::vector<const Tensor<float>*> frames;
    for (const auto& c : clips) frames.push_back(&videos[c.video].frames[c.first + static_cast<std::size_t>(f)]);
    inputs.push_back(stack_frames<T>(frames));
  }
  std::vector<const Tensor<float>*> targets;
  for (const auto& c : clips) targets.push_back(&videos[c.video].frames[c.target]);
  return {std::move(inputs), stack_frames<T>(targets)};
}

inline std::vector<Clip> collect_clips(const std::vector<FrameSequence>& videos, int window) {
  std::vector<Clip> all;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    auto clips = make_clips(videos[v], window, v);
    all.insert(all.end(), clips.begin(), clips.end());
  }
  return all;
}

// Runs epochs state.epoch .. config.epochs - 1. Each epoch shuffles all clips
// with a stream seeded by (seed, epoch), so resuming from a checkpoint replays
// exactly the batches an uninterrupted run would have seen.
template <class T>
void train(TrainState<T>& state, const std::vector<FrameSequence>& videos, const TrainHooks& hooks = {}) {
  const TrainConfig& cfg = state.config;
  cfg.validate();
  const int window = state.model.config().base.n_frames;
  auto clips = collect_clips(videos, window);
  if (clips.empty()) fail(ErrorKind::value, "train: dataset yields no clips");
  auto params = state.model.parameter_tensors();
  int ran = 0;
  while (state.epoch < cfg.epochs && (hooks.max_epochs < 0 || ran < hooks.max_epochs)) {
    const int epoch = state.epoch;
    const double lr = cosine_lr(epoch, cfg);
    std::vector<std::size_t> order(clips.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(hash_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(std::span<std::size_t>(order));

    double total = 0;
    std::int64_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      std::vector<Clip> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(clips[order[i]]);
      auto [inputs, target] = assemble_batch<T>(videos, batch, window);
      for (auto& p : params) p.clear_grad();
      auto loss = loss_l2(forward_predict(state.model, inputs), target, cfg.reduction);
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        fail(ErrorKind::numeric, "training diverged: loss " + std::to_string(value) + " at epoch " +
                                     std::to_string(epoch) + " step " + std::to_string(steps) + " (lr " +
                                     std::to_string(lr) + ")");
      }
      backward(loss);
      adam_step(params, state.adam, lr, cfg);
      total += cfg.reduction == Reduction::mean ? value * static_cast<double>(batch.size()) : value;
      ++steps;
    }
    for (auto& p : params) p.clear_grad();
    const double mean_loss = total / static_cast<double>(clips.size());
    state.loss_history.push_back(mean_loss);
    ++state.epoch;
    ++ran;
    if (hooks.on_epoch) hooks.on_epoch({epoch, lr, mean_loss, steps});
  }
}

// --- checkpoint file --------------------------------------------------------
//
//   magic "CPCK", u32 version (1)
//   model section (see write_model)
//   train config block: u32 count, name/value string pairs
//   i64 adam step, u32 moment count, then (m, v) tensors per parameter
//   i32 next epoch, u32 history length, f64 mean losses

namespace detail {

// Shortest text that parses back to the same double.
inline std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

}  // namespace detail

inline std::map<std::string, std::string> train_config_to_map(const TrainConfig& c) {
  const auto num = detail::shortest;
  return {{"lr0", num(c.lr0)},
          {"beta1", num(c.beta1)},
          {"beta2", num(c.beta2)},
          {"adam_eps", num(c.adam_eps)},
          {"batch", std::to_string(c.batch)},
          {"epochs", std::to_string(c.epochs)},
          {"seed", std::to_string(c.seed)},
          {"precision", c.precision == Precision::f32 ? "f32" : "f64"},
          {"reduction", c.reduction == Reduction::sum ? "sum" : "mean"}};
}

inline TrainConfig train_config_from_map(const std::map<std::string, std::string>& kv) {
  auto get = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) fail(ErrorKind::io, "checkpoint train block lacks '" + k + "'");
    return it->second;
  };
  TrainConfig c;
  try {
    c.lr0 = std::stod(get("lr0"));
    c.beta1 = std::stod(get("beta1"));
    c.beta2 = std::stod(get("beta2"));
    c.adam_eps = std::stod(get("adam_eps"));
    c.batch = std::stoi(get("batch"));
    c.epochs = std::stoi(get("epochs"));
    c.seed = std::stoull(get("seed"));
  } catch (const std::logic_error&) {
    fail(ErrorKind::io, "checkpoint train block has a malformed number");
  }
  c.precision = get("precision") == "f64" ? Precision::f64 : Precision::f32;
  c.reduction = get("reduction") == "mean" ? Reduction::mean : Reduction::sum;
  return c;
}

template <class T>
void write_checkpoint(std::ostream& os, const TrainState<T>& s) {
  os.write("CPCK", 4);
  io::write_pod(os, std::uint32_t{1});
  write_model(os, s.model);
  const auto kv = train_config_to_map(s.config);
  io::write_pod(os, static_cast<std::uint32_t>(kv.size()));
  for (const auto& [k, v] : kv) {
    io::write_string(os, k);
    io::write_string(os, v);
  }
  io::write_pod(os, static_cast<std::int64_t>(s.adam.step));
  io::write_pod(os, static_cast<std::uint32_t>(s.adam.m.size()));
  for (std::size_t i = 0; i < s.adam.m.size(); ++i) {
    const Shape shape{static_cast<std::int64_t>(s.adam.m[i].size())};
    write_tensor(os, Tensor<T>(shape, s.adam.m[i]));
    write_tensor(os, Tensor<T>(shape, s.adam.v[i]));
  }
  io::write_pod(os, static_cast<std::int32_t>(s.epoch));
  io::write_pod(os, static_cast<std::uint32_t>(s.loss_history.size()));
  for (double l : s.loss_history) io::write_pod(os, l);
  if (!os) fail(ErrorKind::io, "failed writing checkpoint");
}

template <class T>
TrainState<T> read_checkpoint(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "CPCK") fail(ErrorKind::io, "not a checkpoint file");
  if (io::read_pod<std::uint32_t>(is) != 1) fail(ErrorKind::io, "unsupported checkpoint version");
  TrainState<T> s{read_model<T>(is), {}, {}, 0, {}};
  const auto n = io::read_pod<std::uint32_t>(is);
  if (n > 1024) fail(ErrorKind::io, "implausible train config block");
  std::map<std::string, std::string> kv;
  for (std::uint32_t i = 0; i < n; ++i) {
    auto k = io::read_string(is);
    kv[k] = io::read_string(is);
  }
  s.config = train_config_from_map(kv);
  s.adam.step = io::read_pod<std::int64_t>(is);
  const auto moments = io::read_pod<std::uint32_t>(is);
  if (moments != 0 && moments != s.model.parameters().size()) fail(ErrorKind::io, "checkpoint moment count mismatch");
  for (std::uint32_t i = 0; i < moments; ++i) {
    auto m = read_tensor<T>(is);
    auto v = read_tensor<T>(is);
    if (m.numel() != s.model.parameters()[i].value.numel() || v.numel() != m.numel()) {
      fail(ErrorKind::io, "checkpoint moment size mismatch");
    }
    s.adam.m.emplace_back(m.data().begin(), m.data().end());
    s.adam.v.emplace_back(v.data().begin(), v.data().end());
  }
  s.epoch = io::read_pod<std::int32_t>(is);
  const auto h = io::read_pod<std::uint32_t>(is);
  if (h > 1u << 20) fail(ErrorKind::io, "implausible loss history length");
  for (std::uint32_t i = 0; i < h; ++i) s.loss_history.push_back(io::read_pod<double>(is));
  return s;
}

template <class T>
void save_checkpoint(const std::string& path, const TrainState<T>& s) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot open '" + path + "' for writing");
  write_checkpoint(os, s);
}

template <class T>
TrainState<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io, "cannot open checkpoint '" + path + "'");
  return read_checkpoint<T>(is);
}

}  // namespace cpnet
