#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cpnet/tensor.hpp"

namespace cpnet {

// Ordered video frames, each [3, H, W] with values in [-1, 1], plus one 0/1
// anomaly label per frame.
struct FrameSequence {
  std::vector<Tensor<float>> frames;
  std::vector<int> labels;
  std::string source;

  std::size_t length() const { return frames.size(); }
  std::int64_t height() const { return frames.empty() ? 0 : frames.front().dim(1); }
  std::int64_t width() const { return frames.empty() ? 0 : frames.front().dim(2); }

  void validate() const {
    if (labels.size() != frames.size()) {
      fail(ErrorKind::value, source + ": " + std::to_string(labels.size()) + " labels for " +
                                 std::to_string(frames.size()) + " frames");
    }
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto& f = frames[i];
      if (f.rank() != 3 || f.dim(0) != 3 || f.dim(1) != height() || f.dim(2) != width()) {
        fail(ErrorKind::shape, source + ": frame " + std::to_string(i) + " has shape " + shape_str(f.shape()));
      }
      for (float v : f.data()) {
        if (!(v >= -1.0f && v <= 1.0f)) {
          fail(ErrorKind::value, source + ": frame " + std::to_string(i) + " has a value outside [-1, 1]");
        }
      }
      if (labels[i] != 0 && labels[i] != 1) fail(ErrorKind::value, source + ": labels must be 0 or 1");
    }
  }
};

// Stacks [3, H, W] frames into one [B, 3, H, W] tensor of type T.
template <class T>
Tensor<T> stack_frames(const std::vector<const Tensor<float>*>& frames) {
  if (frames.empty()) fail(ErrorKind::shape, "stack_frames: no frames");
  const Shape& s = frames.front()->shape();
  Tensor<T> out({static_cast<std::int64_t>(frames.size()), s[0], s[1], s[2]});
  auto dst = out.data().begin();
  for (const auto* f : frames) {
    if (f->shape() != s) fail(ErrorKind::shape, "stack_frames: frames differ in shape");
    dst = std::transform(f->data().begin(), f->data().end(), dst, [](float v) { return static_cast<T>(v); });
  }
  return out;
}

}  // namespace cpnet
