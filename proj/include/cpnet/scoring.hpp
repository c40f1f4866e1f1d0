#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "cpnet/frames.hpp"
#include "cpnet/models.hpp"
#include "cpnet/training.hpp"

namespace cpnet {

enum class PsnrMode { standard, literal };

inline constexpr double kPsnrCap = 300.0;

// PSNR in dB after mapping both frames from [-1, 1] to [0, 1].
//   standard: 10 log10(1 / MSE)
//   literal:  10 log10(max(pred) / SSE), with SSE the unnormalised squared error
// Results are clamped to [-300, 300]; zero error gives +300.
template <class T>
double psnr(const Tensor<T>& pred, const Tensor<T>& gt, PsnrMode mode = PsnrMode::standard) {
  if (pred.shape() != gt.shape()) {
    fail(ErrorKind::shape, "psnr: shapes " + shape_str(pred.shape()) + " and " + shape_str(gt.shape()) + " differ");
  }
  const auto p = pred.data();
  const auto g = gt.data();
  double sse = 0;
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = (static_cast<double>(p[i]) + 1.0) / 2.0;
    const double b = (static_cast<double>(g[i]) + 1.0) / 2.0;
    sse += (a - b) * (a - b);
    peak = std::max(peak, a);
  }
  if (sse == 0) return kPsnrCap;
  const double db = mode == PsnrMode::standard ? 10.0 * std::log10(static_cast<double>(p.size()) / sse)
                                               : 10.0 * std::log10(peak / sse);
  if (std::isnan(db)) return -kPsnrCap;
  return std::clamp(db, -kPsnrCap, kPsnrCap);
}

// Per-video min-max normalisation; a constant series maps to 0.5.
inline std::vector<double> normalize_scores(const std::vector<double>& series) {
  if (series.empty()) fail(ErrorKind::value, "normalize_scores: empty series");
  const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
  const double min = *lo, range = *hi - *lo;
  std::vector<double> out;
  out.reserve(series.size());
  for (double p : series) out.push_back(range > 0 ? (p - min) / range : 0.5);
  return out;
}

enum class Polarity { low_score_abnormal, high_score_abnormal };

struct DecisionConfig {
  double gamma = 0.5;
  Polarity polarity = Polarity::low_score_abnormal;

  void validate() const {
    if (!(gamma > 0 && gamma < 1)) fail(ErrorKind::config, "gamma must lie in (0, 1)");
  }
};

// 1 = abnormal. Ties (score == gamma) are normal under both polarities.
inline int decide(double score, const DecisionConfig& cfg) {
  return cfg.polarity == Polarity::low_score_abnormal ? (score < cfg.gamma ? 1 : 0) : (score > cfg.gamma ? 1 : 0);
}

struct RocPoint {
  double threshold;  // frames with anomaly score >= threshold are flagged
  double fpr;
  double tpr;
};

struct RocResult {
  double auc = 0;
  std::vector<RocPoint> curve;  // from (0, 0) to (1, 1)
};

// ROC over anomaly scores (higher = more abnormal) with labels 1 = abnormal.
// Tied scores form one step, so the trapezoidal area equals the Mann-Whitney
// statistic P(abnormal > normal) + P(tie) / 2; it is accumulated in integers.
inline RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) fail(ErrorKind::shape, "roc_auc: scores and labels differ in length");
  std::int64_t P = 0, N = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) fail(ErrorKind::value, "roc_auc: labels must be 0 or 1");
    if (std::isnan(scores[i])) fail(ErrorKind::value, "roc_auc: NaN score");
    (labels[i] ? P : N) += 1;
  }
  if (P == 0 || N == 0) fail(ErrorKind::value, "roc_auc: need both normal and abnormal frames");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult r;
  r.curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::int64_t tp = 0, fp = 0;
  unsigned __int128 twice_area = 0;  // sum of (fp - fp_prev) * (tp + tp_prev)
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    const std::int64_t tp_prev = tp, fp_prev = fp;
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] ? tp : fp) += 1;
    twice_area += static_cast<unsigned __int128>(fp - fp_prev) * static_cast<unsigned __int128>(tp + tp_prev);
    r.curve.push_back({s, static_cast<double>(fp) / static_cast<double>(N), static_cast<double>(tp) / static_cast<double>(P)});
  }
  r.auc = static_cast<double>(twice_area) / (2.0 * static_cast<double>(P) * static_cast<double>(N));
  return r;
}

// Frames 0 .. window-1 of a video have no prediction and are not scored.
struct ScoreSeries {
  std::string video_id;
  std::vector<int> frame_index;
  std::vector<double> psnr;
  std::vector<double> score;  // normalised PSNR, in [0, 1]
  std::vector<int> labels;
};

inline ScoreSeries make_series(std::string video_id, std::vector<int> frame_index, std::vector<double> psnr_db,
                               std::vector<int> labels) {
  if (frame_index.size() != psnr_db.size() || labels.size() != psnr_db.size()) {
    fail(ErrorKind::shape, "ScoreSeries: misaligned arrays for " + video_id);
  }
  ScoreSeries s{std::move(video_id), std::move(frame_index), std::move(psnr_db), {}, std::move(labels)};
  s.score = normalize_scores(s.psnr);
  return s;
}

// Anomaly scores 1 - S(t) and labels concatenated in series order.
inline RocResult frame_level_auc(const std::vector<ScoreSeries>& series) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.score.size(); ++i) {
      scores.push_back(1.0 - s.score[i]);
      labels.push_back(s.labels[i]);
    }
  }
  return roc_auc(scores, labels);
}

struct MarginReport {
  double psnr_normal = 0, psnr_abnormal = 0, psnr_margin = 0;
  double score_normal = 0, score_abnormal = 0, score_margin = 0;
  std::int64_t n_normal = 0, n_abnormal = 0;
};

// Means over all normal and all abnormal frames; margins are normal minus abnormal.
inline MarginReport margin_report(const std::vector<ScoreSeries>& series) {
  MarginReport m;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
      if (s.labels[i]) {
        m.psnr_abnormal += s.psnr[i];
        m.score_abnormal += s.score[i];
        ++m.n_abnormal;
      } else {
        m.psnr_normal += s.psnr[i];
        m.score_normal += s.score[i];
        ++m.n_normal;
      }
    }
  }
  if (m.n_normal == 0 || m.n_abnormal == 0) fail(ErrorKind::value, "margin_report: need both classes");
  m.psnr_normal /= static_cast<double>(m.n_normal);
  m.score_normal /= static_cast<double>(m.n_normal);
  m.psnr_abnormal /= static_cast<double>(m.n_abnormal);
  m.score_abnormal /= static_cast<double>(m.n_abnormal);
  m.psnr_margin = m.psnr_normal - m.psnr_abnormal;
  m.score_margin = m.score_normal - m.score_abnormal;
  return m;
}

// Predicts every frame from its n_frames predecessors and scores it.
template <class T>
ScoreSeries score_video(const ModelGraph<T>& model, const FrameSequence& video, const std::string& video_id,
                        PsnrMode mode = PsnrMode::standard, int batch = 8) {
  const int window = model.config().base.n_frames;
  const auto clips = make_clips(video, window);
  if (clips.empty()) fail(ErrorKind::value, "score_video: " + video_id + " is too short to score");
  NoGradGuard no_grad;
  std::vector<int> index;
  std::vector<double> values;
  std::vector<int> labels;
  for (std::size_t start = 0; start < clips.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t n = std::min(clips.size() - start, static_cast<std::size_t>(batch));
    const std::vector<FrameSequence> one{video};
    auto [inputs, target] = assemble_batch<T>(one, std::span<const Clip>(clips.data() + start, n), window);
    const auto pred = forward_predict(model, inputs);
    const std::int64_t frame_size = pred.numel() / pred.dim(0);
    for (std::size_t k = 0; k < n; ++k) {
      const Shape s{pred.dim(1), pred.dim(2), pred.dim(3)};
      const auto off = static_cast<std::ptrdiff_t>(k) * frame_size;
      Tensor<T> p(s, std::vector<T>(pred.data().begin() + off, pred.data().begin() + off + frame_size));
      Tensor<T> g(s, std::vector<T>(target.data().begin() + off, target.data().begin() + off + frame_size));
      const auto t = clips[start + k].target;
      index.push_back(static_cast<int>(t));
      values.push_back(psnr(p, g, mode));
      labels.push_back(video.labels[t]);
    }
  }
  return make_series(video_id, std::move(index), std::move(values), std::move(labels));
}

// CSV: video_id,frame_index,psnr_db,score,label,decision
inline void write_scores_csv(std::ostream& os, const std::vector<ScoreSeries>& series, const DecisionConfig& cfg) {
  os << "video_id,frame_index,psnr_db,score,label,decision\n";
  os << std::setprecision(10);
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.score.size(); ++i) {
      os << s.video_id << ',' << s.frame_index[i] << ',' << s.psnr[i] << ',' << s.score[i] << ',' << s.labels[i]
         << ',' << decide(s.score[i], cfg) << '\n';
    }
  }
}

// CSV: threshold,fpr,tpr (the first row has threshold inf)
inline void write_roc_csv(std::ostream& os, const RocResult& roc) {
  os << "threshold,fpr,tpr\n" << std::setprecision(10);
  for (const auto& p : roc.curve) os << p.threshold << ',' << p.fpr << ',' << p.tpr << '\n';
}

}  // namespace cpnet
