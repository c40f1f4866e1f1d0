#pragma once

// Experiment commands behind the CLI. Everything lives under one run directory:
//
//   config/<command>.ini        effective configuration of the last invocation
//   data/manifest.txt           gen-data output, plus data/{train,test}/<video>/
//   models/<tag>/checkpoint.cpck, models/<tag>/train_log.csv
//   eval/<tag>/scores.csv, roc.csv, report.txt
//   analysis/<tag>.txt, <tag>.table.txt, summary.txt
//   ablate/summary.txt, summary.csv
//
// Primary outputs depend only on the effective config. Timings go to the log
// stream and never into files.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cpnet/complexity.hpp"
#include "cpnet/config.hpp"
#include "cpnet/data.hpp"
#include "cpnet/models.hpp"
#include "cpnet/scoring.hpp"
#include "cpnet/training.hpp"

namespace cpnet {

namespace fs = std::filesystem;

// Exit status per error category; 0 is success.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 3;
    case ErrorKind::io: return 4;
    case ErrorKind::shape: return 5;
    case ErrorKind::value: return 6;
    case ErrorKind::state: return 7;
    case ErrorKind::numeric: return 8;
  }
  return 1;
}

struct Streams {
  std::ostream& out;  // results
  std::ostream& log;  // progress and timings
};

inline void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) fail(ErrorKind::io, "failed writing '" + path.string() + "'");
}

inline std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void echo_config(const fs::path& run_dir, const std::string& command, const RunConfig& cfg) {
  write_text(run_dir / "config" / (command + ".ini"), render_config(cfg));
}

inline fs::path checkpoint_path(const fs::path& run_dir, const std::string& tag) {
  return run_dir / "models" / tag / "checkpoint.cpck";
}

// --- gen-data ---------------------------------------------------------------

struct GenDataResult {
  int n_train = 0;
  int n_test = 0;
  std::string manifest_digest;
};

inline GenDataResult cmd_gen_data(const RunConfig& cfg, const fs::path& run_dir, bool force, Streams io) {
  const auto data = run_dir / "data";
  if (fs::exists(data) && !fs::is_empty(data)) {
    if (!force) fail(ErrorKind::state, "'" + data.string() + "' already holds data; pass --force to regenerate");
    fs::remove_all(data);
  }
  fs::create_directories(data);
  GenDataResult r;
  std::vector<ManifestEntry> entries;
  for (const auto& v : plan_corpus(cfg.corpus)) {
    const auto seq = render_video(v);
    const auto rel = fs::path(v.role) / v.name;
    write_frame_dir(data / rel, seq);
    entries.push_back({v.role, rel.generic_string(), (rel / kLabelFile).generic_string(), hex64(digest_frames(seq))});
    (v.role == "train" ? r.n_train : r.n_test) += 1;
    io.log << "wrote " << rel.generic_string() << " (" << seq.length() << " frames"
           << (v.anomalous ? ", " + to_string(v.anomaly.kind) : std::string()) << ")\n";
  }
  write_manifest(data / "manifest.txt", entries);
  const auto text = read_text(data / "manifest.txt");
  r.manifest_digest = hex64(fnv1a(text.data(), text.size()));
  io.out << "videos train " << r.n_train << " test " << r.n_test << "\nmanifest digest " << r.manifest_digest << '\n';
  return r;
}

struct LoadedSplit {
  std::vector<std::string> names;
  std::vector<FrameSequence> videos;
};

// Videos of one role from the run's manifest, checked against their digests.
inline LoadedSplit load_split(const fs::path& run_dir, const std::string& role, const UNetConfig& u) {
  const auto data = run_dir / "data";
  if (!fs::exists(data / "manifest.txt")) fail(ErrorKind::state, "no dataset in '" + run_dir.string() + "'; run gen-data");
  LoadedSplit s;
  for (const auto& e : read_manifest(data / "manifest.txt")) {
    if (e.role != role) continue;
    auto seq = load_frame_dir(data / e.dir, u.height, u.width);
    if (hex64(digest_frames(seq)) != e.digest) fail(ErrorKind::io, "digest mismatch for " + e.dir);
    s.names.push_back(fs::path(e.dir).filename().string());
    s.videos.push_back(std::move(seq));
  }
  if (s.videos.empty()) fail(ErrorKind::state, "manifest lists no " + role + " videos");
  return s;
}

// --- train ------------------------------------------------------------------

struct TrainResult {
  std::string tag;
  int epochs = 0;
  std::vector<double> loss_history;
};

namespace detail {

inline std::string loss_log(const std::vector<double>& history, const TrainConfig& cfg) {
  std::ostringstream os;
  os << "epoch,lr,mean_loss\n" << std::setprecision(10);
  for (std::size_t e = 0; e < history.size(); ++e) {
    os << e << ',' << cosine_lr(static_cast<int>(e), cfg) << ',' << history[e] << '\n';
  }
  return os.str();
}

template <class T>
TrainResult train_impl(const RunConfig& cfg, const fs::path& run_dir, bool resume, Streams io) {
  const auto tag = cfg.model.tag();
  const auto ckpt = checkpoint_path(run_dir, tag);
  const auto train_set = load_split(run_dir, "train", cfg.model.base);
  std::optional<TrainState<T>> state;
  if (resume && fs::exists(ckpt)) {
    state.emplace(load_checkpoint<T>(ckpt.string()));
    if (config_to_map(state->model.config()) != config_to_map(cfg.model)) {
      fail(ErrorKind::config, "checkpoint " + ckpt.string() + " was trained with a different model config");
    }
    TrainConfig saved = state->config;
    saved.epochs = cfg.train.epochs;
    if (!(saved == cfg.train)) fail(ErrorKind::config, "resume may only change train.epochs");
    state->config = cfg.train;
    io.log << "resuming " << tag << " at epoch " << state->epoch << '\n';
  } else {
    state.emplace(TrainState<T>{build_cpnet<T>(cfg.model, cfg.model_seed), {}, cfg.train, 0, {}});
  }
  fs::create_directories(ckpt.parent_path());
  TrainHooks hooks;
  auto t0 = std::chrono::steady_clock::now();
  hooks.on_epoch = [&](const EpochRecord& r) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    t0 = std::chrono::steady_clock::now();
    io.log << tag << " epoch " << r.epoch << " lr " << r.lr << " loss " << r.mean_loss << " (" << r.steps
           << " steps, " << std::fixed << std::setprecision(1) << secs << " s)" << std::defaultfloat << std::setprecision(6) << '\n';
    save_checkpoint(ckpt.string(), *state);
    write_text(ckpt.parent_path() / "train_log.csv", loss_log(state->loss_history, state->config));
  };
  train(*state, train_set.videos, hooks);
  save_checkpoint(ckpt.string(), *state);
  write_text(ckpt.parent_path() / "train_log.csv", loss_log(state->loss_history, state->config));
  TrainResult r{tag, state->epoch, state->loss_history};
  io.out << "trained " << tag << " epochs " << r.epochs << std::setprecision(8) << " final loss "
         << (r.loss_history.empty() ? 0.0 : r.loss_history.back()) << std::defaultfloat << std::setprecision(6) << '\n';
  return r;
}

}  // namespace detail

inline TrainResult cmd_train(const RunConfig& cfg, const fs::path& run_dir, bool resume, Streams io) {
  return cfg.train.precision == Precision::f64 ? detail::train_impl<double>(cfg, run_dir, resume, io)
                                               : detail::train_impl<float>(cfg, run_dir, resume, io);
}

// --- eval -------------------------------------------------------------------

struct EvalResult {
  std::string tag;
  double auc = 0;
  MarginReport margin;
  std::size_t frames = 0;
};

namespace detail {

template <class T>
EvalResult eval_impl(const RunConfig& cfg, const fs::path& run_dir, const fs::path& ckpt, Streams io) {
  const auto state = load_checkpoint<T>(ckpt.string());
  const auto& model = state.model;
  const auto tag = model.tag();
  const auto test_set = load_split(run_dir, "test", model.config().base);
  std::vector<ScoreSeries> series;
  for (std::size_t i = 0; i < test_set.videos.size(); ++i) {
    series.push_back(score_video(model, test_set.videos[i], test_set.names[i], cfg.psnr_mode, cfg.eval_batch));
  }
  const auto roc = frame_level_auc(series);
  EvalResult r{tag, roc.auc, margin_report(series), 0};
  for (const auto& s : series) r.frames += s.score.size();

  const auto dir = run_dir / "eval" / tag;
  std::ostringstream scores, curve, report;
  write_scores_csv(scores, series, cfg.decision);
  write_roc_csv(curve, roc);
  report << std::setprecision(10) << "model=" << tag << "\nauc=" << r.auc << "\nframes=" << r.frames
         << "\nn_normal=" << r.margin.n_normal << "\nn_abnormal=" << r.margin.n_abnormal
         << "\npsnr_normal=" << r.margin.psnr_normal << "\npsnr_abnormal=" << r.margin.psnr_abnormal
         << "\npsnr_margin=" << r.margin.psnr_margin << "\nscore_normal=" << r.margin.score_normal
         << "\nscore_abnormal=" << r.margin.score_abnormal << "\nscore_margin=" << r.margin.score_margin << '\n';
  write_text(dir / "scores.csv", scores.str());
  write_text(dir / "roc.csv", curve.str());
  write_text(dir / "report.txt", report.str());
  io.out << std::fixed << std::setprecision(4) << "model " << tag << "\nAUC " << r.auc << "\nPSNR normal "
         << r.margin.psnr_normal << " abnormal " << r.margin.psnr_abnormal << " margin " << r.margin.psnr_margin
         << "\nscore normal " << r.margin.score_normal << " abnormal " << r.margin.score_abnormal << " margin "
         << r.margin.score_margin << std::defaultfloat << std::setprecision(6) << '\n';
  return r;
}

}  // namespace detail

// An empty checkpoint path means models/<tag>/checkpoint.cpck for the configured variant.
inline EvalResult cmd_eval(const RunConfig& cfg, const fs::path& run_dir, fs::path ckpt, Streams io) {
  if (ckpt.empty()) {
    ckpt = checkpoint_path(run_dir, cfg.model.tag());
    if (!fs::exists(ckpt)) fail(ErrorKind::state, "no checkpoint for " + cfg.model.tag() + " in '" + run_dir.string() + "'; run train");
  }
  return cfg.train.precision == Precision::f64 ? detail::eval_impl<double>(cfg, run_dir, ckpt, io)
                                               : detail::eval_impl<float>(cfg, run_dir, ckpt, io);
}

// --- analyze ----------------------------------------------------------------

inline const std::vector<std::string>& table_variants() {
  static const std::vector<std::string> tags{"baseline", "cpnet075", "cpnet075_shift", "cpnet037", "cpnet037_shift"};
  return tags;
}

struct AnalyzeResult {
  std::vector<ComplexityReport> reports;  // in table_variants() order
  InteriorLaw full_split_law;
  InteriorLaw encoder_split_law;
  bool shift_free = false;  // shift on/off pairs have identical MAC totals
};

inline AnalyzeResult analyze(const RunConfig& cfg) {
  AnalyzeResult r;
  for (const auto& tag : table_variants()) {
    const auto model = build_cpnet<float>(config_for_tag(cfg.model, tag), cfg.model_seed);
    r.reports.push_back(count_model(model));
  }
  const int n = cfg.model.base.n_frames;
  r.encoder_split_law = check_interior_law(r.reports[1], r.reports[0], n);
  r.full_split_law = check_interior_law(r.reports[3], r.reports[0], n);
  r.shift_free = r.reports[1].total_macs == r.reports[2].total_macs && r.reports[3].total_macs == r.reports[4].total_macs;
  return r;
}

inline std::string render_analysis(const AnalyzeResult& r, bool as_flops) {
  std::ostringstream os;
  const auto& base = r.reports[0];
  os << std::left << std::setw(16) << "variant" << std::right << std::setw(16) << (as_flops ? "FLOPs" : "MACs")
     << std::setw(12) << "params" << std::setw(10) << "MAC %" << std::setw(10) << "param %" << '\n';
  for (std::size_t i = 0; i < r.reports.size(); ++i) {
    const auto ratio = compare(r.reports[i], base);
    os << std::left << std::setw(16) << table_variants()[i] << std::right << std::setw(16)
       << format_count(r.reports[i].total_macs, as_flops) << std::setw(12) << r.reports[i].total_params
       << std::setw(10) << format_percent(ratio.macs) << std::setw(10) << format_percent(ratio.params) << '\n';
  }
  auto law_line = [&](const char* name, const InteriorLaw& law) {
    os << name << " interior MAC ratio " << law.aggregate.num << '/' << law.aggregate.den << " = "
       << format_percent(law.aggregate) << " over " << law.rows.size() << " layer roles, per-layer 1/n^2 "
       << (law.per_layer_exact ? "exact" : "NOT exact") << '\n';
  };
  law_line("full split", r.full_split_law);
  law_line("encoder split", r.encoder_split_law);
  os << "shift on/off MAC totals " << (r.shift_free ? "identical" : "DIFFER") << '\n';
  return os.str();
}

inline AnalyzeResult cmd_analyze(const RunConfig& cfg, const fs::path& run_dir, bool as_flops, Streams io) {
  auto r = analyze(cfg);
  const auto dir = run_dir / "analysis";
  for (std::size_t i = 0; i < r.reports.size(); ++i) {
    std::ostringstream kv, table;
    write_report_kv(kv, r.reports[i]);
    render_table(table, r.reports[i], as_flops);
    write_text(dir / (table_variants()[i] + ".txt"), kv.str());
    write_text(dir / (table_variants()[i] + ".table.txt"), table.str());
  }
  const auto summary = render_analysis(r, as_flops);
  write_text(dir / "summary.txt", summary);
  io.out << summary;
  return r;
}

// --- ablate -----------------------------------------------------------------

struct AblationRow {
  std::string tag;
  double auc = 0;
  double psnr_margin = 0;
  double score_margin = 0;
  double final_loss = 0;
  std::uint64_t macs = 0;
  std::uint64_t params = 0;
  Ratio mac_ratio;
  Ratio param_ratio;
};

inline std::string render_ablation(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "variant" << std::right << std::setw(8) << "AUC" << std::setw(12)
     << "PSNR marg" << std::setw(12) << "score marg" << std::setw(14) << "MACs" << std::setw(10) << "params"
     << std::setw(8) << "MAC %" << std::setw(9) << "param %" << std::setw(13) << "final loss" << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(16) << r.tag << std::right << std::fixed << std::setprecision(4) << std::setw(8)
       << r.auc << std::setw(12) << r.psnr_margin << std::setw(12) << r.score_margin << std::setw(14) << r.macs
       << std::setw(10) << r.params << std::setw(8) << format_percent(r.mac_ratio) << std::setw(9)
       << format_percent(r.param_ratio) << std::setw(13) << std::setprecision(6) << r.final_loss
       << std::defaultfloat << std::setprecision(6) << '\n';
  }
  return os.str();
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "variant,auc,psnr_margin,score_margin,macs,params,mac_ratio,param_ratio,final_loss\n"
     << std::setprecision(12);
  for (const auto& r : rows) {
    os << r.tag << ',' << r.auc << ',' << r.psnr_margin << ',' << r.score_margin << ',' << r.macs << ',' << r.params
       << ',' << r.mac_ratio.value() << ',' << r.param_ratio.value() << ',' << r.final_loss << '\n';
  }
  return os.str();
}

// Trains and evaluates every ablate.variants tag from scratch on the run's
// dataset, generating the dataset first when the run has none.
inline std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, const fs::path& run_dir, Streams io) {
  std::ostringstream quiet;
  Streams inner{quiet, io.log};
  if (!fs::exists(run_dir / "data" / "manifest.txt")) cmd_gen_data(cfg, run_dir, true, inner);
  const auto baseline = count_model(build_cpnet<float>(config_for_tag(cfg.model, "baseline"), cfg.model_seed));
  std::vector<AblationRow> rows;
  for (const auto& tag : cfg.ablate_variants) {
    RunConfig c = cfg;
    c.model = config_for_tag(cfg.model, tag);
    const auto t0 = std::chrono::steady_clock::now();
    const auto trained = cmd_train(c, run_dir, false, inner);
    const auto evaluated = cmd_eval(c, run_dir, {}, inner);
    const auto cost = count_model(build_cpnet<float>(c.model, c.model_seed));
    const auto ratio = compare(cost, baseline);
    rows.push_back({tag, evaluated.auc, evaluated.margin.psnr_margin, evaluated.margin.score_margin,
                    trained.loss_history.back(), cost.total_macs, cost.total_params, ratio.macs, ratio.params});
    io.log << tag << " done: AUC " << evaluated.auc << " in " << std::fixed << std::setprecision(1)
           << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s"
           << std::defaultfloat << std::setprecision(6) << '\n';
  }
  const auto table = render_ablation(rows);
  write_text(run_dir / "ablate" / "summary.txt", table);
  write_text(run_dir / "ablate" / "summary.csv", ablation_csv(rows));
  io.out << table;
  return rows;
}

}  // namespace cpnet
