#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cpnet/cpnet.hpp"

using namespace cpnet;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("cpnet_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small enough to train in well under a second per epoch; base 32 keeps the
// quarter-width shift slice integral.
RunConfig tiny() {
  KeyValues kv{{"model.base_channels", "32"}, {"model.depth", "2"},       {"model.height", "16"},
               {"model.width", "16"},         {"data.n_train", "2"},      {"data.n_test", "2"},
               {"data.train_length", "10"},   {"data.test_length", "24"}, {"data.min_half", "1"},
               {"data.max_half", "2"},        {"data.max_speed", "1.5"},  {"data.n_sprites", "2"},
               {"train.epochs", "2"},         {"train.seed", "5"}};
  auto cfg = from_key_values(kv);
  cfg.validate();
  return cfg;
}

struct Quiet {
  std::ostringstream out, log;
  Streams io() { return {out, log}; }
};

std::map<std::string, std::string> read_report(const fs::path& path) {
  std::map<std::string, std::string> kv;
  std::ifstream is(path);
  for (std::string line; std::getline(is, line);) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream is(path);
  for (std::string line; std::getline(is, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

int run_cli(const std::string& args, const fs::path& err) {
  const auto cmd = std::string(CPNET_CLI) + " " + args + " > /dev/null 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

// --- config -------------------------------------------------------------------

TEST(Config, ParsesSectionsCommentsAndWhitespace) {
  const auto kv = parse_config_text("# header\n[model]\n  variant = cpnet075  # trailing\nshift=off\n\n[train]\nepochs = 3\n");
  EXPECT_EQ(kv.size(), 3u);
  EXPECT_EQ(kv.at("model.variant"), "cpnet075");
  EXPECT_EQ(kv.at("model.shift"), "off");
  EXPECT_EQ(kv.at("train.epochs"), "3");
}

TEST(Config, RejectsMalformedText) {
  EXPECT_THROW(parse_config_text("epochs = 3\n"), Error);
  EXPECT_THROW(parse_config_text("[train]\nepochs 3\n"), Error);
  EXPECT_THROW(parse_config_text("[train\nepochs = 3\n"), Error);
  EXPECT_THROW(parse_config_text("[train]\nepochs = 3\nepochs = 4\n"), Error);
}

TEST(Config, OverridesReplaceFileValues) {
  auto kv = parse_config_text("[train]\nepochs = 3\n");
  apply_override(kv, "train.epochs=7");
  apply_override(kv, "data.seed = 9");
  EXPECT_EQ(kv.at("train.epochs"), "7");
  EXPECT_EQ(kv.at("data.seed"), "9");
  EXPECT_THROW(apply_override(kv, "epochs=7"), Error);
  EXPECT_THROW(apply_override(kv, "train.epochs"), Error);
}

TEST(Config, EchoRoundTripsToTheSameConfig) {
  for (const auto& cfg : {RunConfig{}, tiny()}) {
    const auto text = render_config(cfg);
    const auto back = from_key_values(parse_config_text(text));
    EXPECT_EQ(render_config(back), text);
    EXPECT_EQ(to_key_values(back), to_key_values(cfg));
  }
}

TEST(Config, DefaultsMatchDocumentedValues) {
  RunConfig cfg = from_key_values({});
  cfg.validate();
  EXPECT_EQ(cfg.model.tag(), "cpnet037_shift");
  EXPECT_EQ(cfg.model.base.height, 64);
  EXPECT_EQ(cfg.train.lr0, 2e-4);
  EXPECT_EQ(cfg.train.epochs, 10);
  EXPECT_EQ(cfg.corpus.n_train, 16);
  EXPECT_EQ(cfg.corpus.n_test, 8);
  EXPECT_EQ(cfg.decision.gamma, 0.5);
  EXPECT_EQ(cfg.ablate_variants.size(), 5u);
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(from_key_values({{"model.bogus", "1"}}), Error);
  EXPECT_THROW(from_key_values({{"train.epochs", "3x"}}), Error);
  EXPECT_THROW(from_key_values({{"train.lr0", ""}}), Error);
  EXPECT_THROW(from_key_values({{"model.variant", "cpnet050"}}), Error);
  EXPECT_THROW(from_key_values({{"model.variant", "baseline"}, {"model.shift", "on"}}), Error);
  EXPECT_THROW(from_key_values({{"model.shift", "maybe"}}), Error);
  EXPECT_THROW(from_key_values({{"data.anomalies", "meteor"}}), Error);
  EXPECT_THROW(from_key_values({{"ablate.variants", "baseline,cpnet050"}}), Error);
  EXPECT_THROW(from_key_values({{"eval.gamma", "1"}}).validate(), Error);
  EXPECT_THROW(from_key_values({{"train.epochs", "0"}}).validate(), Error);
  EXPECT_THROW(from_key_values({{"model.base_channels", "12"}}).validate(), Error);
}

TEST(Config, VariantAndShiftSelectTheTableRow) {
  const std::map<std::pair<std::string, std::string>, std::string> rows{
      {{"baseline", "off"}, "baseline"},       {{"cpnet075", "off"}, "cpnet075"}, {{"cpnet075", "on"}, "cpnet075_shift"},
      {{"cpnet037", "off"}, "cpnet037"},       {{"cpnet037", "on"}, "cpnet037_shift"}};
  for (const auto& [key, tag] : rows) {
    const auto cfg = from_key_values({{"model.variant", key.first}, {"model.shift", key.second}});
    EXPECT_EQ(cfg.model.tag(), tag);
    EXPECT_EQ(config_for_tag(RunConfig{}.model, tag).tag(), tag);
  }
}

// --- commands -----------------------------------------------------------------

TEST(GenData, DefaultConfigWritesSixteenTrainAndEightTestVideos) {
  const auto dir = fresh_dir("gen_default");
  Quiet q;
  const auto r = cmd_gen_data(RunConfig{}, dir, false, q.io());
  EXPECT_EQ(r.n_train, 16);
  EXPECT_EQ(r.n_test, 8);
  const auto manifest = read_manifest(dir / "data" / "manifest.txt");
  ASSERT_EQ(manifest.size(), 24u);
  for (const auto& e : manifest) EXPECT_TRUE(fs::exists(dir / "data" / e.labels)) << e.labels;
  fs::remove_all(dir);
}

TEST(GenData, SameSeedGivesSameDigestAndExistingDataNeedsForce) {
  const auto dir = fresh_dir("gen_repeat");
  Quiet q;
  const auto cfg = tiny();
  const auto first = cmd_gen_data(cfg, dir, false, q.io());
  EXPECT_THROW(cmd_gen_data(cfg, dir, false, q.io()), Error);
  EXPECT_EQ(cmd_gen_data(cfg, dir, true, q.io()).manifest_digest, first.manifest_digest);
  auto other = cfg;
  other.corpus.seed = 1;
  EXPECT_NE(cmd_gen_data(other, dir, true, q.io()).manifest_digest, first.manifest_digest);
  fs::remove_all(dir);
}

TEST(Train, FixedSeedReproducesTheLossHistory) {
  const auto a = fresh_dir("train_a"), b = fresh_dir("train_b");
  Quiet q;
  const auto cfg = tiny();
  cmd_gen_data(cfg, a, false, q.io());
  cmd_gen_data(cfg, b, false, q.io());
  const auto ra = cmd_train(cfg, a, false, q.io());
  const auto rb = cmd_train(cfg, b, false, q.io());
  ASSERT_EQ(ra.loss_history.size(), 2u);
  EXPECT_EQ(ra.loss_history, rb.loss_history);
  EXPECT_TRUE(fs::exists(checkpoint_path(a, "cpnet037_shift")));
  EXPECT_EQ(read_text(a / "models" / "cpnet037_shift" / "train_log.csv"),
            read_text(b / "models" / "cpnet037_shift" / "train_log.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Train, ResumeContinuesWithoutAJump) {
  const auto dir = fresh_dir("resume");
  Quiet q;
  auto cfg = tiny();
  cfg.train.epochs = 4;
  cmd_gen_data(cfg, dir, false, q.io());
  const auto straight = cmd_train(cfg, dir, false, q.io()).loss_history;

  const auto ckpt = checkpoint_path(dir, cfg.model.tag());
  // Two epochs, then resume to four.
  {
    auto state = TrainState<float>{build_cpnet<float>(cfg.model, cfg.model_seed), {}, cfg.train, 0, {}};
    const auto videos = load_split(dir, "train", cfg.model.base).videos;
    TrainHooks hooks;
    hooks.max_epochs = 2;
    train(state, videos, hooks);
    save_checkpoint(ckpt.string(), state);
  }
  const auto resumed = cmd_train(cfg, dir, true, q.io()).loss_history;
  EXPECT_EQ(resumed, straight);
  for (std::size_t e = 1; e < resumed.size(); ++e) {
    EXPECT_LT(resumed[e], 1.10 * resumed[e - 1]) << "epoch " << e;
  }
  auto changed = cfg;
  changed.train.lr0 = 1e-3;
  EXPECT_THROW(cmd_train(changed, dir, true, q.io()), Error);
  fs::remove_all(dir);
}

TEST(Eval, OneRowPerScoredFrameAndReportMatchesMarginReport) {
  const auto dir = fresh_dir("eval");
  Quiet q;
  auto cfg = tiny();
  cfg.train.epochs = 1;
  cmd_gen_data(cfg, dir, false, q.io());
  cmd_train(cfg, dir, false, q.io());
  const auto r = cmd_eval(cfg, dir, {}, q.io());
  const auto out_dir = dir / "eval" / "cpnet037_shift";
  const auto rows = read_csv(out_dir / "scores.csv");
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows[0], (std::vector<std::string>{"video_id", "frame_index", "psnr_db", "score", "label", "decision"}));
  EXPECT_EQ(rows.size() - 1, static_cast<std::size_t>(cfg.corpus.n_test * (cfg.corpus.test_length - 4)));
  EXPECT_EQ(r.frames, rows.size() - 1);

  // Rebuild the series from the CSV and recompute the margins independently.
  std::map<std::string, std::tuple<std::vector<int>, std::vector<double>, std::vector<int>>> by_video;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    auto& [idx, psnr_db, labels] = by_video[rows[i][0]];
    idx.push_back(std::stoi(rows[i][1]));
    psnr_db.push_back(std::stod(rows[i][2]));
    labels.push_back(std::stoi(rows[i][4]));
  }
  std::vector<ScoreSeries> series;
  for (auto& [id, t] : by_video) series.push_back(make_series(id, std::get<0>(t), std::get<1>(t), std::get<2>(t)));
  const auto m = margin_report(series);
  const auto report = read_report(out_dir / "report.txt");
  EXPECT_NEAR(std::stod(report.at("psnr_normal")), m.psnr_normal, 1e-6);
  EXPECT_NEAR(std::stod(report.at("psnr_abnormal")), m.psnr_abnormal, 1e-6);
  EXPECT_NEAR(std::stod(report.at("psnr_margin")), m.psnr_margin, 1e-6);
  EXPECT_NEAR(std::stod(report.at("score_margin")), m.score_margin, 1e-6);
  EXPECT_EQ(std::stoll(report.at("n_abnormal")), m.n_abnormal);
  EXPECT_NEAR(std::stod(report.at("auc")), frame_level_auc(series).auc, 1e-6);

  std::ostringstream expect;
  expect << "AUC " << std::fixed << std::setprecision(4) << r.auc << '\n';
  EXPECT_NE(q.out.str().find(expect.str()), std::string::npos) << q.out.str();
  EXPECT_EQ(read_csv(out_dir / "roc.csv")[0], (std::vector<std::string>{"threshold", "fpr", "tpr"}));
  fs::remove_all(dir);
}

TEST(Analyze, FiveReportsWithExactLawsAndFreeShift) {
  const auto dir = fresh_dir("analyze");
  Quiet q;
  const auto r = cmd_analyze(RunConfig{}, dir, false, q.io());
  ASSERT_EQ(r.reports.size(), 5u);
  for (const auto& tag : table_variants()) EXPECT_TRUE(fs::exists(dir / "analysis" / (tag + ".txt"))) << tag;
  EXPECT_TRUE(r.shift_free);
  EXPECT_EQ(r.reports[1].total_macs, r.reports[2].total_macs);
  EXPECT_EQ(r.reports[3].total_macs, r.reports[4].total_macs);
  EXPECT_TRUE(r.full_split_law.per_layer_exact);
  EXPECT_EQ(r.full_split_law.aggregate, (Ratio{1, 4}));
  EXPECT_NE(q.out.str().find("full split interior MAC ratio 1/4 = 25.0%"), std::string::npos) << q.out.str();
  fs::remove_all(dir);
}

TEST(Ablate, FiveRowsAndDeterministicSummary) {
  const auto a = fresh_dir("ablate_a"), b = fresh_dir("ablate_b");
  Quiet q;
  auto cfg = tiny();
  cfg.train.epochs = 1;
  const auto rows = cmd_ablate(cfg, a, q.io());
  cmd_ablate(cfg, b, q.io());
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0].tag, "baseline");
  EXPECT_EQ(rows[0].mac_ratio, (Ratio{1, 1}));
  EXPECT_EQ(rows[3].macs, rows[4].macs);
  const auto summary = read_text(a / "ablate" / "summary.txt");
  EXPECT_EQ(summary, read_text(b / "ablate" / "summary.txt"));
  EXPECT_EQ(read_text(a / "ablate" / "summary.csv"), read_text(b / "ablate" / "summary.csv"));
  EXPECT_EQ(std::count(summary.begin(), summary.end(), '\n'), 6);
  fs::remove_all(a);
  fs::remove_all(b);
}

// --- binary -------------------------------------------------------------------

TEST(Binary, ExitCodesAndOneLineErrors) {
  const auto dir = fresh_dir("binary");
  const auto err = dir / "stderr.txt";
  EXPECT_EQ(run_cli("--help", err), 0);
  EXPECT_EQ(run_cli("", err), 2);
  EXPECT_EQ(run_cli("train --run-dir " + dir.string() + " --set model.bogus=1", err), 3);
  EXPECT_EQ(read_text(err), "error: config: unknown config key 'model.bogus'\n");
  EXPECT_EQ(run_cli("eval --run-dir " + dir.string(), err), 7);
  EXPECT_EQ(read_text(err).rfind("error: state: ", 0), 0u);
  EXPECT_EQ(run_cli("train --run-dir " + dir.string() + " --config " + (dir / "missing.ini").string(), err), 4);
  fs::remove_all(dir);
}

TEST(Binary, VideosFlagAndConfigEcho) {
  const auto dir = fresh_dir("binary_gen");
  const auto err = dir / "stderr.txt";
  const auto run = dir / "run";
  ASSERT_EQ(run_cli("gen-data --run-dir " + run.string() +
                        " --videos 2 --set data.n_test=1 --set model.height=32 --set model.width=32",
                    err),
            0);
  int train_videos = 0;
  for (const auto& e : read_manifest(run / "data" / "manifest.txt")) train_videos += e.role == "train";
  EXPECT_EQ(train_videos, 2);
  const auto echoed = from_key_values(read_config_file((run / "config" / "gen-data.ini").string()));
  EXPECT_EQ(echoed.corpus.n_train, 2);
  EXPECT_EQ(echoed.model.base.height, 32);

  // The echoed file reproduces the run when fed back in.
  const auto again = dir / "again";
  ASSERT_EQ(run_cli("gen-data --run-dir " + again.string() + " --config " +
                        (run / "config" / "gen-data.ini").string(),
                    err),
            0);
  EXPECT_EQ(read_text(again / "data" / "manifest.txt"), read_text(run / "data" / "manifest.txt"));
  fs::remove_all(dir);
}
