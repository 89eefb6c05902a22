#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "../support/helpers.hpp"
#include "ddunet/app/checkpoint.hpp"
#include "ddunet/app/commands.hpp"
#include "ddunet/app/gradcheck_suite.hpp"
#include "ddunet/app/pipeline.hpp"
#include "ddunet/app/run_config.hpp"
#include "ddunet/data/nifti.hpp"
#include "ddunet/data/phantom.hpp"

using namespace ddunet;
using namespace ddunet::app;
using namespace testing_support;

namespace {

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ddunet");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  return out;
}

std::string tiny_run_text(const std::filesystem::path& out) {
  return "stages = 4,8\nconvs = 1,1\nphantom_count = 4\nphantom_size = 16\ncrop = 16\nepochs = 2\nseed = 3\n"
         "out_dir = " +
         out.string() + "\n";
}

}  // namespace

TEST(RunConfig, DefaultsAndRoundTrip) {
  const RunConfig d = resolve_config({});
  EXPECT_EQ(d.variant, "2ag");
  EXPECT_EQ(d.epochs, 50u);
  EXPECT_EQ(d.batch_size, 1u);
  EXPECT_EQ(d.loss.lambda_dice, 0.7);
  EXPECT_EQ(d.adamw.weight_decay, 1e-4);
  EXPECT_EQ(d.arch.stage_channels, (std::vector<std::size_t>{16, 32, 64, 128, 256}));
  const std::string text = to_text(d);
  EXPECT_EQ(to_text(resolve_config({parse_settings(text, "echo")})), text);
  const auto keys = config_keys();
  EXPECT_EQ(std::set<std::string>(keys.begin(), keys.end()).size(), keys.size());
  for (const auto& k : keys) EXPECT_NE(text.find(k + " = "), std::string::npos) << k;

  RunConfig odd = resolve_config({parse_settings("max_lr = 0.1\nsplit_ratio = 0.3\ncrop = 32,48,64\n", "x")});
  EXPECT_EQ(to_text(resolve_config({parse_settings(to_text(odd), "echo")})), to_text(odd));
  EXPECT_EQ(odd.crop, (std::array<std::size_t, 3>{32, 48, 64}));
}

TEST(RunConfig, ParsingErrors) {
  EXPECT_THROW(parse_settings("bogus = 1\n", "f"), UsageError);
  EXPECT_THROW(parse_settings("epochs\n", "f"), UsageError);
  EXPECT_THROW(resolve_config({parse_settings("epochs = -3\n", "f")}), UsageError);
  EXPECT_THROW(resolve_config({parse_settings("augment = maybe\n", "f")}), UsageError);
  EXPECT_THROW(resolve_config({parse_settings("split_ratio = 0\n", "f")}), UsageError);
  EXPECT_THROW(parse_assignment("novalue"), UsageError);
  try {
    parse_settings("# comment\n\nepochs = 3\nwhat = 1\n", "my.cfg");
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("my.cfg:4"), std::string::npos) << e.what();
  }
}

TEST(RunConfig, VariantAppliesBeforeExplicitKeys) {
  const RunConfig c = resolve_config({parse_settings("attention = none\nvariant = 2ag-strided\n", "f")});
  EXPECT_EQ(c.arch.attention, network::AttentionMode::kNone);
  EXPECT_EQ(c.arch.downsample, network::Downsample::kStridedConv);
}

TEST(RunConfig, Precedence) {
  const auto dir = scratch_dir("precedence");
  std::ofstream(dir / "run.cfg") << "epochs = 7\nmax_lr = 0.5\nseed = 1\nbatch_size = 2\n";
  ::setenv("DDUNET_MAX_LR", "0.25", 1);
  ::setenv("DDUNET_BATCH_SIZE", "3", 1);
  ConfigSources s;
  s.config_path = (dir / "run.cfg").string();
  s.assignments = {"max_lr=0.125", "seed=9"};
  s.seed = 42;
  s.out_dir = "elsewhere";
  const RunConfig c = load_run_config(s);
  ::unsetenv("DDUNET_MAX_LR");
  ::unsetenv("DDUNET_BATCH_SIZE");
  EXPECT_EQ(c.epochs, 7u);                // file
  EXPECT_EQ(c.batch_size, 3u);            // env over file
  EXPECT_EQ(c.schedule.max_lr, 0.125);    // --set over env
  EXPECT_EQ(c.seed, 42u);                 // --seed over --set
  EXPECT_EQ(c.out_dir, "elsewhere");
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto model = network::build_model<float>(tiny_arch(), 5);
  Checkpoint c{"epochs = 1\n", model.params, optim::make_adamw_state(model.params)};
  c.optimizer->step = 17;
  c.optimizer->m.begin()->second[0] = 0.5f;
  const auto bytes = serialize(c);
  const Checkpoint r = deserialize(bytes);
  EXPECT_EQ(r.config_text, c.config_text);
  EXPECT_EQ(r.params, c.params);
  ASSERT_TRUE(r.optimizer.has_value());
  EXPECT_EQ(r.optimizer->step, 17u);
  EXPECT_EQ(r.optimizer->m, c.optimizer->m);
  EXPECT_EQ(serialize(r), bytes);

  const auto dir = scratch_dir("ckpt");
  save_checkpoint(c, dir / "a.ckpt");
  save_checkpoint(load_checkpoint(dir / "a.ckpt"), dir / "b.ckpt");
  EXPECT_EQ(read_bytes(dir / "a.ckpt"), read_bytes(dir / "b.ckpt"));

  const Tensor<float> x = random_tensor<float>({1, 4, 8, 8, 8}, 1);
  const Tensor<float> a = eval_logits(c.params, model.config, x);
  EXPECT_EQ(a, eval_logits(load_checkpoint(dir / "a.ckpt").params, model.config, x));
}

TEST(Checkpoint, DetectsCorruption) {
  const auto model = network::build_model<float>(tiny_arch(), 5);
  const auto bytes = serialize(Checkpoint{"x", model.params, std::nullopt});
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 1;
  EXPECT_THROW(deserialize(flipped), DataError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(deserialize(magic), DataError);
  EXPECT_THROW(deserialize(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 40)), DataError);
  EXPECT_THROW(load_checkpoint("/nonexistent/x.ckpt"), DataError);
}

TEST(Pipeline, CsvHeaderColumnOrder) {
  EXPECT_EQ(csv_header(),
            "epoch,split,loss,lr,dice_c0,dice_c1,dice_c2,dice_c3,dice_WT,dice_TC,dice_ET,sens_WT,sens_TC,sens_ET,"
            "spec_WT,spec_TC,spec_ET");
}

TEST(Pipeline, ZeroEpochsSavesInitialWeights) {
  const auto dir = scratch_dir("zero_epochs");
  RunConfig c = resolve_config({parse_settings(tiny_run_text(dir), "t")});
  c.epochs = 0;
  std::ostringstream log;
  const TrainOutcome t = train(c, log);
  EXPECT_EQ(t.steps, 0u);
  EXPECT_EQ(read_lines(dir / "metrics.csv"), (std::vector<std::string>{csv_header()}));
  EXPECT_EQ(load_checkpoint(t.last).params, network::build_model<float>(c.arch, c.seed).params);
  EXPECT_TRUE(std::filesystem::exists(dir / "config.txt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "split.txt"));
}

TEST(Pipeline, LossDecreasesOnTinyRun) {
  const auto dir = scratch_dir("tiny_train");
  RunConfig c = resolve_config({parse_settings(
      "stages = 8,16,32\nconvs = 1,1,1\nphantom_count = 1\nphantom_size = 32\ncrop = 32\nsplit_ratio = 1\n"
      "epochs = 20\nmax_lr = 0.01\naugment = false\n",
      "t")});
  c.out_dir = dir.string();
  std::ostringstream log;
  const TrainOutcome t = train(c, log);
  EXPECT_EQ(t.steps, 20u);
  const auto lines = read_lines(dir / "metrics.csv");
  ASSERT_EQ(lines.size(), 21u);
  const double first = std::stod(split_csv(lines[1])[2]);
  const double last = std::stod(split_csv(lines.back())[2]);
  EXPECT_LT(last, first);
  std::ifstream echo(dir / "config.txt");
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(echo), {}), to_text(c));
}

TEST(Cli, EvaluateReproducesLoggedTestMetrics) {
  const auto dir = scratch_dir("cli_eval");
  std::ofstream(dir / "run.cfg") << tiny_run_text(dir / "run");
  ASSERT_EQ(cli({"train", "--config", (dir / "run.cfg").string()}).code, 0);
  const auto rows = read_lines(dir / "run" / "metrics.csv");
  std::vector<std::string> logged;
  for (const auto& r : rows)
    if (r.find(",test,") != std::string::npos) logged = split_csv(r);
  ASSERT_FALSE(logged.empty());

  const CliResult e = cli({"evaluate", "--checkpoint", (dir / "run" / "last.ckpt").string(), "--split", "test",
                           "--out", (dir / "eval").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("WT"), std::string::npos);
  const auto ev = read_lines(dir / "eval" / "eval_test.csv");
  ASSERT_EQ(ev.size(), 2u);
  const auto got = split_csv(ev[1]);
  ASSERT_EQ(got.size(), logged.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    if (i != 3) {
      EXPECT_EQ(got[i], logged[i]) << "column " << i;
    }
  }
}

TEST(Cli, RerunIsBitIdentical) {
  const auto dir = scratch_dir("cli_rerun");
  std::ofstream(dir / "run.cfg") << tiny_run_text(dir / "run");
  ASSERT_EQ(cli({"train", "--config", (dir / "run.cfg").string()}).code, 0);
  const auto first = read_bytes(dir / "run" / "last.ckpt");
  ASSERT_EQ(cli({"train", "--config", (dir / "run.cfg").string()}).code, 0);
  EXPECT_EQ(read_bytes(dir / "run" / "last.ckpt"), first);
}

TEST(Cli, SynthIsDeterministic) {
  const auto dir = scratch_dir("cli_synth");
  for (const char* sub : {"a", "b"})
    ASSERT_EQ(cli({"synth", "--seed", "5", "--size", "32", "--count", "4", "--out", (dir / sub).string()}).code, 0);
  std::size_t files = 0, subjects = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir / "a")) {
    if (entry.is_directory()) {
      ++subjects;
      continue;
    }
    ++files;
    const auto rel = std::filesystem::relative(entry.path(), dir / "a");
    EXPECT_EQ(read_bytes(entry.path()), read_bytes(dir / "b" / rel)) << rel;
  }
  EXPECT_EQ(subjects, 4u);
  EXPECT_EQ(files, 20u);
}

TEST(Cli, PredictWritesLabelsAndAttention) {
  const auto dir = scratch_dir("cli_predict");
  ASSERT_EQ(cli({"synth", "--size", "16", "--count", "1", "--out", (dir / "data").string()}).code, 0);
  for (const char* variant : {"2ag", "unet"}) {
    const auto run = dir / variant;
    const CliResult t = cli({"train", "--set", std::string("variant=") + variant, "--set", "stages=4,8", "--set",
                             "convs=1,1", "--set", "dataset=" + (dir / "data").string(), "--set", "crop=16", "--set",
                             "split_ratio=1", "--set", "epochs=1", "--out", run.string()});
    ASSERT_EQ(t.code, 0) << t.err;
    const CliResult p = cli({"predict", "--checkpoint", (run / "best.ckpt").string(), "--subject",
                             (dir / "data" / "phantom_000").string(), "--export-attention", "--out",
                             (run / "pred").string()});
    ASSERT_EQ(p.code, 0) << p.err;
    const auto labels = data::load_nifti(run / "pred" / "phantom_000_pred.nii.gz");
    EXPECT_EQ(labels.type, data::NiftiType::kUint8);
    for (float v : labels.values<float>()) EXPECT_TRUE(v == 0 || v == 1 || v == 2 || v == 3);
    if (std::string(variant) == "unet") {
      EXPECT_NE(p.out.find("no attention maps in this variant"), std::string::npos);
      EXPECT_FALSE(std::filesystem::exists(run / "pred" / "attn_final_A.nii.gz"));
    } else {
      for (const char* name : {"attn_final_A.nii.gz", "attn_final_B.nii.gz"}) {
        const auto a = data::load_nifti(run / "pred" / name).values<float>();
        ASSERT_EQ(a.size(), 16u * 16u * 16u);
        for (float v : a) ASSERT_TRUE(v > 0.0f && v < 1.0f);
      }
    }
  }
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch_dir("cli_codes");
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"train", "--set", "nonsense=1"}).code, kExitUsage);
  EXPECT_EQ(cli({"train", "--set", "epochs=abc"}).code, kExitUsage);
  const CliResult scope = cli({"gradcheck", "--scope", "nope"});
  EXPECT_EQ(scope.code, kExitUsage);
  EXPECT_NE(scope.err.find("conv3d"), std::string::npos) << scope.err;
  EXPECT_EQ(cli({"gradcheck", "--scope", "conv3d"}).code, kExitOk);

  const CliResult div = cli({"train", "--set", "phantom_size=24", "--set", "crop=24", "--out", (dir / "d").string()});
  EXPECT_EQ(div.code, kExitData);
  EXPECT_NE(div.err.find("divisible"), std::string::npos) << div.err;
  EXPECT_EQ(cli({"synth", "--size", "8", "--out", (dir / "s").string()}).code, kExitData);
  EXPECT_EQ(cli({"evaluate", "--checkpoint", (dir / "missing.ckpt").string()}).code, kExitData);
  EXPECT_EQ(cli({"train", "--set", "dataset=" + (dir / "nowhere").string(), "--out", (dir / "n").string()}).code,
            kExitData);

  // a checkpoint whose model expects a different number of input channels
  const auto model = network::build_model<float>(
      [] {
        auto a = tiny_arch();
        a.in_channels = 3;
        return a;
      }(),
      0);
  RunConfig c = resolve_config({parse_settings("in_channels = 3\nstages = 4,8,16\nconvs = 1,1,1\n", "c")});
  save_checkpoint(Checkpoint{to_text(c), model.params, std::nullopt}, dir / "three.ckpt");
  const CliResult inc = cli({"evaluate", "--checkpoint", (dir / "three.ckpt").string()});
  EXPECT_EQ(inc.code, kExitData);
  EXPECT_NE(inc.err.find("incompatible"), std::string::npos) << inc.err;

  const CliResult nan = cli({"train", "--set", "stages=4,8", "--set", "convs=1,1", "--set", "phantom_size=16", "--set",
                             "crop=16", "--set", "schedule=constant", "--set", "max_lr=1e30", "--set", "epochs=3",
                             "--out", (dir / "nan").string()});
  EXPECT_EQ(nan.code, kExitNumerical) << nan.err;
  EXPECT_NE(nan.err.find("step"), std::string::npos) << nan.err;
}

TEST(Cli, InfoAndHelp) {
  const CliResult info = cli({"info", "--set", "variant=1ag"});
  EXPECT_EQ(info.code, 0);
  EXPECT_NE(info.out.find("parameter count"), std::string::npos);
  const CliResult help = cli({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("DDUNET_"), std::string::npos);
}

TEST(GradcheckSuite, EveryScopePassesAtSmallInstanceCount) {
  for (const std::string& scope : gradcheck_scopes()) {
    const GradcheckReport r = run_gradcheck(scope, 3, 7);
    EXPECT_TRUE(r.ok()) << scope << " " << r.worst;
  }
  EXPECT_THROW(run_gradcheck("bogus"), ShapeError);
}
