#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "test_util.hpp"

using namespace laax;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("laax_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig small_run(const fs::path& out, ModelFamily family) {
  RunConfig rc;
  rc.family = family;
  rc.train_identities = 8;
  rc.val_identities = 6;
  rc.epochs = 3;
  rc.pretrain_epochs = 1;
  rc.freeze_epochs = 1;
  rc.batch_size = 4;
  rc.out_dir = out.string();
  return rc;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LAAX_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Config, DefaultLiterals) {
  const json j = RunConfig{}.to_json();
  EXPECT_EQ(j["lambda1"].get<double>(), 10.0);
  EXPECT_EQ(j["lambda2"].get<double>(), 100.0);
  EXPECT_EQ(j["lambda_att"].get<double>(), 10.0);
  EXPECT_EQ(j["iou_threshold"].get<double>(), 0.7);
  EXPECT_EQ(j["sigma_ratio"].get<double>(), 1.0 / 3.0);
  EXPECT_EQ(j["gamma_w"].get<double>(), 1.0);
  EXPECT_EQ(j["patch_sigma"].get<double>(), 1.0);
  EXPECT_EQ(j["gamma"].get<double>(), 2.0);
}

TEST(Config, FamilyDefaults) {
  const RunConfig net = RunConfig::for_family(ModelFamily::laa_net);
  EXPECT_EQ(net.to_json(), RunConfig{}.to_json());
  const RunConfig former = RunConfig::for_family(ModelFamily::laa_former);
  EXPECT_EQ(former.family, ModelFamily::laa_former);
  EXPECT_EQ(former.batch_size, 32u);
  EXPECT_DOUBLE_EQ(former.lr_peak, 1e-3);
  EXPECT_EQ(former.loss.lambda_att, net.loss.lambda_att);
  EXPECT_NO_THROW(former.validate());
}

TEST(Config, ParseOverridesAndComments) {
  std::istringstream in("# comment\nmodel_family = laa_former\nlambda_att = 3.5  # trailing\nuse_l2att = false\n");
  const RunConfig rc = parse_config(in);
  EXPECT_EQ(rc.family, ModelFamily::laa_former);
  EXPECT_EQ(rc.loss.lambda_att, 3.5);
  EXPECT_FALSE(rc.use_l2att);
}

TEST(Config, JsonRoundTrip) {
  RunConfig rc;
  rc.set("lr_peak", "0.00123");
  rc.set("efpn_mode", "plain");
  rc.set("synthesis", "bi");
  rc.set("seed", "77");
  const RunConfig back = config_from_json(rc.to_json());
  EXPECT_EQ(back.to_json(), rc.to_json());
}

TEST(Config, EveryKeyIsSettableAndDumped) {
  const json j = RunConfig{}.to_json();
  for (const auto& [key, help] : RunConfig::keys()) {
    EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_FALSE(help.empty());
  }
  EXPECT_EQ(j.size(), RunConfig::keys().size());
}

TEST(Config, Errors) {
  RunConfig rc;
  EXPECT_THROW(rc.set("no_such_key", "1"), Error);
  EXPECT_THROW(rc.set("epochs", "many"), Error);
  EXPECT_THROW(rc.set("use_heatmap", "maybe"), Error);
  rc.epochs = 5;
  rc.pretrain_epochs = 4;
  rc.freeze_epochs = 2;
  EXPECT_THROW(rc.validate(), Error);
  rc = RunConfig{};
  rc.family = ModelFamily::laa_net;
  rc.preset = "base";
  EXPECT_THROW(rc.validate(), Error);
  std::istringstream bad("lambda1 10\n");
  EXPECT_THROW(parse_config(bad), Error);
}

TEST(AdamW, FrozenParametersDoNotMove) {
  nn::ParamList params{{"a", ag::Var::parameter(Tensor({2, 2}, 1.0))}, {"b", ag::Var::parameter(Tensor({2}, 1.0))}};
  AdamW opt(params, 0.1);
  opt.set_frozen(0, true);
  ag::sum(ag::add(ag::sum(params[0].var), ag::sum(params[1].var))).backward();
  opt.step(0.01);
  EXPECT_EQ(params[0].var.value().min(), 1.0);
  EXPECT_EQ(params[0].var.value().max(), 1.0);
  // First Adam step moves by lr regardless of gradient scale; no decay on 1-D.
  EXPECT_NEAR(params[1].var.value()[0], 0.99, 1e-9);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(AdamW, ResetStateRestartsBiasCorrection) {
  nn::ParamList params{{"w", ag::Var::parameter(Tensor({1}, 0.0))}};
  AdamW opt(params, 0.0);
  for (int i = 0; i < 5; ++i) {
    opt.zero_grad();
    ag::sum(ag::scale(params[0].var, 3.0)).backward();
    opt.step(0.1);
  }
  opt.reset_state();
  const double before = params[0].var.value()[0];
  opt.zero_grad();
  ag::sum(ag::scale(params[0].var, -7.0)).backward();
  opt.step(0.1);
  EXPECT_NEAR(params[0].var.value()[0] - before, 0.1, 1e-9);
  EXPECT_EQ(opt.steps(), 6u);
}

TEST(LrSchedule, WarmupThenDecay) {
  const LrSchedule s{1e-4, 5e-4, 1e-5, 0.25, 101};
  EXPECT_DOUBLE_EQ(s.at(0), 1e-4);
  EXPECT_NEAR(s.at(25), 5e-4, 1e-15);
  EXPECT_NEAR(s.at(100), 1e-5, 1e-15);
  for (std::size_t i = 26; i <= 100; ++i) EXPECT_LE(s.at(i), s.at(i - 1) + 1e-18);
}

TEST(Io, BundleRoundTrip) {
  const fs::path dir = scratch("bundle");
  Rng rng(1);
  ArrayBundle b;
  b.meta = {{"kind", "test"}, {"n", 3}};
  b.arrays["x"] = laax::testing::random_tensor({2, 3, 4}, rng);
  b.arrays["s"] = Tensor::scalar(-1.25);
  save_bundle(b, dir / "b.laax");
  const ArrayBundle back = load_bundle(dir / "b.laax");
  EXPECT_EQ(back.meta, b.meta);
  EXPECT_EQ(max_abs_diff(back.at("x"), b.arrays["x"]), 0.0);
  EXPECT_EQ(back.at("s").item(), -1.25);
  EXPECT_THROW(back.at("missing"), Error);
  std::ofstream(dir / "junk.laax") << "not a bundle";
  EXPECT_THROW(load_bundle(dir / "junk.laax"), Error);
}

TEST(Io, PnmRoundTripWithinQuantization) {
  const fs::path dir = scratch("pnm");
  const FaceSample f = generate_toy_face(3, {3, 32});
  write_pnm(f.image, dir / "f.ppm");
  const Tensor back = read_pnm(dir / "f.ppm");
  EXPECT_EQ(back.shape(), f.image.shape());
  EXPECT_LE(max_abs_diff(back, f.image), 0.5 / 255.0 + 1e-12);
}

TEST(Dataset, SynthesizeAndReload) {
  const fs::path dir = scratch("dataset");
  SynthesizeRequest req;
  req.n = 6;
  req.size = 32;
  const auto written = synthesize_dataset(dir, req);
  const auto loaded = load_dataset(dir);
  ASSERT_EQ(loaded.size(), 6u);
  std::size_t fakes = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    fakes += loaded[i].label;
    EXPECT_EQ(max_abs_diff(loaded[i].image, written[i].image), 0.0);
    EXPECT_EQ(max_abs_diff(loaded[i].boundary, written[i].boundary), 0.0);
  }
  EXPECT_EQ(fakes, 3u);
  EXPECT_FALSE(loaded[1].original.empty());
  EXPECT_THROW(load_dataset(scratch("empty")), Error);
}

TEST(Training, ZeroEpochsWritesInitialCheckpoint) {
  RunConfig rc = small_run(scratch("zero"), ModelFamily::laa_net);
  rc.epochs = rc.pretrain_epochs = rc.freeze_epochs = 0;
  const TrainResult r = train(rc);
  EXPECT_TRUE(r.log.empty());
  EXPECT_TRUE(fs::exists(r.checkpoint));
  EXPECT_TRUE(slurp(r.metrics).empty());
  const Detector fresh(rc, derive_seed(rc.seed, 0x30DE1));
  const auto loaded = load_checkpoint(r.checkpoint);
  const auto params = loaded.model->parameters();
  const auto ref = fresh.parameters();
  ASSERT_EQ(params.size(), ref.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    EXPECT_EQ(max_abs_diff(params[i].var.value(), ref[i].var.value()), 0.0) << params[i].name;
}

TEST(Training, ToyRunLossDecreasesOverFirstFiveEpochs) {
  RunConfig rc;
  rc.out_dir = scratch("toy_net").string();
  const TrainResult r = train(rc);
  ASSERT_EQ(r.log.size(), 20u);
  for (std::size_t e = 1; e < 5; ++e) EXPECT_LT(r.log[e].loss_total, r.log[e - 1].loss_total) << "epoch " << e + 1;
}

TEST(Training, FrozenPhaseLeavesBackboneUntouched) {
  RunConfig rc = small_run(scratch("frozen"), ModelFamily::laa_net);
  rc.epochs = 2;
  rc.pretrain_epochs = 0;
  rc.freeze_epochs = 2;
  const TrainResult r = train(rc);
  const Detector fresh(rc, derive_seed(rc.seed, 0x30DE1));
  const auto trained = load_checkpoint(r.checkpoint).model->parameters();
  const auto ref = fresh.parameters();
  bool head_moved = false;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double diff = max_abs_diff(trained[i].var.value(), ref[i].var.value());
    if (Detector::is_backbone(ref[i].name)) EXPECT_EQ(diff, 0.0) << ref[i].name;
    else head_moved |= diff > 0.0;
  }
  EXPECT_TRUE(head_moved);
}

class TrainFamily : public ::testing::TestWithParam<ModelFamily> {};

TEST_P(TrainFamily, SameSeedSameLogAndCheckpointReloads) {
  const ModelFamily fam = GetParam();
  const std::string tag = to_string(fam);
  const TrainResult a = train(small_run(scratch(tag + "_a"), fam));
  const TrainResult b = train(small_run(scratch(tag + "_b"), fam));
  ASSERT_EQ(a.log.size(), 3u);
  EXPECT_EQ(slurp(a.metrics), slurp(b.metrics));
  EXPECT_EQ(a.log[0].loss_c_or_att, 0.0);
  EXPECT_GT(a.log[2].loss_c_or_att, 0.0);
  for (const auto& rec : a.log) EXPECT_TRUE(std::isfinite(rec.loss_total));

  const auto loaded = load_checkpoint(a.checkpoint);
  SynthesizeRequest req;
  req.n = 8;
  req.seed = 5;
  const fs::path data = scratch(tag + "_data");
  const auto samples = synthesize_dataset(data, req);
  const EvalReport rep = evaluate(*loaded.model, samples, true);
  EXPECT_EQ(rep.scores.size(), 8u);
  EXPECT_GE(rep.auc, 0.0);
  EXPECT_LE(rep.auc, 1.0);

  const SaliencyMap s = compute_saliency(*loaded.model, samples[1].image, SaliencyKind::gradcam);
  EXPECT_EQ(s.upsampled.shape(), (Shape{64, 64}));
  EXPECT_GE(s.upsampled.min(), 0.0);
  EXPECT_LE(s.upsampled.max(), 1.0);
  const SaliencyMap aux = compute_saliency(*loaded.model, samples[1].image, SaliencyKind::auxiliary);
  EXPECT_EQ(aux.raw.size(0), fam == ModelFamily::laa_net ? 16u : 8u);
}

INSTANTIATE_TEST_SUITE_P(Families, TrainFamily, ::testing::Values(ModelFamily::laa_net, ModelFamily::laa_former),
                         [](const auto& info) { return to_string(info.param); });

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  EXPECT_EQ(run_cli("synthesize --out " + (dir / "data").string() + " --n 4 --size 64"), 0);
  EXPECT_EQ(run_cli("synthesize --out " + (dir / "x").string() + " --mode nope"), 2);
  EXPECT_EQ(run_cli("train --config " + (dir / "missing.cfg").string()), 2);
  std::ofstream(dir / "bad.cfg") << "lambda1 = ten\n";
  EXPECT_EQ(run_cli("train --config " + (dir / "bad.cfg").string()), 2);
  std::ofstream(dir / "zero.cfg") << "epochs = 0\npretrain_epochs = 0\nfreeze_epochs = 0\nout_dir = "
                                  << (dir / "run").string() << "\n";
  EXPECT_EQ(run_cli("train --config " + (dir / "zero.cfg").string()), 0);
  EXPECT_EQ(run_cli("eval --ckpt " + (dir / "run" / "checkpoint.laax").string() + " --data " +
                    (dir / "data").string() + " --buckets"),
            0);
  EXPECT_EQ(run_cli("eval --ckpt " + (dir / "nothing.laax").string() + " --data " + (dir / "data").string()), 3);
  EXPECT_EQ(run_cli("saliency --ckpt " + (dir / "run" / "checkpoint.laax").string() + " --image " +
                    (dir / "data" / "sample_00001.laax").string() + " --out " + (dir / "s.ppm").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "s.ppm"));
}
