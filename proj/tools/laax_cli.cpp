#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "laax/laax.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kDataError = 3;

int exit_code_for(laax::Errc code) {
  switch (code) {
    case laax::Errc::configuration:
    case laax::Errc::domain:
      return kConfigError;
    default:
      return kDataError;
  }
}

laax::SynthesisMode parse_mode(const std::string& m) {
  if (m == "sbi") return laax::SynthesisMode::sbi;
  if (m == "bi") return laax::SynthesisMode::bi;
  if (m == "real") return laax::SynthesisMode::real;
  throw laax::Error(laax::Errc::configuration, "mode must be sbi, bi or real");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LAA-X deepfake detection toolkit"};
  app.require_subcommand(1);

  std::string out_dir, mode = "sbi";
  std::size_t n = 16, size = 64;
  std::uint64_t seed = 0;
  bool fakes_only = false;
  auto* syn = app.add_subcommand("synthesize", "write toy real / pseudo-fake samples");
  syn->add_option("--out", out_dir, "output directory")->required();
  syn->add_option("--n", n, "number of samples");
  syn->add_option("--mode", mode, "sbi | bi | real")->check(CLI::IsMember({"sbi", "bi", "real"}));
  syn->add_option("--seed", seed, "random seed");
  syn->add_option("--size", size, "image side D");
  syn->add_flag("--fakes-only", fakes_only, "omit the paired real source of each fake");

  std::string config_path;
  std::optional<std::uint64_t> train_seed;
  std::vector<std::string> overrides;
  auto* tr = app.add_subcommand("train", "train a detector");
  tr->add_option("--config", config_path, "flat key = value config file")->required();
  tr->add_option("--seed", train_seed, "override the config seed");
  tr->add_option("--set", overrides, "extra key=value overrides");

  std::string ckpt, data_dir, report_path;
  bool buckets = false;
  auto* ev = app.add_subcommand("eval", "score a synthesized dataset");
  ev->add_option("--ckpt", ckpt, "checkpoint file")->required();
  ev->add_option("--data", data_dir, "dataset directory with manifest.json")->required();
  ev->add_flag("--buckets", buckets, "report AUC per Mask-SSIM bucket");
  ev->add_option("--report", report_path, "also write the full report (with per-sample scores) as JSON");

  std::string image_path, sal_out, kind = "gradcam";
  auto* sal = app.add_subcommand("saliency", "export a saliency overlay for one image");
  sal->add_option("--ckpt", ckpt, "checkpoint file")->required();
  sal->add_option("--image", image_path, "input image (.ppm/.pgm) or sample (.laax)")->required();
  sal->add_option("--out", sal_out, "overlay output (.ppm)")->required();
  sal->add_option("--kind", kind, "gradcam | aux")->check(CLI::IsMember({"gradcam", "aux"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*syn) {
      laax::SynthesizeRequest req;
      req.n = n;
      req.mode = parse_mode(mode);
      req.seed = seed;
      req.size = size;
      req.paired = !fakes_only;
      const auto samples = laax::synthesize_dataset(out_dir, req);
      std::size_t fakes = 0;
      for (const auto& s : samples) fakes += s.label == 1;
      std::cout << "wrote " << samples.size() << " samples (" << fakes << " fake) to " << out_dir << "\n";
    } else if (*tr) {
      laax::RunConfig cfg = laax::load_config(config_path);
      if (train_seed) cfg.seed = *train_seed;
      for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw laax::Error(laax::Errc::configuration, "--set expects key=value");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
      }
      const auto result = laax::train(cfg, [](const laax::EpochRecord& r) { std::cout << r.to_json().dump() << "\n"; });
      std::cout << "checkpoint: " << result.checkpoint.string() << "\nmetrics: " << result.metrics.string() << "\n";
    } else if (*ev) {
      const auto loaded = laax::load_checkpoint(ckpt);
      const auto data = laax::load_dataset(data_dir);
      const laax::EvalReport r = laax::evaluate(*loaded.model, data, buckets);
      if (!r.warning.empty()) std::cerr << "warning: " << r.warning << "\n";
      std::printf("auc %.6f\nap %.6f\nsamples %zu\n", r.auc, r.ap, r.scores.size());
      for (const auto& b : r.buckets)
        std::printf("mask-ssim [%.4f, %.4f] fakes %zu auc %.6f\n", b.ssim_lo, b.ssim_hi, b.fakes, b.auc);
      if (!report_path.empty()) {
        std::ofstream os(report_path);
        if (!os) throw laax::Error(laax::Errc::io, "cannot write " + report_path);
        os << r.to_json().dump(2) << "\n";
      }
    } else if (*sal) {
      const auto loaded = laax::load_checkpoint(ckpt);
      const laax::fs::path in(image_path);
      const laax::Tensor image = in.extension() == ".laax" ? laax::load_sample(in).image : laax::read_pnm(in);
      const auto s = laax::export_saliency(*loaded.model, image, sal_out,
                                           kind == "aux" ? laax::SaliencyKind::auxiliary : laax::SaliencyKind::gradcam);
      std::cout << "wrote " << sal_out << " (" << s.upsampled.size(0) << "x" << s.upsampled.size(1) << ")\n";
    }
  } catch (const laax::Error& e) {
    std::cerr << "error [" << laax::to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kOk;
}
