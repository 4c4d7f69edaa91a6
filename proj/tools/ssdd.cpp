#include <algorithm>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssdd/commands.hpp"

namespace {

using namespace ssdd;
namespace cmd = ssdd::commands;

void add_crf_flags(CLI::App* app, CrfParams& crf) {
  app->add_option("--wg", crf.w_g, "bilateral kernel weight")->capture_default_str();
  app->add_option("--wrgb", crf.w_rgb, "spatial kernel weight")->capture_default_str();
  app->add_option("--ta", crf.theta_alpha, "bilateral spatial bandwidth")->capture_default_str();
  app->add_option("--tb", crf.theta_beta, "bilateral colour bandwidth")->capture_default_str();
  app->add_option("--tg", crf.theta_gamma, "spatial kernel bandwidth")->capture_default_str();
  app->add_option("--iters,--crf-iters", crf.iterations, "mean-field iterations")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app->add_flag("--windowed", crf.windowed, "skip pixel pairs whose kernel value is below 1e-12");
}

void add_bias_flags(CLI::App* app, BiasParams& bias) {
  app->add_option("--bdd", bias.b_dd, "constant confidence bias")->capture_default_str();
  app->add_option("--bclass", bias.b_class, "failing-class bias")->capture_default_str();
}

void add_quantifier_flag(CLI::App* app, ExclusionQuantifier& q) {
  static const std::map<std::string, ExclusionQuantifier> names{{"all", ExclusionQuantifier::All},
                                                                {"any", ExclusionQuantifier::Any}};
  app->add_option("--exclude", q, "exclusion quantifier over image labels")
      ->transform(CLI::CheckedTransformer(names, CLI::ignore_case));
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Replaces `--config FILE` with one `--key=value` argument per line of FILE,
// placed ahead of the other flags so that explicit flags win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> from_file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string file;
    if (args[i] == "--config" && i + 1 < args.size()) {
      file = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      continue;
    }
    --i;
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open config file " + file);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      line = trim(line);
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
        throw std::runtime_error(file + ":" + std::to_string(line_no) + ": expected key=value");
      }
      from_file.push_back("--" + trim(line.substr(0, eq)) + "=" + trim(line.substr(eq + 1)));
    }
  }
  if (!from_file.empty() && !args.empty()) {
    args.insert(args.begin() + 1, from_file.begin(), from_file.end());
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised difference detection on a synthetic segmentation benchmark", "ssdd"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.footer("Every command also accepts --config FILE with key=value lines; flags override the file.");

  cmd::GenDataOptions gen;
  auto* g = app.add_subcommand("gen-data", "generate a synthetic dataset");
  g->add_option("--out", gen.out, "dataset directory")->required();
  g->add_option("--n", gen.n, "record count")->capture_default_str();
  g->add_option("--size", gen.size, "image side length")->capture_default_str();
  g->add_option("--classes", gen.classes, "foreground class count")->capture_default_str();
  g->add_option("--seed", gen.seed, "RNG seed")->capture_default_str();
  g->add_option("--corruption", gen.corruption, "seed corruption level (0 = none)")->capture_default_str();

  cmd::TrainStaticOptions ts;
  auto* t = app.add_subcommand("train-static", "train the embedding, base head and DD-Net");
  t->add_option("--data", ts.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  t->add_option("--out", ts.out, "checkpoint path")->required();
  t->add_option("--epochs", ts.cfg.epochs)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--batch", ts.cfg.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--lr", ts.cfg.base_lr, "base learning rate")->capture_default_str();
  t->add_option("--dd-width", ts.cfg.dd_width, "DD-Net branch width")->capture_default_str();
  t->add_option("--seed", ts.cfg.seed, "RNG seed")->capture_default_str();
  t->add_flag("!--no-flip", ts.cfg.flip, "disable horizontal-flip augmentation");
  add_bias_flags(t, ts.cfg.bias);
  add_crf_flags(t, ts.cfg.crf);
  add_quantifier_flag(t, ts.cfg.quantifier);

  cmd::RefineStaticOptions rs;
  auto* r = app.add_subcommand("refine-static", "fuse seed and CRF masks with a trained DD-Net");
  r->add_option("--data", rs.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  r->add_option("--ckpt", rs.ckpt, "static checkpoint")->required()->check(CLI::ExistingFile);
  r->add_option("--out", rs.out, "mask directory")->required();
  add_bias_flags(r, rs.bias);
  add_crf_flags(r, rs.crf);

  cmd::TrainDynamicOptions td;
  auto* d = app.add_subcommand("train-dynamic", "self-supervised training with two SSDD modules");
  d->add_option("--data", td.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  d->add_option("--seeds", td.seeds, "refined seed masks")->required()->check(CLI::ExistingDirectory);
  d->add_option("--ckpt", td.ckpt, "static checkpoint")->required()->check(CLI::ExistingFile);
  d->add_option("--out", td.out, "output checkpoint")->required();
  d->add_option("--pred-out", td.pred_out, "write main-head masks here");
  d->add_option("--alpha", td.cfg.alpha, "weight of the static seeds in L_sub")->capture_default_str();
  d->add_option("--epochs", td.cfg.epochs)->capture_default_str()->check(CLI::PositiveNumber);
  d->add_option("--batch", td.cfg.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  d->add_option("--lr", td.cfg.base_lr, "base learning rate")->capture_default_str();
  d->add_option("--dd-width", td.cfg.dd_width, "DD-Net branch width")->capture_default_str();
  d->add_option("--seed", td.cfg.seed, "RNG seed")->capture_default_str();
  d->add_flag("!--no-flip", td.cfg.flip, "disable horizontal-flip augmentation");
  add_bias_flags(d, td.cfg.bias);
  add_crf_flags(d, td.cfg.crf);
  add_quantifier_flag(d, td.cfg.quantifier);

  cmd::CrfOptions co;
  auto* c = app.add_subcommand("crf", "dense CRF on one probability map");
  c->add_option("--image", co.image, "PPM image")->required()->check(CLI::ExistingFile);
  c->add_option("--prob", co.prob, "probability map")->required()->check(CLI::ExistingFile);
  c->add_option("--out", co.out, "output probability map")->required();
  add_crf_flags(c, co.crf);

  cmd::EvalOptions eo;
  auto* e = app.add_subcommand("eval", "IoU of predicted masks against ground truth");
  e->add_option("--pred", eo.pred, "prediction directory")->required()->check(CLI::ExistingDirectory);
  e->add_option("--gt", eo.gt, "ground-truth directory")->required()->check(CLI::ExistingDirectory);
  e->add_option("--classes", eo.classes, "foreground class count")->required();
  e->add_option("--out", eo.out, "CSV report");

  cmd::ReportOptions ro;
  auto* p = app.add_subcommand("report", "compare knowledge, advice and fused mIoU across runs");
  p->add_option("--runs", ro.runs, "run directories holding knowledge/advice/fused CSVs")
      ->required()
      ->check(CLI::ExistingDirectory);
  p->add_option("--out", ro.out, "CSV summary");

  try {
    auto args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const std::exception& ex) {
    if (const auto* err = dynamic_cast<const CLI::ParseError*>(&ex)) return app.exit(*err);
    std::cerr << "ssdd: " << ex.what() << '\n';
    return 1;
  }

  try {
    if (*g) cmd::gen_data(gen, std::cout);
    if (*t) cmd::train_static(ts, std::cout);
    if (*r) cmd::refine_static(rs, std::cout);
    if (*d) cmd::train_dynamic_cmd(td, std::cout);
    if (*c) cmd::crf(co, std::cout);
    if (*e) cmd::eval(eo, std::cout);
    if (*p) cmd::report(ro, std::cout);
  } catch (const std::exception& ex) {
    std::cerr << "ssdd: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
