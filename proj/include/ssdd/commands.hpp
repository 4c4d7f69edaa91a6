#pragma once

// Command implementations behind the `ssdd` tool. Each takes a plain options
// struct, writes progress to `log` and throws InvalidInput / IoError on bad
// input.

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ssdd/benchdata.hpp"
#include "ssdd/eval.hpp"
#include "ssdd/fileio.hpp"
#include "ssdd/pipeline.hpp"

namespace ssdd::commands {

namespace fs = std::filesystem;

struct GenDataOptions {
  fs::path out;
  long long n = 200;
  std::size_t size = 64;
  std::size_t classes = 5;
  std::uint64_t seed = 42;
  double corruption = 1.0;
};

struct TrainStaticOptions {
  fs::path data;
  fs::path out;
  StaticStageConfig cfg;
};

struct RefineStaticOptions {
  fs::path data;
  fs::path ckpt;
  fs::path out;
  BiasParams bias;
  CrfParams crf;
};

struct TrainDynamicOptions {
  fs::path data;
  fs::path seeds;
  fs::path ckpt;
  fs::path out;
  fs::path pred_out;  // optional main-head predictions
  DynamicStageConfig cfg;
};

struct CrfOptions {
  fs::path image;
  fs::path prob;
  fs::path out;
  CrfParams crf;
};

struct EvalOptions {
  fs::path pred;
  fs::path gt;
  std::size_t classes = 5;
  fs::path out;
};

struct ReportOptions {
  std::vector<fs::path> runs;
  fs::path out;  // optional CSV
};

inline std::size_t head_channels(const std::vector<ParamSet<float>>& sets, const std::string& head,
                                 const std::string& source) {
  const auto& set = find_param_set(sets, head, source);
  if (set.tensors.empty() || set.tensors.front().rank() != 4) throw IoError(source + ": malformed " + head);
  return set.tensors.front().dim(0);
}

inline void gen_data(const GenDataOptions& o, std::ostream& log) {
  if (o.out.empty()) throw InvalidInput("gen-data: --out is required");
  if (o.corruption < 0.0) throw InvalidInput("gen-data: --corruption must be non-negative");
  WorldSpec spec;
  spec.image_size = o.size;
  spec.class_count = o.classes;
  spec.corruption = CorruptionModel{}.scaled(o.corruption);
  const auto records = generate(spec, o.n, o.seed);
  write_dataset(records, o.out);
  log << "wrote " << records.size() << " records to " << o.out.string() << '\n';
}

inline void train_static(const TrainStaticOptions& o, std::ostream& log) {
  const auto data = read_dataset(o.data);
  auto result = static_stage_train(data, o.cfg);
  for (std::size_t e = 0; e < result.epochs.size(); ++e) {
    const auto& s = result.epochs[e];
    log << "epoch " << e + 1 << " L_base " << format_number(s.l_base) << " L_diff0 " << format_number(s.l_diff)
        << " excluded " << s.excluded << '\n';
  }
  write_checkpoint(o.out, result.model.param_sets());
  log << "wrote " << o.out.string() << '\n';
}

/// Writes fused masks to OUT/NNNN.pgm and the two inputs to OUT/knowledge and
/// OUT/advice, all at input resolution.
inline void refine_static(const RefineStaticOptions& o, std::ostream& log) {
  const auto data = read_dataset(o.data);
  const auto sets = read_checkpoint(o.ckpt);
  const std::size_t channels = class_count_of(data);
  if (head_channels(sets, "base", o.ckpt.string()) != channels) {
    throw InvalidInput("refine-static: checkpoint class count does not match the dataset");
  }
  const auto model = StaticModel::load(sets, channels, o.ckpt.string());
  const auto pairs = make_static_pairs(data, o.crf);
  const auto fused = static_refine(model, data, pairs, o.bias);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::string name = data[i].id + ".pgm";
    write_mask(o.out / name, upsample_nearest(fused[i], kWorkingScale));
    write_mask(o.out / "knowledge" / name, upsample_nearest(pairs[i].knowledge, kWorkingScale));
    write_mask(o.out / "advice" / name, upsample_nearest(pairs[i].advice, kWorkingScale));
  }
  log << "wrote " << data.size() << " fused masks to " << o.out.string() << '\n';
}

inline void train_dynamic_cmd(const TrainDynamicOptions& o, std::ostream& log) {
  const auto data = read_dataset(o.data);
  const auto sets = read_checkpoint(o.ckpt);
  const std::size_t channels = class_count_of(data);
  if (head_channels(sets, "base", o.ckpt.string()) != channels) {
    throw InvalidInput("train-dynamic: checkpoint class count does not match the dataset");
  }
  const auto st = StaticModel::load(sets, channels, o.ckpt.string());
  std::vector<LabelMask> seeds;
  seeds.reserve(data.size());
  for (const auto& r : data) {
    const auto m = read_mask(o.seeds / (r.id + ".pgm"));
    if (m.height != r.gt.height || m.width != r.gt.width) {
      throw InvalidInput("train-dynamic: seed mask " + r.id + " has the wrong size");
    }
    seeds.push_back(downsample_nearest(m, kWorkingScale));
  }
  auto model = DynamicModel::from_static(st, o.cfg.dd_width, o.cfg.seed);
  const auto result = train_dynamic(model, data, seeds, o.cfg);
  for (std::size_t e = 0; e < result.epochs.size(); ++e) {
    const auto& s = result.epochs[e];
    log << "epoch " << e + 1 << " L_main " << format_number(s.losses.l_main) << " L_sub "
        << format_number(s.losses.l_sub) << " L_diff1 " << format_number(s.losses.l_diff1) << " L_diff2 "
        << format_number(s.losses.l_diff2) << " L_dynamic " << format_number(s.losses.total()) << '\n';
    if (!s.all_finite) throw InvalidInput("train-dynamic: non-finite loss in epoch " + std::to_string(e + 1));
  }
  write_checkpoint(o.out, model.param_sets());
  log << "wrote " << o.out.string() << '\n';
  if (!o.pred_out.empty()) {
    const auto preds = parallel_map(data.size(), [&](std::size_t i) { return predict_main(model.seg, data[i]); });
    for (std::size_t i = 0; i < data.size(); ++i) write_mask(o.pred_out / (data[i].id + ".pgm"), preds[i]);
    log << "wrote " << preds.size() << " main-head masks to " << o.pred_out.string() << '\n';
  }
}

inline void crf(const CrfOptions& o, std::ostream& log) {
  const auto img = read_image(o.image);
  const auto p = read_probmap(o.prob);
  if (p.dim(1) != img.height || p.dim(2) != img.width) {
    throw InvalidInput("crf: probability map " + shape_string(p.shape()) + " does not match image " +
                       std::to_string(img.height) + "x" + std::to_string(img.width));
  }
  write_probmap(o.out, crf_refine(p, img, o.crf));
  log << "wrote " << o.out.string() << '\n';
}

/// Pairs every gt/*.pgm with the same file name under the prediction directory.
inline IoUReport eval(const EvalOptions& o, std::ostream& log) {
  if (!fs::is_directory(o.gt)) throw IoError("eval: not a directory: " + o.gt.string());
  std::vector<fs::path> names;
  for (const auto& entry : fs::directory_iterator(o.gt)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") names.push_back(entry.path().filename());
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw IoError("eval: no .pgm masks in " + o.gt.string());
  std::vector<LabelMask> preds, gts;
  for (const auto& n : names) {
    gts.push_back(read_mask(o.gt / n));
    preds.push_back(read_mask(o.pred / n));
  }
  const auto report = iou_report(preds, gts, o.classes);
  if (!o.out.empty()) atomic_write(o.out, report_csv(report));
  log << report_table(report);
  return report;
}

/// Mean IoU from the last row of a report CSV.
inline double read_mean_iou(const fs::path& csv) {
  const auto bytes = read_file(csv);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  std::getline(in, line);
  if (line != "class,iou,intersection,union") throw IoError(csv.string() + ": unexpected header");
  while (std::getline(in, line)) {
    if (line.rfind("mean,", 0) != 0) continue;
    const auto end = line.find(',', 5);
    try {
      return std::stod(line.substr(5, end - 5));
    } catch (const std::exception&) {
      throw IoError(csv.string() + ": malformed mean row");
    }
  }
  throw IoError(csv.string() + ": missing mean row");
}

struct RunSummary {
  std::string run;
  double knowledge = 0.0;
  double advice = 0.0;
  double fused = 0.0;
};

/// Each run directory holds knowledge.csv, advice.csv and fused.csv.
inline std::vector<RunSummary> report(const ReportOptions& o, std::ostream& log) {
  if (o.runs.empty()) throw InvalidInput("report: no run directories given");
  std::vector<RunSummary> rows;
  for (const auto& dir : o.runs) {
    rows.push_back({dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string(),
                    read_mean_iou(dir / "knowledge.csv"), read_mean_iou(dir / "advice.csv"),
                    read_mean_iou(dir / "fused.csv")});
  }
  RunSummary mean{"mean", 0, 0, 0};
  for (const auto& r : rows) {
    mean.knowledge += r.knowledge / static_cast<double>(rows.size());
    mean.advice += r.advice / static_cast<double>(rows.size());
    mean.fused += r.fused / static_cast<double>(rows.size());
  }
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.run.size() + 2);
  log << std::left << std::setw(static_cast<int>(width)) << "run" << std::right << std::setw(11) << "knowledge"
      << std::setw(9) << "advice" << std::setw(9) << "fused" << '\n';
  std::ostringstream csv;
  csv << "run,knowledge,advice,fused\n";
  auto emit = [&](const RunSummary& r) {
    log << std::left << std::setw(static_cast<int>(width)) << r.run << std::right << std::fixed
        << std::setprecision(1) << std::setw(11) << 100.0 * r.knowledge << std::setw(9) << 100.0 * r.advice
        << std::setw(9) << 100.0 * r.fused << '\n';
    csv << r.run << ',' << format_number(r.knowledge) << ',' << format_number(r.advice) << ','
        << format_number(r.fused) << '\n';
  };
  for (const auto& r : rows) emit(r);
  emit(mean);
  if (!o.out.empty()) atomic_write(o.out, csv.str());
  return rows;
}

}  // namespace ssdd::commands
