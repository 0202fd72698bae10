#include <CLI11.hpp>
#include <iostream>
#include <sstream>

#include "cbi/io.hpp"

namespace {

using namespace cbi;

int count_conv_rows(const NetworkSpec& spec) {
  int n = 0;
  for (const LayerDesc& d : spec.layers) n += d.kind == LayerKind::Conv;
  return n;
}

// A threshold argument is either a file written by `calibrate` or an inline
// comma list; a single value broadcasts to every conv layer.
std::vector<float> parse_taus(const std::string& arg, int n_conv) {
  std::vector<float> taus;
  if (std::filesystem::exists(arg)) {
    taus = load_tau_file(arg);
  } else {
    std::stringstream ss(arg);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        taus.push_back(std::stof(item));
      } catch (const std::exception&) {
        throw InvalidInputError("--thresholds: '" + item + "' is not a number or file");
      }
    }
  }
  if (taus.size() == 1) taus.assign(n_conv, taus[0]);
  if (static_cast<int>(taus.size()) != n_conv)
    throw InvalidInputError("expected " + std::to_string(n_conv) + " thresholds, got " +
                            std::to_string(taus.size()));
  return taus;
}

std::vector<DetectionPolicy> parse_policies(const std::string& arg, int n_conv) {
  std::vector<DetectionPolicy> out;
  std::stringstream ss(arg);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "detect")
      out.push_back(DetectionPolicy::Detect);
    else if (item == "propagate")
      out.push_back(DetectionPolicy::Propagate);
    else if (item == "reuse")
      out.push_back(DetectionPolicy::Reuse1x1);
    else
      throw InvalidInputError("--policy-map: unknown policy '" + item + "'");
  }
  if (static_cast<int>(out.size()) != n_conv)
    throw InvalidInputError("--policy-map: expected " + std::to_string(n_conv) +
                            " entries, got " + std::to_string(out.size()));
  return out;
}

// "start:stop:step" (inclusive) or a comma list.
std::vector<double> parse_factors(const std::string& arg) {
  std::vector<double> out;
  if (arg.find(':') != std::string::npos) {
    double a, b, step;
    if (std::sscanf(arg.c_str(), "%lf:%lf:%lf", &a, &b, &step) != 3 || step <= 0.0)
      throw InvalidInputError("--factors: expected start:stop:step");
    for (double v = a; v <= b + 1e-9; v += step) out.push_back(v);
  } else {
    std::stringstream ss(arg);
    std::string item;
    while (std::getline(ss, item, ','))
      out.push_back(std::stod(item));
  }
  if (out.empty()) throw InvalidInputError("--factors: empty list");
  return out;
}

LossMetric parse_metric(const std::string& m) {
  if (m == "mse") return LossMetric::Mse;
  if (m == "pixelacc") return LossMetric::PixelAccuracyDelta;
  throw InvalidInputError("--metric must be mse or pixelacc");
}

void emit(const std::string& path, const std::string& bytes) {
  if (path.empty())
    std::cout << bytes;
  else
    write_file_atomic(path, bytes);
}

struct RunArgs {
  std::string model, frames, thresholds, policy_map, stats_out, ref_out, metric = "mse";
  double factor = -1.0;
  bool compare_dense = false, timing = false;
};

void cmd_run(const RunArgs& a) {
  NetworkSpec spec = load_model(a.model);
  DenseNetwork dense = build_network(spec);
  const std::vector<Tensor3> frames = load_frame_sequence(a.frames);
  const int n_conv = count_conv_rows(spec);

  std::vector<float> taus(n_conv, 0.0f);
  if (!a.thresholds.empty()) taus = parse_taus(a.thresholds, n_conv);
  if (a.factor >= 0.0) {
    if (a.thresholds.empty()) taus.assign(n_conv, static_cast<float>(a.factor));
    else
      for (float& t : taus) t = static_cast<float>(t * a.factor);
  }

  std::vector<DetectionPolicy> policies(n_conv, DetectionPolicy::Detect);
  if (!a.policy_map.empty()) policies = parse_policies(a.policy_map, n_conv);

  CBNetwork cb = convert_to_cb(dense, taus, &policies);

  std::vector<Tensor3> reference;
  if (a.compare_dense || !a.ref_out.empty()) reference = make_reference(dense, frames);
  if (!a.ref_out.empty()) save_frame_sequence(reference, a.ref_out);

  StatsConfig cfg;
  cfg.timing = a.timing;
  SequenceResult result = forward_sequence(cb, frames, a.compare_dense ? &reference : nullptr,
                                           parse_metric(a.metric), cfg);

  std::ostringstream os;
  write_stats_csv(os, result.stats);
  emit(a.stats_out, os.str());
}

struct CalibArgs {
  std::string model, out, trace, metric = "mse", aggregate = "mean";
  std::vector<std::string> frames;
  double budget = 0.0, init_tau = 0.01, growth = 1.1;
  int max_steps = 64;
};

void cmd_calibrate(const CalibArgs& a) {
  NetworkSpec spec = load_model(a.model);
  DenseNetwork dense = build_network(spec);

  std::vector<EvalSequence> seqs;
  for (const std::string& dir : a.frames) {
    EvalSequence s;
    s.frames = load_frame_sequence(dir);
    s.reference = make_reference(dense, s.frames);
    seqs.push_back(std::move(s));
  }

  CBNetwork cb = convert_to_cb(dense, std::vector<float>(count_conv_rows(spec), 0.0f));

  CalibConfig cfg;
  cfg.initial_tau = a.init_tau;
  cfg.growth_factor = a.growth;
  cfg.per_layer_budget = a.budget;
  cfg.metric = parse_metric(a.metric);
  cfg.max_steps = a.max_steps;
  cfg.aggregation = a.aggregate == "worst" ? LossAggregation::Worst : LossAggregation::Mean;

  CalibResult result = select_thresholds(cb, seqs, cfg);
  save_tau_file(result.taus, a.out);
  if (!a.trace.empty()) {
    std::ostringstream os;
    write_calib_trace_csv(os, result.trace);
    write_file_atomic(a.trace, os.str());
  }
  for (std::size_t i = 0; i < result.hit_cap.size(); ++i)
    if (result.hit_cap[i])
      std::cerr << "warning: layer " << i << " threshold growth stopped at the step cap\n";
}

struct SweepArgs {
  std::string model, frames, base_tau, factors = "0:2:0.25", out, metric = "mse";
  bool timing = false;
};

void cmd_sweep(const SweepArgs& a) {
  NetworkSpec spec = load_model(a.model);
  DenseNetwork dense = build_network(spec);
  const int n_conv = count_conv_rows(spec);

  EvalSequence seq;
  seq.frames = load_frame_sequence(a.frames);
  seq.reference = make_reference(dense, seq.frames);
  std::vector<EvalSequence> seqs{std::move(seq)};

  CBNetwork cb = convert_to_cb(dense, std::vector<float>(n_conv, 0.0f));
  std::vector<TradeoffRow> curve = sweep_threshold_factor(
      cb, parse_taus(a.base_tau, n_conv), parse_factors(a.factors), seqs,
      parse_metric(a.metric));
  if (!a.timing)
    for (TradeoffRow& row : curve) row.wall_ns = 0;

  std::ostringstream os;
  write_tradeoff_csv(os, curve);
  emit(a.out, os.str());
}

struct ReportArgs {
  std::string model, mode = "all", frames, thresholds, policy_map, out;
  double factor = -1.0;
};

void cmd_mem_report(const ReportArgs& a) {
  NetworkSpec spec = load_model(a.model);
  std::ostringstream os;
  if (a.mode == "all") {
    write_mem_report_csv(os, spec);
  } else {
    MemMode mode;
    if (a.mode == "naive")
      mode = MemMode::Naive;
    else if (a.mode == "shared")
      mode = MemMode::Shared;
    else if (a.mode == "cb")
      mode = MemMode::Cb;
    else
      throw InvalidInputError("--mode must be naive, shared, cb or all");
    const MemReport r = memory_accounting(spec, mode);
    os << "mode,intermediate_values,x_matrix_values,param_values,cb_extra_values,total_values\n"
       << a.mode << "," << r.intermediate_values << "," << r.x_matrix_values << ","
       << r.param_values << "," << r.cb_extra_values << "," << r.total_values << "\n";
  }
  emit(a.out, os.str());
}

void cmd_op_report(const ReportArgs& a) {
  NetworkSpec spec = load_model(a.model);
  DenseNetwork dense = build_network(spec);
  const std::vector<Tensor3> frames = load_frame_sequence(a.frames);
  const int n_conv = count_conv_rows(spec);

  std::vector<float> taus(n_conv, 0.0f);
  if (!a.thresholds.empty()) taus = parse_taus(a.thresholds, n_conv);
  if (a.factor >= 0.0)
    for (float& t : taus) t = static_cast<float>(t * a.factor);
  std::vector<DetectionPolicy> policies(n_conv, DetectionPolicy::Detect);
  if (!a.policy_map.empty()) policies = parse_policies(a.policy_map, n_conv);

  CBNetwork cb = convert_to_cb(dense, taus, &policies);
  StatsConfig cfg;
  cfg.estimate_fg = true;
  cfg.timing = false;
  SequenceResult result = forward_sequence(cb, frames, nullptr, LossMetric::Mse, cfg);

  std::ostringstream os;
  write_op_report_csv(os, make_op_report(spec, result.stats));
  emit(a.out, os.str());
}

struct GenModelArgs {
  std::string topology = "small", out, blob;
  unsigned seed = 1;
  int channels = 3, height = 128, width = 128;
};

void cmd_gen_model(const GenModelArgs& a) {
  NetworkSpec spec;
  if (a.topology == "seg7")
    spec = make_seg7_spec(a.seed);
  else if (a.topology == "small")
    spec = make_small_spec(a.seed, a.channels, a.height, a.width);
  else
    throw InvalidInputError("--topology must be seg7 or small");
  std::string blob = a.blob;
  if (blob.empty()) blob = std::filesystem::path(a.out).stem().string() + ".bin";
  save_model(spec, a.out, blob);
}

struct GenFramesArgs {
  std::string out;
  SyntheticConfig cfg;
};

void cmd_gen_frames(const GenFramesArgs& a) {
  save_frame_sequence(gen_synthetic(a.cfg), a.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"change-based CNN inference runtime"};
  app.require_subcommand(1);

  RunArgs run;
  CLI::App* c_run = app.add_subcommand("run", "run a frame sequence through the CB pipeline");
  c_run->add_option("--model", run.model)->required();
  c_run->add_option("--frames", run.frames)->required();
  c_run->add_option("--thresholds", run.thresholds);
  c_run->add_option("--threshold-factor", run.factor)->check(CLI::NonNegativeNumber);
  c_run->add_option("--policy-map", run.policy_map);
  c_run->add_option("--stats-out", run.stats_out);
  c_run->add_option("--ref-out", run.ref_out);
  c_run->add_option("--metric", run.metric);
  c_run->add_flag("--compare-dense", run.compare_dense);
  c_run->add_flag("--timing", run.timing);

  CalibArgs calib;
  CLI::App* c_cal = app.add_subcommand("calibrate", "select per-layer thresholds");
  c_cal->add_option("--model", calib.model)->required();
  c_cal->add_option("--frames", calib.frames)->required();
  c_cal->add_option("--metric", calib.metric);
  c_cal->add_option("--budget", calib.budget)->required();
  c_cal->add_option("--init-tau", calib.init_tau);
  c_cal->add_option("--growth", calib.growth);
  c_cal->add_option("--max-steps", calib.max_steps);
  c_cal->add_option("--aggregate", calib.aggregate);
  c_cal->add_option("--out", calib.out)->required();
  c_cal->add_option("--trace", calib.trace);

  SweepArgs sweep;
  CLI::App* c_swp = app.add_subcommand("sweep", "joint threshold-factor sweep");
  c_swp->add_option("--model", sweep.model)->required();
  c_swp->add_option("--frames", sweep.frames)->required();
  c_swp->add_option("--base-tau", sweep.base_tau)->required();
  c_swp->add_option("--factors", sweep.factors);
  c_swp->add_option("--metric", sweep.metric);
  c_swp->add_option("--out", sweep.out);
  c_swp->add_flag("--timing", sweep.timing);

  ReportArgs mem;
  CLI::App* c_mem = app.add_subcommand("mem-report", "memory accounting in stored values");
  c_mem->add_option("--model", mem.model)->required();
  c_mem->add_option("--mode", mem.mode);
  c_mem->add_option("--out", mem.out);

  ReportArgs ops;
  CLI::App* c_ops = app.add_subcommand("op-report", "dense/CB/fine-grained op counts");
  c_ops->add_option("--model", ops.model)->required();
  c_ops->add_option("--frames", ops.frames)->required();
  c_ops->add_option("--thresholds", ops.thresholds);
  c_ops->add_option("--threshold-factor", ops.factor)->check(CLI::NonNegativeNumber);
  c_ops->add_option("--policy-map", ops.policy_map);
  c_ops->add_option("--out", ops.out);

  GenModelArgs gm;
  CLI::App* c_gm = app.add_subcommand("gen-model", "emit a bundled topology with seeded weights");
  c_gm->add_option("--topology", gm.topology);
  c_gm->add_option("--out", gm.out)->required();
  c_gm->add_option("--blob", gm.blob);
  c_gm->add_option("--seed", gm.seed);
  c_gm->add_option("--channels", gm.channels);
  c_gm->add_option("--height", gm.height);
  c_gm->add_option("--width", gm.width);

  GenFramesArgs gf;
  CLI::App* c_gf = app.add_subcommand("gen-frames", "emit a seeded synthetic frame sequence");
  c_gf->add_option("--out", gf.out)->required();
  c_gf->add_option("--height", gf.cfg.height);
  c_gf->add_option("--width", gf.cfg.width);
  c_gf->add_option("--channels", gf.cfg.channels);
  c_gf->add_option("--frames", gf.cfg.n_frames);
  c_gf->add_option("--objects", gf.cfg.n_objects);
  c_gf->add_option("--object-size", gf.cfg.object_size);
  c_gf->add_option("--velocity-y", gf.cfg.velocity_y);
  c_gf->add_option("--velocity-x", gf.cfg.velocity_x);
  c_gf->add_option("--noise-std", gf.cfg.noise_std);
  c_gf->add_option("--seed", gf.cfg.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: cli: " << e.what() << "\n";
    return 1;
  }

  try {
    if (c_run->parsed()) cmd_run(run);
    if (c_cal->parsed()) cmd_calibrate(calib);
    if (c_swp->parsed()) cmd_sweep(sweep);
    if (c_mem->parsed()) cmd_mem_report(mem);
    if (c_ops->parsed()) cmd_op_report(ops);
    if (c_gm->parsed()) cmd_gen_model(gm);
    if (c_gf->parsed()) cmd_gen_frames(gf);
  } catch (const ParseError& e) {
    std::cerr << "error: parse: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 1;
  } catch (const CalibrationError& e) {
    std::cerr << "error: calibration: " << e.what() << "\n";
    return 1;
  } catch (const InvalidInputError& e) {
    std::cerr << "error: input: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: io: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
