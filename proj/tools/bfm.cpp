// bfm: command-line front end for the flow-matching experiments.
// Subcommands: toy, analyze, bmnist, mimo, synthdata. Every run writes a
// manifest.json before results so partial runs stay inspectable. Exit codes:
// 0 success (including expected divergence events), 2 usage, 3 missing
// input, 4 internal error.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "bfm/analysis.hpp"
#include "bfm/checkpoint.hpp"
#include "bfm/engine.hpp"
#include "bfm/io.hpp"
#include "bfm/sampler.hpp"
#include "bfm/tasks/bmnist.hpp"
#include "bfm/tasks/mimo.hpp"
#include "bfm/tasks/toy.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kArtifactVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitMissingInput = 3;
constexpr int kExitInternal = 4;

bfm::ObjectiveConfig parse_objective(const std::string& pred, const std::string& loss) {
  bfm::ObjectiveConfig o;
  if (pred == "x")
    o.prediction = bfm::ObjectiveConfig::Pred::x_pred;
  else if (pred == "v")
    o.prediction = bfm::ObjectiveConfig::Pred::v_pred;
  else
    throw bfm::ConfigError("unknown prediction '" + pred + "' (expected x or v)");
  if (loss == "xmse")
    o.loss = bfm::ObjectiveConfig::Loss::x_mse;
  else if (loss == "vmse")
    o.loss = bfm::ObjectiveConfig::Loss::v_mse;
  else if (loss == "bce")
    o.loss = bfm::ObjectiveConfig::Loss::bce;
  else
    throw bfm::ConfigError("unknown loss '" + loss + "' (expected xmse, vmse or bce)");
  o.validate();
  return o;
}

// "x+bce" -> objective
bfm::ObjectiveConfig parse_cell(const std::string& cell) {
  const auto plus = cell.find('+');
  if (plus == std::string::npos)
    throw bfm::ConfigError("cell '" + cell + "' must look like pred+loss, e.g. x+bce");
  return parse_objective(cell.substr(0, plus), cell.substr(plus + 1));
}

bfm::TimeSampler parse_sampler(const std::string& kind, double m, double s, double t_max) {
  if (kind == "uniform") return bfm::TimeSampler::uniform(t_max);
  if (kind == "logitnormal") return bfm::TimeSampler::logit_normal(m, s, t_max);
  if (kind == "clipped") return bfm::TimeSampler::clipped_uniform(t_max);
  throw bfm::ConfigError("unknown sampler '" + kind +
                         "' (expected uniform, logitnormal or clipped)");
}

class Manifest {
 public:
  Manifest(std::string out_dir, std::string command, json config, std::uint64_t seed)
      : path_(out_dir + "/manifest.json"), start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["artifact_version"] = kArtifactVersion;
    doc_["seed"] = seed;
    doc_["output_dir"] = out_dir;
    doc_["config"] = std::move(config);
    doc_["outputs"] = json::array();
    doc_["duration_seconds"] = nullptr;
    write();
  }

  void add_output(const std::string& name) {
    doc_["outputs"].push_back(name);
    write();
  }

  void set(const std::string& key, json value) {
    doc_[key] = std::move(value);
    write();
  }

  void finish() {
    const auto elapsed = std::chrono::steady_clock::now() - start_;
    doc_["duration_seconds"] = std::chrono::duration<double>(elapsed).count();
    write();
  }

 private:
  void write() const {
    std::ofstream os(path_, std::ios::binary);
    os << doc_.dump(2) << '\n';
  }

  json doc_;
  std::string path_;
  std::chrono::steady_clock::time_point start_;
};

json divergence_json(const std::optional<bfm::DivergenceEvent>& ev) {
  if (!ev) return nullptr;
  return json{{"step", ev->step}, {"loss", ev->loss}, {"grad_sq_norm", ev->grad_sq_norm}};
}

void write_binned_csv(const std::string& path, const bfm::GradTrace& trace, std::size_t bins) {
  std::ofstream os(path, std::ios::binary);
  os << "t_mid,mean_grad_sq,count\n";
  for (const auto& b : bfm::binned_second_moment(trace, bins))
    os << bfm::fmt_g17(b.t_mid) << ',' << bfm::fmt_g17(b.mean_grad_sq) << ',' << b.count << '\n';
}

void write_val_csv(const std::string& path,
                   const std::vector<std::pair<double, double>>& table) {
  std::ofstream os(path, std::ios::binary);
  os << "t,loss\n";
  for (const auto& [t, loss] : table) os << bfm::fmt_g17(t) << ',' << bfm::fmt_g17(loss) << '\n';
}

// tiles [count, h*w] samples in [-1,1] into one grayscale grid image
void write_sample_grid(const std::string& path, const bfm::Tensor& samples, std::size_t h,
                       std::size_t w, std::size_t grid_cols) {
  const std::size_t count = samples.rows();
  const std::size_t grid_rows = (count + grid_cols - 1) / grid_cols;
  std::vector<std::uint8_t> canvas(grid_rows * h * grid_cols * w, 0);
  const auto& d = samples.data();
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t gr = i / grid_cols, gc = i % grid_cols;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        double v = (d[i * h * w + r * w + c] + 1.0) * 0.5 * 255.0;
        v = std::min(255.0, std::max(0.0, v));
        canvas[(gr * h + r) * grid_cols * w + gc * w + c] = static_cast<std::uint8_t>(v);
      }
    }
  }
  bfm::write_pgm(path, grid_rows * h, grid_cols * w, canvas);
}

void require_input_file(const std::string& path, const std::string& hint) {
  if (!fs::exists(path)) {
    std::cerr << "missing input file: " << path << "\n" << hint << "\n";
    std::exit(kExitMissingInput);
  }
}

// ------------------------------------------------------------------- toy

struct ToyArgs {
  std::string data = "bpsk", pred = "x", loss = "vmse", sampler = "uniform", out;
  double m = -0.8, s = 0.8, t_max = 1.0, lr = 1e-4;
  long steps = 5000;
  std::size_t batch = 1000, dim = 16, bins = 20, ber_bits = 100000;
  int euler_steps = 3;
  std::uint64_t seed = 1;
};

int run_toy_cmd(const ToyArgs& a) {
  bfm::tasks::ToyRecipe recipe;
  recipe.data = a.data == "gaussian" ? bfm::tasks::ToyRecipe::DataKind::gaussian_iid
                                     : bfm::tasks::ToyRecipe::DataKind::bpsk_iid;
  recipe.dim = a.dim;
  recipe.batch = a.batch;
  recipe.steps = a.steps;
  recipe.lr = a.lr;
  recipe.seed = a.seed;
  recipe.euler_steps = a.euler_steps;
  recipe.ber_min_bits = a.ber_bits;
  recipe.cells = {{parse_objective(a.pred, a.loss), parse_sampler(a.sampler, a.m, a.s, a.t_max)}};

  fs::create_directories(a.out);
  json config{{"data", a.data},       {"pred", a.pred},   {"loss", a.loss},
              {"sampler", a.sampler}, {"m", a.m},         {"s", a.s},
              {"t_max", a.t_max},     {"steps", a.steps}, {"batch", a.batch},
              {"dim", a.dim},         {"lr", a.lr},       {"bins", a.bins},
              {"euler_steps", a.euler_steps},             {"ber_bits", a.ber_bits}};
  Manifest manifest(a.out, "toy", config, a.seed);

  bfm::tasks::ToyResult result = bfm::tasks::run_toy(recipe);
  const auto& cell = result.cells.front();

  bfm::save_history_csv(a.out + "/history.csv", cell.train.history);
  manifest.add_output("history.csv");
  cell.train.trace.save_csv(a.out + "/gradtrace.csv");
  manifest.add_output("gradtrace.csv");
  write_binned_csv(a.out + "/binned.csv", cell.train.trace, a.bins);
  manifest.add_output("binned.csv");

  if (!result.mmse_reference.empty()) {
    std::ofstream os(a.out + "/ber.csv", std::ios::binary);
    os << "t0,source,ber,bits\n";
    for (const auto& p : cell.ber)
      os << bfm::fmt_g17(p.t0) << ",model," << bfm::fmt_g17(p.ber) << ',' << p.bits << '\n';
    for (const auto& p : result.mmse_reference)
      os << bfm::fmt_g17(p.t0) << ",mmse," << bfm::fmt_g17(p.ber) << ',' << p.bits << '\n';
    manifest.add_output("ber.csv");
  }

  manifest.set("divergence", divergence_json(cell.train.divergence));
  manifest.set("completed_steps", json(cell.train.completed_steps));
  manifest.finish();
  std::cout << "toy: " << cell.objective.name() << " under " << cell.sampler.name() << ": "
            << (cell.train.divergence
                    ? "divergence event at step " + std::to_string(cell.train.divergence->step)
                    : "completed " + std::to_string(cell.train.completed_steps) + " steps")
            << "\n";
  return kExitOk;
}

// --------------------------------------------------------------- analyze

struct AnalyzeArgs {
  std::string case_name = "binary", report;
  double s = 0.8, m = 0.0;
  std::size_t dim = 16;
};

int run_analyze_cmd(const AnalyzeArgs& a) {
  const bfm::ManifoldCase cse =
      a.case_name == "continuous" ? bfm::ManifoldCase::continuous : bfm::ManifoldCase::binary;
  bfm::AnalysisConstants constants;
  constants.dim = a.dim;
  const bfm::CaseReport report = bfm::analyze_case(cse, a.s, a.m, constants);
  json doc{{"case", bfm::case_name(cse)},
           {"slope_integrand", report.slope_integrand},
           {"slope_integral", report.slope_integral},
           {"u_peak", report.u_peak},
           {"t_peak", report.t_peak},
           {"mass_above", report.mass_above}};
  std::ofstream os(a.report, std::ios::binary);
  if (!os) {
    std::cerr << "cannot write report to " << a.report << "\n";
    return kExitInternal;
  }
  os << doc.dump(2) << '\n';
  std::cout << doc.dump(2) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- bmnist

struct BmnistArgs {
  std::string images, labels, objective = "x+xmse", sampler = "uniform", out;
  double m = -0.8, s = 0.8, t_max = 1.0, lr = 1e-4, threshold = 0.5;
  int downscale = 2, sample_steps = 50;
  long steps = 20000, validate_every = 250;
  std::size_t batch = 256, subset = 5000, samples = 200, bins = 20;
  std::uint64_t seed = 1;
};

int run_bmnist_cmd(const BmnistArgs& a) {
  const std::string hint =
      "expected IDX files (train-images-idx3-ubyte / train-labels-idx1-ubyte);\n"
      "download the MNIST pair or generate a synthetic stand-in with:\n"
      "  bfm synthdata --images <images file> --labels <labels file>";
  require_input_file(a.images, hint);
  require_input_file(a.labels, hint);

  bfm::tasks::BmnistConfig cfg;
  cfg.subset = a.subset;
  cfg.batch = a.batch;
  cfg.steps = a.steps;
  cfg.lr = a.lr;
  cfg.seed = a.seed;
  cfg.validate_every = a.validate_every;
  cfg.sample_steps = a.sample_steps;
  cfg.sample_count = a.samples;
  cfg.out_dir = a.out;
  cfg.cells = {{parse_cell(a.objective), parse_sampler(a.sampler, a.m, a.s, a.t_max)}};

  fs::create_directories(a.out);
  json config{{"images", a.images},   {"labels", a.labels},     {"objective", a.objective},
              {"sampler", a.sampler}, {"m", a.m},               {"s", a.s},
              {"t_max", a.t_max},     {"threshold", a.threshold}, {"downscale", a.downscale},
              {"subset", a.subset},   {"steps", a.steps},       {"batch", a.batch},
              {"lr", a.lr},           {"sample_steps", a.sample_steps}, {"samples", a.samples}};
  Manifest manifest(a.out, "bmnist", config, a.seed);

  const bfm::tasks::RawIdx raw = bfm::tasks::load_idx(a.images, a.labels);
  const bfm::tasks::BinaryImageSet set =
      bfm::tasks::binarize_and_downscale(raw, a.threshold, a.downscale);
  bfm::tasks::save_image_set(a.out + "/dataset_cache.bnfm", set);
  manifest.add_output("dataset_cache.bnfm");

  bfm::tasks::BmnistResult result = bfm::tasks::run_bmnist(cfg, set);
  const auto& cell = result.cells.front();

  bfm::save_history_csv(a.out + "/history.csv", cell.train.history);
  manifest.add_output("history.csv");
  cell.train.trace.save_csv(a.out + "/gradtrace.csv");
  manifest.add_output("gradtrace.csv");
  write_binned_csv(a.out + "/binned.csv", cell.train.trace, a.bins);
  manifest.add_output("binned.csv");

  json metrics{{"untrained_baseline",
                {{"binariness", result.untrained_baseline.binariness},
                 {"marginal_l1", result.untrained_baseline.marginal_l1},
                 {"nn_hamming", result.untrained_baseline.nn_hamming}}}};
  if (cell.metrics) {
    metrics["cell"] = {{"binariness", cell.metrics->binariness},
                       {"marginal_l1", cell.metrics->marginal_l1},
                       {"nn_hamming", cell.metrics->nn_hamming}};
    write_sample_grid(a.out + "/samples.pgm", cell.samples, set.height, set.width, 10);
    manifest.add_output("samples.pgm");
    bfm::save_tensors(a.out + "/samples.bnfm", {{"samples", cell.samples}});
    manifest.add_output("samples.bnfm");
  }
  {
    std::ofstream os(a.out + "/metrics.json", std::ios::binary);
    os << metrics.dump(2) << '\n';
    manifest.add_output("metrics.json");
  }

  manifest.set("divergence", divergence_json(cell.train.divergence));
  manifest.set("completed_steps", json(cell.train.completed_steps));
  manifest.finish();
  std::cout << "bmnist: " << cell.objective.name() << " under " << cell.sampler.name() << ": "
            << (cell.train.divergence
                    ? "divergence event at step " + std::to_string(cell.train.divergence->step)
                    : "completed " + std::to_string(cell.train.completed_steps) + " steps")
            << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------ mimo

struct MimoArgs {
  std::string cells = "x+bce,x+vmse", snr_sweep = "0:2:12", out;
  int n = 2, euler_steps = 2;
  long steps = 4000, validate_every = 250;
  std::size_t batch = 512, eval_bits = 100000;
  double lr = 1e-3, grad_clip = 0.99, t_clip = 0.99;
  bool no_map = false;
  std::uint64_t seed = 1;
};

std::vector<double> parse_sweep(const std::string& sweep) {
  double lo = 0, step = 0, hi = 0;
  if (std::sscanf(sweep.c_str(), "%lf:%lf:%lf", &lo, &step, &hi) != 3 || step <= 0 || hi < lo)
    throw bfm::ConfigError("snr sweep must be min:step:max, e.g. 0:2:12");
  std::vector<double> grid;
  for (double v = lo; v <= hi + 1e-9; v += step) grid.push_back(v);
  return grid;
}

int run_mimo_cmd(const MimoArgs& a) {
  bfm::tasks::MimoConfig cfg;
  cfg.n = a.n;
  cfg.snr_grid_db = parse_sweep(a.snr_sweep);
  cfg.eval_bits = a.eval_bits;
  cfg.with_map = !a.no_map && 2 * a.n <= 16;
  cfg.steps = a.steps;
  cfg.batch = a.batch;
  cfg.lr = a.lr;
  cfg.grad_clip = a.grad_clip > 0 ? std::optional<double>(a.grad_clip) : std::nullopt;
  cfg.t_clip = a.t_clip;
  cfg.validate_every = a.validate_every;
  cfg.euler_steps = a.euler_steps;
  cfg.seed = a.seed;
  cfg.out_dir = a.out;
  for (const auto& cell : CLI::detail::split(a.cells, ','))
    if (!cell.empty()) cfg.cells.push_back(parse_cell(cell));

  fs::create_directories(a.out);
  json config{{"n", a.n},           {"snr_sweep", a.snr_sweep}, {"cells", a.cells},
              {"steps", a.steps},   {"batch", a.batch},         {"lr", a.lr},
              {"grad_clip", a.grad_clip}, {"t_clip", a.t_clip}, {"eval_bits", a.eval_bits},
              {"euler_steps", a.euler_steps}, {"map", cfg.with_map}};
  Manifest manifest(a.out, "mimo", config, a.seed);

  bfm::tasks::MimoResult result = bfm::tasks::run_mimo(cfg);

  {
    std::ofstream os(a.out + "/ber.csv", std::ios::binary);
    os << "snr_db,detector,ber,bit_count\n";
    for (const auto& row : result.rows)
      os << bfm::fmt_g17(row.snr_db) << ',' << row.detector << ',' << bfm::fmt_g17(row.ber) << ','
         << row.bits << '\n';
    manifest.add_output("ber.csv");
  }
  json divergences = json::object();
  for (const auto& [name, tr] : result.training) {
    bfm::save_history_csv(a.out + "/history_" + name + ".csv", tr.history);
    manifest.add_output("history_" + name + ".csv");
    tr.trace.save_csv(a.out + "/gradtrace_" + name + ".csv");
    manifest.add_output("gradtrace_" + name + ".csv");
    divergences[name] = divergence_json(tr.divergence);
  }
  manifest.set("divergence", divergences);
  manifest.finish();
  std::cout << "mimo: " << result.rows.size() << " BER rows over "
            << cfg.snr_grid_db.size() << " SNR points\n";
  return kExitOk;
}

// ------------------------------------------------------------- synthdata

struct SynthArgs {
  std::string images, labels;
  std::size_t count = 2000, rows = 28, cols = 28;
  std::uint64_t seed = 1;
};

int run_synth_cmd(const SynthArgs& a) {
  bfm::Rng rng(a.seed);
  const bfm::tasks::RawIdx raw = bfm::tasks::synth_digits(rng, a.count, a.rows, a.cols);
  bfm::tasks::write_idx(a.images, a.labels, raw);
  std::cout << "wrote " << a.count << " synthetic " << a.rows << "x" << a.cols << " digits to "
            << a.images << " / " << a.labels << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditional flow matching on continuous and binary manifolds"};
  app.require_subcommand(1);
  app.set_config("--config", "", "flat key=value configuration file");

  ToyArgs toy;
  CLI::App* toy_cmd = app.add_subcommand("toy", "stability study on iid Gaussian/BPSK vectors");
  toy_cmd->add_option("--data", toy.data)->check(CLI::IsMember({"gaussian", "bpsk"}));
  toy_cmd->add_option("--pred", toy.pred)->check(CLI::IsMember({"x", "v"}));
  toy_cmd->add_option("--loss", toy.loss)->check(CLI::IsMember({"xmse", "vmse", "bce"}));
  toy_cmd->add_option("--sampler", toy.sampler)
      ->check(CLI::IsMember({"uniform", "logitnormal", "clipped"}));
  toy_cmd->add_option("--m", toy.m);
  toy_cmd->add_option("--s", toy.s);
  toy_cmd->add_option("--tmax", toy.t_max);
  toy_cmd->add_option("--steps", toy.steps);
  toy_cmd->add_option("--batch", toy.batch);
  toy_cmd->add_option("--dim", toy.dim);
  toy_cmd->add_option("--lr", toy.lr);
  toy_cmd->add_option("--bins", toy.bins);
  toy_cmd->add_option("--euler-steps", toy.euler_steps);
  toy_cmd->add_option("--ber-bits", toy.ber_bits);
  toy_cmd->add_option("--seed", toy.seed);
  toy_cmd->add_option("--out", toy.out)->required();

  AnalyzeArgs an;
  CLI::App* an_cmd = app.add_subcommand("analyze", "numeric checks of the variance analysis");
  an_cmd->add_option("--case", an.case_name)->check(CLI::IsMember({"continuous", "binary"}));
  an_cmd->add_option("--s", an.s)->check(CLI::PositiveNumber);
  an_cmd->add_option("--m", an.m);
  an_cmd->add_option("--dim", an.dim);
  an_cmd->add_option("--report", an.report)->required();

  BmnistArgs bm;
  CLI::App* bm_cmd = app.add_subcommand("bmnist", "binarized image generation study");
  bm_cmd->add_option("--images", bm.images)->required();
  bm_cmd->add_option("--labels", bm.labels)->required();
  bm_cmd->add_option("--objective", bm.objective);
  bm_cmd->add_option("--sampler", bm.sampler)
      ->check(CLI::IsMember({"uniform", "logitnormal", "clipped"}));
  bm_cmd->add_option("--m", bm.m);
  bm_cmd->add_option("--s", bm.s);
  bm_cmd->add_option("--tmax", bm.t_max);
  bm_cmd->add_option("--threshold", bm.threshold);
  bm_cmd->add_option("--downscale", bm.downscale)->check(CLI::IsMember({1, 2}));
  bm_cmd->add_option("--subset", bm.subset);
  bm_cmd->add_option("--steps", bm.steps);
  bm_cmd->add_option("--batch", bm.batch);
  bm_cmd->add_option("--lr", bm.lr);
  bm_cmd->add_option("--validate-every", bm.validate_every);
  bm_cmd->add_option("--sample-steps", bm.sample_steps);
  bm_cmd->add_option("--samples", bm.samples);
  bm_cmd->add_option("--seed", bm.seed);
  bm_cmd->add_option("--out", bm.out)->required();

  MimoArgs mm;
  CLI::App* mm_cmd = app.add_subcommand("mimo", "MIMO detection study");
  mm_cmd->add_option("--n", mm.n)->check(CLI::PositiveNumber);
  mm_cmd->add_option("--snr-sweep", mm.snr_sweep);
  mm_cmd->add_option("--cells", mm.cells);
  mm_cmd->add_option("--steps", mm.steps);
  mm_cmd->add_option("--batch", mm.batch);
  mm_cmd->add_option("--lr", mm.lr);
  mm_cmd->add_option("--grad-clip", mm.grad_clip);
  mm_cmd->add_option("--t-clip", mm.t_clip);
  mm_cmd->add_option("--eval-bits", mm.eval_bits);
  mm_cmd->add_option("--euler-steps", mm.euler_steps);
  mm_cmd->add_option("--validate-every", mm.validate_every);
  mm_cmd->add_flag("--no-map", mm.no_map);
  mm_cmd->add_option("--seed", mm.seed);
  mm_cmd->add_option("--out", mm.out)->required();

  SynthArgs sy;
  CLI::App* sy_cmd = app.add_subcommand("synthdata", "write a synthetic IDX digit dataset");
  sy_cmd->add_option("--images", sy.images)->required();
  sy_cmd->add_option("--labels", sy.labels)->required();
  sy_cmd->add_option("--count", sy.count);
  sy_cmd->add_option("--rows", sy.rows);
  sy_cmd->add_option("--cols", sy.cols);
  sy_cmd->add_option("--seed", sy.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (toy_cmd->parsed()) return run_toy_cmd(toy);
    if (an_cmd->parsed()) return run_analyze_cmd(an);
    if (bm_cmd->parsed()) return run_bmnist_cmd(bm);
    if (mm_cmd->parsed()) return run_mimo_cmd(mm);
    if (sy_cmd->parsed()) return run_synth_cmd(sy);
  } catch (const bfm::ConfigError& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return kExitUsage;
  } catch (const bfm::FormatError& e) {
    std::cerr << "input format error: " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
