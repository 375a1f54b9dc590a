#include "meshalign/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "meshalign/aligner.hpp"
#include "meshalign/correlation.hpp"
#include "meshalign/evalkit.hpp"
#include "meshalign/parallel.hpp"
#include "meshalign/visualize.hpp"

namespace meshalign {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext == ".png" || ext == ".pgm" || ext == ".ppm";
}

std::vector<fs::path> list_images(const fs::path& src) {
  if (fs::is_regular_file(src)) return {src};
  if (!fs::is_directory(src)) throw CliError("source not found: " + src.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(src)) {
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw CliError("no images in " + src.string());
  return files;
}

std::string pair_id(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "pair_%04d", i);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// key=value lines; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CliError("cannot open config " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw CliError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    while (!key.empty() && key.front() == '-') key.erase(key.begin());
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

struct AlignFlags {
  std::string grid = "8x8";
  std::string omega = "1,4,16";
  std::string depth;
  bool no_robust = false;
  bool freeze_levels = false;
};

void add_align_options(CLI::App* sub, AlignConfig& cfg, AlignFlags& f) {
  sub->add_option("--grid", f.grid, "mesh cells as UxV");
  sub->add_option("--alpha", cfg.alpha, "scale-softmax factor");
  sub->add_option("--k", cfg.patch, "correlation patch size (odd)");
  sub->add_option("--levels", cfg.depth_levels, "depth levels M");
  sub->add_option("--lambda", cfg.lambda, "content weight");
  sub->add_option("--mu", cfg.mu, "shape weight");
  sub->add_option("--omega", f.omega, "layer weights a,b,c");
  sub->add_option("--iters", cfg.refine_iters, "descent iterations per stage");
  sub->add_option("--step", cfg.step_size, "initial/maximum descent step in pixels");
  sub->add_option("--resolution", cfg.working_resolution, "working resolution");
  sub->add_flag("--no-robust", f.no_robust, "plain least-squares flow fit");
  sub->add_flag("--freeze-levels", f.freeze_levels, "keep the initial depth levels");
}

void finish_align_config(AlignConfig& cfg, const AlignFlags& f) {
  const auto g = split(f.grid, 'x');
  if (g.size() != 2) throw CliError("--grid expects UxV, got '" + f.grid + "'");
  try {
    cfg.grid_rows = std::stoi(g[0]);
    cfg.grid_cols = std::stoi(g[1]);
  } catch (const std::exception&) {
    throw CliError("--grid expects UxV, got '" + f.grid + "'");
  }
  const auto w = split(f.omega, ',');
  if (w.size() != 3) throw CliError("--omega expects a,b,c");
  try {
    for (int i = 0; i < 3; ++i) cfg.omega[i] = std::stod(w[i]);
  } catch (const std::exception&) {
    throw CliError("--omega expects a,b,c");
  }
  cfg.robust_fit = !f.no_robust;
  cfg.freeze_depth_levels = f.freeze_levels;
  cfg.validate();
}

void apply_threads(int threads) {
  if (threads <= 0) {
    if (const char* env = std::getenv("MESHALIGN_THREADS")) {
      try {
        threads = std::stoi(env);
      } catch (const std::exception&) {
        throw CliError(std::string("MESHALIGN_THREADS is not an integer: ") + env);
      }
    }
  }
  set_thread_count(threads);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw CliError("cannot create directory " + dir.string());
}

// ---- synth ---------------------------------------------------------------

struct SynthArgs {
  std::string src;
  std::string out;
  int n = 50;
  double rho = 8;
  int patch = 128;
  std::uint64_t seed = 0;
};

std::uint64_t pair_seed(std::uint64_t seed, int i) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(i)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  if (a.n < 1) throw CliError("--n must be >= 1");
  const auto sources = list_images(a.src);
  const fs::path dir(a.out);
  ensure_dir(dir);
  for (int i = 0; i < a.n; ++i) {
    const Image src = load_image(sources[static_cast<std::size_t>(i) % sources.size()]);
    const SynthPair pair = synth_pair(src, a.rho, a.patch, pair_seed(a.seed, i));
    const std::string id = pair_id(i);
    save_image(pair.reference, dir / (id + "_ref.png"));
    save_image(pair.target, dir / (id + "_tgt.png"));
    write_motion(pair.gt_motion, dir / (id + "_gt.txt"));
  }
  out << "wrote " << a.n << " pairs to " << dir.string() << "\n";
  return 0;
}

// ---- align ---------------------------------------------------------------

struct AlignArgs {
  std::string ref;
  std::string tgt;
  std::string out;
  int threads = 0;
};

int cmd_align(const AlignArgs& a, const AlignConfig& cfg, const std::string& depth_path,
              std::ostream& out) {
  const Image ir = load_image(a.ref);
  const Image it = load_image(a.tgt);
  std::optional<DepthMap> depth;
  if (!depth_path.empty()) depth = load_depth(depth_path);

  const AlignmentResult r = align(ir, it, cfg, depth);

  const fs::path dir(a.out);
  ensure_dir(dir);
  const Warp warp = mesh_is_warpable(r.mesh) ? Warp(r.mesh) : Warp(r.global_h);
  const Image warped = warp_target(ir, it, warp);
  save_image(warped, dir / "warped.png");
  save_image(fuse_red_blue(ir, warped), dir / "fused.png");
  save_image(draw_mesh(it, r.mesh), dir / "mesh_overlay.ppm");
  save_image(render_flow(r.layer1_flow), dir / "flow_layer1.ppm");
  save_image(render_flow(r.layer2_flow), dir / "flow_layer2.ppm");
  write_homography(r.global_h, dir / "homography.txt");
  write_mesh(r.mesh, dir / "mesh.txt");

  std::ostringstream report;
  report << "[input]\n"
         << "ref = " << a.ref << "\n"
         << "tgt = " << a.tgt << "\n"
         << "depth = " << (depth_path.empty() ? "none" : depth_path) << "\n"
         << "threads = " << thread_count() << "\n"
         << format_alignment_report(r, cfg);
  std::ofstream rep(dir / "report.txt");
  rep << report.str();
  if (!rep) throw CliError("failed writing report");
  out << report.str();
  return 0;
}

// ---- eval ----------------------------------------------------------------

struct EvalArgs {
  std::string src;
  std::string pred = "identity";
  std::string mode = "rmse";
  std::string out;
};

struct EvalPair {
  std::string id;
  fs::path ref, tgt, gt;
};

std::vector<EvalPair> list_pairs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw CliError("pairs directory not found: " + dir.string());
  std::vector<EvalPair> pairs;
  const std::string suffix = "_ref.png";
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.size() <= suffix.size() ||
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
      continue;
    }
    EvalPair p;
    p.id = name.substr(0, name.size() - suffix.size());
    p.ref = e.path();
    p.tgt = dir / (p.id + "_tgt.png");
    p.gt = dir / (p.id + "_gt.txt");
    pairs.push_back(p);
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const EvalPair& x, const EvalPair& y) { return x.id < y.id; });
  if (pairs.empty()) throw CliError("no pairs (*_ref.png) in " + dir.string());
  return pairs;
}

struct Prediction {
  Homography h;
  std::optional<Mesh> mesh;
};

Prediction predict(const EvalArgs& a, const AlignConfig& cfg, const EvalPair& p,
                   const Image& ir, const Image& it) {
  Prediction pred;
  if (a.pred == "identity") return pred;
  if (a.pred == "align") {
    const AlignmentResult r = align(ir, it, cfg);
    pred.h = r.global_h;
    if (mesh_is_warpable(r.mesh)) pred.mesh = r.mesh;
    return pred;
  }
  const fs::path d = fs::path(a.pred) / p.id;
  if (!fs::is_directory(d)) throw CliError("missing prediction directory " + d.string());
  if (fs::exists(d / "homography.txt")) pred.h = read_homography(d / "homography.txt");
  if (fs::exists(d / "mesh.txt")) pred.mesh = read_mesh(d / "mesh.txt");
  if (!pred.mesh && !fs::exists(d / "homography.txt")) {
    throw CliError("no homography.txt or mesh.txt in " + d.string());
  }
  return pred;
}

int cmd_eval(const EvalArgs& a, const AlignConfig& cfg, std::ostream& out) {
  if (a.mode != "rmse" && a.mode != "overlap") {
    throw CliError("--mode must be rmse or overlap");
  }
  const auto pairs = list_pairs(a.src);
  std::vector<PairScore> scores;
  for (const auto& p : pairs) {
    PairScore s;
    s.id = p.id;
    std::optional<FourPtMotion> gt;
    if (a.mode == "rmse") {
      if (!fs::exists(p.gt)) throw CliError("missing ground truth " + p.gt.string());
      gt = read_motion(p.gt);
    }
    const Image ir = load_image(p.ref);
    const Image it = load_image(p.tgt);
    const Prediction pred = predict(a, cfg, p, ir, it);
    if (gt) {
      const Rect rect{0, 0, static_cast<double>(ir.width()), static_cast<double>(ir.height())};
      s.rmse = rmse_4pt(to_4pt(pred.h, rect), *gt);
    } else {
      const Warp w = pred.mesh ? Warp(*pred.mesh) : Warp(pred.h);
      s.psnr = psnr_overlap(ir, it, w);
      s.ssim = ssim_overlap(ir, it, w);
    }
    scores.push_back(s);
  }
  const std::string report = format_report(scores);
  out << report;
  if (!a.out.empty()) {
    std::ofstream f(a.out);
    f << report;
    if (!f) throw CliError("cannot write " + a.out);
  }
  return 0;
}

// ---- bench ---------------------------------------------------------------

struct BenchArgs {
  std::string sizes = "8,16,32,64";
  int channels = kChannelsPerScale;
  double min_time = 0.2;
  std::uint64_t seed = 0;
  std::string out;
};

FeatureMap random_features(int n, int channels, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  FeatureMap f;
  f.data = Image(n, n, channels);
  for (auto& v : f.data.data()) v = dist(rng);
  return l2_normalize(f);
}

template <typename F>
double time_repeated(F&& fn, double min_seconds) {
  fn();  // warm-up: first touch of the output buffers is not timed
  // Best of three windows, each at least min_seconds / 3 long.
  double best = std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 3; ++trial) {
    int reps = 0;
    const auto t0 = Clock::now();
    double elapsed = 0;
    do {
      fn();
      ++reps;
      elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
    } while (elapsed < min_seconds / 3);
    best = std::min(best, elapsed / reps);
  }
  return best;
}

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  std::vector<int> sizes;
  for (const auto& s : split(a.sizes, ',')) {
    try {
      sizes.push_back(std::stoi(s));
    } catch (const std::exception&) {
      throw CliError("--sizes expects a comma separated list of integers");
    }
    if (sizes.back() < 1) throw CliError("--sizes must be positive");
  }
  if (sizes.empty()) throw CliError("--sizes is empty");
  const BenchReport rep = run_bench(sizes, a.channels, a.min_time, static_cast<unsigned>(a.seed));

  std::ostringstream t;
  t << "n,cost_channels,ccl_channels,channel_ratio,cost_seconds,ccl_seconds,cost_bytes,ccl_bytes\n";
  char buf[256];
  for (const auto& r : rep.rows) {
    std::snprintf(buf, sizeof buf, "%d,%lld,%lld,%.6f,%.6e,%.6e,%lld,%lld\n", r.n,
                  r.cost_channels, r.ccl_channels,
                  static_cast<double>(r.ccl_channels) / r.cost_channels, r.cost_seconds,
                  r.ccl_seconds, r.cost_bytes, r.ccl_bytes);
    t << buf;
  }
  std::snprintf(buf, sizeof buf, "# loglog_slope cost_volume=%.3f ccl=%.3f\n", rep.cost_slope,
                rep.ccl_slope);
  t << buf;
  out << t.str();
  if (!a.out.empty()) {
    std::ofstream f(a.out);
    f << t.str();
    if (!f) throw CliError("cannot write " + a.out);
  }
  return 0;
}

// Builds argv with config-file entries inserted right after the subcommand
// name so that later command-line flags take precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args, CLI::App& app,
                                       std::ostream& err) {
  std::string config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
    }
  }
  if (config.empty() || args.empty()) return args;
  CLI::App* sub = nullptr;
  for (auto* s : app.get_subcommands([](CLI::App*) { return true; })) {
    if (s->get_name() == args[0]) sub = s;
  }
  if (sub == nullptr) return args;
  std::vector<std::string> out{args[0]};
  for (const auto& [key, value] : read_config(config)) {
    const std::string flag = "--" + key;
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (opt == nullptr) {
      err << "warning: config key '" << key << "' is not used by " << args[0] << "\n";
      continue;
    }
    if (opt->get_type_size() == 0) {
      if (value == "true" || value == "1" || value == "yes") out.push_back(flag);
    } else {
      out.push_back(flag);
      out.push_back(value);
    }
  }
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

}  // namespace

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("loglog_slope: need at least two matching samples");
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double den = n * sxx - sx * sx;
  if (den == 0) throw std::invalid_argument("loglog_slope: x values are all equal");
  return (n * sxy - sx * sy) / den;
}

BenchReport run_bench(const std::vector<int>& sizes, int channels, double min_seconds,
                      unsigned seed) {
  BenchReport rep;
#if defined(__GLIBC__)
  // Keep freed volumes on the heap so every size is timed in the same
  // allocation regime (glibc otherwise switches to fresh mmap pages above
  // its dynamic threshold, adding page-fault cost only to large n).
  mallopt(M_MMAP_MAX, 0);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  std::mt19937_64 rng(seed);
  std::vector<double> ns, tc, tl;
  for (int n : sizes) {
    const FeatureMap fr = random_features(n, channels, rng);
    const FeatureMap ft = random_features(n, channels, rng);
    const int patch = 3;
    BenchRow row;
    row.n = n;
    row.cost_channels = static_cast<long long>(2 * n + 1) * (2 * n + 1);
    row.ccl_channels = static_cast<long long>(n) * n;
    const long long loc = static_cast<long long>(n) * n;
    const long long in_bytes = 2 * loc * channels * static_cast<long long>(sizeof(double));
    row.cost_bytes = in_bytes + loc * row.cost_channels * static_cast<long long>(sizeof(double));
    // raw + probability volumes, im2col of both maps, flow output
    row.ccl_bytes = in_bytes +
                    2 * loc * row.ccl_channels * static_cast<long long>(sizeof(double)) +
                    2 * loc * channels * patch * patch * static_cast<long long>(sizeof(double)) +
                    2 * loc * static_cast<long long>(sizeof(double));
    volatile double sink = 0;
    row.cost_seconds = time_repeated(
        [&] { sink = sink + cost_volume(fr, ft, n).data[0]; }, min_seconds);
    row.ccl_seconds = time_repeated(
        [&] { sink = sink + ccl(fr, ft, patch, 10.0).hor[0]; }, min_seconds);
    ns.push_back(n);
    tc.push_back(row.cost_seconds);
    tl.push_back(row.ccl_seconds);
    rep.rows.push_back(row);
  }
  if (ns.size() >= 2) {
    rep.cost_slope = loglog_slope(ns, tc);
    rep.ccl_slope = loglog_slope(ns, tl);
  }
  return rep;
}

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mesh-based image alignment toolkit", "meshalign"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  std::string config_path;
  int threads = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value file; flags override it");
    sub->add_option("--threads", threads, "worker threads (default: MESHALIGN_THREADS or all)");
  };

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate synthetic homography pairs");
  s->add_option("--src", synth.src, "source image or directory")->required();
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--n", synth.n, "number of pairs");
  s->add_option("--rho", synth.rho, "corner perturbation range in pixels");
  s->add_option("--patch", synth.patch, "patch size");
  s->add_option("--seed", synth.seed, "random seed");
  add_common(s);

  AlignArgs al;
  AlignConfig cfg;
  AlignFlags aflags;
  auto* a = app.add_subcommand("align", "align a target image onto a reference");
  a->add_option("--ref", al.ref, "reference image")->required();
  a->add_option("--tgt", al.tgt, "target image")->required();
  a->add_option("--out", al.out, "output directory")->required();
  a->add_option("--depth", aflags.depth, "target depth map (PGM/PNG)");
  add_align_options(a, cfg, aflags);
  add_common(a);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "score predictions on a pair directory");
  e->add_option("--src", ev.src, "pairs directory")->required();
  e->add_option("--pred", ev.pred, "identity, align, or a directory of alignment outputs");
  e->add_option("--mode", ev.mode, "rmse (needs *_gt.txt) or overlap (PSNR/SSIM)");
  e->add_option("--out", ev.out, "also write the report to this file");
  add_align_options(e, cfg, aflags);
  add_common(e);

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "time cost volume against contextual correlation");
  b->add_option("--sizes", bench.sizes, "feature sizes n, comma separated");
  b->add_option("--channels", bench.channels, "feature channels");
  b->add_option("--min-time", bench.min_time, "minimum timing window per kernel, seconds");
  b->add_option("--seed", bench.seed, "random seed");
  b->add_option("--out", bench.out, "also write the table to this file");
  add_common(b);

  try {
    const std::vector<std::string> args = expand_config(raw_args, app, err);
    std::vector<const char*> argv{"meshalign"};
    for (const auto& s_arg : args) argv.push_back(s_arg.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? 0 : 2;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return 2;
  }

  try {
    apply_threads(threads);
    if (s->parsed()) return cmd_synth(synth, out);
    if (a->parsed()) {
      finish_align_config(cfg, aflags);
      return cmd_align(al, cfg, aflags.depth, out);
    }
    if (e->parsed()) {
      finish_align_config(cfg, aflags);
      return cmd_eval(ev, cfg, out);
    }
    if (b->parsed()) return cmd_bench(bench, out);
  } catch (const CliError& ex) {
    err << "error: " << ex.what() << "\n";
    return 2;
  } catch (const NoOverlapError& ex) {
    err << "error: no overlap: " << ex.what() << "\n";
    return 3;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace meshalign
