#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cli_support.hpp"
#include "gfpack.hpp"

namespace fs = std::filesystem;
using namespace gfpack;
using cli::json;
using cli::resolve;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::vector<std::string> argv;
  CLI::App* app = nullptr;
};

// Global options plus the running subcommand's section of the config dump.
std::string config_snapshot(const Globals& g, const std::string& command) {
  std::istringstream all(g.app->config_to_str(true, false));
  std::string line, out;
  while (std::getline(all, line)) {
    const auto eq = line.find('=');
    const auto dot = line.find('.');
    const bool global = dot == std::string::npos || dot > eq;
    if (global || line.rfind(command + ".", 0) == 0) out += line + '\n';
  }
  return out;
}

cli::Manifest manifest(const Globals& g, const std::string& command) {
  return cli::Manifest(command, g.argv, config_snapshot(g, command), g.seed, thread_count());
}

std::vector<io::InstanceRecord> read_instances(const std::string& path) {
  if (path.size() > 5 && path.compare(path.size() - 5, 5, ".json") == 0) return {io::load_instance(path)};
  return io::load_corpus(path);
}

PackingInstance in_strip(const PackingInstance& inst, double height_factor) {
  if (inst.container.is_strip()) return inst;
  return PackingInstance(inst.polygons, Container::strip(height_factor * inst.container.height()), inst.poses);
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

// ---------------------------------------------------------------- generate

struct GenerateOpts {
  std::string preset = "square16";
  int count = 0;
  double side = dataset::kDefaultSide;
  bool no_scramble = false;
  std::string out;
};

void run_generate(const Globals& g, const GenerateOpts& o) {
  auto m = manifest(g, "generate");
  const std::string out = resolve(o.out);
  cli::ensure_parent(out);
  io::JsonlWriter w(out);
  for (int i = 0; i < o.count; ++i) {
    const std::uint64_t seed = derive_seed(g.seed, {static_cast<std::uint64_t>(i)});
    auto spec = dataset::preset(o.preset, seed, o.side);
    spec.scramble = !o.no_scramble;
    try {
      const auto p = dataset::generate_puzzle(spec);
      w.write(io::to_json(p.ground_truth, {{"index", i}, {"puzzle_seed", seed}, {"preset", o.preset}}));
    } catch (const dataset::GenerationFailed& e) {
      throw std::runtime_error("item " + std::to_string(i) + ": " + e.what());
    }
  }
  w.flush();
  m.output(out);
  m.write(out);
  std::cout << "wrote " << o.count << " puzzles to " << out << '\n';
}

// ---------------------------------------------------------------- teach

struct TeachOpts {
  std::string preset = "square16";
  int count = 0;
  double side = dataset::kDefaultSide;
  bool no_scramble = false;
  double height_factor = 1.0;
  teacher::TeacherConfig teacher;
  std::string out;
};

void run_teach(const Globals& g, TeachOpts o) {
  auto m = manifest(g, "teach");
  const std::string out = resolve(o.out), stats = out + ".stats.json";
  cli::ensure_parent(out);
  auto spec = dataset::preset(o.preset, g.seed, o.side);
  spec.rng_seed = g.seed;
  spec.scramble = !o.no_scramble;
  o.teacher.rng_seed = g.seed;
  const auto corpus = teacher::generate_corpus(
      spec, static_cast<std::size_t>(o.count), o.teacher, [](const std::string& msg) { std::cerr << msg << '\n'; },
      o.height_factor);
  if (corpus.records.empty()) throw std::runtime_error("every draw was skipped; no corpus written");
  teacher::write_corpus(corpus, out, stats);
  m.set("teacher", teacher::to_json(o.teacher));
  m.output(out);
  m.output(stats);
  m.write(out);
  const auto& s = corpus.stats;
  std::cout << "records " << corpus.records.size() << " (skipped " << corpus.skipped.size() << ")  utilization "
            << pct(s.u_min) << " | " << pct(s.u_avg) << " | " << pct(s.u_max) << '\n';
}

// ---------------------------------------------------------------- train

struct TrainOpts {
  std::string corpus;
  std::string stats;
  std::string model = "toy";
  model::TrainConfig train;
  bool no_lambda = false;
  std::string out;
  std::string resume;
  std::string loss_csv;
  long log_every = 100;
};

void run_train(const Globals& g, TrainOpts o) {
  auto m = manifest(g, "train");
  const std::string corpus_path = resolve(o.corpus), out = resolve(o.out);
  cli::ensure_parent(out);
  const auto records = teacher::load_records(corpus_path);
  m.input(corpus_path);
  o.train.use_lambda = !o.no_lambda;
  o.train.rng_seed = g.seed;
  std::optional<diffusion::WeightStats> stats;
  if (o.train.use_lambda) {
    const std::string sp = o.stats.empty() ? corpus_path + ".stats.json" : resolve(o.stats);
    std::ifstream in(sp);
    if (!in) throw std::runtime_error("weight stats not found at " + sp + " (use --stats or --no-lambda)");
    const json j = json::parse(in);
    stats = diffusion::WeightStats{j.at("u_min"), j.at("u_avg"), j.at("u_max")};
    m.input(sp);
  }

  model::ModelConfig cfg = o.model == "full" ? model::ModelConfig{} : model::ModelConfig::toy();
  std::optional<model::ScoreModel> net;
  model::AdamState adam;
  if (!o.resume.empty()) {
    auto ck = model::load_checkpoint(resolve(o.resume));
    cfg = ck.config;
    net.emplace(cfg, std::move(ck.params));
    adam = std::move(ck.adam);
    m.input(resolve(o.resume));
  } else {
    net.emplace(cfg, g.seed);
  }
  o.train.checkpoint_path = out;
  const long first = adam.step + 1;
  double window = 0.0;
  long in_window = 0;
  const auto res = model::train(*net, records, stats, o.train, adam, [&](long step, double loss) {
    window += loss;
    ++in_window;
    if (step % o.log_every == 0) {
      std::cerr << "step " << step << " loss " << window / static_cast<double>(in_window) << '\n';
      window = 0.0;
      in_window = 0;
    }
  });
  const json meta = {{"train", model::to_json(o.train)}, {"corpus", corpus_path}};
  model::save_checkpoint(out, cfg, net->params(), &adam, meta);
  const std::string csv = o.loss_csv.empty() ? out + ".loss.csv" : resolve(o.loss_csv);
  model::write_loss_csv(csv, res.loss_curve, first);
  m.set("model", model::to_json(cfg));
  m.set("train", model::to_json(o.train));
  m.set("steps_done", res.steps_done);
  m.set("stopped_by_budget", res.stopped_by_budget);
  m.output(out);
  m.output(csv);
  m.write(out);
  std::cout << "trained " << res.steps_done << " steps (total " << adam.step << "), final loss "
            << (res.loss_curve.empty() ? 0.0 : res.loss_curve.back()) << " -> " << out << '\n';
}

// ---------------------------------------------------------------- sample

struct SampleOpts {
  std::string checkpoint;
  std::string in;
  int index = -1;
  diffusion::SampleConfig sample;
  double height_factor = 1.0;
  bool no_enhance = false;
  bool no_final_denoise = false;
  std::string out;
  std::string chains;
  std::string trajectory;
};

double checkpoint_translation_scale(const model::Checkpoint& ck) {
  if (auto t = ck.meta.find("train"); t != ck.meta.end()) return t->value("translation_scale", 1.0);
  return 1.0;
}

void run_sample(const Globals& g, SampleOpts o) {
  auto m = manifest(g, "sample");
  const std::string ck_path = resolve(o.checkpoint), in_path = resolve(o.in), out = resolve(o.out);
  cli::ensure_parent(out);
  auto ck = model::load_checkpoint(ck_path);
  const model::ScoreModel net(ck.config, std::move(ck.params));
  o.sample.translation_scale = checkpoint_translation_scale(ck);
  o.sample.final_denoise = !o.no_final_denoise;
  o.sample.record_trajectory = !o.trajectory.empty();
  o.sample.rng_seed = g.seed;
  const auto inputs = read_instances(in_path);
  m.input(ck_path);
  m.input(in_path);

  io::JsonlWriter best(out);
  const std::string chains_path = o.chains.empty() ? out + ".chains.jsonl" : resolve(o.chains);
  io::JsonlWriter chains(chains_path);
  std::optional<io::JsonlWriter> traj;
  if (!o.trajectory.empty()) traj.emplace(resolve(o.trajectory));
  enhancement::EnhanceConfig ecfg;
  diffusion::PostProcess post;
  if (!o.no_enhance) post = [&](const PackingInstance& in) { return enhancement::enhance(in, ecfg).instance; };

  std::vector<double> times;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (o.index >= 0 && static_cast<std::size_t>(o.index) != i) continue;
    const PackingInstance problem = in_strip(inputs[i].instance, o.height_factor);
    auto cfg = o.sample;
    cfg.rng_seed = derive_seed(g.seed, {i});
    const auto t0 = std::chrono::steady_clock::now();
    const auto cond = model::make_conditioning(problem.polygons, problem.container, cfg.translation_scale);
    const auto res = diffusion::sample_rsde(net.score_fn(cond, cfg.schedule), problem.polygons, problem.container,
                                            cfg, post);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto& b = res.chains[res.best];
    best.write(io::to_json(b.instance, {{"index", i},
                                        {"chain", res.best},
                                        {"utilization", b.utilization},
                                        {"feasible", b.feasible},
                                        {"batch", cfg.batch}}));
    times.push_back(secs);
    for (std::size_t k = 0; k < res.chains.size(); ++k) {
      const auto& c = res.chains[k];
      chains.write(io::to_json(c.instance, {{"index", i},
                                            {"chain", k},
                                            {"utilization", c.utilization},
                                            {"feasible", c.feasible},
                                            {"selected", k == res.best}}));
    }
    if (traj) {
      for (std::size_t s = 0; s < b.trajectory.size(); ++s) {
        json state = json::array();
        for (const auto& v : b.trajectory[s]) state.push_back(v);
        traj->write({{"index", i},
                     {"chain", res.best},
                     {"step", s},
                     {"t", cfg.time(static_cast<int>(s))},
                     {"translation_scale", cfg.translation_scale},
                     {"state", state}});
      }
    }
    std::cout << "instance " << i << ": chain " << res.best << " utilization " << pct(b.utilization) << "% "
              << (b.feasible ? "feasible" : "infeasible") << " (" << secs << " s)\n";
  }
  best.flush();
  chains.flush();
  m.set("sample", {{"steps", o.sample.steps},
                   {"batch", o.sample.batch},
                   {"t_end", o.sample.t_end},
                   {"sigma_min", o.sample.schedule.sigma_min},
                   {"sigma_max", o.sample.schedule.sigma_max},
                   {"final_denoise", o.sample.final_denoise},
                   {"enhance", !o.no_enhance}});
  m.output(out);
  m.set("instance_time_s", times);
  m.output(chains_path);
  if (!o.trajectory.empty()) m.output(resolve(o.trajectory));
  m.write(out);
}

// ---------------------------------------------------------------- enhance

struct EnhanceOpts {
  std::string in;
  std::string out;
  enhancement::EnhanceConfig cfg;
  double height_factor = 1.0;
  double jitter = 0.0;
};

void run_enhance(const Globals& g, const EnhanceOpts& o) {
  auto m = manifest(g, "enhance");
  const std::string in_path = resolve(o.in), out = resolve(o.out);
  cli::ensure_parent(out);
  const auto inputs = read_instances(in_path);
  m.input(in_path);
  io::JsonlWriter w(out);
  int feasible = 0;
  std::vector<double> times;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    PackingInstance inst = in_strip(inputs[i].instance, o.height_factor);
    if (o.jitter > 0.0) {
      Rng rng = make_rng(g.seed, {i});
      std::uniform_real_distribution<double> u(-o.jitter, o.jitter);
      const double scale = inst.container.height();
      for (auto& p : inst.poses) p = p.translated({u(rng) * scale, u(rng) * scale});
    }
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = enhancement::enhance(inst, o.cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    feasible += r.report.feasible;
    json meta = inputs[i].meta;
    meta["index"] = i;
    meta["feasible"] = r.report.feasible;
    meta["iterations"] = r.report.iterations;
    meta["utilization"] = utilization(r.instance).value;
    times.push_back(secs);
    w.write(io::to_json(r.instance, meta));
  }
  w.flush();
  m.set("instance_time_s", times);
  m.output(out);
  m.write(out);
  std::cout << "enhanced " << inputs.size() << " instances, feasible " << feasible << '\n';
}

// ---------------------------------------------------------------- eval

struct EvalOpts {
  std::string in;
  std::string csv;
};

void run_eval(const Globals& g, const EvalOpts& o) {
  auto m = manifest(g, "eval");
  const std::string in_path = resolve(o.in);
  const auto inputs = read_instances(in_path);
  std::vector<double> us, overlaps, ious, times;
  // wall times live in the producing command's manifest, keeping layouts byte-stable
  if (std::ifstream mf(in_path + ".manifest.json"); mf) {
    const json mj = json::parse(mf, nullptr, false);
    if (mj.is_object() && mj.contains("instance_time_s")) times = mj["instance_time_s"].get<std::vector<double>>();
  }
  int feasible = 0;
  for (const auto& r : inputs) {
    const auto mt = dataset::evaluate(r.instance);
    us.push_back(mt.utilization);
    overlaps.push_back(mt.overlap_percent);
    if (mt.iou) ious.push_back(*mt.iou);
    feasible += mt.feasible;
  }
  const auto u = dataset::summarize(us);
  const auto ov = dataset::summarize(overlaps);
  const double n = static_cast<double>(std::max<std::size_t>(inputs.size(), 1));
  char line[256];
  std::printf("%-10s %-26s %-10s %-8s %-10s %s\n", "instances", "utilization % min|avg|max", "overlap %", "IoU",
              "feasible", "mean_time_s");
  const std::string util = pct(u.min) + " | " + pct(u.avg) + " | " + pct(u.max);
  const std::string iou = ious.empty() ? "-" : std::to_string(dataset::summarize(ious).avg).substr(0, 6);
  const std::string tm = times.empty() ? "-" : std::to_string(dataset::summarize(times).avg);
  std::snprintf(line, sizeof line, "%-10zu %-26s %-10.4f %-8s %-10s %s", inputs.size(), util.c_str(), ov.avg,
                iou.c_str(), (pct(feasible / n) + "%").c_str(), tm.c_str());
  std::cout << line << '\n';
  if (!o.csv.empty()) {
    const std::string csv = resolve(o.csv);
    cli::ensure_parent(csv);
    std::ofstream f(csv);
    f << "instances,util_min,util_avg,util_max,overlap_pct,iou,feasible_rate,mean_time_s\n";
    f << inputs.size() << ',' << u.min << ',' << u.avg << ',' << u.max << ',' << ov.avg << ','
      << (ious.empty() ? "" : std::to_string(dataset::summarize(ious).avg)) << ',' << feasible / n << ','
      << (times.empty() ? "" : std::to_string(dataset::summarize(times).avg)) << '\n';
    m.input(in_path);
    m.output(csv);
    m.write(csv);
  }
}

// ---------------------------------------------------------------- render

struct RenderOpts {
  std::string in;
  int index = 0;
  std::string out;
  std::string trajectory;
  double height_factor = 1.0;
};

void run_render(const Globals& g, const RenderOpts& o) {
  auto m = manifest(g, "render");
  const std::string in_path = resolve(o.in), out = resolve(o.out);
  const auto inputs = read_instances(in_path);
  if (o.index < 0 || static_cast<std::size_t>(o.index) >= inputs.size()) {
    throw std::runtime_error("index " + std::to_string(o.index) + " out of range (" + std::to_string(inputs.size()) +
                             " instances)");
  }
  cli::ensure_parent(out);
  m.input(in_path);
  const PackingInstance& inst = inputs[o.index].instance;
  if (o.trajectory.empty()) {
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write " + out);
    f << render::svg(inst);
    m.output(out);
    m.write(out);
    std::cout << "wrote " << out << '\n';
    return;
  }
  const std::string tpath = resolve(o.trajectory);
  io::JsonlReader r(tpath);
  std::vector<diffusion::State> states;
  double scale = 1.0;
  while (auto j = r.next()) {
    if (j->at("index").get<int>() != o.index) continue;
    diffusion::State s;
    for (const auto& v : j->at("state")) s.push_back(v.get<diffusion::Vec4>());
    scale = j->value("translation_scale", 1.0);
    states.push_back(std::move(s));
  }
  if (states.empty()) throw std::runtime_error("no trajectory states for index " + std::to_string(o.index));
  const auto problem = in_strip(inst, o.height_factor);
  const auto frames = render::trajectory_frames(problem.polygons, problem.container, states, scale);
  m.input(tpath);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "_%04zu.svg", k);
    const std::string path = out + suffix;
    std::ofstream f(path);
    f << frames[k];
    m.output(path);
  }
  m.write(out);
  std::cout << "wrote " << frames.size() << " frames with prefix " << out << '\n';
}

// ---------------------------------------------------------------- bench

struct BenchOpts {
  std::string suite = "squares4";
  std::string in;
  int count = 8;
  double height_factor = 1.0;
  teacher::TeacherConfig teacher;
  std::string checkpoint;
  std::vector<int> batches{128};
  int steps = 128;
  std::string csv;
};

struct BenchRow {
  std::string method;
  dataset::Summary util;
  double mean_time = 0.0;
};

std::vector<PackingInstance> bench_instances(const Globals& g, const BenchOpts& o) {
  std::vector<PackingInstance> out;
  if (!o.in.empty()) {
    for (const auto& r : read_instances(resolve(o.in))) out.push_back(in_strip(r.instance, o.height_factor));
    return out;
  }
  if (o.suite == "squares4") {
    const std::vector<Polygon> sq(4, Polygon::rectangle(1, 1, {-0.5, -0.5}));
    out.emplace_back(sq, Container::strip(2.0));
    return out;
  }
  for (int i = 0; i < o.count; ++i) {
    const auto p = dataset::generate_puzzle(dataset::preset(o.suite, derive_seed(g.seed, {static_cast<std::uint64_t>(i)})));
    out.push_back(in_strip(PackingInstance(p.fragments, p.ground_truth.container), o.height_factor));
  }
  return out;
}

void run_bench(const Globals& g, BenchOpts o) {
  auto m = manifest(g, "bench");
  const auto problems = bench_instances(g, o);
  if (problems.empty()) throw std::runtime_error("bench suite is empty");
  std::vector<BenchRow> rows;
  auto timed = [](auto&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  std::vector<double> us, ts;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    auto cfg = o.teacher;
    cfg.rng_seed = derive_seed(g.seed, {i});
    double u = 0.0;
    ts.push_back(timed([&] { u = teacher::evolve(problems[i].polygons, problems[i].container, cfg).utilization; }));
    us.push_back(u);
  }
  rows.push_back({"teacher", dataset::summarize(us), dataset::summarize(ts).avg});

  if (!o.checkpoint.empty()) {
    auto ck = model::load_checkpoint(resolve(o.checkpoint));
    const double scale = checkpoint_translation_scale(ck);
    const model::ScoreModel net(ck.config, std::move(ck.params));
    for (int b : o.batches) {
      us.clear();
      ts.clear();
      for (std::size_t i = 0; i < problems.size(); ++i) {
        diffusion::SampleConfig sc;
        sc.batch = b;
        sc.steps = o.steps;
        sc.translation_scale = scale;
        sc.final_denoise = true;
        sc.rng_seed = derive_seed(g.seed, {i});
        const auto& pr = problems[i];
        double u = 0.0;
        ts.push_back(timed([&] {
          const auto cond = model::make_conditioning(pr.polygons, pr.container, scale);
          const auto res = diffusion::sample_rsde(net.score_fn(cond), pr.polygons, pr.container, sc,
                                                  [](const PackingInstance& in) { return enhancement::enhance(in).instance; });
          u = res.chains[res.best].utilization;
        }));
        us.push_back(u);
      }
      rows.push_back({"diffusion_b" + std::to_string(b), dataset::summarize(us), dataset::summarize(ts).avg});
    }
  }

  std::printf("%-16s %8s %8s %8s %12s\n", "method", "min", "avg", "max", "mean_time_s");
  for (const auto& r : rows) {
    std::printf("%-16s %8s %8s %8s %12.4f\n", r.method.c_str(), pct(r.util.min).c_str(), pct(r.util.avg).c_str(),
                pct(r.util.max).c_str(), r.mean_time);
  }
  if (!o.csv.empty()) {
    const std::string csv = resolve(o.csv);
    cli::ensure_parent(csv);
    std::ofstream f(csv);
    f << "method,min,avg,max,mean_time_s\n";
    f.precision(10);
    for (const auto& r : rows) f << r.method << ',' << r.util.min << ',' << r.util.avg << ',' << r.util.max << ',' << r.mean_time << '\n';
    m.set("instances", problems.size());
    m.output(csv);
    m.write(csv);
  }
}

void add_teacher_flags(CLI::App* c, teacher::TeacherConfig& t) {
  c->add_option("--angles", t.n_angles, "discrete rotations")->capture_default_str()->check(CLI::PositiveNumber);
  c->add_option("--population", t.population, "GA population")->capture_default_str()->check(CLI::PositiveNumber);
  c->add_option("--generations", t.generations, "GA generations")->capture_default_str()->check(CLI::NonNegativeNumber);
  c->add_option("--restarts", t.restarts, "independent GA restarts")->capture_default_str()->check(CLI::PositiveNumber);
  c->add_option("--mutation-rate", t.mutation_rate, "per-gene mutation probability")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gfpack: 2D irregular packing with a teacher packer, a score-based sampler and enhancement"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML-style config file (sections name subcommands); echoed into manifests");
  Globals g;
  g.app = &app;
  g.argv.assign(argv, argv + argc);
  app.add_option("--seed", g.seed, "master RNG seed")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads (0 = all cores; results are bit-stable only with 1)")
      ->capture_default_str();

  GenerateOpts gen;
  auto* c_gen = app.add_subcommand("generate", "generate puzzle ground-truth instances");
  c_gen->add_option("--preset", gen.preset, "square16 | arbitrary | squareN")->capture_default_str();
  c_gen->add_option("--count", gen.count, "number of puzzles (>= 1)")->required()->check(CLI::Range(1, 10000000));
  c_gen->add_option("--side", gen.side, "square side length")->capture_default_str()->check(CLI::PositiveNumber);
  c_gen->add_flag("--no-scramble", gen.no_scramble, "keep fragments in their cut orientation");
  c_gen->add_option("--out", gen.out, "output JSON-lines file")->required();

  TeachOpts teach;
  auto* c_teach = app.add_subcommand("teach", "build a teacher corpus with the NFP + GA packer");
  c_teach->add_option("--preset", teach.preset, "puzzle preset")->capture_default_str();
  c_teach->add_option("--count", teach.count, "number of puzzle draws (>= 1)")->required()->check(CLI::Range(1, 10000000));
  c_teach->add_option("--side", teach.side, "square side length")->capture_default_str()->check(CLI::PositiveNumber);
  c_teach->add_flag("--no-scramble", teach.no_scramble, "keep fragments in their cut orientation");
  c_teach->add_option("--height-factor", teach.height_factor, "strip height / boundary height")
      ->capture_default_str()
      ->check(CLI::Range(1.0, 10.0));
  add_teacher_flags(c_teach, teach.teacher);
  c_teach->add_option("--out", teach.out, "corpus JSON-lines file (stats go to <out>.stats.json)")->required();

  TrainOpts train;
  auto* c_train = app.add_subcommand("train", "train the score network on a teacher corpus");
  c_train->add_option("--corpus", train.corpus, "teacher corpus")->required();
  c_train->add_option("--stats", train.stats, "weight stats (default <corpus>.stats.json)");
  c_train->add_option("--model", train.model, "toy | full")->capture_default_str()->check(CLI::IsMember({"toy", "full"}));
  c_train->add_option("--steps", train.train.steps, "total optimizer steps")->capture_default_str();
  c_train->add_option("--batch", train.train.batch, "examples per step")->capture_default_str();
  c_train->add_option("--lr", train.train.lr, "AdamW learning rate")->capture_default_str();
  c_train->add_option("--weight-decay", train.train.weight_decay, "decoupled weight decay")->capture_default_str();
  c_train->add_option("--grad-clip", train.train.grad_clip, "global norm clip (0 = off)")->capture_default_str();
  c_train->add_option("--translation-scale", train.train.translation_scale, "translation units per state unit")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  c_train->add_option("--time-budget", train.train.time_budget_s, "stop after this many seconds (0 = none)")
      ->capture_default_str();
  c_train->add_flag("--no-lambda", train.no_lambda, "disable utilization weighting");
  c_train->add_option("--resume", train.resume, "continue from a checkpoint");
  c_train->add_option("--loss-csv", train.loss_csv, "loss curve (default <out>.loss.csv)");
  c_train->add_option("--log-every", train.log_every, "progress interval in steps")->capture_default_str();
  c_train->add_option("--out", train.out, "checkpoint path")->required();

  SampleOpts sample;
  auto* c_sample = app.add_subcommand("sample", "sample layouts with the reverse SDE");
  c_sample->add_option("--checkpoint", sample.checkpoint, "trained model")->required();
  c_sample->add_option("--in", sample.in, "instances (.json or .jsonl); poses are ignored")->required();
  c_sample->add_option("--index", sample.index, "only this instance (default all)");
  c_sample->add_option("--batch", sample.sample.batch, "chains per instance")->capture_default_str()->check(CLI::PositiveNumber);
  c_sample->add_option("--steps", sample.sample.steps, "Euler-Maruyama steps")->capture_default_str()->check(CLI::PositiveNumber);
  c_sample->add_option("--t-end", sample.sample.t_end, "final diffusion time")->capture_default_str();
  c_sample->add_option("--sigma-min", sample.sample.schedule.sigma_min, "schedule sigma(0)")->capture_default_str();
  c_sample->add_option("--sigma-max", sample.sample.schedule.sigma_max, "schedule sigma(1)")->capture_default_str();
  c_sample->add_option("--height-factor", sample.height_factor, "strip height for boundary inputs")
      ->capture_default_str();
  c_sample->add_flag("--no-enhance", sample.no_enhance, "skip utilization enhancement");
  c_sample->add_flag("--no-final-denoise", sample.no_final_denoise, "skip the final denoising step");
  c_sample->add_option("--out", sample.out, "selected layout per instance (JSON-lines)")->required();
  c_sample->add_option("--chains", sample.chains, "every chain (default <out>.chains.jsonl)");
  c_sample->add_option("--trajectory", sample.trajectory, "write the selected chain's states (JSON-lines)");

  EnhanceOpts enh;
  auto* c_enh = app.add_subcommand("enhance", "resolve overlaps and eliminate gaps");
  c_enh->add_option("--in", enh.in, "instances")->required();
  c_enh->add_option("--out", enh.out, "output JSON-lines")->required();
  c_enh->add_option("--max-iters", enh.cfg.max_iters, "overlap-resolution iterations")->capture_default_str();
  c_enh->add_option("--repeats", enh.cfg.repeats, "resolve + gap rounds")->capture_default_str();
  c_enh->add_option("--height-factor", enh.height_factor, "strip height for boundary inputs")->capture_default_str();
  c_enh->add_option("--jitter", enh.jitter, "translate each polygon by up to this fraction of the height first")
      ->capture_default_str();

  EvalOpts ev;
  auto* c_eval = app.add_subcommand("eval", "utilization, overlap, IoU and feasibility of instances");
  c_eval->add_option("--in", ev.in, "instances")->required();
  c_eval->add_option("--csv", ev.csv, "also write the row as CSV");

  RenderOpts ren;
  auto* c_ren = app.add_subcommand("render", "SVG of an instance or a sampling trajectory");
  c_ren->add_option("--in", ren.in, "instances")->required();
  c_ren->add_option("--index", ren.index, "which instance")->capture_default_str();
  c_ren->add_option("--trajectory", ren.trajectory, "trajectory JSON-lines from sample --trajectory");
  c_ren->add_option("--height-factor", ren.height_factor, "strip height for boundary inputs")->capture_default_str();
  c_ren->add_option("--out", ren.out, "SVG path (frame prefix in trajectory mode)")->required();

  BenchOpts bench;
  auto* c_bench = app.add_subcommand("bench", "Min|Avg|Max utilization table for teacher and diffusion");
  c_bench->add_option("--suite", bench.suite, "squares4 | square16 | arbitrary | squareN")->capture_default_str();
  c_bench->add_option("--in", bench.in, "held-out instances instead of a generated suite");
  c_bench->add_option("--count", bench.count, "generated instances")->capture_default_str();
  c_bench->add_option("--height-factor", bench.height_factor, "strip height / boundary height")->capture_default_str();
  add_teacher_flags(c_bench, bench.teacher);
  c_bench->add_option("--checkpoint", bench.checkpoint, "also run diffusion + enhancement with this model");
  c_bench->add_option("--batches", bench.batches, "diffusion batch sizes")->capture_default_str()->delimiter(',');
  c_bench->add_option("--steps", bench.steps, "Euler-Maruyama steps")->capture_default_str();
  c_bench->add_option("--csv", bench.csv, "CSV output (method,min,avg,max,mean_time_s)");

  CLI11_PARSE(app, argc, argv);
  set_thread_count(g.threads);
  try {
    if (c_gen->parsed()) run_generate(g, gen);
    if (c_teach->parsed()) run_teach(g, teach);
    if (c_train->parsed()) run_train(g, train);
    if (c_sample->parsed()) run_sample(g, sample);
    if (c_enh->parsed()) run_enhance(g, enh);
    if (c_eval->parsed()) run_eval(g, ev);
    if (c_ren->parsed()) run_render(g, ren);
    if (c_bench->parsed()) run_bench(g, bench);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
