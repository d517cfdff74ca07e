#include "maskgil/cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "maskgil/cli/run_config.hpp"
#include "maskgil/model/model.hpp"
#include "maskgil/training/train.hpp"

namespace maskgil::cli {

namespace {

// Codebook colours are fixed so renders of the same grid always agree.
constexpr std::uint64_t kRenderSeed = 0x4d47494cu;

void write_text(const std::string& path, const std::string& text) {
  training::write_file(path, std::span<const std::uint8_t>(
                                 reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

schedules::ScheduleKind schedule_flag(const std::string& name) {
  try {
    return schedules::kind_from_string(name);
  } catch (const ConfigError& e) {
    throw UsageError(std::string("--schedule: ") + e.what());
  }
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

void write_grid_outputs(const TokenGrid& grid, std::size_t codebook_size, std::size_t patch,
                        const std::string& prefix) {
  training::save_token_grid(grid, prefix + ".tokens");
  toytok::save_ppm(toytok::decode_tokens(grid, patch, render_codebook(codebook_size)),
                   prefix + ".ppm");
}

}  // namespace

int exit_code_for(const Error& e) {
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return 3;
  return 1;
}

toytok::Codebook render_codebook(std::size_t codebook_size) {
  return toytok::Codebook::synthetic(std::max<std::size_t>(codebook_size, 2), kRenderSeed);
}

Condition resolve_condition(const std::optional<std::int64_t>& class_id,
                            const std::optional<std::string>& prompt) {
  if (class_id && prompt) throw UsageError("--class and --prompt are mutually exclusive");
  if (class_id) {
    if (*class_id < 0 || *class_id > INT32_MAX) throw UsageError("--class must be non-negative");
    return ClassLabel{static_cast<std::int32_t>(*class_id)};
  }
  if (prompt) return TextPrompt{*prompt};
  return Condition{};
}

std::string cmd_train(const TrainArgs& args) {
  const RunConfig rc = load_run_config(args.config);
  rc.validate();
  model::ParametersF params = model::build_model(rc.model, rc.seed);
  const training::TrainResult result = training::train_loop(std::move(params), rc.model, rc.task, rc.train);
  training::Checkpoint ckpt{rc.model, rc.train, result.step, result.params};
  training::save_checkpoint(ckpt, args.out);
  const std::string metrics = args.metrics.empty() ? args.out + ".metrics.csv" : args.metrics;
  write_text(metrics, training::metrics_csv(result.metrics));
  std::ostringstream os;
  os << "trained " << result.step << " steps";
  if (!result.metrics.empty()) os << ", final loss " << result.metrics.back().loss;
  os << "; checkpoint " << args.out << ", metrics " << metrics << "\n";
  return os.str();
}

std::string cmd_generate(const GenerateArgs& args) {
  const training::Checkpoint ckpt = training::load_checkpoint(args.ckpt);
  if (ckpt.model.attention != AttentionMode::bidirectional) {
    throw ConfigError("generate needs a bidirectional checkpoint");
  }
  Rng rng(args.seed);
  const decoding::DecodeResult res =
      decoding::decode(ckpt.params, ckpt.model, args.condition, args.decode, rng);
  write_grid_outputs(res.grid, ckpt.model.codebook_size, args.patch, args.out);
  write_text(args.out + ".trace.csv", res.trace.to_csv(args.timing));
  std::ostringstream os;
  os << "generated " << res.grid.h << "x" << res.grid.w << " grid in " << res.trace.records.size()
     << " steps (" << res.trace.forward_passes << " forward passes); wrote " << args.out
     << ".{tokens,ppm,trace.csv}\n";
  return os.str();
}

std::string cmd_hybrid(const HybridArgs& args) {
  const model::ModelConfig ar_cfg = training::header_model_config(training::read_header(args.ar_ckpt));
  const model::ModelConfig mar_cfg =
      training::header_model_config(training::read_header(args.mar_ckpt));
  argen::validate_compatible(ar_cfg, mar_cfg);
  const training::Checkpoint ar = training::load_checkpoint(args.ar_ckpt);
  const training::Checkpoint mar = training::load_checkpoint(args.mar_ckpt);
  Rng rng(args.seed);
  const argen::HybridResult res =
      argen::hybrid_generate(ar.params, ar.model, mar.params, mar.model, args.condition,
                             args.options, rng);
  write_grid_outputs(res.grid, mar.model.codebook_size, args.patch, args.out);
  write_text(args.out + ".steps.csv",
             argen::StepReport::csv_header() + res.report.csv_row(args.timing));
  std::ostringstream os;
  os << "hybrid ratio " << args.options.ar_ratio << ": " << res.report.ar_steps << " AR + "
     << res.report.mar_steps << " MAR = " << res.report.total_steps << " steps; wrote " << args.out
     << ".{tokens,ppm,steps.csv}\n";
  return os.str();
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("MASKGIL_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw UsageError("MASKGIL_THREADS must be a positive integer");
    return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<BenchRow> run_bench(const BenchArgs& args) {
  if (args.ratios.empty()) throw UsageError("--ratios must list at least one value");
  if (args.repeat == 0) throw UsageError("--repeat must be at least 1");
  const model::ModelConfig ar_cfg = training::header_model_config(training::read_header(args.ar_ckpt));
  const model::ModelConfig mar_cfg =
      training::header_model_config(training::read_header(args.mar_ckpt));
  argen::validate_compatible(ar_cfg, mar_cfg);
  const training::Checkpoint ar = training::load_checkpoint(args.ar_ckpt);
  const training::Checkpoint mar = training::load_checkpoint(args.mar_ckpt);

  struct Cell {
    std::size_t steps = 0;
    double millis = 0.0;
  };
  const std::size_t cells = args.ratios.size() * args.repeat;
  std::vector<Cell> results(cells);
  std::atomic<std::size_t> next{0};
  std::mutex error_mu;
  std::exception_ptr error;

  auto worker = [&] {
    for (std::size_t i = next++; i < cells; i = next++) {
      try {
        const std::size_t r = i / args.repeat;
        const std::size_t rep = i % args.repeat;
        argen::HybridOptions opt;
        opt.ar_ratio = args.ratios[r];
        opt.decode = args.decode;
        Rng rng(args.seed + rep);
        const auto res = argen::hybrid_generate(ar.params, ar.model, mar.params, mar.model,
                                                args.condition, opt, rng);
        results[i] = {res.report.total_steps, res.report.total_millis};
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  const std::size_t threads =
      std::min(cells, args.threads ? args.threads : worker_threads());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  std::vector<BenchRow> rows;
  for (std::size_t r = 0; r < args.ratios.size(); ++r) {
    BenchRow row;
    row.ratio = args.ratios[r];
    row.sample_steps = results[r * args.repeat].steps;
    for (std::size_t rep = 0; rep < args.repeat; ++rep) row.millis += results[r * args.repeat + rep].millis;
    row.millis /= static_cast<double>(args.repeat);
    rows.push_back(row);
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os << "ratio,sample_steps,millis\n";
  char buf[96];
  for (const BenchRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%g,%zu,%.3f\n", r.ratio, r.sample_steps, r.millis);
    os << buf;
  }
  return os.str();
}

std::string cmd_bench(const BenchArgs& args) {
  const std::string csv = bench_csv(run_bench(args));
  if (!args.out.empty()) write_text(args.out, csv);
  return csv;
}

std::string schedules_csv(std::size_t n, std::size_t steps) {
  std::ostringstream os;
  os << "kind,step,masked_after,newly_fixed\n";
  for (schedules::ScheduleKind kind : schedules::kAllKinds) {
    const schedules::ScheduleSpec spec{kind, steps, n};
    const auto plan = schedules::plan_steps(spec);
    const auto fixed = schedules::newly_fixed(spec, plan);
    for (std::size_t t = 0; t < plan.size(); ++t) {
      os << schedules::to_string(kind) << ',' << t + 1 << ',' << plan[t] << ',' << fixed[t] << '\n';
    }
  }
  return os.str();
}

std::string cmd_schedules(const SchedulesArgs& args) {
  const std::string csv = schedules_csv(args.n, args.steps);
  if (!args.out.empty()) write_text(args.out, csv);
  return csv;
}

std::string cmd_inspect(const std::string& ckpt) {
  const training::CheckpointHeader h = training::read_header(ckpt);
  std::ostringstream os;
  os << "kind: " << h.kind << "\n";
  os << "version: " << training::kCheckpointVersion << "\n";
  std::uint64_t payload = 0;
  for (const auto& t : h.tensors) payload += t.nbytes;
  os << "tensors: " << h.tensors.size() << " (" << payload << " payload bytes)\n";
  if (h.kind == "model") {
    const model::ModelConfig mc = training::header_model_config(h);
    os << "step: " << h.json.value("step", std::uint64_t{0}) << "\n";
    os << "param_count: " << model::param_count(mc) << "\n";
    os << "model: " << model::to_json(mc).dump() << "\n";
    if (h.json.contains("train")) os << "train: " << h.json.at("train").dump() << "\n";
  } else {
    for (const auto& t : h.tensors) {
      os << t.name << ": " << t.dtype << " [";
      for (std::size_t i = 0; i < t.shape.size(); ++i) os << (i ? ", " : "") << t.shape[i];
      os << "]\n";
    }
  }
  return os.str();
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"masked generative image-token engine", "maskgil"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train a model from a JSON run config");
  train_cmd->add_option("--config", train.config, "run config JSON")->required();
  train_cmd->add_option("--out", train.out, "checkpoint path")->required();
  train_cmd->add_option("--metrics", train.metrics, "metrics CSV (default <out>.metrics.csv)");

  // Shared decode flags.
  struct DecodeFlags {
    std::int64_t class_id = 0;
    std::string prompt;
    std::string schedule = "arccos";
    CLI::Option* class_opt = nullptr;
    CLI::Option* prompt_opt = nullptr;
  };
  auto add_condition = [](CLI::App* cmd, DecodeFlags& f) {
    f.class_opt = cmd->add_option("--class", f.class_id, "class label");
    f.prompt_opt = cmd->add_option("--prompt", f.prompt, "text prompt");
    f.class_opt->excludes(f.prompt_opt);
  };
  auto condition_of = [](const DecodeFlags& f) {
    return resolve_condition(f.class_opt->count() ? std::optional<std::int64_t>(f.class_id)
                                                  : std::nullopt,
                             f.prompt_opt->count() ? std::optional<std::string>(f.prompt)
                                                   : std::nullopt);
  };
  auto add_decode = [](CLI::App* cmd, DecodeFlags& f, decoding::DecodeOptions& d) {
    cmd->add_option("--schedule", f.schedule, "root|linear|square|cosine|arccos");
    cmd->add_option("--steps", d.steps, "decoding iterations T");
    cmd->add_option("--cfg-scale", d.cfg_scale, "classifier-free guidance scale (1 = off)");
    cmd->add_option("--temperature", d.temperature, "sampling temperature");
    cmd->add_option("--choice-temp", d.choice_temp, "Gumbel noise on the re-masking ranking");
  };

  GenerateArgs gen;
  DecodeFlags gen_flags;
  auto* gen_cmd = app.add_subcommand("generate", "iterative masked decoding from a checkpoint");
  gen_cmd->add_option("--ckpt", gen.ckpt, "bidirectional checkpoint")->required();
  add_condition(gen_cmd, gen_flags);
  add_decode(gen_cmd, gen_flags, gen.decode);
  gen_cmd->add_option("--seed", gen.seed, "sampling seed");
  gen_cmd->add_option("--out", gen.out, "output prefix")->required();
  gen_cmd->add_option("--patch", gen.patch, "pixels per token side in the PPM");
  gen_cmd->add_flag("--timing", gen.timing, "record wall-clock millis in the trace");

  HybridArgs hyb;
  DecodeFlags hyb_flags;
  auto* hyb_cmd = app.add_subcommand("hybrid", "AR prefix followed by masked completion");
  hyb_cmd->add_option("--ar-ckpt", hyb.ar_ckpt, "causal checkpoint")->required();
  hyb_cmd->add_option("--mar-ckpt", hyb.mar_ckpt, "bidirectional checkpoint")->required();
  hyb_cmd->add_option("--ar-ratio", hyb.options.ar_ratio, "fraction of tokens produced by AR")
      ->required();
  add_condition(hyb_cmd, hyb_flags);
  add_decode(hyb_cmd, hyb_flags, hyb.options.decode);
  hyb_cmd->add_option("--ar-temperature", hyb.options.ar_temperature, "AR sampling temperature");
  hyb_cmd->add_option("--seed", hyb.seed, "sampling seed");
  hyb_cmd->add_option("--out", hyb.out, "output prefix")->required();
  hyb_cmd->add_option("--patch", hyb.patch, "pixels per token side in the PPM");
  hyb_cmd->add_flag("--timing", hyb.timing, "record wall-clock millis in the step report");

  BenchArgs bench;
  DecodeFlags bench_flags;
  auto* bench_cmd = app.add_subcommand("bench", "hybrid step/latency sweep over AR ratios");
  bench_cmd->add_option("--ar-ckpt", bench.ar_ckpt, "causal checkpoint")->required();
  bench_cmd->add_option("--mar-ckpt", bench.mar_ckpt, "bidirectional checkpoint")->required();
  bench_cmd->add_option("--ratios", bench.ratios, "comma-separated AR ratios")->delimiter(',');
  bench_cmd->add_option("--repeat", bench.repeat, "runs per ratio");
  add_condition(bench_cmd, bench_flags);
  bench_cmd->add_option("--schedule", bench_flags.schedule, "root|linear|square|cosine|arccos");
  bench_cmd->add_option("--steps", bench.decode.steps, "decoding iterations T");
  bench_cmd->add_option("--seed", bench.seed, "base sampling seed");
  bench_cmd->add_option("--out", bench.out, "CSV path (also printed)");

  SchedulesArgs sched;
  auto* sched_cmd = app.add_subcommand("schedules", "export mask schedule plans for every kind");
  sched_cmd->add_option("--n", sched.n, "token count N");
  sched_cmd->add_option("--steps", sched.steps, "iterations T");
  sched_cmd->add_option("--out", sched.out, "CSV path (also printed)");

  std::string inspect_ckpt;
  auto* inspect_cmd = app.add_subcommand("inspect", "print a checkpoint header");
  inspect_cmd->add_option("--ckpt", inspect_ckpt, "checkpoint or token container")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error[usage]: " << one_line(e.what()) << "\n";
    return 1;
  }

  try {
    std::string printed;
    if (*train_cmd) {
      printed = cmd_train(train);
    } else if (*gen_cmd) {
      gen.condition = condition_of(gen_flags);
      gen.decode.schedule = schedule_flag(gen_flags.schedule);
      printed = cmd_generate(gen);
    } else if (*hyb_cmd) {
      hyb.condition = condition_of(hyb_flags);
      hyb.options.decode.schedule = schedule_flag(hyb_flags.schedule);
      printed = cmd_hybrid(hyb);
    } else if (*bench_cmd) {
      bench.condition = condition_of(bench_flags);
      bench.decode.schedule = schedule_flag(bench_flags.schedule);
      printed = cmd_bench(bench);
    } else if (*sched_cmd) {
      printed = cmd_schedules(sched);
    } else if (*inspect_cmd) {
      printed = cmd_inspect(inspect_ckpt);
    }
    out << printed;
    return 0;
  } catch (const Error& e) {
    err << "error[" << e.kind() << "]: " << one_line(e.what()) << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error[internal]: " << one_line(e.what()) << "\n";
    return 3;
  }
}

}  // namespace maskgil::cli
