#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "maskgil/argen.hpp"
#include "maskgil/decoding.hpp"
#include "maskgil/errors.hpp"
#include "maskgil/toytok.hpp"
#include "maskgil/training/checkpoint.hpp"

namespace maskgil::cli {

// 0 ok; 1 usage, bad input or violated contract; 2 format or config;
// 3 numeric or shape failure.
int exit_code_for(const Error& e);

// Entry point behind the maskgil executable. Errors are reported as one
// line on `err`: "error[<kind>]: <message>".
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Every command below is what run_cli dispatches to; each writes its files
// and returns what it printed.

// Fixed palette used to render token grids as images.
toytok::Codebook render_codebook(std::size_t codebook_size);

// Condition from mutually exclusive --class / --prompt (neither: null).
Condition resolve_condition(const std::optional<std::int64_t>& class_id,
                            const std::optional<std::string>& prompt);

struct TrainArgs {
  std::string config;
  std::string out;
  std::string metrics;  // default: <out>.metrics.csv
};
std::string cmd_train(const TrainArgs& args);

struct GenerateArgs {
  std::string ckpt;
  Condition condition;
  decoding::DecodeOptions decode;
  std::uint64_t seed = 0;
  std::string out;  // prefix: <out>.tokens, <out>.ppm, <out>.trace.csv
  std::size_t patch = 8;
  bool timing = false;
};
std::string cmd_generate(const GenerateArgs& args);

struct HybridArgs {
  std::string ar_ckpt;
  std::string mar_ckpt;
  Condition condition;
  argen::HybridOptions options;
  std::uint64_t seed = 0;
  std::string out;  // prefix: <out>.tokens, <out>.ppm, <out>.steps.csv
  std::size_t patch = 8;
  bool timing = false;
};
std::string cmd_hybrid(const HybridArgs& args);

struct BenchArgs {
  std::string ar_ckpt;
  std::string mar_ckpt;
  std::vector<double> ratios{1.0, 0.75, 0.5, 0.25, 0.0};
  std::size_t repeat = 1;
  Condition condition;
  decoding::DecodeOptions decode;
  std::uint64_t seed = 0;
  std::string out;  // empty: CSV goes to the returned string only
  std::size_t threads = 0;  // 0: MASKGIL_THREADS or the hardware count
};
struct BenchRow {
  double ratio = 0.0;
  std::size_t sample_steps = 0;
  double millis = 0.0;  // mean over repeats
};
std::vector<BenchRow> run_bench(const BenchArgs& args);
// ratio,sample_steps,millis
std::string bench_csv(const std::vector<BenchRow>& rows);
std::string cmd_bench(const BenchArgs& args);

struct SchedulesArgs {
  std::size_t n = 256;
  std::size_t steps = 8;
  std::string out;
};
// kind,step,masked_after,newly_fixed for every schedule kind.
std::string schedules_csv(std::size_t n, std::size_t steps);
std::string cmd_schedules(const SchedulesArgs& args);

std::string cmd_inspect(const std::string& ckpt);

// Worker count from MASKGIL_THREADS, else the hardware count (at least 1).
std::size_t worker_threads();

}  // namespace maskgil::cli
