// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Pass criterion names (A1 ... A7) to run a subset.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "freqseg/data.hpp"
#include "freqseg/metrics.hpp"
#include "freqseg/trainer.hpp"
#include "freqseg/wavelet.hpp"
#include "gradcheck_cases.hpp"
#include "metric_oracles.hpp"
#include "test_util.hpp"

using namespace freqseg;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// Wavelet round trip and I_L + I_H == x over 100 random images.
Outcome a1_wavelet() {
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int h = 8 + static_cast<int>(uniform_index(rng, 41)), w = 8 + static_cast<int>(uniform_index(rng, 41));
    const int levels = 1 + i % 3;
    const WaveletBasis basis = (i / 3) % 2 ? WaveletBasis::db2() : WaveletBasis::haar();
    const Tensor x = testutil::random_tensor({1 + i % 2, h, w}, rng, 0.0, 1.0);
    const Tensor y = idwt2(dwt2(x, basis, levels), basis);
    worst = std::max(worst, testutil::max_abs_diff(y.data(), x.data()));
    const FrequencySplit s = frequency_split(x, basis, levels);
    for (std::size_t k = 0; k < x.numel(); ++k) {
      worst = std::max(worst, std::abs(double(s.low.data()[k]) + s.high.data()[k] - x.data()[k]));
    }
  }
  const double t = seconds_since(t0);
  return {worst < 1e-5 && t < 10.0, fmt("max abs error %.3g (< 1e-5), %.2f s (< 10 s)", worst, t)};
}

// Finite-difference gradient checks, 20 instances per op.
Outcome a2_gradcheck() {
  const auto t0 = Clock::now();
  std::string worst_name;
  double worst = 0.0;
  bool ok = true;
  int instances = 0;
  for (const auto& c : testutil::gradcheck_cases()) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const double err = c.run(seed);
      ++instances;
      if (!(err < testutil::kGradTolerance)) ok = false;
      if (!(err <= worst)) {
        worst = err;
        worst_name = c.name;
      }
    }
  }
  const double t = seconds_since(t0);
  return {ok && t < 60.0, std::to_string(instances) + " instances, worst rel err " + fmt("%.3g", worst) + " (" +
                              worst_name + ", < 1e-3), " + fmt("%.2f s (< 60 s)", t)};
}

// Metrics against pixel counting and O(n^2) surface distances.
Outcome a3_metrics() {
  const auto t0 = Clock::now();
  Rng rng(303);
  int pairs = 0, overlap_bad = 0;
  double dist_err = 0.0, identity_err = 0.0;
  while (pairs < 200) {
    const int h = 2 + static_cast<int>(uniform_index(rng, 31)), w = 2 + static_cast<int>(uniform_index(rng, 31));
    const LabelMap p = testutil::random_mask(rng, h, w), g = testutil::random_mask(rng, h, w);
    const auto a = surface_extract(p), b = surface_extract(g);
    if (a.empty() || b.empty()) continue;
    ++pairs;
    const auto counts = testutil::count_overlap(p, g);
    const Overlap o = overlap_metrics(p, g);
    const double inter = static_cast<double>(counts.inter), uni = static_cast<double>(counts.uni);
    const double sizes = static_cast<double>(counts.p + counts.g);
    if (o.jaccard != 100.0 * inter / uni || o.dice != 100.0 * 2.0 * inter / sizes) ++overlap_bad;
    const double j = o.jaccard / 100.0;
    identity_err = std::max(identity_err, std::abs(o.dice / 100.0 - 2.0 * j / (1.0 + j)));
    if (a != testutil::brute_surface(p) || b != testutil::brute_surface(g)) ++overlap_bad;
    const SurfaceDistances fast = surface_distances(a, b), slow = testutil::brute_surface_distances(a, b);
    dist_err = std::max({dist_err, std::abs(fast.asd - slow.asd), std::abs(fast.hd95 - slow.hd95)});
  }
  const double t = seconds_since(t0);
  const bool ok = overlap_bad == 0 && dist_err <= 1e-9 && identity_err <= 1e-9 && t < 30.0;
  return {ok, std::to_string(pairs) + " pairs, " + std::to_string(overlap_bad) + " overlap/surface mismatches, " +
                  fmt("ASD/HD95 max err %.3g (<= 1e-9), Dice-Jaccard err %.3g (<= 1e-9), %.2f s (< 30 s)", dist_err,
                      identity_err, t)};
}

// Texture-free images: x^H is almost a scaled copy of x^L.
Outcome a4_degeneracy() {
  SynthSpec spec;
  spec.texture_amplitude = 0.0;
  spec.noise_sigma = 0.0;
  spec.seed = 404;
  const WaveletBasis basis = WaveletBasis::haar();
  Rng rng(405);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const SynthSample s = synthesize_sample(spec, static_cast<std::uint64_t>(i));
    const FrequencySplit f = frequency_split(s.image, basis, 1);
    const FusionWeights w = sample_alpha_beta(rng, {0.4, 0.8}, {0.4, 0.8});
    const FusedPair x = complementary_fuse(f.low, f.high, w.alpha, w.beta);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < x.low.numel(); ++k) {
      num = std::max(num, std::abs(double(x.high.data()[k]) - w.beta * x.low.data()[k]));
      den = std::max(den, std::abs(double(x.low.data()[k])));
    }
    worst = std::max(worst, num / den);
  }
  return {worst < 0.02, fmt("50 images, worst ratio %.4f (< 0.02)", worst)};
}

struct ArmResult {
  double final_dice = 0.0;  // percent, final-epoch weights
  double best_dice = 0.0;   // percent, best logged epoch
};

ArmResult run_arm(const TrainConfig& cfg) {
  const DatasetSplits data = load_splits(cfg);
  const TrainResult r = train(cfg, data);
  const InferOptions io{cfg.preprocess_options(), cfg.inference_weights()};
  return {evaluate(*r.last_model, data.test, io).aggregate().dice, evaluate(*r.model, data.test, io).aggregate().dice};
}

// Semi-supervised training against the labeled-only single-network baseline.
Outcome a5_training() {
  const auto t0 = Clock::now();
  testutil::TempDir dir("a5");
  SynthSpec spec;
  spec.n_images = 200;
  spec.n_test = 50;
  spec.height = spec.width = 64;
  spec.seed = 7;
  generate_synthetic(spec, dir.path);

  TrainConfig semi;
  semi.data_dir = dir.path.string();
  semi.epochs = 100;
  semi.labeled_fraction = 0.2;
  semi.lambda_max = 3.0;
  semi.encoder_channels = {4, 8, 16, 32};
  TrainConfig base = semi;
  base.mode = TrainMode::Full;
  base.main_only = true;

  const std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<ArmResult> s(seeds.size()), b(seeds.size());
  std::vector<std::string> errors(seeds.size());
  std::vector<std::thread> workers;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    workers.emplace_back([&, i] {
      try {
        TrainConfig cs = semi, cb = base;
        cs.seed = cb.seed = seeds[i];
        s[i] = run_arm(cs);
        b[i] = run_arm(cb);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (const auto& e : errors) {
    if (!e.empty()) return {false, "training failed: " + e};
  }
  double semi_mean = 0, base_mean = 0, semi_best = 0, base_best = 0;
  std::string per_seed;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    semi_mean += s[i].final_dice / 100.0 / static_cast<double>(seeds.size());
    base_mean += b[i].final_dice / 100.0 / static_cast<double>(seeds.size());
    semi_best += s[i].best_dice / 100.0 / static_cast<double>(seeds.size());
    base_best += b[i].best_dice / 100.0 / static_cast<double>(seeds.size());
    per_seed += fmt(" [seed %.0f: %.4f vs %.4f]", static_cast<double>(seeds[i]), s[i].final_dice / 100.0,
                    b[i].final_dice / 100.0);
  }
  const double t = seconds_since(t0);
  const unsigned cores = std::max(1u, std::thread::hardware_concurrency());
  const bool ok = semi_mean >= 0.90 && semi_mean >= base_mean && t < 15 * 60.0;
  return {ok, fmt("final-epoch test Dice semi %.4f vs baseline %.4f (>= 0.90, margin >= 0);", semi_mean, base_mean) +
                  per_seed +
                  fmt(" best-epoch %.4f vs %.4f; %.0f s on %.0f core(s) (< 900 s)", semi_best, base_best, t,
                      static_cast<double>(cores))};
}

// The seven fusion/input ablation topologies.
Outcome a6_ablations() {
  struct Row {
    const char* name;
    InputMode input;
    bool lm, hm;
  };
  const Row rows[] = {
      {"raw-only", InputMode::RawAll, false, false}, {"+x^L", InputMode::LowOnly, false, false},
      {"+x^H", InputMode::HighOnly, false, false},   {"+both", InputMode::Fused, false, false},
      {"+L&M", InputMode::Fused, true, false},       {"+H&M", InputMode::Fused, false, true},
      {"+all", InputMode::Fused, true, true},
  };
  SynthSpec spec;
  spec.height = spec.width = 32;
  DatasetSplits data;
  for (int i = 0; i < 4; ++i) {
    const SynthSample smp = synthesize_sample(spec, static_cast<std::uint64_t>(i));
    SampleRecord r{"a6_" + std::to_string(i), smp.image, smp.label, i < 2 ? Split::Labeled : Split::Unlabeled};
    if (i >= 2) r.label.reset();
    (i < 2 ? data.labeled : data.unlabeled).push_back(std::move(r));
  }
  const std::vector<int> widths{4, 8, 16, 32};
  const auto cbr = [](std::size_t in, std::size_t out) { return 9 * in * out + 3 * out; };
  const auto fusion = [&](std::size_t c) { return cbr(2 * c, c) + 18 * c * c; };
  const std::size_t lm_expected = fusion(16) + fusion(32), hm_expected = fusion(4) + fusion(8);

  bool ok = true;
  std::string detail;
  std::size_t base_total = 0;
  for (const Row& row : rows) {
    TrainConfig c;
    c.encoder_channels = widths;
    c.input_mode = row.input;
    c.enable_lm = row.lm;
    c.enable_hm = row.hm;
    c.batch_size = 2;
    c.epochs = 1;
    TrainHooks hooks;
    hooks.max_steps = 1;
    try {
      const TrainResult r = train(c, data, hooks);
      const EpochLog& log = r.log.rows.at(0);
      const bool finite = std::isfinite(log.sup) && std::isfinite(log.total) && log.unsup && std::isfinite(*log.unsup);
      const ParameterReport p = r.last_model->parameter_report();
      if (base_total == 0) base_total = p.total();
      const std::size_t expected =
          base_total + (row.lm ? lm_expected : 0) + (row.hm ? hm_expected : 0);
      const bool counts = p.total() == expected && p.fusion_lm == (row.lm ? lm_expected : 0) &&
                          p.fusion_hm == (row.hm ? hm_expected : 0);
      if (!finite || !counts) ok = false;
      detail += std::string(" ") + row.name + "=" + std::to_string(p.total()) + (finite ? "" : "(non-finite)") +
                (counts ? "" : "(count mismatch)");
    } catch (const std::exception& e) {
      ok = false;
      detail += std::string(" ") + row.name + " threw: " + e.what();
    }
  }
  return {ok, "7 configs, one step each, parameter totals:" + detail};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("'") + FREQSEG_CLI_PATH + "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Two identical CLI training runs write identical logs.
Outcome a7_determinism() {
  testutil::TempDir dir("a7");
  const auto q = [](const fs::path& p) { return "'" + p.string() + "'"; };
  if (run_cli("gen-data --n 16 --n-test 4 --size 32 --seed 11 --out " + q(dir.path / "data")) != 0) {
    return {false, "gen-data failed"};
  }
  {
    std::ofstream cfg(dir.path / "train.cfg");
    cfg << "data_dir = " << (dir.path / "data").string() << "\n"
        << "encoder_channels = 4,8,16,32\nepochs = 3\nlabeled_fraction = 0.25\nseed = 42\n";
  }
  for (const char* run : {"run1", "run2"}) {
    if (run_cli("train --quiet --config " + q(dir.path / "train.cfg") + " --out " + q(dir.path / run)) != 0) {
      return {false, std::string("train ") + run + " failed"};
    }
  }
  const std::string a = slurp(dir.path / "run1" / "train_log.csv"), b = slurp(dir.path / "run2" / "train_log.csv");
  const bool ok = !a.empty() && a == b;
  return {ok, std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " bytes, " +
                  (a == b ? "byte-identical" : "different")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"A1", a1_wavelet},  {"A2", a2_gradcheck}, {"A3", a3_metrics},     {"A4", a4_degeneracy},
      {"A5", a5_training}, {"A6", a6_ablations}, {"A7", a7_determinism},
  };
  const std::set<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %s  %s\n", name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
