// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "anatcl/checkpoint.hpp"
#include "anatcl/cli.hpp"
#include "anatcl/cohort.hpp"
#include "anatcl/gradcheck_suite.hpp"
#include "anatcl/losses.hpp"
#include "anatcl/probe.hpp"
#include "anatcl/training.hpp"
#include "oracles.hpp"

using namespace anatcl;
using numgrad::Tape;
using numgrad::Tensor;
using numgrad::Var;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

class Clock {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Tensor to_tensor(const oracle::Matrix& m) {
  std::vector<double> data;
  for (const auto& r : m) data.insert(data.end(), r.begin(), r.end());
  return Tensor::matrix(m.size(), m[0].size(), std::move(data));
}

double value_of(const oracle::Matrix& z, const std::function<Var(Tape&, Var)>& f) {
  Tape tape;
  return tape.value(f(tape, tape.constant(to_tensor(z)))).item();
}

std::vector<oracle::Matrix> random_parts(std::size_t n, std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  std::vector<oracle::Matrix> out(n, oracle::Matrix(rows, std::vector<double>(cols)));
  for (auto& s : out)
    for (auto& r : s)
      for (auto& v : r) v = u(rng);
  return out;
}

anatomy::LocalDescriptorSet as_local(const oracle::Matrix& m) {
  anatomy::LocalDescriptorSet s{m.size(), m[0].size(), {}};
  for (const auto& r : m) s.psi.insert(s.psi.end(), r.begin(), r.end());
  return s;
}

anatomy::GlobalDescriptorSet as_global(const oracle::Matrix& m) {
  anatomy::GlobalDescriptorSet s{m.size(), m[0].size(), {}};
  for (const auto& r : m) s.omega.insert(s.omega.end(), r.begin(), r.end());
  return s;
}

std::vector<double> random_ages(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(6.0, 88.0);
  std::vector<double> a(n);
  for (auto& v : a) v = u(rng);
  return a;
}

// 1 ---------------------------------------------------------------------------
Verdict oracle_equivalence() {
  Clock clock;
  std::mt19937_64 rng(101);
  double worst = 0.0;
  const double tau = 0.1, sigma = 5.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto z = oracle::random_unit_rows(4, 3, rng);
    const auto w = oracle::random_symmetric_weights(4, rng);
    const auto ages = random_ages(4, rng);
    const auto psi = random_parts(4, 68, 3, rng);
    const auto omega = random_parts(4, 3, 68, rng);
    std::vector<anatomy::LocalDescriptorSet> ls;
    std::vector<anatomy::GlobalDescriptorSet> gs;
    for (std::size_t i = 0; i < 4; ++i) {
      ls.push_back(as_local(psi[i]));
      gs.push_back(as_global(omega[i]));
    }
    const auto alpha = anatomy::local_degree_matrix(ls);
    const auto beta = anatomy::global_degree_matrix(gs);
    losses::LossConfig cl;
    cl.variant = losses::LossVariant::anatcl_local;
    losses::LossConfig cg;
    cg.variant = losses::LossVariant::anatcl_global;
    cg.lambda1 = 0.7;
    cg.lambda2 = 1.3;

    const double pairs[][2] = {
        {losses::weighted_contrastive_value(to_tensor(z), to_tensor(w), tau), oracle::weighted_infonce(z, w, tau)},
        {value_of(z, [&](Tape& t, Var v) { return losses::yaware_loss(t, v, ages, sigma, tau); }),
         oracle::yaware(z, ages, sigma, tau)},
        {value_of(z, [&](Tape& t, Var v) { return losses::anatcl_local_loss(t, v, alpha, tau); }),
         oracle::anatcl_local(z, psi, tau)},
        {value_of(z, [&](Tape& t, Var v) { return losses::anatcl_global_loss(t, v, beta, tau); }),
         oracle::anatcl_global(z, omega, tau)},
        {value_of(z, [&](Tape& t, Var v) { return losses::combined_loss(t, v, alpha, ages, cl); }),
         oracle::anatcl_local(z, psi, tau) + oracle::yaware(z, ages, sigma, tau)},
        {value_of(z, [&](Tape& t, Var v) { return losses::combined_loss(t, v, beta, ages, cg); }),
         0.7 * oracle::anatcl_global(z, omega, tau) + 1.3 * oracle::yaware(z, ages, sigma, tau)},
    };
    for (const auto& p : pairs) worst = std::max(worst, std::abs(p[0] - p[1]));
  }
  const double secs = clock.seconds();
  return {worst <= 1e-12 && secs < 5.0,
          "max |engine - oracle| = " + fmt(worst) + " (tol 1e-12) over 20 batches x 6 losses, " + fmt(secs) + " s"};
}

// 2 ---------------------------------------------------------------------------
Verdict gradient_correctness() {
  Clock clock;
  const auto results = gradcheck_suite::run(0);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& r : results)
    if (r.max_error >= worst) {
      worst = r.max_error;
      worst_name = std::string(losses::to_string(r.variant));
    }
  const double secs = clock.seconds();
  return {worst < 1e-4 && results.size() == std::size(losses::kAllVariants) && secs < 60.0,
          std::to_string(results.size()) + " variants, max relative error " + fmt(worst) + " (" + worst_name +
              ", tol 1e-4), " + fmt(secs) + " s"};
}

// 3 ---------------------------------------------------------------------------
Verdict reduction_identities() {
  std::mt19937_64 rng(303);
  double worst_uniform = 0.0, worst_yaware = 0.0, worst_additive = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto z = oracle::random_unit_rows(5, 4, rng);
    const auto ages = random_ages(5, rng);
    const double uniform = losses::weighted_contrastive_value(to_tensor(z), Tensor::filled({5, 5}, 1.0), 0.1);
    for (auto kind : {DegreeKind::local_anat, DegreeKind::global_anat}) {
      const DegreeMatrix equal{Tensor::filled({5, 5}, 1.0), kind};
      const double v = value_of(z, [&](Tape& t, Var x) {
        return kind == DegreeKind::local_anat ? losses::anatcl_local_loss(t, x, equal, 0.1)
                                              : losses::anatcl_global_loss(t, x, equal, 0.1);
      });
      worst_uniform = std::max(worst_uniform, std::abs(v - uniform));
    }
    std::vector<anatomy::GlobalDescriptorSet> gs;
    for (const auto& m : random_parts(5, 3, 68, rng)) gs.push_back(as_global(m));
    const auto beta = anatomy::global_degree_matrix(gs);
    losses::LossConfig cfg;
    cfg.variant = losses::LossVariant::anatcl_global;
    auto combined = [&](double l1, double l2) {
      cfg.lambda1 = l1;
      cfg.lambda2 = l2;
      return value_of(z, [&](Tape& t, Var x) { return losses::combined_loss(t, x, beta, ages, cfg); });
    };
    const double yaware = value_of(z, [&](Tape& t, Var x) { return losses::yaware_loss(t, x, ages, 5.0, 0.1); });
    const double anat = value_of(z, [&](Tape& t, Var x) { return losses::anatcl_global_loss(t, x, beta, 0.1); });
    worst_yaware = std::max(worst_yaware, std::abs(combined(0.0, 1.0) - yaware));
    worst_additive = std::max(worst_additive, std::abs(combined(1.0, 1.0) - (anat + yaware)));
  }
  return {worst_uniform <= 1e-12 && worst_yaware <= 1e-12 && worst_additive <= 1e-12,
          "equal-degrees vs uniform " + fmt(worst_uniform) + ", (0,1) vs y-Aware " + fmt(worst_yaware) +
              ", additivity " + fmt(worst_additive) + " (tol 1e-12)"};
}

// 4 ---------------------------------------------------------------------------
Verdict degree_properties() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(0.0, 5.0), coin(0.0, 1.0), scale(0.01, 100.0);
  const auto atlas = anatomy::Atlas::desikan();
  const anatomy::MeasureSet measures;
  const std::size_t K = atlas.roi_count, N = measures.size();
  const std::vector<std::string> ids{"a", "b", "c"};
  std::size_t bad_range = 0, bad_sym = 0, bad_diag = 0;
  double worst_scale = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> values(ids.size() * K * N);
    for (auto& v : values) v = coin(rng) < 0.05 ? 0.0 : u(rng);
    // Keep every global descriptor nonzero.
    for (std::size_t s = 0; s < ids.size(); ++s)
      for (std::size_t j = 0; j < N; ++j) values[(s * K) * N + j] += 0.1;
    const anatomy::RoiTable table(atlas, measures, ids, values);
    const auto stats = anatomy::fit_normalizer(table);
    const auto la = anatomy::local_descriptors(table, "a", stats), lb = anatomy::local_descriptors(table, "b", stats);
    const auto ga = anatomy::global_descriptors(table, "a"), gb = anatomy::global_descriptors(table, "b");
    const double ab = anatomy::local_degree(la, lb), ba = anatomy::local_degree(lb, la);
    const double gab = anatomy::global_degree(ga, gb), gba = anatomy::global_degree(gb, ga);
    for (double v : {ab, gab}) bad_range += !(v >= 0.0 && v <= 1.0);
    bad_sym += (ab != ba) + (gab != gba);
    bad_diag += (anatomy::local_degree(la, la) != 1.0) + (anatomy::global_degree(ga, ga) != 1.0) +
                (anatomy::local_degree(lb, lb) != 1.0) + (anatomy::global_degree(gb, gb) != 1.0);
    for (auto mode : {anatomy::DegreeMode::local, anatomy::DegreeMode::global}) {
      const auto m = anatomy::degree_matrix(table, stats, ids, mode);
      for (std::size_t i = 0; i < 3; ++i) {
        bad_diag += m(i, i) != 1.0;
        for (std::size_t j = 0; j < 3; ++j) {
          bad_sym += m(i, j) != m(j, i);
          bad_range += !(m(i, j) >= 0.0 && m(i, j) <= 1.0);
        }
      }
    }
    auto scaled_a = ga, scaled_b = gb;
    const double ca = scale(rng), cb = scale(rng);
    for (auto& v : scaled_a.omega) v *= ca;
    for (auto& v : scaled_b.omega) v *= cb;
    worst_scale = std::max(worst_scale, std::abs(anatomy::global_degree(scaled_a, scaled_b) - gab));
  }
  return {bad_range == 0 && bad_sym == 0 && bad_diag == 0 && worst_scale <= 1e-12,
          "1000 pairs: out of [0,1] " + std::to_string(bad_range) + ", asymmetric " + std::to_string(bad_sym) +
              ", self-degree != 1 " + std::to_string(bad_diag) + ", beta scaling drift " + fmt(worst_scale) +
              " (tol 1e-12)"};
}

// 5 ---------------------------------------------------------------------------
Verdict pretraining_benefit() {
  Clock clock;
  std::size_t anat_wins = 0, yaware_wins = 0;
  std::ostringstream table;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    cohort::SyntheticConfig sc;
    sc.seed = seed;
    const auto c = cohort::generate(sc);
    model::EncoderConfig ec;
    ec.input_dim = c.input_dim();
    ec.representation_dim = 64;
    ec.seed = seed;
    probe::ProbeOptions po;
    po.seed = seed;
    auto mae = [&](const model::Parameters& p) { return probe::cross_validate(c, p, "age", po).results[0].mean; };
    auto pretrained = [&](losses::LossVariant v) {
      model::TrainConfig tc;
      tc.epochs = 50;
      tc.seed = seed;
      tc.loss.variant = v;
      return mae(training::pretrain(c, ec, tc).checkpoint.params);
    };
    const double random_init = mae(model::init(ec));
    const double simclr = pretrained(losses::LossVariant::simclr);
    const double yaware = pretrained(losses::LossVariant::yaware);
    const double anat = pretrained(losses::LossVariant::anatcl_global);
    anat_wins += anat < random_init && anat < simclr;
    yaware_wins += yaware < random_init && yaware < simclr;
    table << "; seed " << seed << ": random " << fmt(random_init) << ", SimCLR " << fmt(simclr) << ", y-Aware "
          << fmt(yaware) << ", AnatCL-G " << fmt(anat);
  }
  const double secs = clock.seconds();
  return {anat_wins >= 2 && yaware_wins >= 2 && secs < 900.0,
          "age MAE wins over both baselines: AnatCL-G " + std::to_string(anat_wins) + "/3, y-Aware " +
              std::to_string(yaware_wins) + "/3 (need 2/3), " + fmt(secs) + " s" + table.str()};
}

// 6 ---------------------------------------------------------------------------
Verdict feature_study() {
  Clock clock;
  cohort::SyntheticConfig sc;
  sc.seed = 6;
  sc.input_dim = 8;
  const auto c = cohort::generate(sc);
  const auto rows = probe::feature_study(*c.roi(), c.ages());
  const probe::FeatureStudyRow* best = &rows.front();
  double noise_r2 = 1.0;
  for (const auto& r : rows) {
    if (r.r2.mean > best->r2.mean) best = &r;
    if (r.measure == anatomy::Measure::gaussian_curv_index) noise_r2 = r.r2.mean;
  }
  const double secs = clock.seconds();
  return {best->measure == anatomy::Measure::gmv && noise_r2 <= 0.05 && secs < 60.0,
          "top R2 " + std::string(anatomy::to_string(best->measure)) + " (" + fmt(best->r2.mean) +
              "), pure-noise gaussian_curv_index R2 " + fmt(noise_r2) + " (max 0.05), " + fmt(secs) + " s"};
}

// 7 ---------------------------------------------------------------------------
Verdict determinism() {
  const auto root = fs::temp_directory_path() / "anatcl_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  io::write_file_atomic(root / "run.cfg", "n_subjects = 300\nepochs = 3\nvariant = anatcl_local\n");
  std::ostringstream sink;
  const std::string cfg = (root / "run.cfg").string();
  bool ok = true;
  for (const char* run : {"1", "2"}) {
    const std::string c = (root / (std::string("cohort") + run)).string();
    const std::string r = (root / (std::string("run") + run)).string();
    ok = ok && cli::run({"synth", "--config", cfg, "--out", c, "--seed", "11"}, sink, sink) == 0;
    ok = ok && cli::run({"pretrain", "--config", cfg, "--cohort", c, "--out", r, "--seed", "11"}, sink, sink) == 0;
  }
  if (!ok) return {false, "a command failed: " + sink.str()};
  auto same = [&](const std::string& a, const std::string& b) {
    return io::read_file(root / a, ErrorKind::io_error) == io::read_file(root / b, ErrorKind::io_error);
  };
  std::size_t differing = 0;
  for (const char* f : {"subjects.csv", "features.csv", "roi.csv", "resolved_config.cfg"})
    differing += !same(std::string("cohort1/") + f, std::string("cohort2/") + f);
  for (const char* f : {"checkpoint.ancl", "loss_trace.csv", "resolved_config.cfg"})
    differing += !same(std::string("run1/") + f, std::string("run2/") + f);
  const auto bytes = io::read_file(root / "run1" / "checkpoint.ancl", ErrorKind::io_error);
  const auto ck = checkpoint::deserialize(bytes);
  checkpoint::save_checkpoint(ck, root / "copy.ancl");
  const bool round_trip = checkpoint::serialize(ck) == bytes &&
                          io::read_file(root / "copy.ancl", ErrorKind::io_error) == bytes &&
                          checkpoint::load_checkpoint(root / "copy.ancl") == ck;
  return {differing == 0 && round_trip,
          "synth/pretrain files differing across runs: " + std::to_string(differing) + " of 7, checkpoint round trip " +
              (round_trip ? "bitwise equal" : "DIFFERS") + " (" + std::to_string(bytes.size()) + " bytes)"};
}

// 8 ---------------------------------------------------------------------------
Verdict protocol_fidelity() {
  cohort::SyntheticConfig sc;
  sc.n_subjects = 523;
  sc.seed = 8;
  const auto c = cohort::generate(sc);
  model::EncoderConfig ec;
  ec.input_dim = c.input_dim();
  ec.seed = 8;
  const auto params = model::init(ec);
  probe::ProbeOptions po;
  po.seed = 8;

  bool folds_ok = true, stats_ok = true;
  double worst_strat = 0.0;
  for (const std::string task : {"age", "dx_neuro", "dx_size"}) {
    const auto rep = probe::cross_validate(c, params, task, po);
    folds_ok = folds_ok && rep.fits.size() == 5;
    for (const auto& r : rep.results) {
      folds_ok = folds_ok && r.folds.size() == 5;
      double mean = 0.0, var = 0.0;
      for (double v : r.folds) mean += v / 5.0;
      for (double v : r.folds) var += (v - mean) * (v - mean) / 5.0;
      stats_ok = stats_ok && std::abs(mean - r.mean) <= 1e-12 * std::max(1.0, std::abs(mean)) &&
                 std::abs(std::sqrt(var) - r.std) <= 1e-12 * std::max(1.0, std::sqrt(var));
    }
    std::vector<char> seen(c.size(), 0);
    for (const auto& f : rep.fits)
      for (auto i : f.test) {
        folds_ok = folds_ok && !seen[i];
        seen[i] = 1;
      }
    folds_ok = folds_ok && std::all_of(seen.begin(), seen.end(), [](char s) { return s != 0; });
    if (task != "age") {
      const auto labels = c.label(task);
      double pos = 0.0;
      for (double v : labels) pos += v;
      for (const auto& f : rep.fits) {
        double fp = 0.0;
        for (auto i : f.test) fp += labels[i];
        worst_strat = std::max(worst_strat, std::abs(fp - pos * static_cast<double>(f.test.size()) / c.size()));
      }
    }
  }

  // Leakage probe: perturbing one fold's test subjects must leave that
  // fold's standardizer and probe untouched.
  const auto base = probe::cross_validate(c, params, "dx_neuro", po);
  std::size_t leaks = 0;
  for (std::size_t k = 0; k < base.fits.size(); ++k) {
    auto subjects = c.subjects();
    for (auto i : base.fits[k].test)
      for (auto& v : subjects[i].x) v = -3.0 * v + 50.0;
    const cohort::Cohort perturbed(std::move(subjects), c.roi());
    const auto rep = probe::cross_validate(perturbed, params, "dx_neuro", po);
    leaks += !(rep.fits[k] == base.fits[k]);
  }
  return {folds_ok && stats_ok && worst_strat <= 1.0 && leaks == 0,
          std::string("5 disjoint covering folds ") + (folds_ok ? "yes" : "NO") + ", mean/std consistent " +
              (stats_ok ? "yes" : "NO") + ", max stratification offset " + fmt(worst_strat) +
              " subjects (max 1), folds whose fit moved under test perturbation " + std::to_string(leaks) + "/5"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    Verdict (*run)();
  };
  const Criterion criteria[] = {
      {"oracle equivalence", oracle_equivalence},
      {"gradient correctness", gradient_correctness},
      {"reduction identities", reduction_identities},
      {"degree properties", degree_properties},
      {"desk-scale pretraining benefit", pretraining_benefit},
      {"feature study", feature_study},
      {"determinism", determinism},
      {"protocol fidelity", protocol_fidelity},
  };
  int failed = 0;
  int index = 0;
  for (const auto& c : criteria) {
    ++index;
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << index << " (" << c.name << "): " << v.detail
              << std::endl;
  }
  return failed;
}
