// Acceptance suite: one PASS/FAIL line per criterion. Criteria 1-8 gate the
// exit status; 9 (real image data) only reports.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "corefed/aggregation.hpp"
#include "corefed/commands.hpp"
#include "corefed/config.hpp"
#include "corefed/experiment.hpp"
#include "corefed/representation.hpp"
#include "oracles.hpp"
#include "window_scenario.hpp"

using namespace corefed;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

// ---- 1: analytic gradient vs finite differences ----------------------------

Outcome gradient_check() {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<std::size_t> width(1, 8);
  std::uniform_int_distribution<std::size_t> depth(1, 2);
  double worst = 0.0;
  std::size_t checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    ModelSpec spec;
    do {
      spec = ModelSpec{width(rng), {}, width(rng) + 1, Activation::relu};
      const std::size_t hidden = depth(rng);
      for (std::size_t l = 0; l < hidden; ++l) spec.hidden_dims.push_back(width(rng));
    } while (spec.parameter_count() > 500);
    const auto p = oracle::random_params(spec.parameter_count(), rng);
    const auto batch = oracle::random_batch(spec, 6, rng);
    const auto analytic = backward(p, spec, batch);
    const auto numeric = oracle::finite_difference_gradient(p.values, spec, batch, 1e-5);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double scale = std::max(std::abs(analytic[i]), std::abs(numeric[i]));
      // Both sides vanish (dead units): nothing relative to compare.
      if (scale < 1e-8) {
        if (std::abs(analytic[i] - numeric[i]) > 1e-9) return {false, "mismatch on a near-zero coordinate"};
        continue;
      }
      worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
      ++checked;
    }
  }
  std::ostringstream d;
  d << checked << " coordinates, worst relative error " << worst;
  return {worst < 1e-4, d.str()};
}

// ---- 2: neutral hyper-parameters reduce to FedAvg ---------------------------

Outcome neutral_reduction() {
  const int clients = 8;
  const int per_client = 40;
  const Dataset data = gen_synthetic(4, 12, clients * per_client * 2, 17);
  Federation fed;
  fed.spec = ModelSpec{12, {16, 8}, 4, Activation::relu};
  for (int c = 0; c < clients; ++c) {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    for (int i = 0; i < per_client; ++i) {
      train.push_back(static_cast<std::size_t>(c * per_client * 2 + i));
      test.push_back(static_cast<std::size_t>(c * per_client * 2 + per_client + i));
    }
    fed.shards.push_back(Shard{c, data.subset(train), data.subset(test), false});
  }
  ExperimentConfig cfg;
  cfg.rounds = 10;
  cfg.clients = clients;
  cfg.online_per_round = {false, static_cast<double>(clients)};
  cfg.batch_size = 8;
  cfg.gamma = 0.0;
  cfg.k = 0.0;
  cfg.seed = 4;
  ExperimentConfig avg = cfg;
  avg.algorithm = Algorithm::fedavg;
  const auto a = run_experiment(cfg, fed);
  const auto b = run_experiment(avg, fed);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.final_global.size(); ++i) {
    worst = std::max(worst, std::abs(a.final_global[i] - b.final_global[i]));
  }
  const double moved = d_manhattan(a.final_global, a.initial_global);
  std::ostringstream d;
  d << "max |diff| " << worst << " after 10 rounds (model moved " << moved << " in L1)";
  return {worst <= 1e-9 && moved > 0.0, d.str()};
}

// ---- 3: fairness weights lie on the simplex and move the right way ---------

WeightAssignment weights(const std::vector<double>& f, const std::vector<double>& rho, double gamma, double k) {
  std::vector<ClientId> members;
  std::map<ClientId, double> fm;
  std::map<ClientId, double> rm;
  for (std::size_t i = 0; i < f.size(); ++i) {
    members.push_back(static_cast<ClientId>(i));
    fm[static_cast<ClientId>(i)] = f[i];
    rm[static_cast<ClientId>(i)] = rho[i];
  }
  return fairness_weights(members, fm, rm, gamma, k);
}

Outcome weight_simplex() {
  std::mt19937_64 rng(31337);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> size(2, 16);
  for (int draw = 0; draw < 1000; ++draw) {
    const auto n = static_cast<std::size_t>(size(rng));
    std::vector<double> f(n);
    std::vector<double> rho(n);
    for (auto& v : f) v = 1.0 - unit(rng);  // (0, 1]
    for (auto& v : rho) v = 2.0 * unit(rng) - 1.0;
    const double gamma = 4.0 * unit(rng);
    const double k = 4.0 * unit(rng);
    const auto w = weights(f, rho, gamma, k);
    double sum = 0.0;
    for (const auto& [c, v] : w.weights) {
      if (!(v > 0.0)) return {false, "non-positive weight on draw " + std::to_string(draw)};
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) return {false, "weights do not sum to 1 on draw " + std::to_string(draw)};

    const auto i = static_cast<ClientId>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
    const auto ui = static_cast<std::size_t>(i);
    auto more_similar = rho;
    more_similar[ui] = rho[ui] + (1.0 - rho[ui]) * unit(rng);
    auto less_frequent = f;
    less_frequent[ui] = f[ui] * (0.05 + 0.95 * unit(rng));
    const double base = w.weights.at(i);
    const double up_rho = weights(f, more_similar, gamma, k).weights.at(i);
    const double down_f = weights(less_frequent, rho, gamma, k).weights.at(i);
    const double slack = 1e-12 * base;
    if (up_rho < base - slack) return {false, "weight fell as similarity rose on draw " + std::to_string(draw)};
    if (down_f < base - slack) return {false, "weight fell as frequency dropped on draw " + std::to_string(draw)};
  }
  return {true, "1000 draws"};
}

// ---- 4: hand-derived golden values ------------------------------------------

Outcome goldens() {
  std::ostringstream d;
  bool ok = true;
  auto near = [&](const char* what, double got, double want) {
    const bool good = std::abs(got - want) < 1e-5;
    d << what << ' ' << got << (good ? "" : " (bad)") << "; ";
    ok = ok && good;
  };
  const std::vector<Embedding> zs{Embedding{{1, 0, 0}}, Embedding{{0, 1, 0}}, Embedding{{0, 0, 1}}};
  near("contrastive", contrastive_loss(0, zs, Embedding{{1, 0, 0}}, 1.0).value_or(NAN), std::log(2.0) - 1.0);
  const Embedding zi{{1, 0}};
  const auto refined = distill(zi, alignment_vector(zi, Embedding{{0, 1}}), 0.5);
  near("distill[0]", refined[0], 0.5);
  near("distill[1]", refined[1], 0.0);
  const auto w = weights({1.0, 1.0}, {1.0, -1.0}, 2.0, 2.0);
  near("w0", w.weights.at(0), 0.88080);
  near("w1", w.weights.at(1), 0.11920);
  return {ok, d.str()};
}

// ---- 5: scripted sliding-window scenario ------------------------------------

Outcome window_semantics() {
  ParticipationLedger ledger;
  int boundary_reuses = 0;
  for (const auto& step : scenario::steps()) {
    ledger.record_participation(step.t, step.online);
    for (ClientId c = 0; c < scenario::kClients; ++c) {
      const double f = participation_frequency(ledger, c, step.t, scenario::kTau);
      if (f != step.hits[c] / 3.0) {
        return {false, "f mismatch at t=" + std::to_string(step.t) + " client " + std::to_string(c)};
      }
      const bool online = step.online.contains(c);
      const auto g = reuse_gradient(ledger, c, step.t, scenario::kTau,
                                    online ? std::optional(scenario::gradient_of(c, step.t)) : std::nullopt);
      if (online) continue;
      const auto it = step.reused_from.find(c);
      if ((it != step.reused_from.end()) != g.has_value()) {
        return {false, "reuse mismatch at t=" + std::to_string(step.t) + " client " + std::to_string(c)};
      }
      if (g && !(*g == scenario::gradient_of(c, it->second))) return {false, "wrong cached gradient"};
      if (g && step.t - it->second == scenario::kTau) ++boundary_reuses;
    }
  }
  return {boundary_reuses > 0, "6 rounds x 5 clients, " + std::to_string(boundary_reuses) + " boundary reuses"};
}

// ---- 6, 7: directional claims on the synthetic benchmark --------------------

ExperimentConfig benchmark(std::uint64_t seed) {
  ExperimentConfig c;
  c.rounds = 150;
  c.clients = 10;
  c.online_per_round = {true, 0.4};
  c.dataset = SyntheticSource{4, 32, SyntheticSource{}.samples};
  c.dirichlet_alpha = 0.5;
  c.seed = seed;
  return c;
}

constexpr std::uint64_t kSeeds[] = {1, 2, 3};

Outcome ablation_direction() {
  int fair_wins = 0;
  int acc_wins = 0;
  std::ostringstream d;
  for (std::uint64_t seed : kSeeds) {
    const ExperimentConfig base = benchmark(seed);
    const Federation fed = build_federation(base);
    std::map<Algorithm, ReducedMetrics> m;
    for (Algorithm a : kAllAlgorithms) {
      ExperimentConfig c = base;
      c.algorithm = a;
      m[a] = reduce_metrics(run_experiment(c, fed).reports, FairnessReduction::final_round);
    }
    const auto cos = [&](Algorithm a) { return m[a].d_cosine.value_or(INFINITY); };
    const bool fair = cos(Algorithm::corefed) <= cos(Algorithm::refed) && cos(Algorithm::corefed) <= cos(Algorithm::cofed);
    const bool acc = m[Algorithm::corefed].accuracy >= m[Algorithm::fedavg].accuracy;
    fair_wins += fair;
    acc_wins += acc;
    d << "seed " << seed << ": dcos core/re/co " << cos(Algorithm::corefed) << '/' << cos(Algorithm::refed) << '/'
      << cos(Algorithm::cofed) << ", acc core/avg " << m[Algorithm::corefed].accuracy << '/'
      << m[Algorithm::fedavg].accuracy << "; ";
  }
  d << "fairness " << fair_wins << "/3, accuracy " << acc_wins << "/3";
  return {fair_wins >= 2 && acc_wins >= 2, d.str()};
}

Outcome tradeoff_direction() {
  int wins = 0;
  std::ostringstream d;
  for (std::uint64_t seed : kSeeds) {
    const ExperimentConfig base = benchmark(seed);
    const Federation fed = build_federation(base);
    ExperimentConfig a = base;
    a.k = 2.0;
    a.gamma = 0.5;
    ExperimentConfig b = base;
    b.k = 0.5;
    b.gamma = 2.0;
    const double acc_a = run_experiment(a, fed).reports.back().mean_accuracy;
    const double acc_b = run_experiment(b, fed).reports.back().mean_accuracy;
    wins += acc_a >= acc_b;
    d << "seed " << seed << ": " << acc_a << " vs " << acc_b << "; ";
  }
  d << wins << "/3";
  return {wins >= 2, d.str()};
}

// ---- 8: byte-identical reruns through the command layer ---------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("corefed_accept_" + std::to_string(std::random_device{}()));
  fs::create_directories(root);
  std::ofstream(root / "config.json") << render_config(benchmark(7));
  std::ostringstream log;
  const auto first = make_manifest(root / "config.json", root, "first");
  const auto second = make_manifest(root / "config.json", root, "second");
  const int rc1 = cmd_run(first, false, log);
  const int rc2 = cmd_run(second, false, log);
  const std::string a = slurp(root / "first" / "rounds.csv");
  const std::string b = slurp(root / "second" / "rounds.csv");
  fs::remove_all(root);
  if (rc1 != kExitOk || rc2 != kExitOk) return {false, "cmd_run failed: " + log.str()};
  return {!a.empty() && a == b, std::to_string(a.size()) + " bytes of rounds.csv compared"};
}

// ---- 9: real image data ------------------------------------------------------

Outcome image_stretch(bool& skipped) {
  const char* dir = std::getenv("COREFED_FMNIST_DIR");
  if (dir == nullptr) {
    skipped = true;
    return {false, "COREFED_FMNIST_DIR not set"};
  }
  ExperimentConfig c;
  c.dataset = IdxSource{(fs::path(dir) / "train-images-idx3-ubyte").string(),
                        (fs::path(dir) / "train-labels-idx1-ubyte").string()};
  c.hidden_dims = kImageHiddenDims;
  c.rounds = 300;
  const double acc = run_experiment(c).reports.back().mean_accuracy;
  return {acc >= 0.80, "final mean accuracy " + std::to_string(acc)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> gating{
      {1, "gradient correctness", 10, gradient_check},
      {2, "neutral-parameter reduction", 30, neutral_reduction},
      {3, "weight simplex", 5, weight_simplex},
      {4, "golden values", 5, goldens},
      {5, "sliding-window semantics", 5, window_semantics},
      {6, "ablation direction", 300, ablation_direction},
      {7, "hyper-parameter trade-off", 300, tradeoff_direction},
      {8, "determinism", 60, determinism},
  };

  bool all = true;
  for (const auto& c : gating) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    all = all && pass;
    std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << c.id << " (" << c.name << "): " << o.detail << " ["
              << secs << " s" << (in_time ? "" : ", over budget") << "]" << std::endl;
  }

  bool skipped = false;
  const auto start = Clock::now();
  Outcome o;
  try {
    o = image_stretch(skipped);
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  std::cout << (skipped ? "SKIP" : o.pass ? "PASS" : "FAIL") << "  criterion 9 (image stretch, non-gating): " << o.detail
            << " [" << secs << " s]" << std::endl;

  std::cout << (all ? "acceptance: all gating criteria passed" : "acceptance: FAILED") << '\n';
  return all ? 0 : 1;
}
