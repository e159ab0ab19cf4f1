#include "corefed/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "corefed/checkpoint.hpp"
#include "corefed/error.hpp"
#include "corefed/representation.hpp"
#include "corefed/rng.hpp"

namespace corefed {

namespace {

struct ClientOutcome {
  ClientId id = 0;
  std::optional<ParameterVector> local;
  std::optional<ClientEmbedding> embedding;
  std::string failure;
};

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                    : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
}

bool all_finite(const ParameterVector& p) {
  return std::all_of(p.begin(), p.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::corefed: return "corefed";
    case Algorithm::cofed: return "cofed";
    case Algorithm::refed: return "refed";
    case Algorithm::fedavg: return "fedavg";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view name) {
  for (Algorithm a : kAllAlgorithms) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown algorithm '" + std::string(name) +
                    "' (expected corefed, cofed, refed or fedavg)");
}

int OnlinePerRound::resolve(int num_clients) const {
  if (!is_fraction) return static_cast<int>(value);
  return std::clamp(static_cast<int>(std::llround(value * num_clients)), 1, num_clients);
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (rounds < 0) fail("rounds must be non-negative");
  if (clients < 1) fail("clients must be at least 1");
  if (online_per_round.is_fraction) {
    if (!(online_per_round.value > 0.0 && online_per_round.value <= 1.0)) {
      fail("online_per_round as a fraction must lie in (0,1]");
    }
  } else if (online_per_round.value < 1 || online_per_round.value > clients ||
             online_per_round.value != std::floor(online_per_round.value)) {
    fail("online_per_round must be an integer in [1, clients]");
  }
  if (local_epochs < 0) fail("local_epochs must be non-negative");
  if (batch_size < 1) fail("batch_size must be positive");
  if (!(eta0 > 0.0)) fail("eta0 must be positive");
  if (!(lr_decay > 0.0)) fail("lr_decay must be positive");
  if (!(gamma >= 0.0)) fail("gamma must be non-negative");
  if (!(k >= 0.0)) fail("k must be non-negative");
  if (!(beta >= 0.0 && beta <= 1.0)) fail("beta must lie in [0,1]");
  if (!(tau_c > 0.0)) fail("tau_c must be positive");
  if (!(dirichlet_alpha > 0.0)) fail("dirichlet_alpha must be positive");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail("test_fraction must lie in (0,1)");
  if (hidden_dims.empty()) fail("model.hidden_dims must not be empty");
  for (std::size_t h : hidden_dims) {
    if (h == 0) fail("model.hidden_dims entries must be positive");
  }
  if (checkpoint_interval < 0) fail("checkpoint_interval must be non-negative");
  if (threads < 0) fail("threads must be non-negative");
  if (const auto* s = std::get_if<SyntheticSource>(&dataset)) {
    if (s->num_classes < 1) fail("dataset.num_classes must be positive");
    if (s->input_dim < 1) fail("dataset.input_dim must be positive");
    if (s->samples < 1) fail("dataset.samples must be positive");
  } else {
    const auto& idx = std::get<IdxSource>(dataset);
    if (idx.images.empty()) fail("dataset.images must name a file");
    if (idx.labels.empty()) fail("dataset.labels must name a file");
  }
}

Federation build_federation(const ExperimentConfig& config) {
  config.validate();
  const Dataset data = std::visit(
      [&](const auto& src) -> Dataset {
        using T = std::decay_t<decltype(src)>;
        if constexpr (std::is_same_v<T, SyntheticSource>) {
          return gen_synthetic(src.num_classes, src.input_dim, src.samples, config.seed);
        } else {
          return load_idx(src.images, src.labels);
        }
      },
      config.dataset);
  Federation fed;
  fed.spec = ModelSpec{data.input_dim(), config.hidden_dims, static_cast<std::size_t>(data.num_classes),
                       Activation::relu};
  fed.spec.validate();
  fed.plan = dirichlet_partition(data, config.clients, config.dirichlet_alpha, config.seed);
  fed.shards = split_test(data, fed.plan, config.test_fraction);
  return fed;
}

RunState initial_state(const ExperimentConfig& config, const ModelSpec& spec) {
  Rng rng = substream(config.seed, Stream::init);
  return RunState{0, init_parameters(spec, rng), {}};
}

std::set<ClientId> sample_clients(const RunState& state, const ExperimentConfig& config) {
  const int n = config.clients;
  const int want = config.online_per_round.resolve(n);
  if (want < 1 || want > n) throw ConfigError("online_per_round must lie in [1, clients]");
  Rng rng = substream(config.seed, Stream::sampling, static_cast<std::uint64_t>(state.t + 1));
  std::vector<ClientId> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  // Partial Fisher-Yates: the first `want` slots are the sample.
  for (int i = 0; i < want; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(pick(rng))]);
  }
  return {ids.begin(), ids.begin() + want};
}

double lr_schedule(double eta0, double decay, Round t) {
  if (t < 1) throw ConfigError("lr_schedule: rounds start at 1");
  return eta0 * std::pow(decay, t - 1);
}

RoundReport run_round(RunState& state, const ExperimentConfig& config, const Federation& federation) {
  const Round t = state.t + 1;
  const Algorithm algo = config.algorithm;
  const bool aligns = algo != Algorithm::fedavg;
  const double eta = lr_schedule(config.eta0, config.lr_decay, t);

  RoundReport report;
  report.round = t;
  report.learning_rate = eta;
  const std::set<ClientId> sampled = sample_clients(state, config);

  // Client phase: independent per client, results slotted by position.
  const std::vector<ClientId> order(sampled.begin(), sampled.end());
  std::vector<ClientOutcome> outcomes(order.size());
  parallel_for(order.size(), config.threads, [&](std::size_t i) {
    ClientOutcome& out = outcomes[i];
    out.id = order[i];
    try {
      const Shard& shard = federation.shards.at(static_cast<std::size_t>(out.id));
      Rng rng = substream(config.seed, Stream::shuffle, static_cast<std::uint64_t>(t),
                          static_cast<std::uint64_t>(out.id));
      ParameterVector local = local_train(state.global, federation.spec, shard.train, config.local_epochs,
                                          static_cast<std::size_t>(config.batch_size), eta, rng);
      if (!all_finite(local)) throw ClientSkipped("local training diverged to non-finite parameters");
      if (aligns) out.embedding = client_embedding(local, federation.spec, shard.train);
      out.local = std::move(local);
    } catch (const std::exception& e) {
      out.local.reset();
      out.failure = e.what();
    }
  });

  // Serial phase, in client-id order.
  std::map<ClientId, ParameterVector> locals;
  std::vector<ClientId> ids;
  std::vector<Embedding> embeddings;
  for (auto& o : outcomes) {
    if (!o.local) {
      report.warnings.push_back("round " + std::to_string(t) + ": client " + std::to_string(o.id) +
                                " skipped: " + o.failure);
      continue;
    }
    if (o.embedding) {
      if (o.embedding->degenerate) {
        report.warnings.push_back("round " + std::to_string(t) + ": client " + std::to_string(o.id) +
                                  " produced only zero-norm features; embedding is zero");
      }
      embeddings.push_back(std::move(o.embedding->embedding));
    }
    ids.push_back(o.id);
    locals.emplace(o.id, std::move(*o.local));
  }
  report.online = std::set<ClientId>(ids.begin(), ids.end());

  ParameterVector next = state.global;
  if (!locals.empty()) {
    std::map<ClientId, double> sims;
    if (aligns) {
      const Embedding zg = global_embedding(embeddings);
      const auto mode = algo == Algorithm::cofed ? AlignmentMode::raw : AlignmentMode::distill;
      report.alignment = align_clients(ids, embeddings, zg, config.beta, config.tau_c, mode);
      for (const auto& rec : report.alignment) {
        sims[rec.client_id] = rec.similarity;
        report.contrastive_losses[rec.client_id] = rec.contrastive_loss;
        if (rec.alignment_score < 0.0) {
          std::ostringstream msg;
          msg << "round " << t << ": client " << rec.client_id << " has negative alignment score "
              << rec.alignment_score << "; its alignment target points away from the global embedding";
          report.warnings.push_back(msg.str());
        }
      }
    }

    std::map<ClientId, ParameterVector> fresh;
    for (const auto& [c, local] : locals) fresh.emplace(c, pseudo_gradient(state.global, local, eta));

    if (algo == Algorithm::corefed || algo == Algorithm::cofed) {
      RoundAssembly assembly = assemble_round(state.ledger, report.online, std::move(fresh), sims, t,
                                              config.gamma, config.k);
      next = aggregate(state.global, assembly.assignment, assembly.gradients, eta);
      report.weights = assembly.assignment.weights;
      report.window_tau = assembly.assignment.window_tau;
      report.reused = assembly.reused;
    } else {
      std::map<ClientId, std::size_t> sizes;
      for (const auto& [c, local] : locals) sizes[c] = federation.shards[static_cast<std::size_t>(c)].train.size();
      next = fedavg_aggregate(locals, sizes);
      std::size_t total = 0;
      for (const auto& [c, n] : sizes) total += n;
      for (const auto& [c, n] : sizes) report.weights[c] = static_cast<double>(n) / static_cast<double>(total);
      // Participation is still tracked so liveness accounting and
      // checkpoints look the same for every algorithm.
      state.ledger.record_participation(t, report.online);
      for (auto& [c, g] : fresh) state.ledger.store_gradient(c, std::move(g));
      for (const auto& [c, rho] : sims) state.ledger.store_similarity(c, rho);
    }
  } else {
    report.warnings.push_back("round " + std::to_string(t) + ": no client finished; global model unchanged");
  }

  const AccuracyResult acc = evaluate_accuracy(next, federation.spec, federation.shards);
  report.per_client_accuracy = acc.per_client;
  report.mean_accuracy = config.accuracy_mode == AccuracyMode::pooled
                             ? pooled_accuracy(next, federation.spec, federation.shards)
                             : acc.mean;
  const FairnessSummary fair = fairness_summary(locals, next);
  report.d_cosine_mean = fair.d_cosine_mean;
  report.d_manhattan_mean = fair.d_manhattan_mean;

  state.global = std::move(next);
  state.t = t;
  return report;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  return run_experiment(config, build_federation(config), options);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const Federation& federation,
                                const RunOptions& options) {
  config.validate();
  if (federation.shards.size() != static_cast<std::size_t>(config.clients)) {
    throw ConfigError("federation has " + std::to_string(federation.shards.size()) +
                      " shards but config declares " + std::to_string(config.clients) + " clients");
  }
  RunState state = initial_state(config, federation.spec);
  ExperimentResult result{federation.spec, state.global, {}, {}};
  result.reports.reserve(static_cast<std::size_t>(config.rounds));
  for (Round t = 1; t <= config.rounds; ++t) {
    result.reports.push_back(run_round(state, config, federation));
    if (options.on_round) options.on_round(result.reports.back());
    if (options.checkpoint_dir && config.checkpoint_interval > 0 && t % config.checkpoint_interval == 0) {
      write_round_checkpoint(*options.checkpoint_dir, t, state.global, state.ledger);
    }
  }
  result.final_global = std::move(state.global);
  return result;
}

}  // namespace corefed
