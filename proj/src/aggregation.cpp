#include "corefed/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "corefed/error.hpp"

namespace corefed {

void ParticipationLedger::record_participation(Round t, const std::set<ClientId>& online) {
  if (auto last = latest_round(); last && t <= *last) {
    throw InvariantViolation("ledger rounds must be recorded in increasing order (got " +
                             std::to_string(t) + " after " + std::to_string(*last) + ")");
  }
  history_[t] = online;
  for (ClientId c : online) last_participation_[c] = t;
}

void ParticipationLedger::store_gradient(ClientId client, ParameterVector gradient) {
  last_gradient_[client] = std::move(gradient);
}

void ParticipationLedger::store_similarity(ClientId client, double rho) {
  last_similarity_[client] = rho;
}

bool ParticipationLedger::participated(ClientId client, Round r) const {
  auto it = history_.find(r);
  return it != history_.end() && it->second.contains(client);
}

std::optional<Round> ParticipationLedger::last_participation(ClientId client) const {
  auto it = last_participation_.find(client);
  if (it == last_participation_.end()) return std::nullopt;
  return it->second;
}

const ParameterVector* ParticipationLedger::last_gradient(ClientId client) const {
  auto it = last_gradient_.find(client);
  return it == last_gradient_.end() ? nullptr : &it->second;
}

std::optional<double> ParticipationLedger::last_similarity(ClientId client) const {
  auto it = last_similarity_.find(client);
  if (it == last_similarity_.end()) return std::nullopt;
  return it->second;
}

std::optional<Round> ParticipationLedger::latest_round() const {
  if (history_.empty()) return std::nullopt;
  return history_.rbegin()->first;
}

ParticipationLedger ParticipationLedger::restore(std::map<Round, std::set<ClientId>> history,
                                                 std::map<ClientId, ParameterVector> gradients,
                                                 std::map<ClientId, double> similarities) {
  ParticipationLedger ledger;
  for (const auto& [t, online] : history) ledger.record_participation(t, online);
  for (const auto& [c, g] : gradients) {
    if (!ledger.last_participation_.contains(c)) {
      throw FormatError("ledger checkpoint caches a gradient for client " + std::to_string(c) +
                        " that never participated");
    }
  }
  if (gradients.size() != ledger.last_participation_.size()) {
    throw FormatError("ledger checkpoint is missing cached gradients");
  }
  ledger.last_gradient_ = std::move(gradients);
  ledger.last_similarity_ = std::move(similarities);
  return ledger;
}

int window_length(const ParticipationLedger& ledger, int num_online) {
  if (num_online < 1) throw ProtocolError("window_length: at least one client must be online");
  const int m = ledger.distinct_count();
  return std::max(1, (m + num_online - 1) / num_online);
}

double participation_frequency(const ParticipationLedger& ledger, ClientId client, Round t, int tau) {
  if (tau < 1) throw ProtocolError("participation window must be at least one round");
  int hits = 0;
  for (Round r = t - tau + 1; r <= t; ++r) {
    if (r >= 1 && ledger.participated(client, r)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(tau);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

WeightAssignment fairness_weights(const std::vector<ClientId>& members,
                                  const std::map<ClientId, double>& frequencies,
                                  const std::map<ClientId, double>& similarities, double gamma,
                                  double k) {
  if (members.empty()) throw ProtocolError("fairness_weights: no members");
  if (gamma < 0.0 || k < 0.0) throw ConfigError("gamma and k must be non-negative");
  WeightAssignment out;
  // Log domain keeps every weight strictly positive even when sigmoid(k*rho)
  // would underflow.
  std::vector<double> logw;
  logw.reserve(members.size());
  for (ClientId c : members) {
    auto f = frequencies.find(c);
    auto rho = similarities.find(c);
    if (f == frequencies.end() || rho == similarities.end()) {
      throw ProtocolError("fairness_weights: client " + std::to_string(c) +
                          " lacks a frequency or similarity");
    }
    if (!(f->second > 0.0)) {
      throw InvariantViolation("participation frequency of client " + std::to_string(c) +
                               " is not positive");
    }
    const double kr = k * rho->second;
    const double log_sig = kr >= 0.0 ? -std::log1p(std::exp(-kr)) : kr - std::log1p(std::exp(kr));
    logw.push_back(-gamma * std::log(f->second) + log_sig);
    out.frequencies[c] = f->second;
    out.similarities[c] = rho->second;
  }
  const double m = *std::max_element(logw.begin(), logw.end());
  double total = 0.0;
  for (double& v : logw) {
    v = std::exp(v - m);
    total += v;
  }
  for (std::size_t i = 0; i < members.size(); ++i) out.weights[members[i]] = logw[i] / total;
  double renorm = 0.0;
  for (const auto& [c, w] : out.weights) renorm += w;
  for (auto& [c, w] : out.weights) w /= renorm;
  return out;
}

ParameterVector pseudo_gradient(const ParameterVector& global, const ParameterVector& local, double eta) {
  if (global.size() != local.size()) throw ProtocolError("pseudo_gradient: length mismatch");
  if (!(eta > 0.0)) throw ConfigError("pseudo_gradient: eta must be positive");
  ParameterVector g(global.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (global[i] - local[i]) / eta;
  return g;
}

std::optional<ParameterVector> reuse_gradient(ParticipationLedger& ledger, ClientId client, Round t,
                                              int tau, std::optional<ParameterVector> current) {
  if (current) {
    ledger.store_gradient(client, *current);
    return current;
  }
  const auto last = ledger.last_participation(client);
  if (!last || t - *last > tau) return std::nullopt;
  const ParameterVector* cached = ledger.last_gradient(client);
  if (cached == nullptr) return std::nullopt;
  return *cached;
}

ParameterVector aggregate(const ParameterVector& global, const WeightAssignment& assignment,
                          const std::map<ClientId, ParameterVector>& gradients, double eta) {
  if (assignment.weights.size() != gradients.size()) {
    throw ProtocolError("aggregate: weights and gradients cover different clients");
  }
  ParameterVector step(global.size());
  for (const auto& [c, w] : assignment.weights) {
    auto g = gradients.find(c);
    if (g == gradients.end()) {
      throw ProtocolError("aggregate: no gradient for client " + std::to_string(c));
    }
    if (g->second.size() != global.size()) throw ProtocolError("aggregate: gradient length mismatch");
    for (std::size_t i = 0; i < step.size(); ++i) step[i] += w * g->second[i];
  }
  ParameterVector out(global.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = global[i] - eta * step[i];
  return out;
}

ParameterVector fedavg_aggregate(const std::map<ClientId, ParameterVector>& locals,
                                 const std::map<ClientId, std::size_t>& sizes) {
  if (locals.empty()) throw ProtocolError("fedavg_aggregate: no local models");
  std::size_t total = 0;
  for (const auto& [c, model] : locals) {
    auto n = sizes.find(c);
    if (n == sizes.end() || n->second == 0) {
      throw ProtocolError("fedavg_aggregate: client " + std::to_string(c) + " has no positive size");
    }
    total += n->second;
  }
  const std::size_t len = locals.begin()->second.size();
  ParameterVector out(len);
  for (const auto& [c, model] : locals) {
    if (model.size() != len) throw ProtocolError("fedavg_aggregate: length mismatch");
    const double w = static_cast<double>(sizes.at(c)) / static_cast<double>(total);
    for (std::size_t i = 0; i < len; ++i) out[i] += w * model[i];
  }
  return out;
}

RoundAssembly assemble_round(ParticipationLedger& ledger, const std::set<ClientId>& online,
                             std::map<ClientId, ParameterVector> fresh_gradients,
                             const std::map<ClientId, double>& fresh_similarities, Round t,
                             double gamma, double k) {
  auto keyed_by_online = [&](const auto& m) {
    if (m.size() != online.size()) return false;
    return std::all_of(online.begin(), online.end(), [&](ClientId c) { return m.contains(c); });
  };
  if (online.empty()) throw ProtocolError("assemble_round: no online clients");
  if (!keyed_by_online(fresh_gradients) || !keyed_by_online(fresh_similarities)) {
    throw ProtocolError("assemble_round: fresh gradients/similarities must be keyed by the online set");
  }

  // M is taken before this round is recorded, so round 1 sees M = 0.
  const int tau = window_length(ledger, static_cast<int>(online.size()));
  ledger.record_participation(t, online);

  RoundAssembly out;
  std::map<ClientId, double> freq;
  std::map<ClientId, double> sims;
  std::vector<ClientId> members;
  const double floor_f = 1.0 / static_cast<double>(tau);
  for (ClientId c : online) {
    out.gradients[c] = *reuse_gradient(ledger, c, t, tau, std::move(fresh_gradients.at(c)));
    ledger.store_similarity(c, fresh_similarities.at(c));
    sims[c] = fresh_similarities.at(c);
  }
  for (const auto& [c, last] : ledger.last_participation_map()) {
    if (online.contains(c)) continue;
    auto g = reuse_gradient(ledger, c, t, tau, std::nullopt);
    if (!g) continue;
    out.gradients[c] = std::move(*g);
    out.reused.insert(c);
    sims[c] = ledger.last_similarity(c).value_or(0.0);
  }
  for (const auto& [c, g] : out.gradients) {
    members.push_back(c);
    // A reused client last seen exactly tau rounds ago sits just outside the
    // frequency window; it still counts as one participation.
    freq[c] = std::max(participation_frequency(ledger, c, t, tau), floor_f);
  }
  out.assignment = fairness_weights(members, freq, sims, gamma, k);
  out.assignment.window_tau = tau;
  return out;
}

}  // namespace corefed
