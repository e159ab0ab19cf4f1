#pragma once

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "corefed/datasets.hpp"
#include "corefed/model.hpp"

namespace corefed {

using Round = int;

// Participation history plus the per-client caches used for gradient reuse.
// Single writer: mutated only in the serial aggregation phase of a round.
class ParticipationLedger {
 public:
  /// Append round `t`'s online set. Rounds must be recorded in increasing order.
  void record_participation(Round t, const std::set<ClientId>& online);
  void store_gradient(ClientId client, ParameterVector gradient);
  void store_similarity(ClientId client, double rho);

  int distinct_count() const { return static_cast<int>(last_participation_.size()); }
  bool participated(ClientId client, Round r) const;
  std::optional<Round> last_participation(ClientId client) const;
  const ParameterVector* last_gradient(ClientId client) const;
  std::optional<double> last_similarity(ClientId client) const;
  std::optional<Round> latest_round() const;

  const std::map<Round, std::set<ClientId>>& history() const { return history_; }
  const std::map<ClientId, Round>& last_participation_map() const { return last_participation_; }
  const std::map<ClientId, ParameterVector>& gradient_cache() const { return last_gradient_; }
  const std::map<ClientId, double>& similarity_cache() const { return last_similarity_; }

  /// Rebuild from checkpointed state; validates the ledger invariants.
  static ParticipationLedger restore(std::map<Round, std::set<ClientId>> history,
                                     std::map<ClientId, ParameterVector> gradients,
                                     std::map<ClientId, double> similarities);

  bool operator==(const ParticipationLedger&) const = default;

 private:
  std::map<Round, std::set<ClientId>> history_;
  std::map<ClientId, Round> last_participation_;
  std::map<ClientId, ParameterVector> last_gradient_;
  std::map<ClientId, double> last_similarity_;
};

struct WeightAssignment {
  std::map<ClientId, double> weights;
  int window_tau = 1;
  std::map<ClientId, double> frequencies;
  std::map<ClientId, double> similarities;
};

/// ceil(M / num_online), at least 1. M counts distinct clients recorded so far.
int window_length(const ParticipationLedger& ledger, int num_online);

/// Fraction of rounds t-tau+1 .. t (inclusive) in which `client` was online.
double participation_frequency(const ParticipationLedger& ledger, ClientId client, Round t, int tau);

double sigmoid(double x);

/// (1/f_i)^gamma * sigmoid(k * rho_i), normalized over `members`.
WeightAssignment fairness_weights(const std::vector<ClientId>& members,
                                  const std::map<ClientId, double>& frequencies,
                                  const std::map<ClientId, double>& similarities, double gamma,
                                  double k);

/// (global - local) / eta: the effective gradient of a multi-step local update.
ParameterVector pseudo_gradient(const ParameterVector& global, const ParameterVector& local, double eta);

/// Fresh gradient for online clients (and cache it); the cached gradient for
/// clients last seen within tau rounds; nothing otherwise.
std::optional<ParameterVector> reuse_gradient(ParticipationLedger& ledger, ClientId client, Round t,
                                              int tau, std::optional<ParameterVector> current);

/// global - eta * sum_i w_i g_i.
ParameterVector aggregate(const ParameterVector& global, const WeightAssignment& assignment,
                          const std::map<ClientId, ParameterVector>& gradients, double eta);

/// Data-size weighted model average.
ParameterVector fedavg_aggregate(const std::map<ClientId, ParameterVector>& locals,
                                 const std::map<ClientId, std::size_t>& sizes);

struct RoundAssembly {
  WeightAssignment assignment;
  std::map<ClientId, ParameterVector> gradients;
  std::set<ClientId> reused;  // members contributing a cached gradient
};

/// Record round `t` in the ledger and build the aggregation set: the online
/// clients plus every offline client whose last participation lies within the
/// window. Reused members bring their cached gradient and similarity.
RoundAssembly assemble_round(ParticipationLedger& ledger, const std::set<ClientId>& online,
                             std::map<ClientId, ParameterVector> fresh_gradients,
                             const std::map<ClientId, double>& fresh_similarities, Round t,
                             double gamma, double k);

}  // namespace corefed
