#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "mdm/disorder.hpp"
#include "mdm/exact_gibbs.hpp"
#include "mdm/graph.hpp"
#include "mdm/matching.hpp"
#include "mdm/rng.hpp"

namespace mdm {

/// Glauber chain state. `current` always satisfies the boundary condition:
/// present boundary edges are in the matching, absent ones are not.
struct ChainState {
  Matching current;
  std::int64_t sweep_count = 0;
  std::optional<BoundaryCondition> boundary;
};

/// Chain state at the empty matching plus the forced boundary edges.
ChainState initial_state(const WeightedGraph& g, std::optional<BoundaryCondition> boundary);

/// Heat-bath update of edge e with uniform u in [0,1). If an endpoint of e is
/// covered by another edge, e becomes absent; otherwise e becomes present iff
/// u < sigmoid(w_e - nu_x - nu_y). Boundary edges are left untouched.
void heat_bath_update(Matching& m, const DisorderSample& s, EdgeId e, double u);
ChainState heat_bath_step(ChainState state, const DisorderSample& s, EdgeId e, double u);

struct ChainOptions {
  std::int64_t sweeps = 1;
  /// Sweeps discarded before the first visit; negative selects 10x the
  /// batch-means autocorrelation time of the dimer count.
  std::int64_t burn_in = -1;
  std::uint64_t seed = 0;
};

/// Systematic-scan heat bath over the unforced edges (the region's edges when
/// a boundary is given, all edges otherwise). Calls `visit` with the state after
/// each post-burn-in sweep. Throws ValidationError for inadmissible boundaries.
void run_chain(const WeightedGraph& g, const DisorderSample& s, const std::optional<BoundaryCondition>& boundary,
               const ChainOptions& options, const std::function<void(const Matching&)>& visit);

/// Integrated autocorrelation time of |M| along the chain, by batch means over
/// a pilot run.
double dimer_autocorrelation_time(const WeightedGraph& g, const DisorderSample& s,
                                  const std::optional<BoundaryCondition>& boundary, std::int64_t pilot_sweeps,
                                  std::uint64_t seed);

/// Exact draw from the conditional Gibbs measure by enumerating the matchings
/// consistent with the boundary and inverting the CDF. Throws SizeError when
/// more than kEnumerationEdgeLimit region edges remain unforced.
Matching exact_conditional_sample(const WeightedGraph& g, const DisorderSample& s, const BoundaryCondition& bc,
                                  std::uint64_t seed);

/// One connected component of M1 xor M2: a self-avoiding path or an even cycle,
/// edges listed in walking order.
struct DisagreementComponent {
  std::vector<EdgeId> edges;
  bool cycle = false;
  bool alternating = true;
  bool touches_boundary = false;
};

struct DisagreementReport {
  std::vector<DisagreementComponent> components;
  bool reached_boundary = false;
  int max_path_length = 0;
};

/// Decomposes M1 xor M2 into components. `boundary` marks edges whose presence
/// in a component sets touches_boundary.
DisagreementReport symmetric_difference_paths(const Matching& m1, const Matching& m2,
                                              const std::vector<EdgeId>& boundary = {});

/// Whether there is a sequence e = e0 ~ e1 ~ ... ~ el with e1..el in M1 xor M2
/// and el in `boundary`.
bool has_disagreement_path(const Matching& m1, const Matching& m2, EdgeId e, const std::vector<EdgeId>& boundary);

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  std::int64_t replicas = 0;
};

enum class SamplerKind { automatic, enumeration, recursion, chain };

struct CouplingOptions {
  std::int64_t replicas = 10000;
  std::uint64_t seed = 0;
  /// automatic: enumeration up to kEnumerationEdgeLimit unforced edges, exact
  /// recursion sampling beyond.
  SamplerKind sampler = SamplerKind::automatic;
  std::int64_t chain_sweeps = 200;
  /// Drive both chains from the same uniforms. Not the independent product
  /// coupling, so never use it where the disagreement bound is asserted.
  bool common_random_numbers = false;
};

/// Monte Carlo estimate, under the independent coupling of the two conditional
/// measures on F = E(ball(e, R)), of the probability of a disagreement path
/// from e to the outer boundary of F. bc1 and bc2 must be boundary conditions
/// of that region.
Estimate disagreement_probability(const WeightedGraph& g, const DisorderSample& s, EdgeId e, int radius,
                                  const BoundaryCondition& bc1, const BoundaryCondition& bc2,
                                  const CouplingOptions& options);

/// Draws conditional samples with a fixed method; reused across replicas.
class ConditionalSampler {
 public:
  ConditionalSampler(const WeightedGraph& g, const DisorderSample& s, const BoundaryCondition& bc, SamplerKind kind,
                     std::int64_t chain_sweeps);
  Matching draw(SplitMix64& rng);
  SamplerKind kind() const { return kind_; }

 private:
  const WeightedGraph* graph_;
  const DisorderSample* sample_;
  BoundaryCondition bc_;
  ConditionedSystem system_;
  SamplerKind kind_;
  std::int64_t chain_sweeps_;
  std::optional<PartitionEngine> engine_;
  std::vector<std::vector<EdgeId>> configs_;
  std::vector<double> cdf_;
};

}  // namespace mdm
