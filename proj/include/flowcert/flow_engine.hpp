#pragma once

#include "flowcert/objective.hpp"
#include "flowcert/priors.hpp"
#include "flowcert/types.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowcert {

enum class Scheme { euler, rk4 };

// How the Laplacian accumulator is discretised. stage_weighted reuses the
// integrator stages (for euler both rules coincide); left_rectangle charges
// dt * Laplacian(h_n) per step.
enum class LaplacianRule { stage_weighted, left_rectangle };

struct FlowState {
    double t = 0.0;
    Vector h;
    double laplacian_integral = 0.0;
};

struct IntegratorConfig {
    Scheme scheme = Scheme::euler;
    double dt = 1e-3;
    // Ascending snapshot times; each must be an integer multiple of dt.
    std::vector<double> horizon_grid;
    LaplacianRule laplacian_rule = LaplacianRule::stage_weighted;
    // Keep every intermediate state (needed for path quadratures).
    bool record_path = false;

    void validate() const;
};

struct ScheduleSegment {
    double t_start = 0.0;
    double t_end = 0.0;
    std::size_t batch_id = 0;
};

// Piecewise-constant objective schedule: batch `batch_id` drives the flow on
// [t_start, t_end). Segments are contiguous and start at 0.
struct BatchSchedule {
    std::vector<ScheduleSegment> segments;

    double span() const { return segments.empty() ? 0.0 : segments.back().t_end; }
    void validate(double dt) const;
};

using ObjectiveFactory = std::function<std::shared_ptr<const Objective>(std::size_t batch_id)>;

// Raised when the flow produces a non-finite state, gradient or Laplacian.
class FlowAborted : public std::runtime_error {
public:
    FlowAborted(const std::string& what, FlowState last)
        : std::runtime_error(what), last_(std::move(last)) {}
    const FlowState& last_state() const { return last_; }

private:
    FlowState last_;
};

struct Snapshot {
    double horizon = 0.0;
    FlowState state;
};

struct FlowRun {
    std::vector<Snapshot> snapshots;
    std::vector<FlowState> path;  // filled when record_path is set
    bool aborted = false;
    std::string diagnostic;
};

// Converts a time to a whole number of steps; throws ConfigError if t is not
// a multiple of dt.
std::int64_t steps_for(double t, double dt);

// One step of the augmented system dh/dt = -grad C, dI/dt = Lap C.
FlowState step(const FlowState& state, const Objective& objective, double dt,
               Scheme scheme = Scheme::rk4,
               LaplacianRule rule = LaplacianRule::stage_weighted);

FlowRun integrate(const Vector& h0, const Objective& objective, const IntegratorConfig& config);

// Continues from an arbitrary state; horizon times are absolute.
FlowRun integrate_from(const FlowState& start, const Objective& objective,
                       const IntegratorConfig& config);

// Piecewise objectives: the accumulator is the sum of per-segment integrals.
FlowRun integrate(const Vector& h0, const BatchSchedule& schedule,
                  const ObjectiveFactory& objective_for, const IntegratorConfig& config);

// log rho0(h0) - log rho0(hT) + integral of the Laplacian.
double complexity_term(const PriorSpec& prior, const Vector& h0, const Vector& hT,
                       double laplacian_integral);

// For N = 1: log|C'(h0)| - log|C'(hT)|.
double one_d_laplacian_closed_form(const Objective& objective, double h0, double hT);

struct DecompositionResult {
    double lhs = 0.0;  // accumulated integral of the Laplacian
    double rhs = 0.0;  // log gradient-norm ratio minus line integral of div tau
    double log_norm_ratio = 0.0;
    double tangent_divergence_integral = 0.0;
};

// Splits the Laplacian integral along a recorded path into the gradient-norm
// term and the line integral of the divergence of the unit tangent field.
DecompositionResult divergence_decomposition(std::span<const FlowState> path,
                                             const Objective& objective);

struct BackwardRun {
    Vector endpoint;
    // Integral of the Laplacian along the reverse segment, in forward time.
    double laplacian_integral = 0.0;
    std::vector<FlowState> path;
};

// Solves dg/dtau = +grad C(g) from g(0) = hT for `span`, i.e. recovers the
// forward trajectory that ends in hT. Throws FlowAborted on blow-up.
BackwardRun backward_integrate(const Vector& hT, const Objective& objective, double span,
                               const IntegratorConfig& config);

struct TwoPhaseRun {
    FlowState at_t0;  // laplacian_integral: prior-phase integral on [0, t0]
    FlowRun train_phase;  // accumulators restart at t0
};

// Flows on the prior-phase objective up to t0, then on the training objective
// through the horizon grid.
TwoPhaseRun integrate_two_phase(const Vector& h0, const Objective& prior_phase,
                                const Objective& train_phase, double t0,
                                const IntegratorConfig& config);

// log rho_T(h_T) / rho_t0(h_T), where the prior rho_t0 is prior0 pushed
// through the prior-phase flow for t0:
//   log rho0(h0) - log rho0(g) + I_prior - I_back + I_train
// with g the prior-phase flow run backwards from h_T for t0 and I_back the
// Laplacian integral along that reverse segment. `at_T.laplacian_integral`
// must cover [t0, T] only.
double data_dependent_complexity(const PriorSpec& prior0, const Vector& h0,
                                 const FlowState& at_t0, const FlowState& at_T,
                                 const Objective& prior_phase, const IntegratorConfig& config);

// C + epsilon |grad C|^2, differentiated by central differences.
// One row per state: t, |h|, laplacian_integral, objective value.
void write_trajectory_csv(std::ostream& out, std::span<const FlowState> path,
                          const Objective& objective);

std::shared_ptr<const Objective> backward_error_corrected_objective(
    std::shared_ptr<const Objective> objective, double epsilon);

}  // namespace flowcert
