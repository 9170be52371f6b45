#include "flowcert/flow_engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <utility>

namespace flowcert {

namespace {

// +1 follows the gradient (reverse time), -1 descends it.
constexpr double kForward = -1.0;
constexpr double kBackward = 1.0;

FieldEval checked_field(const Objective& objective, const Vector& h, const FlowState& at) {
    FieldEval f = objective.field(h);
    if (!f.gradient.allFinite() || !std::isfinite(f.laplacian)) {
        std::ostringstream msg;
        msg << "non-finite " << (f.gradient.allFinite() ? "Laplacian" : "gradient")
            << " at t=" << at.t << " (|h|_max=" << at.h.lpNorm<Eigen::Infinity>() << ")";
        throw FlowAborted(msg.str(), at);
    }
    return f;
}

FlowState step_directed(const FlowState& s, const Objective& objective, double dt, Scheme scheme,
                        LaplacianRule rule, double direction) {
    FlowState next;
    next.t = s.t + dt;
    const FieldEval f1 = checked_field(objective, s.h, s);
    if (scheme == Scheme::euler) {
        next.h = s.h + (direction * dt) * f1.gradient;
        next.laplacian_integral = s.laplacian_integral + dt * f1.laplacian;
    } else {
        const double half = 0.5 * dt;
        const FieldEval f2 = checked_field(objective, s.h + (direction * half) * f1.gradient, s);
        const FieldEval f3 = checked_field(objective, s.h + (direction * half) * f2.gradient, s);
        const FieldEval f4 = checked_field(objective, s.h + (direction * dt) * f3.gradient, s);
        next.h = s.h + (direction * dt / 6.0) *
                           (f1.gradient + 2.0 * f2.gradient + 2.0 * f3.gradient + f4.gradient);
        const double increment =
            rule == LaplacianRule::stage_weighted
                ? dt / 6.0 * (f1.laplacian + 2.0 * f2.laplacian + 2.0 * f3.laplacian + f4.laplacian)
                : dt * f1.laplacian;
        next.laplacian_integral = s.laplacian_integral + increment;
    }
    if (!next.h.allFinite() || !std::isfinite(next.laplacian_integral)) {
        std::ostringstream msg;
        msg << "state diverged in step from t=" << s.t
            << " (|h|_max before step=" << s.h.lpNorm<Eigen::Infinity>() << ")";
        throw FlowAborted(msg.str(), s);
    }
    return next;
}

using ObjectiveAt = std::function<const Objective&(std::int64_t step_index)>;

// Fixed-step loop shared by every public entry point. Times are kept as
// step counts so snapshots land exactly on grid points.
FlowRun run_flow(const FlowState& start, const ObjectiveAt& objective_at,
                 const IntegratorConfig& config, double direction) {
    config.validate();
    const double dt = config.dt;
    const std::int64_t first = steps_for(start.t, dt);

    std::vector<std::int64_t> targets;
    targets.reserve(config.horizon_grid.size());
    for (double T : config.horizon_grid) {
        const std::int64_t n = steps_for(T, dt);
        if (n < first) {
            throw ConfigError("horizon precedes the start time of the flow");
        }
        targets.push_back(n);
    }

    FlowRun run;
    FlowState state = start;
    state.t = static_cast<double>(first) * dt;
    if (config.record_path) {
        run.path.push_back(state);
    }
    std::int64_t n = first;
    try {
        for (std::size_t k = 0; k < targets.size(); ++k) {
            while (n < targets[k]) {
                state = step_directed(state, objective_at(n), dt, config.scheme,
                                      config.laplacian_rule, direction);
                ++n;
                state.t = static_cast<double>(n) * dt;
                if (config.record_path) {
                    run.path.push_back(state);
                }
            }
            run.snapshots.push_back({config.horizon_grid[k], state});
        }
    } catch (const FlowAborted& e) {
        run.aborted = true;
        run.diagnostic = e.what();
    }
    return run;
}

}  // namespace

std::int64_t steps_for(double t, double dt) {
    if (!(dt > 0.0) || !std::isfinite(t) || t < 0.0) {
        throw ConfigError("invalid time or step size");
    }
    const double ratio = t / dt;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, rounded)) {
        std::ostringstream msg;
        msg << "time " << t << " is not an integer multiple of dt=" << dt;
        throw ConfigError(msg.str());
    }
    return static_cast<std::int64_t>(rounded);
}

void IntegratorConfig::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw ConfigError("dt must be positive");
    }
    for (std::size_t i = 0; i < horizon_grid.size(); ++i) {
        steps_for(horizon_grid[i], dt);
        if (i > 0 && !(horizon_grid[i] > horizon_grid[i - 1])) {
            throw ConfigError("horizon grid must be strictly ascending");
        }
    }
}

void BatchSchedule::validate(double dt) const {
    if (segments.empty()) {
        throw ConfigError("empty batch schedule");
    }
    std::int64_t expected = 0;
    for (const auto& seg : segments) {
        const std::int64_t a = steps_for(seg.t_start, dt);
        const std::int64_t b = steps_for(seg.t_end, dt);
        if (a != expected || b <= a) {
            throw ConfigError("batch schedule segments must be contiguous, start at 0 and be "
                              "non-empty");
        }
        expected = b;
    }
}

FlowState step(const FlowState& state, const Objective& objective, double dt, Scheme scheme,
               LaplacianRule rule) {
    return step_directed(state, objective, dt, scheme, rule, kForward);
}

FlowRun integrate(const Vector& h0, const Objective& objective, const IntegratorConfig& config) {
    return integrate_from(FlowState{0.0, h0, 0.0}, objective, config);
}

FlowRun integrate_from(const FlowState& start, const Objective& objective,
                       const IntegratorConfig& config) {
    return run_flow(
        start, [&objective](std::int64_t) -> const Objective& { return objective; }, config,
        kForward);
}

FlowRun integrate(const Vector& h0, const BatchSchedule& schedule,
                  const ObjectiveFactory& objective_for, const IntegratorConfig& config) {
    config.validate();
    schedule.validate(config.dt);
    if (!config.horizon_grid.empty() &&
        steps_for(config.horizon_grid.back(), config.dt) > steps_for(schedule.span(), config.dt)) {
        throw ConfigError("horizon grid extends beyond the batch schedule");
    }

    std::size_t segment = 0;
    std::int64_t segment_end = steps_for(schedule.segments[0].t_end, config.dt);
    std::shared_ptr<const Objective> current = objective_for(schedule.segments[0].batch_id);
    auto objective_at = [&](std::int64_t n) -> const Objective& {
        while (n >= segment_end) {
            ++segment;
            segment_end = steps_for(schedule.segments[segment].t_end, config.dt);
            current = objective_for(schedule.segments[segment].batch_id);
        }
        return *current;
    };
    return run_flow(FlowState{0.0, h0, 0.0}, objective_at, config, kForward);
}

double complexity_term(const PriorSpec& prior, const Vector& h0, const Vector& hT,
                       double laplacian_integral) {
    return log_density_ratio(prior, h0, hT) + laplacian_integral;
}

double one_d_laplacian_closed_form(const Objective& objective, double h0, double hT) {
    if (objective.dimension() != 1) {
        throw std::invalid_argument("one_d_laplacian_closed_form requires N = 1");
    }
    const double d0 = objective.gradient(Vector::Constant(1, h0))[0];
    const double dT = objective.gradient(Vector::Constant(1, hT))[0];
    if (d0 == 0.0 || dT == 0.0) {
        throw UndefinedResult("derivative vanishes at an endpoint");
    }
    if ((d0 > 0.0) != (dT > 0.0)) {
        throw UndefinedResult("trajectory endpoints straddle a critical point");
    }
    return std::log(std::abs(d0)) - std::log(std::abs(dT));
}

namespace {

Vector unit_tangent(const Objective& objective, const Vector& h) {
    const Vector g = objective.gradient(h);
    const double norm = g.norm();
    if (!(norm > 0.0)) {
        throw UndefinedResult("gradient vanishes on the path; unit tangent undefined");
    }
    return -g / norm;
}

double tangent_divergence(const Objective& objective, const Vector& h) {
    const double eps = 1e-4 * (1.0 + h.norm());
    Vector probe = h;
    double div = 0.0;
    for (Eigen::Index i = 0; i < h.size(); ++i) {
        probe[i] = h[i] + eps;
        const double plus = unit_tangent(objective, probe)[i];
        probe[i] = h[i] - eps;
        const double minus = unit_tangent(objective, probe)[i];
        probe[i] = h[i];
        div += (plus - minus) / (2.0 * eps);
    }
    return div;
}

}  // namespace

DecompositionResult divergence_decomposition(std::span<const FlowState> path,
                                             const Objective& objective) {
    if (path.size() < 2) {
        throw std::invalid_argument("divergence_decomposition needs a recorded path");
    }
    DecompositionResult r;
    r.lhs = path.back().laplacian_integral - path.front().laplacian_integral;

    const double g0 = objective.gradient(path.front().h).norm();
    const double gT = objective.gradient(path.back().h).norm();
    if (!(g0 > 0.0) || !(gT > 0.0)) {
        throw UndefinedResult("gradient vanishes at a path endpoint");
    }
    r.log_norm_ratio = std::log(g0) - std::log(gT);

    // Trapezoid rule in arc length over the stored chords.
    double previous = tangent_divergence(objective, path.front().h);
    double integral = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) {
        const double current = tangent_divergence(objective, path[i].h);
        integral += 0.5 * (previous + current) * (path[i].h - path[i - 1].h).norm();
        previous = current;
    }
    r.tangent_divergence_integral = integral;
    r.rhs = r.log_norm_ratio - integral;
    return r;
}

BackwardRun backward_integrate(const Vector& hT, const Objective& objective, double span,
                               const IntegratorConfig& config) {
    IntegratorConfig reverse = config;
    reverse.horizon_grid = {span};
    FlowRun run = run_flow(
        FlowState{0.0, hT, 0.0},
        [&objective](std::int64_t) -> const Objective& { return objective; }, reverse, kBackward);
    if (run.aborted) {
        throw FlowAborted("backward flow blew up: " + run.diagnostic, FlowState{});
    }
    BackwardRun out;
    out.endpoint = run.snapshots.back().state.h;
    out.laplacian_integral = run.snapshots.back().state.laplacian_integral;
    out.path = std::move(run.path);
    return out;
}

TwoPhaseRun integrate_two_phase(const Vector& h0, const Objective& prior_phase,
                                const Objective& train_phase, double t0,
                                const IntegratorConfig& config) {
    for (double T : config.horizon_grid) {
        if (!(T > t0)) {
            throw ConfigError("prior phase must end before every horizon");
        }
    }
    IntegratorConfig first = config;
    first.horizon_grid = {t0};
    first.record_path = false;
    TwoPhaseRun out;
    FlowRun prior_run = integrate(h0, prior_phase, first);
    if (prior_run.aborted) {
        out.at_t0 = FlowState{t0, h0, 0.0};
        out.train_phase.aborted = true;
        out.train_phase.diagnostic = "prior phase: " + prior_run.diagnostic;
        return out;
    }
    out.at_t0 = prior_run.snapshots.back().state;
    const FlowState restart{out.at_t0.t, out.at_t0.h, 0.0};
    out.train_phase = integrate_from(restart, train_phase, config);
    return out;
}

double data_dependent_complexity(const PriorSpec& prior0, const Vector& h0,
                                 const FlowState& at_t0, const FlowState& at_T,
                                 const Objective& prior_phase, const IntegratorConfig& config) {
    IntegratorConfig reverse = config;
    reverse.record_path = false;
    const BackwardRun back = backward_integrate(at_T.h, prior_phase, at_t0.t, reverse);
    return complexity_term(
        prior0, h0, back.endpoint,
        (at_t0.laplacian_integral - back.laplacian_integral) + at_T.laplacian_integral);
}

void write_trajectory_csv(std::ostream& out, std::span<const FlowState> path,
                          const Objective& objective) {
    out << "t,h_norm,laplacian_integral,objective\n";
    char buf[128];
    for (const FlowState& s : path) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", s.t, s.h.norm(),
                      s.laplacian_integral, objective.value(s.h));
        out << buf;
    }
}

namespace {

class CorrectedObjective final : public Objective {
public:
    CorrectedObjective(std::shared_ptr<const Objective> base, double epsilon)
        : base_(std::move(base)), epsilon_(epsilon) {}

    std::size_t dimension() const override { return base_->dimension(); }

    double value(const Vector& h) const override {
        return base_->value(h) + epsilon_ * base_->gradient(h).squaredNorm();
    }

    Vector gradient(const Vector& h) const override {
        return base_->gradient(h) + correction_gradient(h);
    }

    double laplacian(const Vector& h) const override {
        // Trace of the Jacobian of the correction gradient, one coordinate at
        // a time.
        const double eps = 1e-4 * (1.0 + h.norm());
        Vector probe = h;
        double trace = 0.0;
        for (Eigen::Index i = 0; i < h.size(); ++i) {
            probe[i] = h[i] + eps;
            const double plus = correction_gradient(probe)[i];
            probe[i] = h[i] - eps;
            const double minus = correction_gradient(probe)[i];
            probe[i] = h[i];
            trace += (plus - minus) / (2.0 * eps);
        }
        return base_->laplacian(h) + trace;
    }

private:
    // grad(eps |g|^2) = 2 eps H g, with H g by a central difference along g.
    Vector correction_gradient(const Vector& h) const {
        const Vector g = base_->gradient(h);
        const double gnorm = g.norm();
        if (gnorm == 0.0) {
            return Vector::Zero(h.size());
        }
        const double eta = 1e-5 * (1.0 + h.norm()) / gnorm;
        const Vector hg = (base_->gradient(h + eta * g) - base_->gradient(h - eta * g)) / (2.0 * eta);
        return 2.0 * epsilon_ * hg;
    }

    std::shared_ptr<const Objective> base_;
    double epsilon_;
};

}  // namespace

std::shared_ptr<const Objective> backward_error_corrected_objective(
    std::shared_ptr<const Objective> objective, double epsilon) {
    if (epsilon == 0.0) {
        return objective;
    }
    return std::make_shared<CorrectedObjective>(std::move(objective), epsilon);
}

}  // namespace flowcert
