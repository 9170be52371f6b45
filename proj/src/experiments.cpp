#include "flowcert/experiments.hpp"

#include "flowcert/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

namespace flowcert {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kHoldoutTag = 0x686f6c646f7574ULL;

// Runs fn(0..n-1) on up to `threads` workers. Results are written by index,
// so the outcome never depends on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) {
                        failure = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

std::vector<int> encoded_labels(const ExperimentConfig& config, const LabeledDataset& data) {
    return config.surrogate == SurrogateKind::cross_entropy ? class_ids(data) : data.labels;
}

IntegratorConfig integrator_for(const ExperimentConfig& config, std::vector<double> grid,
                                double dt) {
    IntegratorConfig ic;
    ic.scheme = config.scheme;
    ic.dt = dt;
    ic.horizon_grid = std::move(grid);
    ic.laplacian_rule = config.laplacian_rule;
    return ic;
}

bool full_batch(const ExperimentConfig& config, std::size_t m) {
    return config.batch_size == 0 || config.batch_size >= m;
}

// Gradient of the base objective with the Laplacian of its backward-error
// corrected version.
class CorrectedLaplacian final : public Objective {
public:
    CorrectedLaplacian(std::shared_ptr<const Objective> base, double epsilon)
        : base_(base), corrected_(backward_error_corrected_objective(base, epsilon)) {}

    std::size_t dimension() const override { return base_->dimension(); }
    double value(const Vector& h) const override { return base_->value(h); }
    Vector gradient(const Vector& h) const override { return base_->gradient(h); }
    double laplacian(const Vector& h) const override { return corrected_->laplacian(h); }
    FieldEval field(const Vector& h) const override {
        return {base_->gradient(h), corrected_->laplacian(h)};
    }

private:
    std::shared_ptr<const Objective> base_;
    std::shared_ptr<const Objective> corrected_;
};

// Flow of the problem under the configured batching. Batched runs switch
// batch every segment_duration units of time, whatever dt is.
FlowRun run_problem_flow(const Problem& problem, const ExperimentConfig& config,
                         const IntegratorConfig& ic, double segment_duration,
                         double laplacian_epsilon = 0.0) {
    auto wrap = [&](std::shared_ptr<const Objective> obj) -> std::shared_ptr<const Objective> {
        if (laplacian_epsilon > 0.0) {
            return std::make_shared<CorrectedLaplacian>(std::move(obj), laplacian_epsilon);
        }
        return obj;
    };
    if (full_batch(config, problem.train.m())) {
        const auto obj = wrap(problem.objective);
        return integrate(problem.h0, *obj, ic);
    }
    const double span = ic.horizon_grid.back();
    const std::int64_t per_segment = steps_for(segment_duration, ic.dt);
    const auto segments = static_cast<std::size_t>(
        std::max<std::int64_t>(1, (steps_for(span, ic.dt) + per_segment - 1) / per_segment));
    const BatchPlan plan =
        batch_schedule(problem.train, config.batch_size, segment_duration, segments,
                       problem.seeds.batch);
    ObjectiveFactory factory = [&](std::size_t id) {
        return wrap(make_objective(config, problem.train_features.gather(plan.batches[id]),
                                   problem.shape));
    };
    return integrate(problem.h0, plan.schedule, factory, ic);
}

// Itemised certificate row for a hypothesis reached at `horizon`.
HorizonRow certificate_row(const Problem& problem, const ExperimentConfig& config,
                           std::size_t K, double horizon, const Vector& h,
                           double log_ratio, double laplacian_integral) {
    HorizonRow row;
    row.replica = problem.replica;
    row.horizon = horizon;
    row.empirical_error = zero_one_losses(h, problem.shape, problem.train_features).error;
    row.surrogate_value = problem.objective->value(h);
    const BoundCertificate cert = make_certificate(row.empirical_error, log_ratio,
                                                   laplacian_integral, problem.train.m(),
                                                   config.delta, K);
    row.log_density_ratio = cert.log_density_ratio;
    row.laplacian_integral = cert.laplacian_integral;
    row.complexity = cert.inputs.complexity;
    row.penalty = cert.penalty;
    row.mcallester = cert.mcallester;
    row.kl = cert.kl_inv;
    row.analytic_discrepancy = kNaN;
    return row;
}

HorizonRow invalid_row(const Problem& problem, double horizon) {
    HorizonRow row;
    row.replica = problem.replica;
    row.horizon = horizon;
    row.empirical_error = row.surrogate_value = row.log_density_ratio = kNaN;
    row.laplacian_integral = row.complexity = row.penalty = kNaN;
    row.mcallester = row.kl = row.test_error = row.analytic_discrepancy = kNaN;
    row.valid = false;
    return row;
}

RunRecord empty_record(const Problem& problem, const ExperimentConfig& config, std::size_t K) {
    RunRecord record;
    record.m = problem.train.m();
    record.K = K;
    record.delta = config.delta;
    record.N = problem.shape.N();
    record.seeds = problem.seeds;
    record.data_manifest = manifest_text(problem.train) + manifest_text(problem.test);
    record.laplacian_start = problem.objective->laplacian(problem.h0);
    return record;
}

void fill_test_errors(RunRecord& record, const Problem& problem, const ExperimentConfig& config,
                      const std::vector<Vector>& hypotheses) {
    if (hypotheses.empty()) {
        return;
    }
    const std::vector<int> labels = encoded_labels(config, problem.test);
    const std::vector<double> errors = streamed_zero_one_errors(
        hypotheses, problem.shape, *problem.map, problem.test.inputs, labels);
    for (std::size_t k = 0; k < errors.size(); ++k) {
        record.rows[k].test_error = errors[k];
    }
}

void finish_record(RunRecord& record, const Problem& problem, const std::vector<double>& grid,
                   const std::vector<Vector>& hypotheses, bool aborted,
                   const std::string& diagnostic) {
    for (std::size_t k = hypotheses.size(); k < grid.size(); ++k) {
        record.rows.push_back(invalid_row(problem, grid[k]));
    }
    if (aborted) {
        record.valid = false;
        record.diagnostic = diagnostic;
    }
    record.laplacian_end = hypotheses.empty()
                               ? kNaN
                               : problem.objective->laplacian(hypotheses.back());
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

RunSeeds seeds_for_replica(const ExperimentConfig& config, std::size_t replica) {
    const auto r = static_cast<std::uint64_t>(replica);
    return {config.fixed_data ? config.data_seed : config.data_seed + r, config.feature_seed + r,
            config.init_seed + r, config.batch_seed + r};
}

std::pair<LabeledDataset, LabeledDataset> load_datasets(const ExperimentConfig& config,
                                                        std::uint64_t data_seed) {
    std::pair<LabeledDataset, LabeledDataset> data;
    if (config.dataset == DatasetKind::mnist) {
        namespace fs = std::filesystem;
        const fs::path dir = config.mnist_dir;
        auto find = [&](const char* dashed, const char* dotted) {
            const fs::path a = dir / dashed;
            return fs::exists(a) ? a : dir / dotted;
        };
        data.first = load_idx(find("train-images-idx3-ubyte", "train-images.idx3-ubyte"),
                              find("train-labels-idx1-ubyte", "train-labels.idx1-ubyte"));
        data.second = load_idx(find("t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"),
                               find("t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"));
        data.second.split = Split::test;
        data.first.num_classes = data.second.num_classes =
            std::max(data.first.num_classes, data.second.num_classes);
        if (!config.full_scale && config.train_subset > 0) {
            data.first = head(data.first, std::min(config.train_subset, data.first.m()));
        }
    } else {
        ToyConfig toy = config.toy;
        toy.seed = data_seed;
        toy.multiclass = config.dataset == DatasetKind::toy_multiclass;
        data = gaussian_clusters(toy);
    }
    if (config.test_subset > 0) {
        data.second = head(data.second, std::min(config.test_subset, data.second.m()));
    }
    return data;
}

std::shared_ptr<const Objective> make_objective(const ExperimentConfig& config,
                                                const FeatureBatch& batch,
                                                const ModelShape& shape) {
    switch (config.surrogate) {
        case SurrogateKind::linear:
            return std::make_shared<LinearSurrogate>(batch);
        case SurrogateKind::quadratic:
            return std::make_shared<QuadraticSurrogate>(batch, config.alpha, config.beta);
        case SurrogateKind::cross_entropy:
            return std::make_shared<CrossEntropySurrogate>(batch, shape.outputs);
    }
    throw ConfigError("unknown surrogate");
}

Problem make_problem(const ExperimentConfig& config, LabeledDataset train, LabeledDataset test,
                     const RunSeeds& seeds, std::size_t replica) {
    Problem p;
    p.seeds = seeds;
    p.replica = replica;
    p.train = std::move(train);
    p.test = std::move(test);
    if (config.surrogate != SurrogateKind::cross_entropy && !p.train.binary) {
        throw ConfigError("linear and quadratic surrogates need binary labels");
    }
    p.map = std::make_shared<const FeatureMap>(
        FeatureMap::random(p.train.input_dim(), config.width, seeds.feature));
    p.train_features =
        FeatureBatch::make(p.map->features(p.train.inputs), encoded_labels(config, p.train));
    p.shape.width = config.width;
    p.shape.outputs = config.surrogate == SurrogateKind::cross_entropy
                          ? std::max<std::size_t>(2, p.train.num_classes)
                          : 1;
    p.prior = config.prior_variance > 0.0 ? PriorSpec{p.shape.N(), config.prior_variance}
                                          : PriorSpec::standard(p.shape.N());
    p.h0 = sample(p.prior, seeds.init);
    p.objective = make_objective(config, p.train_features, p.shape);
    return p;
}

Problem make_problem(const ExperimentConfig& config, std::size_t replica) {
    const RunSeeds seeds = seeds_for_replica(config, replica);
    auto [train, test] = load_datasets(config, seeds.data);
    return make_problem(config, std::move(train), std::move(test), seeds, replica);
}

RunRecord certify_problem(const Problem& problem, const ExperimentConfig& config) {
    const std::vector<double> grid = config.horizon_grid();
    const IntegratorConfig ic = integrator_for(config, grid, config.dt);
    const FlowRun run = run_problem_flow(problem, config, ic,
                                         config.dt * static_cast<double>(config.steps_per_batch));

    RunRecord record = empty_record(problem, config, grid.size());
    std::vector<Vector> hypotheses;
    for (const Snapshot& snap : run.snapshots) {
        const Vector& h = snap.state.h;
        record.rows.push_back(certificate_row(problem, config, grid.size(), snap.horizon, h,
                                              log_density_ratio(problem.prior, problem.h0, h),
                                              snap.state.laplacian_integral));
        hypotheses.push_back(h);
    }
    fill_test_errors(record, problem, config, hypotheses);

    // Closed-form cross-check, only meaningful for the full-batch flow.
    const bool checkable = config.analytic_check && full_batch(config, problem.train.m()) &&
                           (config.surrogate == SurrogateKind::linear ||
                            (config.surrogate == SurrogateKind::quadratic &&
                             config.width <= config.analytic_check_max_width));
    if (checkable && !hypotheses.empty()) {
        const bool quadratic = config.surrogate == SurrogateKind::quadratic;
        const SufficientStats stats =
            sufficient_stats(problem.train_features, config.alpha, quadratic);
        std::optional<QuadraticFlowSolver> solver;
        if (quadratic) {
            solver.emplace(*stats.Theta, stats.gamma, config.beta);
        }
        for (std::size_t k = 0; k < hypotheses.size(); ++k) {
            const double T = record.rows[k].horizon;
            const Vector exact =
                quadratic ? solver->at(problem.h0, T) : linear_analytic_flow(problem.h0, stats, T);
            record.rows[k].analytic_discrepancy =
                (hypotheses[k] - exact).norm() / std::max(exact.norm(), 1e-300);
        }
    }
    finish_record(record, problem, grid, hypotheses, run.aborted, run.diagnostic);
    return record;
}

std::vector<RunRecord> certify(const ExperimentConfig& config) {
    config.validate();
    std::vector<RunRecord> records(config.replicas);
    parallel_for(config.replicas, config.threads, [&](std::size_t r) {
        records[r] = certify_problem(make_problem(config, r), config);
    });
    return records;
}

BoundCertificate recompute(const HorizonRow& row, std::size_t m, double delta, std::size_t K) {
    return make_certificate(row.empirical_error, row.log_density_ratio, row.laplacian_integral, m,
                            delta, K);
}

const HorizonRow& best_row(const RunRecord& record) {
    const HorizonRow* best = nullptr;
    for (const HorizonRow& row : record.rows) {
        if (row.valid && (best == nullptr || row.kl < best->kl ||
                          (row.kl == best->kl && row.horizon < best->horizon))) {
            best = &row;
        }
    }
    if (best == nullptr) {
        throw std::runtime_error("run has no valid horizon");
    }
    return *best;
}

std::vector<ScalingRow> scaling_study(const ExperimentConfig& config,
                                      const std::vector<std::size_t>& widths) {
    if (widths.empty()) {
        throw ConfigError("scaling study needs at least one width");
    }
    std::vector<ScalingRow> out;
    for (std::size_t w : widths) {
        ExperimentConfig c = config;
        c.width = w;
        for (const RunRecord& record : certify(c)) {
            ScalingRow row;
            row.width = w;
            row.N = record.N;
            row.replica = record.rows.empty() ? 0 : record.rows.front().replica;
            if (record.valid) {
                const HorizonRow& best = best_row(record);
                row.best_horizon = best.horizon;
                row.best_kl = best.kl;
                row.best_mcallester = best.mcallester;
                row.empirical_error = best.empirical_error;
                row.test_error = best.test_error;
            } else {
                row.best_horizon = row.best_kl = row.best_mcallester = kNaN;
                row.empirical_error = row.test_error = kNaN;
            }
            out.push_back(row);
        }
    }
    return out;
}

std::vector<DiscretizationRow> discretization_study(const ExperimentConfig& config,
                                                    double dt_coarse, double dt_fine) {
    config.validate();
    if (!(dt_fine > 0.0) || !(dt_coarse >= dt_fine)) {
        throw ConfigError("discretization study needs 0 < dt_fine <= dt_coarse");
    }
    steps_for(dt_coarse, dt_fine);  // integer ratio or ConfigError
    const std::vector<double> grid =
        config.horizons.empty()
            ? make_horizon_grid(config.t_min, config.t_max, config.K, dt_coarse, config.spacing)
            : config.horizons;
    for (double T : grid) {
        steps_for(T, dt_coarse);
    }

    const Problem problem = make_problem(config, 0);
    const double segment = dt_coarse * static_cast<double>(config.steps_per_batch);
    const FlowRun coarse =
        run_problem_flow(problem, config, integrator_for(config, grid, dt_coarse), segment,
                         config.corrected_laplacian ? dt_coarse : 0.0);
    const FlowRun fine =
        run_problem_flow(problem, config, integrator_for(config, grid, dt_fine), segment);
    if (coarse.aborted || fine.aborted) {
        throw std::runtime_error("discretization study flow diverged: " +
                                 (coarse.aborted ? coarse.diagnostic : fine.diagnostic));
    }

    auto bound = [&](const Snapshot& snap) {
        return certificate_row(problem, config, grid.size(), snap.horizon, snap.state.h,
                               log_density_ratio(problem.prior, problem.h0, snap.state.h),
                               snap.state.laplacian_integral)
            .kl;
    };
    std::vector<DiscretizationRow> rows;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        DiscretizationRow row;
        row.t = grid[k];
        row.coarse = bound(coarse.snapshots[k]);
        row.fine = bound(fine.snapshots[k]);
        row.relative_error = (row.coarse - row.fine) / row.fine;
        rows.push_back(row);
    }
    return rows;
}

RunRecord data_dependent_certify(const Problem& problem_s, const Objective& prior_phase,
                                 double t0, const ExperimentConfig& config) {
    if (!full_batch(config, problem_s.train.m())) {
        throw ConfigError("data-dependent runs use the full-batch flow");
    }
    const std::vector<double> grid = config.horizon_grid();
    const IntegratorConfig ic = integrator_for(config, grid, config.dt);
    const TwoPhaseRun run =
        integrate_two_phase(problem_s.h0, prior_phase, *problem_s.objective, t0, ic);

    RunRecord record = empty_record(problem_s, config, grid.size());
    std::vector<Vector> hypotheses;
    bool aborted = run.train_phase.aborted;
    std::string diagnostic = run.train_phase.diagnostic;
    for (const Snapshot& snap : run.train_phase.snapshots) {
        BackwardRun back;
        try {
            back = backward_integrate(snap.state.h, prior_phase, t0, ic);
        } catch (const FlowAborted& e) {
            aborted = true;
            diagnostic = e.what();
            break;
        }
        const double log_ratio = log_density_ratio(problem_s.prior, problem_s.h0, back.endpoint);
        const double integral = (run.at_t0.laplacian_integral - back.laplacian_integral) +
                                snap.state.laplacian_integral;
        record.rows.push_back(certificate_row(problem_s, config, grid.size(), snap.horizon,
                                              snap.state.h, log_ratio, integral));
        hypotheses.push_back(snap.state.h);
    }
    fill_test_errors(record, problem_s, config, hypotheses);
    finish_record(record, problem_s, grid, hypotheses, aborted, diagnostic);
    return record;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(
    std::size_t m, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction < 1.0)) {
        throw ConfigError("holdout fraction must lie in [0, 1)");
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    NormalStream rng(seed);
    for (std::size_t i = m; i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
    }
    const auto cut = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(m)));
    std::vector<std::size_t> held(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
    std::vector<std::size_t> rest(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
    std::sort(held.begin(), held.end());
    std::sort(rest.begin(), rest.end());
    return {held, rest};
}

RunRecord data_dependent_run(const ExperimentConfig& config, double t0, double holdout_fraction) {
    config.validate();
    const RunSeeds seeds = seeds_for_replica(config, 0);
    auto [train, test] = load_datasets(config, seeds.data);
    const auto [held, rest] =
        holdout_split(train.m(), holdout_fraction, derive_seed(seeds.data, kHoldoutTag));
    std::vector<std::size_t> overlap;
    std::set_intersection(held.begin(), held.end(), rest.begin(), rest.end(),
                          std::back_inserter(overlap));
    if (!overlap.empty() || rest.empty()) {
        throw ConfigError("prior data must be disjoint from a non-empty training set");
    }
    if (held.empty() && t0 > 0.0) {
        throw ConfigError("a prior phase with t0 > 0 needs a positive holdout fraction");
    }
    LabeledDataset prior_data = select_rows(train, held);
    const Problem problem =
        make_problem(config, select_rows(train, rest), std::move(test), seeds, 0);

    std::shared_ptr<const Objective> prior_phase;
    if (held.empty()) {
        const std::size_t n = problem.shape.N();
        prior_phase = std::make_shared<FunctionObjective>(
            n, [](const Vector&) { return 0.0; },
            [n](const Vector&) { return Vector::Zero(static_cast<Eigen::Index>(n)).eval(); },
            [](const Vector&) { return 0.0; });
    } else {
        const FeatureBatch batch = FeatureBatch::make(problem.map->features(prior_data.inputs),
                                                      encoded_labels(config, prior_data));
        prior_phase = make_objective(config, batch, problem.shape);
    }
    RunRecord record = data_dependent_certify(problem, *prior_phase, t0, config);
    record.data_manifest += "prior_rows=" + std::to_string(held.size()) + '\n' +
                            manifest_text(prior_data);
    return record;
}

void write_run_csv(std::ostream& out, const std::vector<RunRecord>& records) {
    out << "replica,horizon,empirical_error,surrogate_value,log_density_ratio,"
           "laplacian_integral,complexity,penalty,mcallester_bound,kl_bound,test_error,"
           "analytic_discrepancy,valid\n";
    for (const RunRecord& record : records) {
        for (const HorizonRow& r : record.rows) {
            out << r.replica << ',' << fmt(r.horizon) << ',' << fmt(r.empirical_error) << ','
                << fmt(r.surrogate_value) << ',' << fmt(r.log_density_ratio) << ','
                << fmt(r.laplacian_integral) << ',' << fmt(r.complexity) << ','
                << fmt(r.penalty) << ',' << fmt(r.mcallester) << ',' << fmt(r.kl) << ','
                << fmt(r.test_error) << ',' << fmt(r.analytic_discrepancy) << ','
                << (r.valid ? 1 : 0) << '\n';
        }
    }
}

void write_scaling_csv(std::ostream& out, const std::vector<ScalingRow>& rows) {
    out << "width,N,replica,best_horizon,best_kl_bound,best_mcallester_bound,empirical_error,"
           "test_error\n";
    for (const ScalingRow& r : rows) {
        out << r.width << ',' << r.N << ',' << r.replica << ',' << fmt(r.best_horizon) << ','
            << fmt(r.best_kl) << ',' << fmt(r.best_mcallester) << ',' << fmt(r.empirical_error)
            << ',' << fmt(r.test_error) << '\n';
    }
}

void write_discretization_csv(std::ostream& out, const std::vector<DiscretizationRow>& rows) {
    out << "t,bound_coarse,bound_fine,relative_error\n";
    for (const DiscretizationRow& r : rows) {
        out << fmt(r.t) << ',' << fmt(r.coarse) << ',' << fmt(r.fine) << ','
            << fmt(r.relative_error) << '\n';
    }
}

std::string run_manifest(const ExperimentConfig& config, const std::vector<RunRecord>& records) {
    std::ostringstream out;
    out << "rng=" << kRngVersion << '\n' << config_text(config);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const RunRecord& r = records[i];
        const std::string p = "run." + std::to_string(i) + '.';
        out << p << "seeds=" << r.seeds.data << ',' << r.seeds.feature << ',' << r.seeds.init
            << ',' << r.seeds.batch << '\n'
            << p << "m=" << r.m << '\n'
            << p << "N=" << r.N << '\n'
            << p << "K=" << r.K << '\n'
            << p << "delta=" << fmt(r.delta) << '\n'
            << p << "valid=" << (r.valid ? "true" : "false") << '\n';
        if (!r.diagnostic.empty()) {
            out << p << "diagnostic=" << r.diagnostic << '\n';
        }
        std::istringstream lines(r.data_manifest);
        for (std::string line; std::getline(lines, line);) {
            out << p << "data." << line << '\n';
        }
    }
    return out.str();
}

}  // namespace flowcert
