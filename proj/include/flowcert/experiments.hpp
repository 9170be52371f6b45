#pragma once

#include "flowcert/datasets.hpp"
#include "flowcert/flow_engine.hpp"
#include "flowcert/kl_bounds.hpp"
#include "flowcert/linear_models.hpp"
#include "flowcert/priors.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace flowcert {

enum class DatasetKind { toy, toy_multiclass, mnist };
enum class SurrogateKind { linear, quadratic, cross_entropy };
enum class Spacing { geometric, linear };

// Everything a run depends on. The horizon grid and delta are fixed here,
// before any data or initialisation is drawn.
struct ExperimentConfig {
    DatasetKind dataset = DatasetKind::toy;
    ToyConfig toy;
    std::string mnist_dir;
    std::size_t train_subset = 10000;  // 0 = all; ignored when full_scale
    std::size_t test_subset = 0;       // 0 = all
    bool full_scale = false;

    SurrogateKind surrogate = SurrogateKind::linear;
    double alpha = 1.0;
    double beta = 1.0;
    std::size_t width = 1000;
    double prior_variance = 0.0;  // 0 = 1/N

    Scheme scheme = Scheme::euler;
    double dt = 1e-3;
    LaplacianRule laplacian_rule = LaplacianRule::stage_weighted;

    std::vector<double> horizons;  // explicit grid; overrides t_min/t_max/K
    double t_min = 1e-3;
    double t_max = 1.0;
    std::size_t K = 50;
    Spacing spacing = Spacing::geometric;
    double delta = 5e-3;

    std::uint64_t data_seed = 0;
    std::uint64_t feature_seed = 1;
    std::uint64_t init_seed = 2;
    std::uint64_t batch_seed = 3;
    std::size_t replicas = 1;
    bool fixed_data = false;  // replicas share the data seed, vary the rest
    std::size_t threads = 1;

    std::size_t batch_size = 0;       // 0 = full batch
    std::size_t steps_per_batch = 1;  // integrator steps spent on each batch

    bool analytic_check = true;
    std::size_t analytic_check_max_width = 2000;

    // Subcommand parameters.
    std::vector<std::size_t> widths;
    double dt_fine = 0.0;
    bool corrected_laplacian = false;
    double t0 = 0.0;
    double holdout_fraction = 0.5;

    std::string output_dir = ".";

    // Realised grid: the explicit list, or t_min..t_max snapped to multiples
    // of dt (kept strictly increasing, so exactly K points).
    std::vector<double> horizon_grid() const;
    void validate() const;
};

// Applies one key=value setting; throws ConfigError for unknown keys or
// malformed values.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);
// Reads a key=value file ('#' starts a comment).
void load_config_file(ExperimentConfig& config, const std::string& path);
std::vector<std::string> config_keys();
std::string config_text(const ExperimentConfig& config);

std::vector<double> make_horizon_grid(double t_min, double t_max, std::size_t K, double dt,
                                      Spacing spacing);

struct RunSeeds {
    std::uint64_t data = 0;
    std::uint64_t feature = 0;
    std::uint64_t init = 0;
    std::uint64_t batch = 0;
};

RunSeeds seeds_for_replica(const ExperimentConfig& config, std::size_t replica);

// A fully instantiated learning problem: data, frozen features, prior draw
// and the full-training-set objective.
struct Problem {
    LabeledDataset train;
    LabeledDataset test;
    std::shared_ptr<const FeatureMap> map;
    FeatureBatch train_features;
    ModelShape shape;
    PriorSpec prior;
    Vector h0;
    std::shared_ptr<const Objective> objective;
    RunSeeds seeds;
    std::size_t replica = 0;
};

std::pair<LabeledDataset, LabeledDataset> load_datasets(const ExperimentConfig& config,
                                                        std::uint64_t data_seed);

Problem make_problem(const ExperimentConfig& config, LabeledDataset train, LabeledDataset test,
                     const RunSeeds& seeds, std::size_t replica = 0);
Problem make_problem(const ExperimentConfig& config, std::size_t replica);

// Surrogate objective for an arbitrary feature batch of the problem.
std::shared_ptr<const Objective> make_objective(const ExperimentConfig& config,
                                                const FeatureBatch& batch,
                                                const ModelShape& shape);

struct HorizonRow {
    std::size_t replica = 0;
    double horizon = 0.0;
    double empirical_error = 0.0;
    double surrogate_value = 0.0;
    double log_density_ratio = 0.0;
    double laplacian_integral = 0.0;
    double complexity = 0.0;
    double penalty = 0.0;
    double mcallester = 1.0;
    double kl = 1.0;
    double test_error = 0.0;
    double analytic_discrepancy = 0.0;  // NaN when not applicable
    bool valid = true;
};

struct RunRecord {
    std::vector<HorizonRow> rows;
    bool valid = true;
    std::string diagnostic;
    std::size_t m = 0;
    std::size_t K = 0;
    double delta = 0.0;
    std::size_t N = 0;
    RunSeeds seeds;
    std::string data_manifest;
    // Laplacian of the full training objective at h0 and at the last horizon.
    double laplacian_start = 0.0;
    double laplacian_end = 0.0;
};

// Rows of one run, or the merged rows of several replicas (ordered).
RunRecord certify_problem(const Problem& problem, const ExperimentConfig& config);
std::vector<RunRecord> certify(const ExperimentConfig& config);

// Bound recomputed from a row's itemized components.
BoundCertificate recompute(const HorizonRow& row, std::size_t m, double delta, std::size_t K);

struct ScalingRow {
    std::size_t width = 0;
    std::size_t N = 0;
    std::size_t replica = 0;
    double best_horizon = 0.0;
    double best_kl = 1.0;
    double best_mcallester = 1.0;
    double empirical_error = 0.0;
    double test_error = 0.0;
};

// Horizon minimising the kl bound (ties to the smaller horizon).
const HorizonRow& best_row(const RunRecord& record);
std::vector<ScalingRow> scaling_study(const ExperimentConfig& config,
                                      const std::vector<std::size_t>& widths);

struct DiscretizationRow {
    double t = 0.0;
    double coarse = 0.0;
    double fine = 0.0;
    double relative_error = 0.0;
};

std::vector<DiscretizationRow> discretization_study(const ExperimentConfig& config,
                                                    double dt_coarse, double dt_fine);

// Prior learnt by flowing on s' (a held-out share of the training data) up to
// t0; the certificate uses m = |s|.
RunRecord data_dependent_certify(const Problem& problem_s, const Objective& prior_phase,
                                 double t0, const ExperimentConfig& config);
RunRecord data_dependent_run(const ExperimentConfig& config, double t0, double holdout_fraction);

// Disjoint split of 0..m-1 into (s', s) with |s'| = floor(fraction * m).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(
    std::size_t m, double fraction, std::uint64_t seed);

// CSV writers: one header line, doubles printed round-trip exact.
void write_run_csv(std::ostream& out, const std::vector<RunRecord>& records);
void write_scaling_csv(std::ostream& out, const std::vector<ScalingRow>& rows);
void write_discretization_csv(std::ostream& out, const std::vector<DiscretizationRow>& rows);
std::string run_manifest(const ExperimentConfig& config, const std::vector<RunRecord>& records);

}  // namespace flowcert
