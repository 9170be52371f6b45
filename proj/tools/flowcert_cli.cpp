// Command-line harness: certificate sweeps, width scaling, discretization
// comparisons, data-dependent priors and toy data generation.

#include "flowcert/experiments.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

namespace fs = std::filesystem;
using namespace flowcert;

namespace {

struct Settings {
    std::string config_file;
    std::map<std::string, std::string> overrides;
};

void add_config_flags(CLI::App* cmd, Settings& settings) {
    cmd->add_option("--config", settings.config_file, "key=value config file");
    for (const std::string& key : config_keys()) {
        cmd->add_option_function<std::string>(
            "--" + key, [&settings, key](const std::string& v) { settings.overrides[key] = v; },
            "config key " + key);
    }
}

ExperimentConfig resolve(const Settings& settings) {
    ExperimentConfig config;
    if (!settings.config_file.empty()) {
        load_config_file(config, settings.config_file);
    }
    for (const auto& [key, value] : settings.overrides) {
        apply_setting(config, key, value);
    }
    return config;
}

std::ofstream open_output(const ExperimentConfig& config, const std::string& name) {
    fs::create_directories(config.output_dir);
    const fs::path path = fs::path(config.output_dir) / name;
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    std::cout << "wrote " << path.string() << '\n';
    return out;
}

int report(const std::vector<RunRecord>& records) {
    int invalid = 0;
    for (const RunRecord& r : records) {
        if (!r.valid) {
            ++invalid;
            std::cerr << "invalid certificate (seeds " << r.seeds.data << '/' << r.seeds.init
                      << "): " << r.diagnostic << '\n';
        }
    }
    return invalid == 0 ? 0 : 2;
}

int run_certify(const ExperimentConfig& config) {
    const auto records = certify(config);
    auto csv = open_output(config, "certify.csv");
    write_run_csv(csv, records);
    open_output(config, "certify.manifest") << run_manifest(config, records);
    for (const RunRecord& r : records) {
        if (r.valid) {
            const HorizonRow& best = best_row(r);
            std::cout << "replica " << best.replica << ": best T=" << best.horizon
                      << " kl bound=" << best.kl << " test error=" << best.test_error << '\n';
        }
    }
    return report(records);
}

int run_scaling(const ExperimentConfig& config) {
    std::vector<std::size_t> widths = config.widths;
    if (widths.empty()) {
        widths = {config.width};
    }
    const auto rows = scaling_study(config, widths);
    auto csv = open_output(config, "scaling.csv");
    write_scaling_csv(csv, rows);
    open_output(config, "scaling.manifest") << run_manifest(config, {});
    int status = 0;
    for (const ScalingRow& r : rows) {
        std::cout << "N=" << r.N << " best T=" << r.best_horizon << " kl bound=" << r.best_kl
                  << " test error=" << r.test_error << '\n';
        if (!(r.best_kl == r.best_kl)) {
            status = 2;
        }
    }
    return status;
}

int run_discretization(const ExperimentConfig& config) {
    const double fine = config.dt_fine > 0.0 ? config.dt_fine : config.dt / 100.0;
    const auto rows = discretization_study(config, config.dt, fine);
    auto csv = open_output(config, "discretization.csv");
    write_discretization_csv(csv, rows);
    open_output(config, "discretization.manifest") << run_manifest(config, {});
    double worst = 0.0;
    for (const auto& r : rows) {
        worst = std::max(worst, std::abs(r.relative_error));
    }
    std::cout << "max relative error " << worst << '\n';
    return 0;
}

int run_data_dependent(const ExperimentConfig& config) {
    const RunRecord record = data_dependent_run(config, config.t0, config.holdout_fraction);
    auto csv = open_output(config, "data_dependent.csv");
    write_run_csv(csv, {record});
    open_output(config, "data_dependent.manifest") << run_manifest(config, {record});
    return report({record});
}

int run_gen_toy(const ExperimentConfig& config) {
    ToyConfig toy = config.toy;
    toy.seed = config.data_seed;
    toy.multiclass = config.dataset == DatasetKind::toy_multiclass;
    const auto [train, test] = gaussian_clusters(toy);
    auto write = [&](const LabeledDataset& d, const std::string& name) {
        auto out = open_output(config, name + ".csv");
        out.precision(17);
        for (Eigen::Index i = 0; i < d.inputs.cols(); ++i) {
            out << 'x' << i << ',';
        }
        out << "label\n";
        for (std::size_t r = 0; r < d.m(); ++r) {
            for (Eigen::Index i = 0; i < d.inputs.cols(); ++i) {
                out << d.inputs(static_cast<Eigen::Index>(r), i) << ',';
            }
            out << d.labels[r] << '\n';
        }
        open_output(config, name + ".manifest") << manifest_text(d);
    };
    write(train, "toy_train");
    write(test, "toy_test");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowcert: generalisation certificates for gradient-flow training"};
    app.require_subcommand(1);

    struct Command {
        const char* name;
        const char* help;
        int (*run)(const ExperimentConfig&);
    };
    const Command commands[] = {
        {"certify", "bounds at every horizon of the grid", run_certify},
        {"scaling-study", "best horizon and bound across widths", run_scaling},
        {"discretization-study", "bound under dt versus dt_fine", run_discretization},
        {"data-dependent", "bounds with a prior learnt on held-out data", run_data_dependent},
        {"gen-toy-data", "write the Gaussian cluster data set as CSV", run_gen_toy},
    };
    std::map<std::string, Settings> settings;
    for (const Command& c : commands) {
        add_config_flags(app.add_subcommand(c.name, c.help), settings[c.name]);
    }
    CLI11_PARSE(app, argc, argv);

    try {
        for (const Command& c : commands) {
            if (app.got_subcommand(c.name)) {
                return c.run(resolve(settings[c.name]));
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
