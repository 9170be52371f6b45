#include "flowcert/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

namespace flowcert {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) {
            throw std::invalid_argument(v);
        }
        return d;
    } catch (const std::exception&) {
        throw ConfigError("bad number for " + key + ": '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError("bad integer for " + key + ": '" + v + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") {
        return true;
    }
    if (v == "0" || v == "false" || v == "no" || v == "off") {
        return false;
    }
    throw ConfigError("bad boolean for " + key + ": '" + v + "'");
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& v, Parse parse) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(parse(item));
        }
    }
    return out;
}

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

template <typename T>
std::string join(const std::vector<T>& values) {
    std::ostringstream s;
    s << std::setprecision(17);
    for (std::size_t i = 0; i < values.size(); ++i) {
        s << (i ? "," : "") << values[i];
    }
    return s.str();
}

struct Entry {
    std::string key;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<Entry>& entries() {
    using C = ExperimentConfig;
    using S = const std::string&;
    auto num = [](double C::*field) {
        return Entry{"",
                     [field](C& c, S v) { c.*field = parse_double("", v); },
                     [field](const C& c) { return fmt(c.*field); }};
    };
    auto count = [](std::size_t C::*field) {
        return Entry{"",
                     [field](C& c, S v) { c.*field = static_cast<std::size_t>(parse_u64("", v)); },
                     [field](const C& c) { return std::to_string(c.*field); }};
    };
    auto seed = [](std::uint64_t C::*field) {
        return Entry{"", [field](C& c, S v) { c.*field = parse_u64("", v); },
                     [field](const C& c) { return std::to_string(c.*field); }};
    };
    auto flag = [](bool C::*field) {
        return Entry{"", [field](C& c, S v) { c.*field = parse_bool("", v); },
                     [field](const C& c) { return std::string(c.*field ? "true" : "false"); }};
    };
    auto named = [](std::string key, Entry e) {
        e.key = std::move(key);
        return e;
    };
    static const std::vector<Entry> table = {
        {"dataset",
         [](C& c, S v) {
             if (v == "toy") c.dataset = DatasetKind::toy;
             else if (v == "toy-multiclass") c.dataset = DatasetKind::toy_multiclass;
             else if (v == "mnist") c.dataset = DatasetKind::mnist;
             else throw ConfigError("unknown dataset '" + v + "'");
         },
         [](const C& c) {
             switch (c.dataset) {
                 case DatasetKind::toy: return std::string("toy");
                 case DatasetKind::toy_multiclass: return std::string("toy-multiclass");
                 case DatasetKind::mnist: return std::string("mnist");
             }
             return std::string();
         }},
        {"toy_clusters", [](C& c, S v) { c.toy.clusters = parse_u64("toy_clusters", v); },
         [](const C& c) { return std::to_string(c.toy.clusters); }},
        {"toy_dim", [](C& c, S v) { c.toy.dim = parse_u64("toy_dim", v); },
         [](const C& c) { return std::to_string(c.toy.dim); }},
        {"toy_cluster_size",
         [](C& c, S v) { c.toy.cluster_size = parse_u64("toy_cluster_size", v); },
         [](const C& c) { return std::to_string(c.toy.cluster_size); }},
        {"toy_variance", [](C& c, S v) { c.toy.variance = parse_double("toy_variance", v); },
         [](const C& c) { return fmt(c.toy.variance); }},
        {"toy_train_size", [](C& c, S v) { c.toy.train_size = parse_u64("toy_train_size", v); },
         [](const C& c) { return std::to_string(c.toy.train_size); }},
        {"mnist_dir", [](C& c, S v) { c.mnist_dir = v; }, [](const C& c) { return c.mnist_dir; }},
        named("train_subset", count(&C::train_subset)),
        named("test_subset", count(&C::test_subset)),
        named("full_scale", flag(&C::full_scale)),
        {"surrogate",
         [](C& c, S v) {
             if (v == "linear") c.surrogate = SurrogateKind::linear;
             else if (v == "quadratic") c.surrogate = SurrogateKind::quadratic;
             else if (v == "cross-entropy") c.surrogate = SurrogateKind::cross_entropy;
             else throw ConfigError("unknown surrogate '" + v + "'");
         },
         [](const C& c) {
             switch (c.surrogate) {
                 case SurrogateKind::linear: return std::string("linear");
                 case SurrogateKind::quadratic: return std::string("quadratic");
                 case SurrogateKind::cross_entropy: return std::string("cross-entropy");
             }
             return std::string();
         }},
        named("alpha", num(&C::alpha)),
        named("beta", num(&C::beta)),
        named("width", count(&C::width)),
        named("prior_variance", num(&C::prior_variance)),
        {"scheme",
         [](C& c, S v) {
             if (v == "euler") c.scheme = Scheme::euler;
             else if (v == "rk4") c.scheme = Scheme::rk4;
             else throw ConfigError("unknown scheme '" + v + "'");
         },
         [](const C& c) { return std::string(c.scheme == Scheme::euler ? "euler" : "rk4"); }},
        named("dt", num(&C::dt)),
        {"laplacian_rule",
         [](C& c, S v) {
             if (v == "stage") c.laplacian_rule = LaplacianRule::stage_weighted;
             else if (v == "rectangle") c.laplacian_rule = LaplacianRule::left_rectangle;
             else throw ConfigError("unknown laplacian_rule '" + v + "'");
         },
         [](const C& c) {
             return std::string(c.laplacian_rule == LaplacianRule::stage_weighted ? "stage"
                                                                                   : "rectangle");
         }},
        {"horizons",
         [](C& c, S v) {
             c.horizons = parse_list<double>(v, [](S x) { return parse_double("horizons", x); });
         },
         [](const C& c) { return join(c.horizons); }},
        named("t_min", num(&C::t_min)),
        named("t_max", num(&C::t_max)),
        named("K", count(&C::K)),
        {"spacing",
         [](C& c, S v) {
             if (v == "geometric") c.spacing = Spacing::geometric;
             else if (v == "linear") c.spacing = Spacing::linear;
             else throw ConfigError("unknown spacing '" + v + "'");
         },
         [](const C& c) {
             return std::string(c.spacing == Spacing::geometric ? "geometric" : "linear");
         }},
        named("delta", num(&C::delta)),
        named("data_seed", seed(&C::data_seed)),
        named("feature_seed", seed(&C::feature_seed)),
        named("init_seed", seed(&C::init_seed)),
        named("batch_seed", seed(&C::batch_seed)),
        named("replicas", count(&C::replicas)),
        named("fixed_data", flag(&C::fixed_data)),
        named("threads", count(&C::threads)),
        named("batch_size", count(&C::batch_size)),
        named("steps_per_batch", count(&C::steps_per_batch)),
        named("analytic_check", flag(&C::analytic_check)),
        named("analytic_check_max_width", count(&C::analytic_check_max_width)),
        {"widths",
         [](C& c, S v) {
             c.widths = parse_list<std::size_t>(
                 v, [](S x) { return static_cast<std::size_t>(parse_u64("widths", x)); });
         },
         [](const C& c) { return join(c.widths); }},
        named("dt_fine", num(&C::dt_fine)),
        named("corrected_laplacian", flag(&C::corrected_laplacian)),
        named("t0", num(&C::t0)),
        named("holdout_fraction", num(&C::holdout_fraction)),
        {"output_dir", [](C& c, S v) { c.output_dir = v; },
         [](const C& c) { return c.output_dir; }},
    };
    return table;
}

}  // namespace

void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value) {
    for (const auto& e : entries()) {
        if (e.key == key) {
            try {
                e.set(config, trim(value));
            } catch (const ConfigError& err) {
                throw ConfigError(key + ": " + err.what());
            }
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

void load_config_file(ExperimentConfig& config, const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path);
    }
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        }
        apply_setting(config, trim(line.substr(0, eq)), line.substr(eq + 1));
    }
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& e : entries()) {
        keys.push_back(e.key);
    }
    return keys;
}

std::string config_text(const ExperimentConfig& config) {
    std::ostringstream out;
    for (const auto& e : entries()) {
        out << e.key << '=' << e.get(config) << '\n';
    }
    return out.str();
}

std::vector<double> make_horizon_grid(double t_min, double t_max, std::size_t K, double dt,
                                      Spacing spacing) {
    if (K == 0 || !(dt > 0.0) || !(t_min > 0.0) || !(t_max >= t_min)) {
        throw ConfigError("horizon grid needs K >= 1, dt > 0 and 0 < t_min <= t_max");
    }
    std::vector<double> grid;
    grid.reserve(K);
    std::int64_t previous = 0;
    for (std::size_t k = 0; k < K; ++k) {
        const double frac = K == 1 ? 1.0 : static_cast<double>(k) / static_cast<double>(K - 1);
        const double target = spacing == Spacing::geometric
                                  ? t_min * std::pow(t_max / t_min, frac)
                                  : t_min + (t_max - t_min) * frac;
        std::int64_t n = std::max<std::int64_t>(std::llround(target / dt), previous + 1);
        grid.push_back(static_cast<double>(n) * dt);
        previous = n;
    }
    return grid;
}

std::vector<double> ExperimentConfig::horizon_grid() const {
    if (!horizons.empty()) {
        return horizons;
    }
    return make_horizon_grid(t_min, t_max, K, dt, spacing);
}

void ExperimentConfig::validate() const {
    if (!(delta > 0.0 && delta < 1.0)) {
        throw ConfigError("delta must lie in (0,1)");
    }
    if (width == 0) {
        throw ConfigError("width must be positive");
    }
    if (prior_variance < 0.0) {
        throw ConfigError("prior_variance must be positive (or 0 for 1/N)");
    }
    if (replicas == 0) {
        throw ConfigError("replicas must be positive");
    }
    if (steps_per_batch == 0) {
        throw ConfigError("steps_per_batch must be positive");
    }
    if (dataset == DatasetKind::mnist && mnist_dir.empty()) {
        throw ConfigError("mnist dataset needs mnist_dir");
    }
    const bool binary_data = dataset == DatasetKind::toy;
    if (surrogate != SurrogateKind::cross_entropy && !binary_data) {
        throw ConfigError("linear and quadratic surrogates need binary (toy) data");
    }
    IntegratorConfig ic;
    ic.dt = dt;
    ic.horizon_grid = horizon_grid();
    ic.validate();
}

}  // namespace flowcert
