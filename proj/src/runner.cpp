#include "hdpo/runner.hpp"

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hdpo/csv.hpp"
#include "hdpo/distributions.hpp"
#include "hdpo/errors.hpp"
#include "hdpo/gmm_fit.hpp"
#include "hdpo/metrics.hpp"
#include "hdpo/preference.hpp"
#include "hdpo/rng.hpp"
#include "hdpo/svg.hpp"
#include "hdpo/trainer.hpp"

namespace hdpo {

namespace {

using nlohmann::json;

// One output file, rendered in memory so its digest can go into the
// manifest before anything touches the filesystem.
struct Artifact {
    std::string name;
    std::string bytes;
};

CsvCell fcell(double v) { return CsvCell{v}; }
CsvCell icell(std::int64_t v) { return CsvCell{v}; }
CsvCell scell(std::string v) { return CsvCell{std::move(v)}; }

// Strict parameter reader over the config's "parameters" object. Every
// typed getter marks its key as consumed; finish() rejects leftovers so
// typos fail loudly instead of silently running defaults.
class Params {
public:
    explicit Params(const json& obj) : obj_(obj) {
        if (!obj_.is_object()) throw ConfigError("\"parameters\" must be a JSON object");
    }

    // Marks the key consumed; nullptr when absent.
    const json* raw(const std::string& key) {
        used_.insert(key);
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    double number(const std::string& key, double fallback) {
        const json* v = raw(key);
        if (!v) return fallback;
        if (!v->is_number()) throw ConfigError("parameter \"" + key + "\" must be a number");
        return v->get<double>();
    }

    std::int64_t integer(const std::string& key, std::int64_t fallback) {
        const json* v = raw(key);
        if (!v) return fallback;
        if (!v->is_number_integer())
            throw ConfigError("parameter \"" + key + "\" must be an integer");
        return v->get<std::int64_t>();
    }

    std::string text(const std::string& key, std::string fallback) {
        const json* v = raw(key);
        if (!v) return fallback;
        if (!v->is_string()) throw ConfigError("parameter \"" + key + "\" must be a string");
        return v->get<std::string>();
    }

    std::vector<double> number_array(const std::string& key, std::vector<double> fallback) {
        const json* v = raw(key);
        if (!v) return fallback;
        if (!v->is_array())
            throw ConfigError("parameter \"" + key + "\" must be an array of numbers");
        std::vector<double> out;
        out.reserve(v->size());
        for (const auto& e : *v) {
            if (!e.is_number())
                throw ConfigError("parameter \"" + key + "\" must be an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    std::vector<int> int_array(const std::string& key, std::vector<int> fallback) {
        const json* v = raw(key);
        if (!v) return fallback;
        if (!v->is_array())
            throw ConfigError("parameter \"" + key + "\" must be an array of integers");
        std::vector<int> out;
        out.reserve(v->size());
        for (const auto& e : *v) {
            if (!e.is_number_integer())
                throw ConfigError("parameter \"" + key + "\" must be an array of integers");
            out.push_back(e.get<int>());
        }
        return out;
    }

    void finish(const std::string& experiment) const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it)
            if (!used_.count(it.key()))
                throw ConfigError("unknown parameter \"" + it.key() + "\" for experiment " +
                                  experiment);
    }

private:
    const json& obj_;
    std::set<std::string> used_;
};

// "mixture" is either the name of a benchmark config or an inline object
// {"components": [{"weight": w, "mu": m, "sigma": s}, ...]}.
GaussianMixtureSpec mixture_from(Params& p) {
    const json* m = p.raw("mixture");
    if (!m) return standard_config("2comp-gap4");
    if (m->is_string()) return standard_config(m->get<std::string>());
    if (m->is_object()) {
        if (m->size() != 1 || !m->contains("components") || !m->at("components").is_array())
            throw ConfigError(
                "inline mixture must be an object with exactly one key \"components\" holding an "
                "array");
        GaussianMixtureSpec spec;
        for (const auto& c : m->at("components")) {
            if (!c.is_object() || c.size() != 3 || !c.contains("weight") || !c.contains("mu") ||
                !c.contains("sigma"))
                throw ConfigError(
                    "each mixture component needs exactly the keys weight, mu, sigma");
            for (const char* k : {"weight", "mu", "sigma"})
                if (!c.at(k).is_number())
                    throw ConfigError(std::string("mixture component field ") + k +
                                      " must be a number");
            spec.components.push_back(
                {c.at("weight").get<double>(), c.at("mu").get<double>(), c.at("sigma").get<double>()});
        }
        validate(spec);
        return spec;
    }
    throw ConfigError("\"mixture\" must be a benchmark config name or an inline mixture object");
}

std::vector<Artifact> run_gmm_fit(Params& p, int threads) {
    GaussianMixtureSpec spec = mixture_from(p);
    std::vector<double> alphas = p.number_array("alphas", {0.6, 1.0});
    if (alphas.empty()) throw ConfigError("gmm-fit: \"alphas\" must not be empty");
    for (double a : alphas)
        if (!(a >= 0.0 && a <= 2.0))
            throw ConfigError("gmm-fit: alphas entries must lie in [0, 2]");
    FitConfig cfg = default_fit_config(spec, alphas.front());
    cfg.mu_grid.count = static_cast<int>(p.integer("mu_count", cfg.mu_grid.count));
    cfg.sigma_grid.count = static_cast<int>(p.integer("sigma_count", cfg.sigma_grid.count));
    cfg.refine_iters = static_cast<int>(p.integer("refine_iters", cfg.refine_iters));
    cfg.quadrature.node_count = static_cast<int>(p.integer("node_count", cfg.quadrature.node_count));
    cfg.threads = threads;
    p.finish("gmm-fit");

    std::vector<SweepEntry> entries = alpha_sweep_fit(spec, alphas, cfg);
    Table t;
    t.header = {"alpha", "mu_hat", "sigma_hat", "d_alpha"};
    std::string failures;
    for (const auto& e : entries) {
        if (!e.ok) {
            if (!failures.empty()) failures += "; ";
            failures += "alpha=" + format_double(e.alpha) + ": " + e.error;
            continue;
        }
        t.rows.push_back({fcell(e.alpha), fcell(e.result.g_hat.mu), fcell(e.result.g_hat.sigma),
                          fcell(e.result.d_alpha_value)});
    }
    if (!failures.empty()) throw NumericError("gmm-fit: " + failures);
    return {{"fits.csv", render_csv(t)}};
}

std::vector<Artifact> run_gmm_heatmap(Params& p, int threads) {
    GaussianMixtureSpec spec = mixture_from(p);
    double alpha = p.number("alpha", 0.6);
    FitConfig cfg = default_fit_config(spec, alpha);
    cfg.quadrature.node_count = static_cast<int>(p.integer("node_count", cfg.quadrature.node_count));
    cfg.threads = threads;
    int mu_count = static_cast<int>(p.integer("mu_count", 200));
    int sigma_count = static_cast<int>(p.integer("sigma_count", 200));
    p.finish("gmm-heatmap");

    FitResult fit = fit_gaussian_dalpha(spec, cfg);
    HeatmapSpec hs;
    hs.mu_range = cfg.mu_grid;
    hs.mu_range.count = mu_count;
    // Linear sigma axis so heatmap pixels are evenly spaced.
    hs.sigma_range = GridSpec{cfg.sigma_grid.min, cfg.sigma_grid.max, sigma_count, false};
    Heatmap hm = dalpha_heatmap(spec, alpha, hs, fit, threads);

    Table ft;
    ft.header = {"alpha", "mu_hat", "sigma_hat", "d_alpha"};
    ft.rows.push_back(
        {fcell(alpha), fcell(fit.g_hat.mu), fcell(fit.g_hat.sigma), fcell(fit.d_alpha_value)});

    Table ht;
    ht.header = {"mu", "sigma", "value"};
    for (std::size_t mi = 0; mi < hm.mu_axis.size(); ++mi)
        for (std::size_t si = 0; si < hm.sigma_axis.size(); ++si)
            ht.rows.push_back({fcell(hm.mu_axis[mi]), fcell(hm.sigma_axis[si]),
                               fcell(hm.values.at(si, mi))});

    std::string svg =
        render_heatmap_svg(hm.values, hm.mu_axis, hm.sigma_axis, hm.star.mu, hm.star.sigma);
    return {{"fit.csv", render_csv(ft)},
            {"heatmap.csv", render_csv(ht)},
            {"heatmap.svg", std::move(svg)}};
}

std::vector<Artifact> run_train(Params& p, std::uint64_t seed) {
    auto n_prompts = static_cast<std::size_t>(p.integer("n_prompts", 3));
    auto n_completions = static_cast<std::size_t>(p.integer("n_completions", 6));
    LossConfig loss;
    loss.alpha = p.number("alpha", 1.0);
    loss.beta = p.number("beta", 1.0);
    std::string mode = p.text("mode", "population");
    auto n_pairs = static_cast<std::size_t>(p.integer("n_pairs", 10000));
    TrainConfig tcfg;
    tcfg.learning_rate = p.number("learning_rate", tcfg.learning_rate);
    tcfg.max_steps = static_cast<int>(p.integer("max_steps", tcfg.max_steps));
    tcfg.grad_norm_tol = p.number("grad_norm_tol", tcfg.grad_norm_tol);
    p.finish("train");

    SyntheticTask task = random_task(n_prompts, n_completions, child_seed(seed, 0));
    PreferenceDataset data;
    if (mode == "population")
        data = synthesize_dataset_population(task);
    else if (mode == "sampled")
        data = synthesize_dataset_sampled(task, n_pairs, child_seed(seed, 1));
    else
        throw ConfigError("train: \"mode\" must be \"population\" or \"sampled\"");

    TrainReport rep = train(task, data, loss, tcfg);
    OraclePolicy oracle = optimal_policy(task.ref, task.reward, loss);
    double tv = tv_distance(rep.final_policy, oracle.policy);
    Matrix probs = softmax_rows(rep.final_policy.logits);

    Table curve;
    curve.header = {"step", "loss"};
    for (std::size_t i = 0; i < rep.loss_curve.size(); ++i)
        curve.rows.push_back({icell(static_cast<std::int64_t>(i)), fcell(rep.loss_curve[i])});

    Table policy;
    policy.header = {"prompt", "completion", "probability"};
    for (std::size_t x = 0; x < probs.rows; ++x)
        for (std::size_t y = 0; y < probs.cols; ++y)
            policy.rows.push_back({icell(static_cast<std::int64_t>(x)),
                                   icell(static_cast<std::int64_t>(y)), fcell(probs.at(x, y))});

    Table summary;
    summary.header = {"alpha", "beta", "mode", "steps_used", "final_grad_norm", "final_loss",
                      "oracle_tv"};
    summary.rows.push_back({fcell(loss.alpha), fcell(loss.beta), scell(mode),
                            icell(rep.steps_used), fcell(rep.final_grad_norm),
                            fcell(rep.loss_curve.back()), fcell(tv)});

    return {{"curve.csv", render_csv(curve)},
            {"policy.csv", render_csv(policy)},
            {"summary.csv", render_csv(summary)}};
}

std::vector<Artifact> run_entropy_sweep(Params& p, std::uint64_t seed) {
    std::vector<double> alphas = p.number_array("alphas", {0.8, 0.9, 0.95, 1.0, 1.1, 1.2});
    if (alphas.empty()) throw ConfigError("entropy-sweep: \"alphas\" must not be empty");
    for (double a : alphas)
        if (!(a > 0.0))
            throw ConfigError("entropy-sweep: alphas entries must be positive");
    double beta = p.number("beta", 1.0);
    auto n_prompts = static_cast<std::size_t>(p.integer("n_prompts", 3));
    auto n_completions = static_cast<std::size_t>(p.integer("n_completions", 6));
    TrainConfig tcfg;
    tcfg.learning_rate = p.number("learning_rate", tcfg.learning_rate);
    tcfg.max_steps = static_cast<int>(p.integer("max_steps", tcfg.max_steps));
    tcfg.grad_norm_tol = p.number("grad_norm_tol", tcfg.grad_norm_tol);
    p.finish("entropy-sweep");

    SyntheticTask task = random_task(n_prompts, n_completions, child_seed(seed, 0));
    std::vector<EntropySweepEntry> entries = entropy_vs_alpha(task, alphas, beta, tcfg);

    Table t;
    t.header = {"alpha", "mean_policy_entropy"};
    std::string failures;
    for (const auto& e : entries) {
        if (!e.ok) {
            if (!failures.empty()) failures += "; ";
            failures += "alpha=" + format_double(e.alpha) + ": " + e.error;
            continue;
        }
        t.rows.push_back({fcell(e.alpha), fcell(e.mean_entropy)});
    }
    if (!failures.empty()) throw NumericError("entropy-sweep: " + failures);
    return {{"entropy.csv", render_csv(t)}};
}

std::vector<Artifact> run_beta_scan(Params& p) {
    std::string reference = p.text("reference", "skewed");
    double alpha = p.number("alpha", 0.9);
    double beta = p.number("beta", 0.01);
    double beta_min = p.number("beta_min", 0.001);
    double beta_max = p.number("beta_max", 0.1);
    int beta_count = static_cast<int>(p.integer("beta_count", 200));
    p.finish("beta-scan");

    SyntheticTask task = skewed_reference_task();
    if (reference == "uniform") {
        for (double& v : task.ref.logits.data) v = 0.0;
    } else if (reference != "skewed") {
        throw ConfigError("beta-scan: \"reference\" must be \"skewed\" or \"uniform\"");
    }

    std::vector<double> grid = grid_axis(GridSpec{beta_min, beta_max, beta_count, false});
    // With a uniform reference the scan collapses exactly at alpha * beta,
    // a point an even grid almost never contains, so add it.
    if (reference == "uniform") grid.push_back(alpha * beta);

    BetaScanResult result = beta_equivalence_scan(task, alpha, beta, grid);

    Table scan;
    scan.header = {"beta_prime", "tv"};
    for (const auto& row : result.per_beta)
        scan.rows.push_back({fcell(row.beta_prime), fcell(row.tv)});

    Table summary;
    summary.header = {"alpha", "beta", "min_tv", "argmin_beta"};
    summary.rows.push_back(
        {fcell(alpha), fcell(beta), fcell(result.min_tv), fcell(result.argmin_beta)});

    return {{"scan.csv", render_csv(scan)}, {"summary.csv", render_csv(summary)}};
}

std::vector<Artifact> run_metrics_demo(Params& p, std::uint64_t seed) {
    int vocab = static_cast<int>(p.integer("vocab_size", 5));
    int n_prompts = static_cast<int>(p.integer("n_prompts", 4));
    std::vector<double> temps = p.number_array("temperatures", {0.25, 0.5, 0.75, 1.0});
    int n_samples = static_cast<int>(p.integer("n_samples", 1000));
    int max_len = static_cast<int>(p.integer("max_len", 30));
    std::vector<int> ks = p.int_array("ks", {1, 5, 10});

    std::vector<SampleCount> counts = {{10, 0}, {10, 1}, {10, 3}, {10, 10}};
    if (const json* pc = p.raw("pass_counts")) {
        if (!pc->is_array() || pc->empty())
            throw ConfigError(
                "pass_counts must be a non-empty array of [total, correct] integer pairs");
        counts.clear();
        for (const auto& e : *pc) {
            if (!e.is_array() || e.size() != 2 || !e.at(0).is_number_integer() ||
                !e.at(1).is_number_integer())
                throw ConfigError("pass_counts entries must be [total, correct] integer pairs");
            counts.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
        }
    }
    p.finish("metrics-demo");
    if (n_prompts < 1) throw ConfigError("metrics-demo: n_prompts must be >= 1");
    if (temps.empty()) throw ConfigError("metrics-demo: temperatures must not be empty");

    ToyLM lm = random_toy_lm(vocab, child_seed(seed, 0));

    Table div;
    div.header = {"temperature", "normalized_entropy", "self_bleu", "distinct_1", "distinct_2"};
    for (std::size_t ti = 0; ti < temps.size(); ++ti) {
        GenerationSet gs;
        gs.per_prompt.reserve(static_cast<std::size_t>(n_prompts));
        for (int pi = 0; pi < n_prompts; ++pi) {
            std::uint64_t sub = child_seed(seed, 1 + ti * static_cast<std::size_t>(n_prompts) +
                                                     static_cast<std::size_t>(pi));
            GenerationSet one = sample_toy_lm(lm, temps[ti], n_samples, max_len, sub);
            gs.per_prompt.push_back(std::move(one.per_prompt.front()));
        }
        div.rows.push_back({fcell(temps[ti]), fcell(normalized_entropy(gs)), fcell(self_bleu(gs)),
                            fcell(distinct_n(gs, 1)), fcell(distinct_n(gs, 2))});
    }

    Table passk;
    passk.header = {"k", "mean_pass_at_k"};
    for (const CoverageRow& row : coverage_report(counts, ks))
        passk.rows.push_back({icell(row.k), fcell(row.mean_pass)});

    return {{"diversity.csv", render_csv(div)}, {"passk.csv", render_csv(passk)}};
}

std::vector<Artifact> dispatch(const std::string& experiment, Params& p, std::uint64_t seed,
                               int threads) {
    if (experiment == "gmm-fit") return run_gmm_fit(p, threads);
    if (experiment == "gmm-heatmap") return run_gmm_heatmap(p, threads);
    if (experiment == "train") return run_train(p, seed);
    if (experiment == "entropy-sweep") return run_entropy_sweep(p, seed);
    if (experiment == "beta-scan") return run_beta_scan(p);
    if (experiment == "metrics-demo") return run_metrics_demo(p, seed);
    throw ConfigError("unknown experiment \"" + experiment +
                      "\" (expected gmm-fit, gmm-heatmap, train, entropy-sweep, beta-scan, or "
                      "metrics-demo)");
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

int report_error(const char* kind, const std::string& message, int code) {
    json rec = {{"error", kind}, {"message", message}};
    std::cerr << rec.dump() << "\n";
    return code;
}

}  // namespace

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string digest_string(const std::string& bytes) {
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes)));
    return std::string("fnv1a64:") + hex;
}

void run_experiment(const RunOptions& opts) {
    std::ifstream in(opts.config_path, std::ios::binary);
    if (!in) throw IoError("cannot open config file " + opts.config_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("failed reading config file " + opts.config_path);

    json config;
    try {
        config = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!config.is_object()) throw ConfigError("config root must be a JSON object");

    static const std::set<std::string> kTopKeys = {"experiment", "seed", "output_dir",
                                                   "parameters"};
    for (auto it = config.begin(); it != config.end(); ++it)
        if (!kTopKeys.count(it.key())) throw ConfigError("unknown config key \"" + it.key() + "\"");

    if (!config.contains("experiment") || !config.at("experiment").is_string())
        throw ConfigError("config needs a string \"experiment\" key");
    std::string experiment = config.at("experiment").get<std::string>();

    std::uint64_t seed = 0;
    if (config.contains("seed")) {
        if (!config.at("seed").is_number_unsigned())
            throw ConfigError("\"seed\" must be a non-negative integer");
        seed = config.at("seed").get<std::uint64_t>();
    }
    if (opts.has_seed) seed = opts.seed;

    std::string output_dir = ".";
    if (config.contains("output_dir")) {
        if (!config.at("output_dir").is_string())
            throw ConfigError("\"output_dir\" must be a string");
        output_dir = config.at("output_dir").get<std::string>();
    }
    if (!opts.output_dir.empty()) output_dir = opts.output_dir;
    if (output_dir.empty()) output_dir = ".";

    json params = config.contains("parameters") ? config.at("parameters") : json::object();
    Params p(params);

    auto t0 = std::chrono::steady_clock::now();
    std::vector<Artifact> artifacts = dispatch(experiment, p, seed, opts.threads);
    double duration = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    // Echo what actually ran: the config with command line overrides folded in.
    json echo = config;
    echo["seed"] = seed;
    echo["output_dir"] = output_dir;

    json files = json::array();
    for (const auto& a : artifacts)
        files.push_back({{"path", a.name}, {"digest", digest_string(a.bytes)}});
    json manifest = {{"config", echo},
                     {"duration_seconds", duration},
                     {"files", files},
                     {"tool_version", kToolVersion}};

    std::filesystem::path dir(output_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + output_dir + ": " + ec.message());
    for (const auto& a : artifacts) write_file(dir / a.name, a.bytes);
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"Entropy controlled preference optimisation lab"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    RunOptions opts;
    CLI::App* run = app.add_subcommand("run", "Run one experiment from a JSON config");
    run->add_option("config", opts.config_path, "Path to the experiment config JSON")->required();
    run->add_option("--output-dir", opts.output_dir, "Override the config's output directory");
    CLI::Option* seed_opt = run->add_option("--seed", opts.seed, "Override the config's seed");
    run->add_option("--threads", opts.threads,
                    "Worker threads for grid scans (0 or less = all hardware threads)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help or --version
        return report_error("config", e.what(), 2);
    }
    opts.has_seed = seed_opt->count() > 0;

    try {
        run_experiment(opts);
        return 0;
    } catch (const ConfigError& e) {
        return report_error("config", e.what(), 2);
    } catch (const NumericError& e) {
        return report_error("numeric", e.what(), 3);
    } catch (const IoError& e) {
        return report_error("io", e.what(), 4);
    } catch (const std::filesystem::filesystem_error& e) {
        return report_error("io", e.what(), 4);
    } catch (const std::invalid_argument& e) {
        return report_error("config", e.what(), 2);
    } catch (const json::exception& e) {
        return report_error("config", e.what(), 2);
    } catch (const std::exception& e) {
        return report_error("internal", e.what(), 1);
    }
}

int cli_main(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.reserve(args.size());
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace hdpo
