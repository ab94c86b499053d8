#include "gnpe/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "gnpe/config.hpp"
#include "gnpe/errors.hpp"
#include "gnpe/experiments.hpp"

namespace gnpe {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::string out;
};

struct Context {
    ExperimentConfig config;
    std::string hash;
    fs::path out;
    std::ostream& log;
};

Context load_context(const CommonOptions& opts, std::ostream& log) {
    Json resolved = opts.config_path.empty() ? resolve_config(Json::object()) : load_config(opts.config_path);
    if (opts.seed) resolved["seed"] = *opts.seed;
    if (opts.workers) resolved["workers"] = *opts.workers;
    if (!opts.out.empty()) resolved["output_dir"] = opts.out;
    ExperimentConfig config = parse_config(resolved);
    const fs::path out = config.output_dir;
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out)) throw IoError("cannot create output directory " + out.string());
    return {std::move(config), config_hash(resolved), out, log};
}

/// Provenance block embedded into every JSON artifact.
Json provenance(const Context& ctx, const Json& inputs) {
    return {{"config_hash", ctx.hash}, {"config", experiment_config(ctx.config.resolved)}, {"inputs", inputs}};
}

/// Single comment line for CSV artifacts.
std::string provenance_comment(const Context& ctx, const Json& inputs) {
    std::string s = "config_hash=" + ctx.hash;
    for (const auto& [name, hash] : inputs.items()) s += " " + name + "_sha256=" + hash.get<std::string>();
    return s;
}

void write_json(const fs::path& path, const Json& j) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << j.dump(2) << '\n';
    if (!os) throw IoError("failed writing " + path.string());
}

Json read_json(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read " + path.string());
    try {
        return Json::parse(is);
    } catch (const Json::parse_error& e) {
        throw IoError(path.string() + " is not valid JSON: " + e.what());
    }
}

void require_file(const fs::path& path, const std::string& what) {
    if (path.empty()) throw IoError(what + " not given");
    if (!fs::is_regular_file(path)) throw IoError(what + " " + path.string() + " does not exist");
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// --- simulate ---------------------------------------------------------------

int cmd_simulate(const Context& ctx) {
    const auto model = make_model(ctx.config);
    ctx.log << "simulating " << ctx.config.simulations << " examples of " << model->name() << '\n';
    const TrainingDataset data =
        generate_npe_dataset(*model, ctx.config.simulations, derive_seed(ctx.config.seed, 0),
                             ctx.config.validation_fraction, ctx.config.workers);
    Json meta = {{"model", model->name()},
                 {"parameters", model->parameter_names()},
                 {"pose_slots", model->pose_slots()},
                 {"seed", ctx.config.seed},
                 {"config_hash", ctx.hash},
                 {"config", experiment_config(ctx.config.resolved)}};
    const auto& grid = model->posterior_representation().grid();
    meta["grid"] = {{"bins", grid.bins}, {"duration", grid.duration}, {"start", grid.start},
                    {"channels", model->posterior_representation().channels()}};
    const fs::path file = ctx.out / "dataset.bin";
    write_dataset(file, data, meta.dump());
    const std::string content_hash = file_sha256(file);
    write_dataset_csv(ctx.out / "dataset_preview.csv", data, model->parameter_names(), 16,
                      provenance_comment(ctx, {{"dataset", content_hash}}));
    write_json(ctx.out / "dataset_manifest.json",
               {{"model", model->name()},
                {"examples", data.size()},
                {"validation_examples", data.validation_indices().size()},
                {"seed", ctx.config.seed},
                {"file", "dataset.bin"},
                {"content_hash", content_hash},
                {"provenance", provenance(ctx, Json::object())}});
    ctx.log << "wrote " << file.string() << " (sha256 " << content_hash << ")\n";
    return kExitOk;
}

// --- train ------------------------------------------------------------------

int cmd_train(const Context& ctx, const fs::path& dataset_path) {
    require_file(dataset_path, "dataset");
    const auto model = make_model(ctx.config);
    const std::string dataset_hash = file_sha256(dataset_path);
    const DatasetFile file = read_dataset(dataset_path);
    const Json header = Json::parse(file.header_json);
    if (header.value("model", std::string()) != model->name())
        throw ConfigError("config: model.name is '" + std::string(model->name()) + "' but the dataset holds '" +
                          header.value("model", std::string("?")) + "'");

    const Method method = ctx.config.method.method;
    ctx.log << "training " << to_string(method) << " on " << file.data.size() << " examples\n";
    const auto trained = train_method(*model, file.data, ctx.config.method,
                                      [&](const std::string& role, const EpochRecord& e) {
                                          ctx.log << role << " epoch " << e.epoch << " train "
                                                  << e.train_loss << " validation " << e.validation_loss
                                                  << '\n';
                                      });
    const Json inputs = {{"dataset", dataset_hash}};
    Json manifest = {{"method", to_string(method)}, {"checkpoints", Json::array()},
                     {"provenance", provenance(ctx, inputs)}};
    for (const auto& t : trained) {
        const fs::path ckpt = ctx.out / (t.role + ".ckpt");
        const Json meta = {{"role", t.role},
                           {"method", to_string(method)},
                           {"model", model->name()},
                           {"best_epoch", t.history.best_epoch},
                           {"best_validation_loss", t.history.best_validation_loss},
                           {"epochs", t.history.epochs.size()},
                           {"config_hash", ctx.hash},
                           {"config", experiment_config(ctx.config.resolved)},
                           {"inputs", inputs}};
        write_checkpoint(ckpt, t.estimator, meta.dump());
        write_loss_history_csv(ctx.out / (t.role + "_loss.csv"), t.history, provenance_comment(ctx, inputs));
        const std::string hash = file_sha256(ckpt);
        manifest["checkpoints"].push_back({{"role", t.role}, {"file", ckpt.filename().string()}, {"sha256", hash}});
        ctx.log << "wrote " << ckpt.string() << " (best epoch " << t.history.best_epoch << ", validation loss "
                << t.history.best_validation_loss << ")\n";
    }
    write_json(ctx.out / "train_manifest.json", manifest);
    return kExitOk;
}

// --- infer ------------------------------------------------------------------

Json posterior_json(const GaussianPosterior& p) {
    return {{"mean", to_vector(p.mean())}, {"variance", to_vector(p.variance())}};
}

int cmd_infer(const Context& ctx, const std::vector<std::string>& checkpoint_paths,
              const fs::path& observation_path) {
    const auto model = make_model(ctx.config);
    const Method method = ctx.config.method.method;
    Json inputs = Json::object();

    std::map<std::string, Checkpoint> checkpoints;
    for (const auto& p : checkpoint_paths) {
        require_file(p, "checkpoint");
        Checkpoint ck = read_checkpoint(p);
        const Json header = Json::parse(ck.header_json);
        const std::string role = header.value("role", std::string());
        if (role.empty()) throw IoError("checkpoint " + p + " has no role");
        if (header.value("model", std::string()) != model->name())
            throw ConfigError("config: checkpoint " + p + " was trained for model '" +
                              header.value("model", std::string("?")) + "'");
        inputs["checkpoint_" + role] = file_sha256(p);
        checkpoints.emplace(role, std::move(ck));
    }
    RoleMap roles;
    for (const auto& role : method_roles(method)) {
        if (role == "q_init" && ctx.config.sampler.fixed_init) continue;
        const auto it = checkpoints.find(role);
        if (it == checkpoints.end())
            throw ConfigError("method " + to_string(method) + " needs a checkpoint with role '" + role + "'");
        roles[role] = &it->second.estimator;
    }

    Json observation;
    Eigen::VectorXd x;
    if (!observation_path.empty()) {
        require_file(observation_path, "observation");
        observation = read_json(observation_path);
        if (!observation.contains("x") || !observation["x"].is_array())
            throw IoError("observation " + observation_path.string() + " has no 'x' array");
        x = to_eigen(observation["x"].get<std::vector<double>>());
        inputs["observation"] = file_sha256(observation_path);
    } else {
        Rng rng = make_rng(ctx.config.observation_seed, 0);
        const Eigen::VectorXd theta = ctx.config.observation_theta.empty()
                                          ? model->sample_prior_interior(rng, evaluation_margin(*model))
                                          : to_eigen(ctx.config.observation_theta);
        Rng sim_rng = make_rng(ctx.config.observation_seed, 1);
        const Simulation sim = model->simulate(theta, sim_rng);
        observation = {{"theta", to_vector(theta)}, {"theta_center", to_vector(sim.theta_center)},
                       {"x", to_vector(sim.x)}};
        if (const auto post = model->oracle_posterior(sim)) observation["oracle"] = posterior_json(*post);
        observation["parameters"] = model->parameter_names();
        observation["provenance"] = provenance(ctx, Json::object());
        x = sim.x;
        write_json(ctx.out / "observation.json", observation);
    }

    ctx.log << "sampling " << to_string(method) << " posterior\n";
    const GnpeResult r = infer_method(*model, ctx.config.method, roles, x, ctx.config.sampler,
                                      derive_seed(ctx.config.seed, 7), ctx.config.workers);
    const bool gnpe = method == Method::gnpe;
    std::vector<std::string> proxy_names;
    if (gnpe)
        for (std::size_t s : model->pose_slots()) proxy_names.push_back(model->parameter_names()[s] + "_hat");
    write_samples_csv(ctx.out / "samples.csv", r.samples, model->parameter_names(),
                      gnpe ? r.proxies : Eigen::MatrixXd(), proxy_names, gnpe ? r.chain_ids : std::vector<std::size_t>{},
                      gnpe ? r.sample_iterations : std::vector<std::size_t>{}, provenance_comment(ctx, inputs));

    Json events = Json::array();
    for (const auto& e : r.events)
        events.push_back({{"iteration", e.iteration}, {"chain", e.chain}, {"message", e.message}});
    Json diag = {{"method", to_string(method)},
                 {"samples", r.samples.rows()},
                 {"converged", r.converged},
                 {"iterations", r.iterations},
                 {"js_trace", r.js_trace},
                 {"js_degenerate", r.js_degenerate},
                 {"events", events},
                 {"seeds", {{"run", ctx.config.seed}, {"sampler", derive_seed(ctx.config.seed, 7)},
                            {"observation", ctx.config.observation_seed}}},
                 {"provenance", provenance(ctx, inputs)}};
    diag["converged_at"] = r.converged_at ? Json(*r.converged_at) : Json(nullptr);
    write_json(ctx.out / "diagnostics.json", diag);
    ctx.log << "wrote " << r.samples.rows() << " samples to " << (ctx.out / "samples.csv").string() << '\n';

    if (gnpe && ctx.config.sampler.policy.kind == IterationPolicyKind::js && !r.converged) {
        ctx.log << "GNPE did not reach JS < " << ctx.config.sampler.policy.js_threshold << " within "
                << r.iterations << " iterations\n";
        return kExitConvergence;
    }
    return kExitOk;
}

// --- evaluate ---------------------------------------------------------------

/// Reads the named columns of a samples CSV (comment lines start with '#').
Eigen::MatrixXd read_sample_columns(const fs::path& path, const std::vector<std::string>& names) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read samples " + path.string());
    std::string line;
    std::vector<std::string> header;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) header.push_back(cell);
        break;
    }
    std::vector<std::size_t> cols;
    for (const auto& n : names) {
        const auto it = std::find(header.begin(), header.end(), n);
        if (it == header.end()) throw IoError("samples " + path.string() + " lack column '" + n + "'");
        cols.push_back(static_cast<std::size_t>(it - header.begin()));
    }
    std::vector<std::vector<double>> rows;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) {
            try {
                cells.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw IoError("samples " + path.string() + ": malformed value '" + cell + "'");
            }
        }
        if (cells.size() != header.size())
            throw IoError("samples " + path.string() + ": row " + std::to_string(rows.size() + 1) +
                          " has the wrong number of columns");
        std::vector<double> row;
        for (std::size_t c : cols) row.push_back(cells[c]);
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < names.size(); ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return out;
}

double normal_cdf(double x, double mean, double sd) {
    return 0.5 * std::erfc(-(x - mean) / (sd * std::numbers::sqrt2));
}

int cmd_evaluate(const Context& ctx, const fs::path& samples_path, const fs::path& oracle_path) {
    require_file(samples_path, "samples");
    require_file(oracle_path, "oracle");
    const auto model = make_model(ctx.config);
    const auto names = model->parameter_names();
    const Eigen::MatrixXd samples = read_sample_columns(samples_path, names);
    const Json oracle_doc = read_json(oracle_path);
    const Json& oracle = oracle_doc.contains("oracle") ? oracle_doc["oracle"] : oracle_doc;
    if (!oracle.contains("mean") || !oracle.contains("variance"))
        throw IoError("oracle " + oracle_path.string() + " has no mean/variance");
    const GaussianPosterior posterior(to_eigen(oracle["mean"].get<std::vector<double>>()),
                                      to_eigen(oracle["variance"].get<std::vector<double>>()));
    if (static_cast<std::size_t>(posterior.dim()) != names.size())
        throw IoError("oracle dimension does not match model " + std::string(model->name()));

    const Json inputs = {{"samples", file_sha256(samples_path)}, {"oracle", file_sha256(oracle_path)}};
    Rng rng = make_rng(derive_seed(ctx.config.seed, 9));
    const Eigen::MatrixXd reference = posterior.sample(static_cast<std::size_t>(samples.rows()), rng);
    Json metrics = Json::object();
    for (const auto& m : ctx.config.metric_suite) {
        if (m == "c2st") {
            C2stConfig cfg = ctx.config.c2st;
            cfg.seed = derive_seed(ctx.config.seed, 10);
            const C2stResult c = c2st(samples, reference, cfg);
            metrics["c2st"] = {{"score", c.score}, {"repetitions", c.repetitions}};
        } else if (m == "mse_of_means") {
            metrics["mse_of_means"] = mse_of_means(samples, reference, model->prior_stddevs());
        } else if (m == "ks") {
            Json ks = Json::object();
            for (std::size_t p = 0; p < names.size(); ++p) {
                const auto col = static_cast<Eigen::Index>(p);
                const Eigen::VectorXd v = samples.col(col);
                const double mu = posterior.mean()[col];
                const double sd = std::sqrt(posterior.variance()[col]);
                const KsResult r = ks_statistic(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())),
                                                [&](double t) { return normal_cdf(t, mu, sd); });
                ks[names[p]] = {{"statistic", r.statistic}, {"p_value", r.p_value}};
            }
            metrics["ks"] = ks;
        }
    }
    const Json doc = {{"schema", "gnpe-metrics/1"},
                      {"model", model->name()},
                      {"samples", samples.rows()},
                      {"parameters", names},
                      {"metrics", metrics},
                      {"seeds", {{"run", ctx.config.seed}, {"reference", derive_seed(ctx.config.seed, 9)}}},
                      {"provenance", provenance(ctx, inputs)}};
    write_json(ctx.out / "metrics.json", doc);
    ctx.log << "wrote " << (ctx.out / "metrics.json").string() << '\n';
    return kExitOk;
}

// --- reproduce --------------------------------------------------------------

std::ofstream open_csv(const fs::path& path, const std::string& comment) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "# " << comment << '\n' << std::setprecision(17);
    return os;
}

int reproduce_fig3b(const Context& ctx) {
    const auto model = make_model(ctx.config);
    if (dynamic_cast<const OscillatorModel*>(model.get()) == nullptr)
        throw ConfigError("config: reproduce fig3b needs model.name oscillator or oscillator-approx");
    const auto& s = ctx.config.toy_study;
    ctx.log << "toy study: " << s.seeds << " seeds x " << s.observations << " observations, " << s.simulations
            << " simulations per seed\n";
    const ToyStudyResult result = run_toy_study(*model, s, [&](const std::string& m) { ctx.log << m << '\n'; });
    auto os = open_csv(ctx.out / "fig3b_c2st.csv", provenance_comment(ctx, Json::object()));
    os << "method,seed_index,observation,c2st,mse_of_means,epochs\n";
    for (const auto& r : result.rows)
        os << to_string(r.method) << ',' << r.seed_index << ',' << r.observation << ',' << r.c2st << ',' << r.mse
           << ',' << r.epochs << '\n';
    Json summary = Json::object();
    for (Method m : s.methods) summary[to_string(m)] = result.mean_c2st(m);
    write_json(ctx.out / "fig3b_summary.json",
               {{"mean_c2st", summary}, {"rows", result.rows.size()}, {"provenance", provenance(ctx, Json::object())}});
    for (Method m : s.methods) ctx.log << to_string(m) << " mean c2st " << result.mean_c2st(m) << '\n';
    return kExitOk;
}

int reproduce_fig3d(const Context& ctx) {
    const auto model = make_model(ctx.config);
    if (model->data_size() < 2) throw ConfigError("config: reproduce fig3d needs time-series data");
    const SpectrumResult r = compare_spectra(*model, ctx.config.spectra);
    auto os = open_csv(ctx.out / "fig3d_singular_values.csv", provenance_comment(ctx, Json::object()));
    os << "index,raw,standardized\n";
    for (Eigen::Index i = 0; i < std::max(r.raw.size(), r.standardized.size()); ++i) {
        os << i << ',';
        if (i < r.raw.size()) os << r.raw[i];
        os << ',';
        if (i < r.standardized.size()) os << r.standardized[i];
        os << '\n';
    }
    write_json(ctx.out / "fig3d_summary.json",
               {{"threshold", ctx.config.spectra.threshold},
                {"raw_effective_dimension", r.raw_dimension},
                {"standardized_effective_dimension", r.standardized_dimension},
                {"provenance", provenance(ctx, Json::object())}});
    ctx.log << "effective dimension: raw " << r.raw_dimension << ", standardized " << r.standardized_dimension
            << '\n';
    return kExitOk;
}

int reproduce_appb(const Context& ctx) {
    const GaussianExampleResult r = run_gaussian_example(ctx.config.gaussian_example);
    auto os = open_csv(ctx.out / "appB_histogram.csv", provenance_comment(ctx, Json::object()));
    os << "tau,gnpe_density,analytic_density\n";
    for (Eigen::Index b = 0; b < r.bin_centers.size(); ++b)
        os << r.bin_centers[b] << ',' << r.sample_density[b] << ',' << r.analytic_density[b] << '\n';
    const GaussianPosterior exact = gaussian_toy_posterior(ctx.config.gaussian_example.observation);
    write_json(ctx.out / "appB_summary.json",
               {{"samples", r.run.samples.rows()},
                {"mean", r.mean},
                {"variance", r.variance},
                {"analytic_mean", exact.mean()[0]},
                {"analytic_variance", exact.variance()[0]},
                {"js_trace", r.run.js_trace},
                {"provenance", provenance(ctx, Json::object())}});
    ctx.log << "GNPE mean " << r.mean << " variance " << r.variance << " (analytic " << exact.mean()[0] << ", "
            << exact.variance()[0] << ")\n";
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& log, std::ostream& err) {
    CLI::App app{"Neural posterior estimation with group-equivariant pose standardisation"};
    app.require_subcommand(1);
    CommonOptions common;
    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "JSON config (defaults used when omitted)");
        sub->add_option("--seed", common.seed, "Override the config seed");
        sub->add_option("--workers", common.workers, "Worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--out", common.out, "Output directory (overrides output_dir)");
    };
    auto* simulate = app.add_subcommand("simulate", "Generate a training dataset");
    add_common(simulate);
    std::string dataset;
    auto* train_cmd = app.add_subcommand("train", "Train the estimators of the configured method");
    add_common(train_cmd);
    train_cmd->add_option("--dataset", dataset, "Dataset written by simulate")->required();
    std::vector<std::string> checkpoints;
    std::string observation;
    auto* infer = app.add_subcommand("infer", "Sample the posterior for one observation");
    add_common(infer);
    infer->add_option("--checkpoint", checkpoints, "Checkpoint(s) written by train")->required();
    infer->add_option("--observation", observation, "Observation JSON with an 'x' array");
    std::string samples, oracle;
    auto* evaluate = app.add_subcommand("evaluate", "Compare samples with an oracle posterior");
    add_common(evaluate);
    evaluate->add_option("--samples", samples, "Samples CSV written by infer")->required();
    evaluate->add_option("--oracle", oracle, "Observation JSON with an 'oracle' posterior")->required();
    std::string figure;
    auto* reproduce = app.add_subcommand("reproduce", "Regenerate figure data");
    add_common(reproduce);
    reproduce->add_option("figure", figure, "fig3b, fig3d or appB")
        ->required()
        ->check(CLI::IsMember({"fig3b", "fig3d", "appB"}));

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        log << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        log << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        const Context ctx = load_context(common, log);
        if (simulate->parsed()) return cmd_simulate(ctx);
        if (train_cmd->parsed()) return cmd_train(ctx, dataset);
        if (infer->parsed()) return cmd_infer(ctx, checkpoints, observation);
        if (evaluate->parsed()) return cmd_evaluate(ctx, samples, oracle);
        if (figure == "fig3b") return reproduce_fig3b(ctx);
        if (figure == "fig3d") return reproduce_fig3d(ctx);
        return reproduce_appb(ctx);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const TrainingError& e) {
        err << "error: training diverged at epoch " << e.epoch() << " (last finite epoch "
            << e.last_finite_epoch() << "): " << e.what() << '\n';
        return kExitTraining;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
}

}  // namespace gnpe
