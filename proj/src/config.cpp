#include "gnpe/config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <openssl/evp.h>

#include "gnpe/errors.hpp"

namespace gnpe {

namespace {

constexpr const char* kDefaults = R"json({
  "seed": 0,
  "workers": 1,
  "output_dir": "out",
  "model": {
    "name": "oscillator",
    "oscillator": {
      "sigma_omega0": 0.3, "sigma_beta": 0.03, "sigma_tau": 0.3,
      "tau_noise_ramp": 0.5,
      "omega0_min": 3.0, "omega0_max": 10.0,
      "beta_min": 0.2, "beta_max": 0.5,
      "tau_min": -5.0, "tau_max": 0.0
    },
    "multichannel": {
      "sigma_omega0": 0.3, "sigma_beta": 0.03, "sigma_tau": 0.3,
      "sigma_delta": 0.002, "delta_max": 0.01, "amplitude_coupling": 0.2
    }
  },
  "method": "gnpe",
  "kernel": { "kind": "gaussian", "widths": [0.1] },
  "modes": [],
  "estimator": {
    "embedding": "auto",
    "hidden": [128, 32, 16],
    "conv": { "kernel_sizes": [5, 5, 5], "channels": [6, 12, 12], "pool_kernel": 7, "pool_stride": 7 },
    "log_std_min": -7.0,
    "log_std_max": 5.0
  },
  "training": {
    "simulations": 10000,
    "validation_fraction": 0.02,
    "learning_rate": 0.001,
    "beta1": 0.9,
    "beta2": 0.999,
    "batch_size": 128,
    "patience": 20,
    "max_epochs": 500,
    "clip_max_norm": 5.0
  },
  "sampler": {
    "samples": 10000,
    "policy": "js",
    "iterations": 30,
    "js_threshold": 0.01,
    "max_iterations": 100,
    "burn_in": 10,
    "thinning": 1,
    "init": "q_init",
    "init_pose": [0.0]
  },
  "observation": { "theta": [], "seed": 1 },
  "metrics": {
    "suite": ["c2st", "mse_of_means", "ks"],
    "c2st": {
      "hidden_multipliers": [10, 10],
      "learning_rate": 0.001,
      "batch_size": 200,
      "max_epochs": 200,
      "tolerance": 0.0001,
      "patience": 10,
      "train_fraction": 0.8,
      "repetitions": 5,
      "min_samples": 500
    },
    "effective_dimension_threshold": 0.01
  },
  "reproduce": {
    "fig3b": {
      "observations": 5, "seeds": 10, "simulations": 10000, "samples": 2000,
      "kernel_width": 0.1, "gnpe_iterations": 1
    },
    "fig3d": { "simulations": 512, "kernel_width": 0.1 },
    "appB": {
      "observation": 3.0, "kernel_width": 1.0, "init": 0.0,
      "chains": 10000, "burn_in": 10, "iterations": 11, "bins": 60
    }
  }
})json";

// Element kinds for arrays whose default is empty.
const std::map<std::string, Json::value_t> kEmptyArrayElements = {
    {"modes", Json::value_t::string},
    {"observation.theta", Json::value_t::number_float},
};

std::string join(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

bool compatible(Json::value_t def, const Json& value) {
    switch (def) {
        case Json::value_t::number_float: return value.is_number();
        case Json::value_t::number_unsigned:
            return value.is_number_unsigned() ||
                   (value.is_number_integer() && value.get<std::int64_t>() >= 0) ||
                   (value.is_number_float() && value.get<double>() >= 0.0 &&
                    std::floor(value.get<double>()) == value.get<double>());
        case Json::value_t::number_integer: return value.is_number_integer();
        case Json::value_t::string: return value.is_string();
        case Json::value_t::boolean: return value.is_boolean();
        default: return false;
    }
}

std::string kind_name(Json::value_t t) {
    switch (t) {
        case Json::value_t::number_float: return "a number";
        case Json::value_t::number_unsigned: return "a non-negative integer";
        case Json::value_t::number_integer: return "an integer";
        case Json::value_t::string: return "a string";
        case Json::value_t::boolean: return "a boolean";
        case Json::value_t::array: return "an array";
        case Json::value_t::object: return "an object";
        default: return "a value";
    }
}

Json normalise(Json::value_t def, const Json& value) {
    if (def == Json::value_t::number_float) return value.get<double>();
    if (def == Json::value_t::number_unsigned) return value.get<std::uint64_t>();
    return value;
}

Json merge(const Json& defaults, const Json& user, const std::string& path) {
    if (defaults.is_object()) {
        if (!user.is_object()) throw ConfigError("config: " + (path.empty() ? "document" : path) + " must be an object");
        Json out = defaults;
        for (const auto& [key, value] : user.items()) {
            const std::string p = join(path, key);
            if (!defaults.contains(key)) throw ConfigError("config: unknown key '" + p + "'");
            out[key] = merge(defaults[key], value, p);
        }
        return out;
    }
    if (defaults.is_array()) {
        if (!user.is_array()) throw ConfigError("config: " + path + " must be an array");
        Json::value_t element;
        if (!defaults.empty()) {
            element = defaults.front().type();
        } else {
            const auto it = kEmptyArrayElements.find(path);
            if (it == kEmptyArrayElements.end()) throw ConfigError("config: " + path + " has no schema");
            element = it->second;
        }
        Json out = Json::array();
        for (std::size_t i = 0; i < user.size(); ++i) {
            if (!compatible(element, user[i]))
                throw ConfigError("config: " + path + "[" + std::to_string(i) + "] must be " + kind_name(element));
            out.push_back(normalise(element, user[i]));
        }
        return out;
    }
    if (!compatible(defaults.type(), user))
        throw ConfigError("config: " + path + " must be " + kind_name(defaults.type()));
    return normalise(defaults.type(), user);
}

[[noreturn]] void invalid(const std::string& field, const std::string& requirement) {
    throw ConfigError("config: " + field + " " + requirement);
}

template <typename T>
std::string show(T v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

void require_positive(const std::string& field, double v) {
    if (!(v > 0.0)) invalid(field, "must be positive (got " + show(v) + ")");
}

void require_range(const std::string& lo_field, double lo, const std::string& hi_field, double hi) {
    if (!(lo < hi))
        invalid(lo_field, "(" + show(lo) + ") must be less than " + hi_field + " (" + show(hi) + ")");
}

std::size_t size_of(const Json& j) { return j.get<std::size_t>(); }

std::vector<std::size_t> sizes_of(const Json& j) {
    std::vector<std::size_t> out;
    for (const auto& v : j) out.push_back(v.get<std::size_t>());
    return out;
}

}  // namespace

const Json& default_config() {
    static const Json defaults = Json::parse(kDefaults);
    return defaults;
}

Json resolve_config(const Json& user) { return merge(default_config(), user, ""); }

Json load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read config " + path.string());
    Json user;
    try {
        user = Json::parse(is);
    } catch (const Json::parse_error& e) {
        throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
    }
    return resolve_config(user);
}

ExperimentConfig parse_config(const Json& r) {
    ExperimentConfig c;
    c.resolved = r;
    c.seed = r["seed"].get<std::uint64_t>();
    c.workers = size_of(r["workers"]);
    if (c.workers == 0) invalid("workers", "must be at least 1");
    c.output_dir = r["output_dir"].get<std::string>();

    // Model
    const Json& m = r["model"];
    c.model = m["name"].get<std::string>();
    if (c.model != "gaussian-toy" && c.model != "oscillator" && c.model != "oscillator-approx" &&
        c.model != "multichannel")
        invalid("model.name", "must be one of gaussian-toy, oscillator, oscillator-approx, multichannel (got '" +
                                  c.model + "')");
    {
        const Json& o = m["oscillator"];
        auto& oo = c.oscillator;
        oo.variant = c.model == "oscillator-approx" ? OscillatorVariant::approximate : OscillatorVariant::exact;
        oo.sigma_omega0 = o["sigma_omega0"];
        oo.sigma_beta = o["sigma_beta"];
        oo.sigma_tau = o["sigma_tau"];
        oo.tau_noise_ramp = o["tau_noise_ramp"];
        oo.omega0_min = o["omega0_min"];
        oo.omega0_max = o["omega0_max"];
        oo.beta_min = o["beta_min"];
        oo.beta_max = o["beta_max"];
        oo.tau_min = o["tau_min"];
        oo.tau_max = o["tau_max"];
        const std::string p = "model.oscillator.";
        require_positive(p + "sigma_omega0", oo.sigma_omega0);
        require_positive(p + "sigma_beta", oo.sigma_beta);
        require_positive(p + "sigma_tau", oo.sigma_tau);
        require_positive(p + "omega0_min", oo.omega0_min);
        require_range(p + "omega0_min", oo.omega0_min, p + "omega0_max", oo.omega0_max);
        require_positive(p + "beta_min", oo.beta_min);
        require_range(p + "beta_min", oo.beta_min, p + "beta_max", oo.beta_max);
        if (!(oo.beta_max < 1.0)) invalid(p + "beta_max", "must be below 1 (underdamped oscillator)");
        require_range(p + "tau_min", oo.tau_min, p + "tau_max", oo.tau_max);
        const double grid_start = oo.grid.start;
        const double grid_end = oo.grid.start + oo.grid.duration;
        if (oo.tau_min < grid_start || oo.tau_max > grid_end)
            invalid(p + "tau_min/tau_max", "must lie inside the data window [" + show(grid_start) + ", " +
                                               show(grid_end) + "]");
        for (double t : {oo.tau_min, oo.tau_max})
            if (!(1.0 + oo.tau_noise_ramp * (t + 2.5) / 2.5 > 0.0))
                invalid(p + "tau_noise_ramp", "makes the tau noise non-positive inside the prior");
    }
    {
        const Json& o = m["multichannel"];
        auto& mo = c.multichannel;
        mo.sigma_omega0 = o["sigma_omega0"];
        mo.sigma_beta = o["sigma_beta"];
        mo.sigma_tau = o["sigma_tau"];
        mo.sigma_delta = o["sigma_delta"];
        mo.delta_max = o["delta_max"];
        mo.amplitude_coupling = o["amplitude_coupling"];
        const std::string p = "model.multichannel.";
        require_positive(p + "sigma_omega0", mo.sigma_omega0);
        require_positive(p + "sigma_beta", mo.sigma_beta);
        require_positive(p + "sigma_tau", mo.sigma_tau);
        require_positive(p + "sigma_delta", mo.sigma_delta);
        require_positive(p + "delta_max", mo.delta_max);
        if (!(std::abs(mo.amplitude_coupling) < 1.0))
            invalid(p + "amplitude_coupling", "must lie in (-1, 1) to keep the amplitude positive");
    }
    const std::size_t factors = c.model == "multichannel" ? 2 : 1;

    // Method, kernel, modes, estimator
    MethodSettings& ms = c.method;
    ms.method = method_from_string(r["method"].get<std::string>());
    {
        const std::string kind = r["kernel"]["kind"];
        std::vector<double> widths = r["kernel"]["widths"].get<std::vector<double>>();
        if (kind == "delta") {
            ms.kernel = Kernel::delta(factors);
        } else {
            if (widths.size() == 1) widths.assign(factors, widths.front());
            if (widths.size() != factors)
                invalid("kernel.widths", "needs 1 or " + std::to_string(factors) + " values");
            for (std::size_t i = 0; i < widths.size(); ++i)
                require_positive("kernel.widths[" + std::to_string(i) + "]", widths[i]);
            if (kind == "gaussian")
                ms.kernel = Kernel::gaussian(widths);
            else if (kind == "uniform")
                ms.kernel = Kernel::uniform(widths);
            else
                invalid("kernel.kind", "must be gaussian, uniform or delta (got '" + kind + "')");
        }
    }
    for (const auto& mode : r["modes"]) {
        const std::string s = mode;
        if (s != "exact" && s != "approximate") invalid("modes", "entries must be exact or approximate");
        ms.modes.push_back(equivariance_mode_from_string(s));
    }
    if (!ms.modes.empty() && ms.modes.size() != factors)
        invalid("modes", "needs " + std::to_string(factors) + " entries or none");
    {
        const Json& e = r["estimator"];
        const std::string kind = e["embedding"];
        if (kind == "auto")
            ms.embedding.kind = c.model == "gaussian-toy" ? EmbeddingKind::identity : EmbeddingKind::mlp;
        else if (kind == "identity" || kind == "mlp" || kind == "conv")
            ms.embedding.kind = embedding_kind_from_string(kind);
        else
            invalid("estimator.embedding", "must be auto, identity, mlp or conv (got '" + kind + "')");
        ms.embedding.hidden = sizes_of(e["hidden"]);
        for (std::size_t h : ms.embedding.hidden)
            if (h == 0) invalid("estimator.hidden", "widths must be positive");
        const Json& cv = e["conv"];
        ms.embedding.conv.kernel_sizes = sizes_of(cv["kernel_sizes"]);
        ms.embedding.conv.channels = sizes_of(cv["channels"]);
        ms.embedding.conv.pool_kernel = size_of(cv["pool_kernel"]);
        ms.embedding.conv.pool_stride = size_of(cv["pool_stride"]);
        if (ms.embedding.conv.kernel_sizes.size() != ms.embedding.conv.channels.size())
            invalid("estimator.conv.kernel_sizes", "must have as many entries as estimator.conv.channels");
        for (std::size_t k : ms.embedding.conv.kernel_sizes)
            if (k % 2 == 0) invalid("estimator.conv.kernel_sizes", "must be odd");
        if (ms.embedding.conv.pool_kernel == 0 || ms.embedding.conv.pool_stride == 0)
            invalid("estimator.conv.pool_kernel/pool_stride", "must be positive");
        ms.log_std_min = e["log_std_min"];
        ms.log_std_max = e["log_std_max"];
        require_range("estimator.log_std_min", ms.log_std_min, "estimator.log_std_max", ms.log_std_max);
        if (c.model == "gaussian-toy" && ms.method == Method::npe_cnn)
            invalid("method", "npe-cnn needs time-series data (model gaussian-toy has a scalar observation)");
    }

    // Training
    {
        const Json& t = r["training"];
        c.simulations = size_of(t["simulations"]);
        if (c.simulations < 2) invalid("training.simulations", "must be at least 2");
        c.validation_fraction = t["validation_fraction"];
        if (!(c.validation_fraction > 0.0 && c.validation_fraction < 1.0))
            invalid("training.validation_fraction", "must lie in (0, 1)");
        TrainingConfig& tc = ms.training;
        tc.learning_rate = t["learning_rate"];
        tc.beta1 = t["beta1"];
        tc.beta2 = t["beta2"];
        tc.batch_size = size_of(t["batch_size"]);
        tc.patience = size_of(t["patience"]);
        tc.max_epochs = size_of(t["max_epochs"]);
        tc.clip_max_norm = t["clip_max_norm"];
        tc.seed = c.seed;
        tc.workers = c.workers;
        require_positive("training.learning_rate", tc.learning_rate);
        if (!(tc.beta1 >= 0.0 && tc.beta1 < 1.0)) invalid("training.beta1", "must lie in [0, 1)");
        if (!(tc.beta2 >= 0.0 && tc.beta2 < 1.0)) invalid("training.beta2", "must lie in [0, 1)");
        if (tc.batch_size == 0) invalid("training.batch_size", "must be at least 1");
        if (tc.max_epochs == 0) invalid("training.max_epochs", "must be at least 1");
        if (tc.patience == 0) invalid("training.patience", "must be at least 1");
        if (!(tc.clip_max_norm >= 0.0)) invalid("training.clip_max_norm", "must be non-negative");
    }

    // Sampler
    {
        const Json& s = r["sampler"];
        SamplerSettings& ss = c.sampler;
        ss.samples = size_of(s["samples"]);
        if (ss.samples == 0) invalid("sampler.samples", "must be at least 1");
        const std::string policy = s["policy"];
        if (policy == "fixed")
            ss.policy.kind = IterationPolicyKind::fixed;
        else if (policy == "js")
            ss.policy.kind = IterationPolicyKind::js;
        else
            invalid("sampler.policy", "must be fixed or js (got '" + policy + "')");
        ss.policy.iterations = size_of(s["iterations"]);
        ss.policy.js_threshold = s["js_threshold"];
        ss.policy.max_iterations = size_of(s["max_iterations"]);
        if (ss.policy.iterations == 0) invalid("sampler.iterations", "must be at least 1");
        if (ss.policy.max_iterations == 0) invalid("sampler.max_iterations", "must be at least 1");
        require_positive("sampler.js_threshold", ss.policy.js_threshold);
        ss.burn_in = size_of(s["burn_in"]);
        ss.thinning = size_of(s["thinning"]);
        if (ss.thinning == 0) invalid("sampler.thinning", "must be at least 1");
        const std::string init = s["init"];
        if (init != "q_init" && init != "fixed") invalid("sampler.init", "must be q_init or fixed");
        ss.fixed_init = init == "fixed";
        ss.init_pose = s["init_pose"].get<std::vector<double>>();
        if (ss.fixed_init && ss.init_pose.size() != factors)
            invalid("sampler.init_pose", "needs " + std::to_string(factors) + " values");
    }

    // Observation
    c.observation_theta = r["observation"]["theta"].get<std::vector<double>>();
    c.observation_seed = r["observation"]["seed"].get<std::uint64_t>();

    // Metrics
    {
        const Json& mt = r["metrics"];
        for (const auto& name : mt["suite"]) {
            const std::string s = name;
            if (s != "c2st" && s != "mse_of_means" && s != "ks")
                invalid("metrics.suite", "entries must be c2st, mse_of_means or ks (got '" + s + "')");
            c.metric_suite.push_back(s);
        }
        const Json& cc = mt["c2st"];
        C2stConfig& c2 = c.c2st;
        c2.hidden_multipliers = sizes_of(cc["hidden_multipliers"]);
        c2.learning_rate = cc["learning_rate"];
        c2.batch_size = size_of(cc["batch_size"]);
        c2.max_epochs = size_of(cc["max_epochs"]);
        c2.tolerance = cc["tolerance"];
        c2.patience = size_of(cc["patience"]);
        c2.train_fraction = cc["train_fraction"];
        c2.repetitions = size_of(cc["repetitions"]);
        c2.min_samples = size_of(cc["min_samples"]);
        c2.seed = c.seed;
        c2.workers = c.workers;
        try {
            c2.validate();
        } catch (const StructuralError& e) {
            invalid("metrics.c2st", e.what());
        }
        c.effective_dimension_threshold = mt["effective_dimension_threshold"];
        if (!(c.effective_dimension_threshold > 0.0 && c.effective_dimension_threshold < 1.0))
            invalid("metrics.effective_dimension_threshold", "must lie in (0, 1)");
    }

    // Reproductions
    {
        const Json& f = r["reproduce"]["fig3b"];
        ToyStudySettings& ts = c.toy_study;
        ts.observations = size_of(f["observations"]);
        ts.seeds = size_of(f["seeds"]);
        ts.simulations = size_of(f["simulations"]);
        ts.samples = size_of(f["samples"]);
        ts.kernel_width = f["kernel_width"];
        ts.gnpe_iterations = size_of(f["gnpe_iterations"]);
        if (ts.observations == 0 || ts.seeds == 0) invalid("reproduce.fig3b", "needs observations and seeds");
        if (ts.simulations < 2) invalid("reproduce.fig3b.simulations", "must be at least 2");
        if (ts.gnpe_iterations == 0) invalid("reproduce.fig3b.gnpe_iterations", "must be at least 1");
        if (ts.samples < c.c2st.min_samples)
            invalid("reproduce.fig3b.samples", "must be at least metrics.c2st.min_samples");
        require_positive("reproduce.fig3b.kernel_width", ts.kernel_width);
        ts.validation_fraction = c.validation_fraction;
        ts.embedding = ms.embedding;
        ts.training = ms.training;
        ts.c2st = c.c2st;
        ts.seed = c.seed;
        ts.workers = c.workers;

        const Json& d = r["reproduce"]["fig3d"];
        c.spectra.simulations = size_of(d["simulations"]);
        c.spectra.kernel_width = d["kernel_width"];
        c.spectra.threshold = c.effective_dimension_threshold;
        c.spectra.seed = c.seed;
        c.spectra.workers = c.workers;
        if (c.spectra.simulations < 2) invalid("reproduce.fig3d.simulations", "must be at least 2");
        require_positive("reproduce.fig3d.kernel_width", c.spectra.kernel_width);

        const Json& b = r["reproduce"]["appB"];
        GaussianExampleSettings& g = c.gaussian_example;
        g.observation = b["observation"];
        g.kernel_width = b["kernel_width"];
        g.init = b["init"];
        g.chains = size_of(b["chains"]);
        g.burn_in = size_of(b["burn_in"]);
        g.iterations = size_of(b["iterations"]);
        g.bins = size_of(b["bins"]);
        g.seed = c.seed;
        g.workers = c.workers;
        require_positive("reproduce.appB.kernel_width", g.kernel_width);
        if (g.chains < 2) invalid("reproduce.appB.chains", "must be at least 2");
        if (g.iterations <= g.burn_in)
            invalid("reproduce.appB.iterations", "must exceed reproduce.appB.burn_in");
        if (g.bins == 0) invalid("reproduce.appB.bins", "must be at least 1");
    }

    // Observation theta must match the model.
    if (!c.observation_theta.empty()) {
        const auto model = make_model(c);
        if (c.observation_theta.size() != model->parameter_dim())
            invalid("observation.theta", "needs " + std::to_string(model->parameter_dim()) + " values");
        const Eigen::VectorXd theta =
            Eigen::Map<const Eigen::VectorXd>(c.observation_theta.data(),
                                              static_cast<Eigen::Index>(c.observation_theta.size()));
        if (!model->in_support(theta)) invalid("observation.theta", "lies outside the prior support");
    }
    return c;
}

std::unique_ptr<ForwardModel> make_model(const ExperimentConfig& config) {
    if (config.model == "gaussian-toy") return std::make_unique<GaussianToyModel>();
    if (config.model == "multichannel") return std::make_unique<MultichannelModel>(config.multichannel);
    return std::make_unique<OscillatorModel>(config.oscillator);
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 computation failed");
    std::ostringstream os;
    os << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < len; ++i) os << std::setw(2) << static_cast<int>(digest[i]);
    return os.str();
}

std::string file_sha256(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path.string());
    std::ostringstream buffer;
    buffer << is.rdbuf();
    return sha256_hex(buffer.str());
}

Json experiment_config(const Json& resolved) {
    Json out = resolved;
    out.erase("output_dir");
    out.erase("workers");
    return out;
}

std::string config_hash(const Json& resolved) { return sha256_hex(experiment_config(resolved).dump()); }

}  // namespace gnpe
