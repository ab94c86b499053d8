#include "gnpe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include <json.hpp>

#include "gnpe/errors.hpp"
#include "gnpe/parallel.hpp"
#include "binary_io.hpp"

namespace gnpe {

std::vector<std::size_t> TrainingDataset::train_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < is_validation.size(); ++i)
        if (!is_validation[i]) out.push_back(i);
    return out;
}

std::vector<std::size_t> TrainingDataset::validation_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < is_validation.size(); ++i)
        if (is_validation[i]) out.push_back(i);
    return out;
}

void TrainingDataset::validate() const {
    const auto n = targets.cols();
    if (contexts.cols() != n) throw StructuralError("dataset: context/target counts differ");
    if (proxies.rows() > 0 && proxies.cols() != n)
        throw StructuralError("dataset: proxy/target counts differ");
    if (theta_centers.size() > 0 && theta_centers.cols() != n)
        throw StructuralError("dataset: theta_center/target counts differ");
    if (is_validation.size() != static_cast<std::size_t>(n))
        throw StructuralError("dataset: split flags do not cover every example");
}

TrainingDataset generate_npe_dataset(const ForwardModel& model, std::size_t n, std::uint64_t seed,
                                     double validation_fraction, std::size_t workers) {
    if (n < 2) throw StructuralError("generate_npe_dataset: need at least 2 examples");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw StructuralError("generate_npe_dataset: validation fraction must lie in (0, 1)");
    const auto p = static_cast<Eigen::Index>(model.parameter_dim());
    const auto d = static_cast<Eigen::Index>(model.data_size());
    TrainingDataset ds;
    ds.targets.resize(p, static_cast<Eigen::Index>(n));
    ds.contexts.resize(d, static_cast<Eigen::Index>(n));
    ds.theta_centers.resize(p, static_cast<Eigen::Index>(n));
    parallel_for(n, workers, [&](std::size_t i) {
        Rng rng = make_rng(seed, i);
        const Eigen::VectorXd theta = model.sample_prior(rng);
        Simulation sim = model.simulate(theta, rng);
        const auto col = static_cast<Eigen::Index>(i);
        ds.targets.col(col) = theta;
        ds.contexts.col(col) = sim.x;
        ds.theta_centers.col(col) = sim.theta_center;
    });
    std::size_t n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * validation_fraction));
    n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
    ds.is_validation.assign(n, 0);
    for (std::size_t i = n - n_val; i < n; ++i) ds.is_validation[i] = 1;
    return ds;
}

std::string to_string(EquivarianceMode mode) {
    return mode == EquivarianceMode::exact ? "exact" : "approximate";
}

EquivarianceMode equivariance_mode_from_string(const std::string& s) {
    if (s == "exact") return EquivarianceMode::exact;
    if (s == "approximate") return EquivarianceMode::approximate;
    throw StructuralError("unknown equivariance mode '" + s + "'");
}

std::size_t GnpeSpec::proxy_dim() const {
    std::size_t k = 0;
    for (auto m : modes)
        if (m == EquivarianceMode::approximate) ++k;
    return k;
}

void GnpeSpec::validate() const {
    if (pose_slots.empty()) throw StructuralError("GNPE spec: model declares no pose slots");
    if (modes.size() != pose_slots.size())
        throw StructuralError("GNPE spec: one equivariance mode per pose factor required");
    if (kernel.factors() != pose_slots.size())
        throw StructuralError("GNPE spec: kernel factor count differs from pose factor count");
    if (representation.factors() != pose_slots.size())
        throw StructuralError("GNPE spec: representation factor count differs from pose");
}

GnpeSpec make_gnpe_spec(const ForwardModel& model, Kernel kernel,
                        std::vector<EquivarianceMode> modes) {
    if (modes.empty()) modes.assign(model.pose_factors(), EquivarianceMode::exact);
    GnpeSpec spec{model.pose_slots(), model.posterior_representation(), std::move(kernel),
                  std::move(modes)};
    spec.validate();
    return spec;
}

GnpeExample gnpe_standardize(const GnpeSpec& spec, const Eigen::VectorXd& theta,
                             const Eigen::VectorXd& x, const GroupElement& g_hat) {
    if (g_hat.factors() != spec.factors())
        throw StructuralError("gnpe_standardize: proxy factor count mismatch");
    GnpeExample ex;
    ex.g_hat = g_hat;
    ex.target = theta;
    ex.proxy.resize(static_cast<Eigen::Index>(spec.proxy_dim()));
    Eigen::Index k = 0;
    for (std::size_t f = 0; f < spec.factors(); ++f) {
        const auto slot = static_cast<Eigen::Index>(spec.pose_slots[f]);
        if (slot >= theta.size()) throw StructuralError("gnpe_standardize: pose slot out of range");
        if (spec.modes[f] == EquivarianceMode::exact)
            ex.target[slot] = theta[slot] - g_hat[f];
        else
            ex.proxy[k++] = g_hat[f];
    }
    ex.context = act_on_data(inverse(g_hat), x, spec.representation);
    return ex;
}

GnpeExample gnpe_transform_example(const GnpeSpec& spec, const Eigen::VectorXd& theta,
                                   const Eigen::VectorXd& x, Rng& rng) {
    spec.validate();
    const GroupElement g_hat = make_proxy(pose_of(theta, spec.pose_slots), spec.kernel, rng);
    return gnpe_standardize(spec, theta, x, g_hat);
}

TrainingDataset make_gnpe_dataset(const TrainingDataset& raw, const GnpeSpec& spec,
                                  std::uint64_t seed, std::size_t workers) {
    raw.validate();
    spec.validate();
    const std::size_t n = raw.size();
    TrainingDataset out;
    out.targets.resize(raw.targets.rows(), raw.targets.cols());
    out.contexts.resize(raw.contexts.rows(), raw.contexts.cols());
    out.proxies.resize(static_cast<Eigen::Index>(spec.proxy_dim()), raw.targets.cols());
    out.theta_centers = raw.theta_centers;
    out.is_validation = raw.is_validation;
    parallel_for(n, workers, [&](std::size_t i) {
        Rng rng = make_rng(seed, i);
        const auto col = static_cast<Eigen::Index>(i);
        GnpeExample ex = gnpe_transform_example(spec, raw.targets.col(col), raw.contexts.col(col), rng);
        out.targets.col(col) = ex.target;
        out.contexts.col(col) = ex.context;
        if (out.proxies.rows() > 0) out.proxies.col(col) = ex.proxy;
    });
    return out;
}

TrainingDataset make_pose_dataset(const TrainingDataset& raw,
                                  const std::vector<std::size_t>& pose_slots) {
    raw.validate();
    TrainingDataset out;
    out.targets.resize(static_cast<Eigen::Index>(pose_slots.size()), raw.targets.cols());
    for (std::size_t f = 0; f < pose_slots.size(); ++f)
        out.targets.row(static_cast<Eigen::Index>(f)) =
            raw.targets.row(static_cast<Eigen::Index>(pose_slots.at(f)));
    out.contexts = raw.contexts;
    out.is_validation = raw.is_validation;
    return out;
}

TrainingDataset make_chained_rest_dataset(const TrainingDataset& raw,
                                          const std::vector<std::size_t>& pose_slots,
                                          const DataRepresentation& representation,
                                          std::size_t workers) {
    raw.validate();
    std::vector<Eigen::Index> rest;
    for (Eigen::Index r = 0; r < raw.targets.rows(); ++r)
        if (std::find(pose_slots.begin(), pose_slots.end(), static_cast<std::size_t>(r)) ==
            pose_slots.end())
            rest.push_back(r);
    TrainingDataset out;
    out.targets.resize(static_cast<Eigen::Index>(rest.size()), raw.targets.cols());
    for (std::size_t r = 0; r < rest.size(); ++r)
        out.targets.row(static_cast<Eigen::Index>(r)) = raw.targets.row(rest[r]);
    out.contexts.resize(raw.contexts.rows(), raw.contexts.cols());
    out.proxies.resize(static_cast<Eigen::Index>(pose_slots.size()), raw.targets.cols());
    out.is_validation = raw.is_validation;
    parallel_for(raw.size(), workers, [&](std::size_t i) {
        const auto col = static_cast<Eigen::Index>(i);
        const GroupElement lambda = pose_of(raw.targets.col(col), pose_slots);
        out.contexts.col(col) = act_on_data(inverse(lambda), raw.contexts.col(col), representation);
        for (std::size_t f = 0; f < lambda.factors(); ++f)
            out.proxies(static_cast<Eigen::Index>(f), col) = lambda[f];
    });
    return out;
}

// ---------------------------------------------------------------------------

void write_dataset(const std::filesystem::path& path, const TrainingDataset& data,
                   const std::string& metadata_json) {
    data.validate();
    nlohmann::json header = metadata_json.empty() ? nlohmann::json::object()
                                                  : nlohmann::json::parse(metadata_json);
    if (!header.is_object()) throw StructuralError("write_dataset: metadata must be a JSON object");
    header["examples"] = data.size();
    header["target_dim"] = data.targets.rows();
    header["context_dim"] = data.contexts.rows();
    header["proxy_dim"] = data.proxies.rows();
    header["has_theta_centers"] = data.theta_centers.size() > 0;
    const std::string text = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    detail::write_preamble(os, kDatasetMagic, kDatasetVersion, text);
    os.write(reinterpret_cast<const char*>(data.is_validation.data()),
             static_cast<std::streamsize>(data.is_validation.size()));
    detail::write_block(os, data.targets);
    detail::write_block(os, data.contexts);
    detail::write_block(os, data.proxies);
    if (data.theta_centers.size() > 0) detail::write_block(os, data.theta_centers);
    if (!os) throw IoError("failed writing " + path.string());
}

DatasetFile read_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open dataset " + path.string());
    const std::string text = detail::read_preamble(is, kDatasetMagic, kDatasetVersion, "dataset");
    const auto header = nlohmann::json::parse(text);
    const auto n = header.at("examples").get<Eigen::Index>();
    DatasetFile file;
    file.header_json = text;
    auto& d = file.data;
    d.is_validation.resize(static_cast<std::size_t>(n));
    is.read(reinterpret_cast<char*>(d.is_validation.data()), n);
    if (!is) throw IoError("dataset: truncated split flags");
    detail::read_block(is, d.targets, header.at("target_dim").get<Eigen::Index>(), n, "dataset");
    detail::read_block(is, d.contexts, header.at("context_dim").get<Eigen::Index>(), n, "dataset");
    detail::read_block(is, d.proxies, header.at("proxy_dim").get<Eigen::Index>(), n, "dataset");
    if (header.at("has_theta_centers").get<bool>())
        detail::read_block(is, d.theta_centers, header.at("target_dim").get<Eigen::Index>(), n, "dataset");
    d.validate();
    return file;
}

void write_dataset_csv(const std::filesystem::path& path, const TrainingDataset& data,
                       const std::vector<std::string>& parameter_names,
                       std::size_t max_context_columns, const std::string& comment) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    if (!comment.empty()) os << "# " << comment << '\n';
    os << "index,split";
    for (const auto& n : parameter_names) os << ',' << n;
    if (data.theta_centers.size() > 0)
        for (const auto& n : parameter_names) os << ',' << n << "_center";
    const auto ctx_cols = std::min<Eigen::Index>(data.contexts.rows(),
                                                 static_cast<Eigen::Index>(max_context_columns));
    for (Eigen::Index c = 0; c < ctx_cols; ++c) os << ",x" << c;
    os << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        os << i << ',' << (data.is_validation[i] ? "validation" : "train");
        for (Eigen::Index r = 0; r < data.targets.rows(); ++r) os << ',' << data.targets(r, col);
        if (data.theta_centers.size() > 0)
            for (Eigen::Index r = 0; r < data.theta_centers.rows(); ++r)
                os << ',' << data.theta_centers(r, col);
        for (Eigen::Index c = 0; c < ctx_cols; ++c) os << ',' << data.contexts(c, col);
        os << '\n';
    }
}

}  // namespace gnpe
