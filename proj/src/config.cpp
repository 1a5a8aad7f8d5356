#include "dynsir/config.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace dynsir {

namespace {

using nlohmann::json;

const json& field(const json& obj, const char* key)
{
    if (!obj.contains(key)) throw InvalidArgument(std::string("config: missing key '") + key + "'");
    return obj.at(key);
}

Matrix read_matrix(const json& j, int k, const char* name)
{
    Matrix m(k, k);
    if (j.is_number()) {
        if (k != 1) throw InvalidArgument(std::string("config: ") + name + " must be a " + std::to_string(k) + "x" +
                                          std::to_string(k) + " matrix");
        m(0, 0) = j.get<double>();
        return m;
    }
    if (!j.is_array() || static_cast<int>(j.size()) != k) {
        throw InvalidArgument(std::string("config: ") + name + " must have " + std::to_string(k) + " rows");
    }
    for (int r = 0; r < k; ++r) {
        const json& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<int>(row.size()) != k) {
            throw InvalidArgument(std::string("config: row ") + std::to_string(r) + " of " + name + " must have " +
                                  std::to_string(k) + " entries");
        }
        for (int c = 0; c < k; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

Vector read_vector(const json& j, int k, const char* name)
{
    Vector v(k);
    if (j.is_number()) {
        if (k != 1) throw InvalidArgument(std::string("config: ") + name + " must be a list of length " + std::to_string(k));
        v(0) = j.get<double>();
        return v;
    }
    if (!j.is_array() || static_cast<int>(j.size()) != k) {
        throw InvalidArgument(std::string("config: ") + name + " must be a list of length " + std::to_string(k));
    }
    for (int r = 0; r < k; ++r) v(r) = j[static_cast<std::size_t>(r)].get<double>();
    return v;
}

ModelSpec read_model(const json& m)
{
    ModelSpec s;
    s.k = field(m, "k").get<int>();
    if (s.k < 1) throw InvalidArgument("config: k must be positive");
    s.p = m.contains("p") ? read_vector(m.at("p"), s.k, "p") : Vector::Constant(s.k, 1.0 / s.k);
    s.lambda = read_matrix(field(m, "lambda"), s.k, "lambda");
    s.mu = read_matrix(field(m, "mu"), s.k, "mu");
    s.beta = read_matrix(field(m, "beta"), s.k, "beta");
    s.gamma = read_vector(field(m, "gamma"), s.k, "gamma");
    s.kappa_lambda = read_matrix(field(m, "kappa_lambda"), s.k, "kappa_lambda");
    s.kappa_mu = read_matrix(field(m, "kappa_mu"), s.k, "kappa_mu");
    s.kappa_beta = read_matrix(field(m, "kappa_beta"), s.k, "kappa_beta");
    s.validate();
    return s;
}

ModelTag read_model_tag(const std::string& s)
{
    if (s == "M1") return ModelTag::M1;
    if (s == "M2") return ModelTag::M2;
    if (s == "M3") return ModelTag::M3;
    throw InvalidArgument("config: unknown model '" + s + "'");
}

} // namespace

Config parse_config(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    Config cfg;
    try {
        cfg.spec = read_model(field(j, "model"));
        cfg.experiment.spec = cfg.spec;
        if (j.contains("experiment")) {
            const json& e = j.at("experiment");
            ExperimentConfig& x = cfg.experiment;
            x.n_list = field(e, "n_list").get<std::vector<long>>();
            x.runs_per_n = field(e, "runs_per_n").get<long>();
            x.master_seed = e.value("master_seed", std::uint64_t{0});
            x.threshold_exponent = e.value("threshold_exponent", x.threshold_exponent);
            x.pin_level = e.value("pin_level", x.pin_level);
            if (e.contains("window")) {
                const auto w = e.at("window").get<std::vector<double>>();
                if (w.size() != 2) throw InvalidArgument("config: window must be [u_min, u_max]");
                x.u_min = w[0];
                x.u_max = w[1];
            }
            x.grid_step = e.value("grid_step", x.grid_step);
            x.max_restarts = e.value("max_restarts", x.max_restarts);
            x.threads = e.value("threads", x.threads);
            if (e.contains("model")) x.model = read_model_tag(e.at("model").get<std::string>());
            x.validate();
            cfg.has_experiment = true;
        }
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    return cfg;
}

Config load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

} // namespace dynsir
