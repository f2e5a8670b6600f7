// midasvi: simulate, fit, Monte Carlo and forecasting driver.
//
// Every run is configured by an optional JSON document (--config) whose keys
// are the kebab-case flag names; flags given on the command line override the
// file. Unknown keys are rejected.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include "midas/midas.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace midas;

namespace {

enum class KeyKind { Int, UInt, Double, String, Bool, Strings, Doubles };

struct Key {
    std::string name;
    KeyKind kind;
    std::string help;
};

const std::vector<Key> common_keys = {
    {"seed", KeyKind::UInt, "master seed"},
    {"out", KeyKind::String, "output directory"},
    {"threads", KeyKind::Int, "worker threads"},
    {"var-alpha", KeyKind::Double, "prior variance of alpha"},
    {"var-beta", KeyKind::Double, "prior variance of each beta"},
    {"var-eta", KeyKind::Double, "prior variance of each eta coordinate"},
    {"a0", KeyKind::Double, "Inverse-Gamma prior shape"},
    {"b0", KeyKind::Double, "Inverse-Gamma prior rate"},
    {"level", KeyKind::Double, "credible level"},
    {"kappa", KeyKind::Double, "CAVI interval inflation factor"},
};

const std::vector<Key> engine_keys = {
    {"tol", KeyKind::Double, "CAVI relative ELBO tolerance"},
    {"max-iters", KeyKind::Int, "CAVI sweep cap"},
    {"draws", KeyKind::Int, "Gibbs retained draws"},
    {"burn-in", KeyKind::Int, "Gibbs burn-in sweeps"},
    {"thin", KeyKind::Int, "Gibbs thinning interval"},
};

const std::vector<Key> simulate_keys = {
    {"dgp", KeyKind::String, "named configuration (e.g. 1A-2); other keys override its fields"},
    {"J", KeyKind::Int, "number of predictors"},
    {"T", KeyKind::Int, "number of low-frequency periods"},
    {"K", KeyKind::Int, "lags per predictor"},
    {"P", KeyKind::Int, "basis dimension"},
    {"basis", KeyKind::String, "almon | bspline"},
    {"profiles", KeyKind::Strings, "weight profile per predictor: decreasing | hump | u-shape"},
    {"beta", KeyKind::Doubles, "impact coefficient per predictor"},
    {"alpha", KeyKind::Double, "intercept"},
    {"sigma2", KeyKind::Double, "noise variance"},
    {"x-rho", KeyKind::Double, "AR(1) coefficient of the high-frequency stream"},
};

const std::vector<Key> fit_keys = {
    {"data", KeyKind::String, "dataset directory written by simulate"},
    {"method", KeyKind::String, "cavi | gibbs | both"},
    {"truth", KeyKind::String, "truth JSON to score against (default: <data>/truth.json if present)"},
};

const std::vector<Key> mc_keys = {
    {"configs", KeyKind::Strings, "configuration ids, or 'all'"},
    {"reps", KeyKind::Int, "replications per configuration"},
    {"methods", KeyKind::Strings, "cavi,gibbs (default: both, CAVI only for J >= 25)"},
    {"calibration", KeyKind::Bool, "emit coverage-vs-kappa table"},
    {"kappas", KeyKind::Doubles, "kappa grid for --calibration"},
};

const std::vector<Key> forecast_keys = {
    {"returns", KeyKind::String, "daily returns CSV (date,return); simulated when absent"},
    {"months", KeyKind::Int, "months of simulated returns"},
    {"models", KeyKind::Strings, "midas_cavi,midas_gibbs,har,ar1,ar4,histavg"},
    {"baseline", KeyKind::String, "reference model for relative MSE and DM tests"},
    {"initial-window", KeyKind::Int, "rows in the first training sample"},
    {"lags", KeyKind::Int, "daily lags per block"},
    {"blocks", KeyKind::Int, "monthly lag blocks"},
    {"order", KeyKind::Int, "basis dimension"},
    {"basis", KeyKind::String, "almon | bspline"},
    {"warmup", KeyKind::Int, "months of history before the first target"},
};

std::vector<Key> concat(std::initializer_list<const std::vector<Key>*> parts)
{
    std::vector<Key> out;
    for (const auto* p : parts) out.insert(out.end(), p->begin(), p->end());
    return out;
}

// Raw flag values before typing.
struct FlagValues {
    std::map<std::string, std::string> scalars;
    std::map<std::string, std::vector<std::string>> lists;
    std::map<std::string, bool> flags;
};

void register_keys(CLI::App& app, const std::vector<Key>& keys, FlagValues& values)
{
    for (const auto& k : keys) {
        const std::string flag = "--" + k.name;
        switch (k.kind) {
        case KeyKind::Bool: app.add_flag(flag, values.flags[k.name], k.help); break;
        case KeyKind::Strings:
        case KeyKind::Doubles: app.add_option(flag, values.lists[k.name], k.help)->delimiter(','); break;
        default: app.add_option(flag, values.scalars[k.name], k.help); break;
        }
    }
}

json typed_value(const Key& k, const std::string& raw)
{
    try {
        switch (k.kind) {
        case KeyKind::Int: {
            std::size_t used = 0;
            const int v = std::stoi(raw, &used);
            if (used != raw.size()) break;
            return v;
        }
        case KeyKind::UInt: {
            std::size_t used = 0;
            if (raw.empty() || raw[0] == '-') break;
            const unsigned long long v = std::stoull(raw, &used);
            if (used != raw.size()) break;
            return static_cast<std::uint64_t>(v);
        }
        case KeyKind::Double: return parse_double(raw, "--" + k.name);
        case KeyKind::String: return raw;
        default: break;
        }
    } catch (const std::logic_error&) {
    }
    throw ConfigError("--" + k.name + ": invalid value '" + raw + "'");
}

bool matches_kind(const json& v, KeyKind kind)
{
    switch (kind) {
    case KeyKind::Int: return v.is_number_integer();
    case KeyKind::UInt: return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
    case KeyKind::Double: return v.is_number();
    case KeyKind::String: return v.is_string();
    case KeyKind::Bool: return v.is_boolean();
    case KeyKind::Strings:
        return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); });
    case KeyKind::Doubles:
        return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); });
    }
    return false;
}

// Config file merged with command-line overrides, validated against the key table.
class RunConfig {
public:
    RunConfig(const std::string& path, const std::vector<Key>& keys, const FlagValues& flags) : keys_(keys)
    {
        if (!path.empty()) {
            std::ifstream in(path);
            if (!in) throw DataError("cannot open config file " + path);
            try {
                doc_ = json::parse(in);
            } catch (const json::parse_error& e) {
                throw ConfigError("config file " + path + ": " + e.what());
            }
            if (!doc_.is_object()) throw ConfigError("config file " + path + ": expected a JSON object");
        } else {
            doc_ = json::object();
        }
        for (auto it = doc_.begin(); it != doc_.end(); ++it) {
            const Key* k = find(it.key());
            if (!k) throw ConfigError("unknown config key '" + it.key() + "'");
            if (!matches_kind(it.value(), k->kind)) throw ConfigError("config key '" + it.key() + "' has the wrong type");
        }
        for (const auto& k : keys_) {
            switch (k.kind) {
            case KeyKind::Bool:
                if (flags.flags.at(k.name)) doc_[k.name] = true;
                break;
            case KeyKind::Strings:
            case KeyKind::Doubles: {
                const auto& v = flags.lists.at(k.name);
                if (v.empty()) break;
                json arr = json::array();
                for (const auto& s : v)
                    arr.push_back(k.kind == KeyKind::Strings ? json(s) : json(parse_double(s, "--" + k.name)));
                doc_[k.name] = arr;
                break;
            }
            default: {
                const auto& v = flags.scalars.at(k.name);
                if (!v.empty()) doc_[k.name] = typed_value(k, v);
            }
            }
        }
    }

    bool has(const std::string& key) const { return doc_.contains(key); }

    template <class T>
    T get(const std::string& key, T fallback) const
    {
        if (!find(key)) throw std::logic_error("undeclared key " + key);
        return doc_.contains(key) ? doc_.at(key).get<T>() : fallback;
    }

    const json& document() const { return doc_; }

private:
    const Key* find(const std::string& name) const
    {
        for (const auto& k : keys_)
            if (k.name == name) return &k;
        return nullptr;
    }

    std::vector<Key> keys_;
    json doc_;
};

struct Common {
    std::uint64_t seed = 1;
    fs::path out = ".";
    int threads = 1;
    Priors priors;
    double level = 0.95;
    double kappa = 1.0;
    CaviOptions cavi;
    GibbsOptions gibbs;
};

Common read_common(const RunConfig& cfg)
{
    Common c;
    c.seed = cfg.get<std::uint64_t>("seed", 1);
    c.out = cfg.get<std::string>("out", ".");
    c.threads = cfg.get<int>("threads", static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
    if (c.threads < 1) throw ConfigError("--threads must be at least 1");
    c.priors.var_alpha = cfg.get("var-alpha", c.priors.var_alpha);
    c.priors.var_beta = cfg.get("var-beta", c.priors.var_beta);
    c.priors.var_eta = cfg.get("var-eta", c.priors.var_eta);
    c.priors.a0 = cfg.get("a0", c.priors.a0);
    c.priors.b0 = cfg.get("b0", c.priors.b0);
    c.priors.validate();
    c.level = cfg.get("level", c.level);
    c.kappa = cfg.get("kappa", c.kappa);
    if (!(c.level > 0.0 && c.level < 1.0)) throw ConfigError("--level must lie in (0, 1)");
    if (!(c.kappa >= 1.0)) throw ConfigError("--kappa must be at least 1");
    return c;
}

void read_engines(const RunConfig& cfg, Common& c)
{
    c.cavi.tol = cfg.get("tol", c.cavi.tol);
    c.cavi.max_iters = cfg.get("max-iters", c.cavi.max_iters);
    c.cavi.validate();
    c.gibbs.n_draws = cfg.get("draws", c.gibbs.n_draws);
    c.gibbs.burn_in = cfg.get("burn-in", c.gibbs.burn_in);
    c.gibbs.thin = cfg.get("thin", c.gibbs.thin);
    c.gibbs.seed = derive_seed(c.seed, "gibbs");
    c.gibbs.validate();
}

json priors_json(const Priors& p)
{
    return {{"var_alpha", p.var_alpha}, {"var_beta", p.var_beta}, {"var_eta", p.var_eta}, {"a0", p.a0}, {"b0", p.b0}};
}

json to_json(const Vector& v)
{
    return json(std::vector<double>(v.data(), v.data() + v.size()));
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const json& j)
{
    write_text(path, j.dump(2) + "\n");
}

json read_json(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

// Minimal CSV writer with a fixed header; numbers are printed at 17 significant digits.
class CsvWriter {
public:
    CsvWriter(const fs::path& path, const std::vector<std::string>& header) : out_(path), path_(path)
    {
        if (!out_) throw DataError("cannot write " + path.string());
        row(header);
    }

    void row(const std::vector<std::string>& fields)
    {
        for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << fields[i];
        out_ << '\n';
    }

private:
    std::ofstream out_;
    fs::path path_;
};

std::string num(double v)
{
    return format_double(v);
}

// ---- simulate ----

DgpConfig dgp_from(const RunConfig& cfg, std::uint64_t seed)
{
    DgpConfig d = find_config(cfg.get<std::string>("dgp", "1A-1"));
    const bool resized = cfg.has("J");
    d.J = cfg.get("J", static_cast<int>(d.J));
    d.T = cfg.get("T", static_cast<int>(d.T));
    d.K = cfg.get("K", static_cast<int>(d.K));
    d.P = cfg.get("P", static_cast<int>(d.P));
    if (cfg.has("basis")) d.basis = basis_kind_from_string(cfg.get<std::string>("basis", ""));
    if (resized) {
        d.beta = default_betas(d.J, false);
        d.profiles = default_profiles(d.J);
    }
    if (cfg.has("profiles")) {
        d.profiles.clear();
        for (const auto& s : cfg.get<std::vector<std::string>>("profiles", {})) d.profiles.push_back(profile_from_string(s));
    }
    d.beta = cfg.get("beta", d.beta);
    d.alpha = cfg.get("alpha", d.alpha);
    d.sigma2 = cfg.get("sigma2", d.sigma2);
    d.x_rho = cfg.get("x-rho", d.x_rho);
    d.seed = seed;
    d.validate();
    return d;
}

std::vector<std::string> lag_header(Eigen::Index K)
{
    std::vector<std::string> h;
    for (Eigen::Index k = 0; k < K; ++k) h.push_back("lag" + std::to_string(k));
    return h;
}

int cmd_simulate(const RunConfig& cfg)
{
    const Common c = read_common(cfg);
    const DgpConfig d = dgp_from(cfg, c.seed);
    const SyntheticDataset sim = simulate(d);
    fs::create_directories(c.out);

    write_matrix_csv((c.out / "y.csv").string(), sim.dataset.y(), {"y"});
    json predictors = json::array();
    for (std::size_t j = 0; j < sim.dataset.J(); ++j) {
        const auto& p = sim.dataset.predictor(j);
        const std::string file = "x" + std::to_string(j + 1) + ".csv";
        write_matrix_csv((c.out / file).string(), p.x, lag_header(p.lags()));
        predictors.push_back({{"file", file}, {"K", p.lags()}, {"basis", to_string(p.basis.kind)}, {"P", p.basis.dim()}});
    }
    write_json(c.out / "dataset.json", {{"schema", "midasvi.dataset/1"},
                                        {"T", sim.dataset.T()},
                                        {"y", "y.csv"},
                                        {"predictors", predictors}});

    json profiles = json::array(), etas = json::array();
    for (std::size_t j = 0; j < sim.truth.profiles.size(); ++j) {
        profiles.push_back(to_json(sim.truth.profiles[j]));
        etas.push_back(to_json(sim.truth.eta[j]));
    }
    json shapes = json::array();
    for (auto p : d.profiles) shapes.push_back(to_string(p));
    write_json(c.out / "truth.json", {{"schema", "midasvi.truth/1"},
                                      {"config", {{"id", d.id},
                                                  {"J", d.J},
                                                  {"T", d.T},
                                                  {"K", d.K},
                                                  {"P", d.P},
                                                  {"basis", to_string(d.basis)},
                                                  {"profiles", shapes},
                                                  {"x_rho", d.x_rho},
                                                  {"seed", d.seed}}},
                                      {"alpha", sim.truth.alpha},
                                      {"beta", sim.truth.beta},
                                      {"sigma2", sim.truth.sigma2},
                                      {"weights", profiles},
                                      {"eta", etas},
                                      {"projection_rmse", sim.truth.projection_rmse}});
    std::cout << "wrote " << sim.dataset.J() << " predictor(s), T=" << sim.dataset.T() << " to " << c.out.string()
              << "\n";
    return 0;
}

// ---- fit ----

MidasDataset load_dataset(const fs::path& dir)
{
    const json meta = read_json(dir / "dataset.json");
    if (meta.value("schema", "") != "midasvi.dataset/1") throw DataError("dataset.json: unsupported schema");
    const Matrix y = read_matrix_csv((dir / meta.at("y").get<std::string>()).string());
    if (y.cols() != 1) throw DataError("y.csv must have exactly one column");
    std::vector<PredictorInput> inputs;
    for (const auto& p : meta.at("predictors")) {
        Matrix x = read_matrix_csv((dir / p.at("file").get<std::string>()).string());
        const auto K = p.at("K").get<Eigen::Index>();
        if (x.cols() != K) throw DataError(p.at("file").get<std::string>() + ": expected " + std::to_string(K) + " columns");
        inputs.push_back({std::move(x), make_basis(basis_kind_from_string(p.at("basis").get<std::string>()), K,
                                                   p.at("P").get<Eigen::Index>())});
    }
    return MidasDataset(y.col(0), std::move(inputs));
}

json interval_json(double mean, double sd, Interval iv)
{
    return {{"mean", mean}, {"sd", sd}, {"lo", iv.lo}, {"hi", iv.hi}};
}

void write_weights(const fs::path& path, const std::vector<WeightBand>& bands)
{
    CsvWriter w(path, {"predictor", "lag", "weight", "lo", "hi"});
    for (std::size_t j = 0; j < bands.size(); ++j)
        for (Eigen::Index k = 0; k < bands[j].mean.size(); ++k)
            w.row({std::to_string(j + 1), std::to_string(k), num(bands[j].mean(k)), num(bands[j].lo(k)),
                   num(bands[j].hi(k))});
}

json score(const json& truth, const json& estimate)
{
    const auto beta = truth.at("beta").get<std::vector<double>>();
    json out = {{"alpha_error", estimate.at("alpha").at("mean").get<double>() - truth.at("alpha").get<double>()}};
    json errs = json::array(), covered = json::array();
    for (std::size_t j = 0; j < beta.size(); ++j) {
        const auto& b = estimate.at("beta").at(j);
        errs.push_back(b.at("mean").get<double>() - beta[j]);
        covered.push_back(b.at("lo").get<double>() <= beta[j] && beta[j] <= b.at("hi").get<double>());
    }
    out["beta_error"] = errs;
    out["beta_covered"] = covered;
    json werr = json::array();
    const auto& weights = truth.at("weights");
    for (std::size_t j = 0; j < weights.size(); ++j) {
        const auto w = weights.at(j).get<std::vector<double>>();
        const auto est = estimate.at("weights").at(j).get<std::vector<double>>();
        if (w.size() != est.size()) throw DataError("truth.json: weight profile length differs from the dataset");
        double mae = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) mae += std::abs(est[k] - w[k]);
        werr.push_back(mae / static_cast<double>(w.size()));
    }
    out["weight_mae"] = werr;
    return out;
}

int cmd_fit(const RunConfig& cfg)
{
    Common c = read_common(cfg);
    read_engines(cfg, c);
    if (!cfg.has("data")) throw ConfigError("fit: --data is required");
    const fs::path data_dir = cfg.get<std::string>("data", "");
    const std::string method = cfg.get<std::string>("method", "both");
    if (method != "cavi" && method != "gibbs" && method != "both")
        throw ConfigError("fit: --method must be cavi, gibbs or both");
    const MidasDataset data = load_dataset(data_dir);
    fs::create_directories(c.out);

    std::optional<json> truth;
    if (cfg.has("truth")) truth = read_json(cfg.get<std::string>("truth", ""));
    else if (fs::exists(data_dir / "truth.json")) truth = read_json(data_dir / "truth.json");

    json doc = {{"schema", "midasvi.fit/1"},
                {"data", data_dir.string()},
                {"T", data.T()},
                {"J", data.J()},
                {"level", c.level},
                {"kappa", c.kappa},
                {"priors", priors_json(c.priors)}};
    json methods = json::object();
    int status = 0;

    if (method != "gibbs") {
        const CaviFit fit = fit_cavi(data, c.priors, c.cavi);
        json m;
        auto add = [&](const Param& p) {
            const auto g = marginal(fit, p);
            return interval_json(g.mean, g.sd, credible_interval(fit, p, c.level, c.kappa));
        };
        m["alpha"] = add(Param::alpha());
        m["beta"] = json::array();
        m["eta"] = json::array();
        m["weights"] = json::array();
        std::vector<WeightBand> bands;
        for (std::size_t j = 0; j < data.J(); ++j) {
            m["beta"].push_back(add(Param::beta(j)));
            json e = json::array();
            for (Eigen::Index i = 0; i < fit.etas[j].mu.size(); ++i) e.push_back(add(Param::eta(j, static_cast<std::size_t>(i))));
            m["eta"].push_back(e);
            bands.push_back(cavi_weight_band(fit, data, j, c.level, c.kappa));
            m["weights"].push_back(to_json(bands.back().mean));
        }
        const auto s2 = credible_interval(fit, Param::sigma2(), c.level);
        m["sigma2"] = {{"mean", fit.sigma.mean()}, {"a", fit.sigma.a}, {"b", fit.sigma.b}, {"lo", s2.lo}, {"hi", s2.hi}};
        m["elbo_trace"] = fit.elbo_trace;
        m["iters"] = fit.iters;
        m["converged"] = fit.converged;
        m["init_fallback"] = fit.init_fallback;
        m["seconds"] = fit.wall_time;
        if (truth) m["score"] = score(*truth, m);
        write_weights(c.out / "fig_weights_cavi.csv", bands);
        if (!fit.converged) {
            std::cerr << "warning: CAVI did not converge in " << fit.iters << " sweeps\n";
        }
        methods["cavi"] = m;
    }

    if (method != "cavi") {
        const GibbsChain chain = run_gibbs(data, c.priors, c.gibbs);
        const ChainSummary s = chain_summary(chain, c.level);
        json m;
        auto add = [&](const ParamSummary& p) {
            json v = interval_json(p.mean, p.sd, p.interval);
            v["ess"] = p.ess;
            return v;
        };
        m["beta"] = json::array();
        m["eta"] = json::array();
        for (std::size_t j = 0; j < data.J(); ++j) m["eta"].push_back(json::array());
        for (const auto& p : s.params) {
            switch (p.param.kind) {
            case Param::Kind::Alpha: m["alpha"] = add(p); break;
            case Param::Kind::Beta: m["beta"].push_back(add(p)); break;
            case Param::Kind::Eta: m["eta"][p.param.j].push_back(add(p)); break;
            case Param::Kind::Sigma2: m["sigma2"] = add(p); break;
            }
        }
        std::vector<WeightBand> bands;
        m["weights"] = json::array();
        for (std::size_t j = 0; j < data.J(); ++j) {
            bands.push_back(gibbs_weight_band(chain, data, j, c.level));
            m["weights"].push_back(to_json(bands.back().mean));
        }
        m["min_ess"] = s.min_ess;
        m["draws"] = c.gibbs.n_draws;
        m["burn_in"] = c.gibbs.burn_in;
        m["thin"] = c.gibbs.thin;
        m["seed"] = c.gibbs.seed;
        m["seconds"] = chain.wall_time;
        if (truth) m["score"] = score(*truth, m);
        write_weights(c.out / "fig_weights_gibbs.csv", bands);
        methods["gibbs"] = m;
    }
    doc["methods"] = methods;
    write_json(c.out / "fit.json", doc);
    std::cout << "wrote fit.json to " << c.out.string() << "\n";
    return status;
}

// ---- mc ----

std::vector<Method> parse_methods(const std::vector<std::string>& names)
{
    std::vector<Method> out;
    for (const auto& n : names) {
        if (n == "cavi") out.push_back(Method::Cavi);
        else if (n == "gibbs") out.push_back(Method::Gibbs);
        else throw ConfigError("unknown method '" + n + "'");
    }
    if (out.empty()) throw ConfigError("--methods is empty");
    return out;
}

int cmd_mc(const RunConfig& cfg)
{
    Common c = read_common(cfg);
    read_engines(cfg, c);
    const int reps = cfg.get("reps", 100);
    if (reps < 2) throw ConfigError("mc: --reps must be at least 2");
    std::vector<std::string> ids = cfg.get<std::vector<std::string>>("configs", {"1A-2"});
    if (ids.size() == 1 && ids[0] == "all") {
        ids.clear();
        for (const auto& d : tier_configs()) ids.push_back(d.id);
    }
    const bool calibration = cfg.get("calibration", false);
    const auto kappas = cfg.get<std::vector<double>>("kappas", {1.0, 1.1, 1.2, 1.3, 1.5, 2.0});
    if (kappas.empty()) throw ConfigError("mc: --kappas is empty");
    for (double k : kappas)
        if (!(k >= 1.0)) throw ConfigError("mc: kappa values must be at least 1");

    HarnessOptions options;
    options.priors = c.priors;
    options.cavi = c.cavi;
    options.gibbs = c.gibbs;
    options.level = c.level;
    options.kappa = c.kappa;

    std::vector<DgpConfig> configs;
    for (const auto& id : ids) configs.push_back(find_config(id));
    fs::create_directories(c.out);

    std::vector<MetricsRow> rows;
    std::vector<std::pair<std::string, CalibrationRow>> calib;
    json errors = json::array();
    int status = 0;
    for (const auto& d : configs) {
        const auto methods = cfg.has("methods") ? parse_methods(cfg.get<std::vector<std::string>>("methods", {}))
                                                : default_methods(d);
        std::cerr << d.id << ": " << reps << " replications\n";
        const auto results = run_config(d, reps, c.seed, methods, options, c.threads);
        for (const auto& r : results)
            for (auto m : methods) {
                const auto& res = r.result(m);
                if (!res || !res->ok) {
                    errors.push_back(json{{"config", d.id},
                                          {"rep", r.rep},
                                          {"method", to_string(m)},
                                          {"error", res ? res->error : std::string("missing")}});
                    status = 2;
                }
            }
        try {
            for (auto& row : aggregate(results)) rows.push_back(row);
        } catch (const std::exception& e) {
            errors.push_back(json{{"config", d.id}, {"error", e.what()}});
            status = 2;
            continue;
        }
        if (calibration)
            for (double k : kappas) calib.emplace_back(d.id, coverage_at_kappa(results, k, c.level));
    }

    {
        CsvWriter w(c.out / "metrics.csv",
                    {"config", "method", "reps", "failures", "bias_beta", "bias_beta_se", "signed_bias_beta",
                     "mae_beta", "rmse_beta", "rmse_beta_se", "cov95_beta", "cov95_beta_se", "bias_eta",
                     "bias_eta_se", "cov95_eta", "cov95_eta_se", "min_ess_mean", "min_ess_median", "mean_iters",
                     "mean_elbo"});
        for (const auto& r : rows)
            w.row({r.config_id, to_string(r.method), std::to_string(r.reps), std::to_string(r.failures),
                   num(r.bias_beta), num(r.bias_beta_se), num(r.signed_bias_beta), num(r.mae_beta), num(r.rmse_beta),
                   num(r.rmse_beta_se), num(r.cov95_beta), num(r.cov95_beta_se), num(r.bias_eta), num(r.bias_eta_se),
                   num(r.cov95_eta), num(r.cov95_eta_se), num(r.min_ess), num(r.min_ess_median), num(r.mean_iters),
                   num(r.mean_elbo)});
    }
    {
        CsvWriter w(c.out / "timing.csv", {"config", "method", "mean_time", "time_se"});
        for (const auto& r : rows)
            w.row({r.config_id, to_string(r.method), num(r.mean_time), num(r.time_se)});
    }
    {
        CsvWriter w(c.out / "fig_speedup.csv", {"config", "J", "T", "cavi_time", "gibbs_time", "speedup", "anomaly"});
        for (const auto& s : speedup_table(rows)) {
            const auto d = find_config(s.config_id);
            w.row({s.config_id, std::to_string(d.J), std::to_string(d.T), num(s.cavi_time), num(s.gibbs_time),
                   num(s.speedup), s.anomaly ? "1" : "0"});
        }
    }
    {
        CsvWriter w(c.out / "fig_ess.csv", {"config", "J", "T", "min_ess_mean", "min_ess_median"});
        for (const auto& r : rows)
            if (r.method == Method::Gibbs) {
                const auto d = find_config(r.config_id);
                w.row({r.config_id, std::to_string(d.J), std::to_string(d.T), num(r.min_ess), num(r.min_ess_median)});
            }
    }
    {
        CsvWriter w(c.out / "fig_coverage.csv",
                    {"config", "method", "cov95_beta", "cov95_beta_se", "cov95_eta", "cov95_eta_se"});
        for (const auto& r : rows)
            w.row({r.config_id, to_string(r.method), num(r.cov95_beta), num(r.cov95_beta_se), num(r.cov95_eta),
                   num(r.cov95_eta_se)});
    }
    if (calibration) {
        CsvWriter w(c.out / "calibration.csv", {"config", "kappa", "coverage", "coverage_se"});
        for (const auto& [id, r] : calib) w.row({id, num(r.kappa), num(r.coverage), num(r.coverage_se)});
    }

    json metrics = json::array();
    for (const auto& r : rows)
        metrics.push_back({{"config", r.config_id},
                           {"method", to_string(r.method)},
                           {"reps", r.reps},
                           {"failures", r.failures},
                           {"bias_beta", r.bias_beta},
                           {"bias_beta_se", r.bias_beta_se},
                           {"signed_bias_beta", r.signed_bias_beta},
                           {"mae_beta", r.mae_beta},
                           {"rmse_beta", r.rmse_beta},
                           {"rmse_beta_se", r.rmse_beta_se},
                           {"cov95_beta", r.cov95_beta},
                           {"cov95_beta_se", r.cov95_beta_se},
                           {"bias_eta", r.bias_eta},
                           {"bias_eta_se", r.bias_eta_se},
                           {"cov95_eta", r.cov95_eta},
                           {"cov95_eta_se", r.cov95_eta_se},
                           {"min_ess_mean", std::isnan(r.min_ess) ? json(nullptr) : json(r.min_ess)},
                           {"min_ess_median", std::isnan(r.min_ess_median) ? json(nullptr) : json(r.min_ess_median)},
                           {"mean_iters", r.mean_iters}});
    write_json(c.out / "metrics.json", {{"schema", "midasvi.mc/1"},
                                        {"seed", c.seed},
                                        {"reps", reps},
                                        {"priors", priors_json(c.priors)},
                                        {"metrics", metrics},
                                        {"errors", errors}});
    std::cout << "wrote " << rows.size() << " metric rows to " << c.out.string() << "\n";
    if (status) std::cerr << errors.size() << " failure(s); see metrics.json\n";
    return status;
}

// ---- forecast ----

int cmd_forecast(const RunConfig& cfg)
{
    Common c = read_common(cfg);
    read_engines(cfg, c);
    DailyReturns daily;
    std::string source;
    if (cfg.has("returns")) {
        source = cfg.get<std::string>("returns", "");
        daily = read_daily_returns_csv(source);
    } else {
        ReturnSimOptions sim;
        sim.months = static_cast<std::size_t>(cfg.get("months", 300));
        sim.seed = derive_seed(c.seed, "returns");
        daily = simulate_daily_returns(sim);
        source = "simulated";
    }

    RvDatasetOptions ro;
    ro.K = cfg.get("lags", static_cast<int>(ro.K));
    ro.J = cfg.get("blocks", static_cast<int>(ro.J));
    ro.P = cfg.get("order", static_cast<int>(ro.P));
    ro.warmup = static_cast<std::size_t>(cfg.get("warmup", static_cast<int>(ro.warmup)));
    if (cfg.has("basis")) ro.basis = basis_kind_from_string(cfg.get<std::string>("basis", ""));

    const RvSeries rv = realized_volatility(daily);
    for (const auto& w : rv.warnings) std::cerr << "warning: " << w << "\n";
    const RvDataset data = build_midas_rv_dataset(rv, daily, ro);

    std::vector<ForecastModel> models;
    for (const auto& s : cfg.get<std::vector<std::string>>(
             "models", {"midas_cavi", "midas_gibbs", "har", "ar1", "ar4", "histavg"}))
        models.push_back(forecast_model_from_string(s));
    if (models.empty()) throw ConfigError("forecast: --models is empty");
    const ForecastModel baseline =
        cfg.has("baseline") ? forecast_model_from_string(cfg.get<std::string>("baseline", ""))
        : std::find(models.begin(), models.end(), ForecastModel::HarRv) != models.end() ? ForecastModel::HarRv
                                                                                          : models.front();

    ForecastOptions fo;
    fo.initial_window = static_cast<std::size_t>(cfg.get("initial-window", 120));
    fo.priors = c.priors;
    fo.cavi = c.cavi;
    fo.gibbs = c.gibbs;

    fs::create_directories(c.out);
    std::vector<ForecastRun> runs;
    int status = 0;
    for (auto m : models) {
        std::cerr << to_string(m) << "\n";
        runs.push_back(expanding_window_forecast(data, m, fo));
        const auto& run = runs.back();
        for (std::size_t i = 0; i < run.size(); ++i)
            if (!run.errors[i].empty()) {
                std::cerr << "error: " << to_string(m) << " " << format_month(run.months[i]) << ": " << run.errors[i]
                          << "\n";
                status = 2;
            }
    }
    const auto table = forecast_metrics(runs, baseline);

    {
        CsvWriter w(c.out / "forecast_table.csv", {"model", "n", "mse", "mae", "rel_mse", "dm_stat", "dm_p"});
        for (const auto& r : table)
            w.row({to_string(r.model), std::to_string(r.n), num(r.mse), num(r.mae), num(r.rel_mse),
                   r.dm ? num(r.dm->statistic) : "", r.dm ? num(r.dm->p_value) : ""});
    }
    {
        CsvWriter w(c.out / "forecast_timing.csv", {"model", "seconds_per_month"});
        for (const auto& r : table) w.row({to_string(r.model), num(r.time_per_month)});
    }
    {
        std::vector<std::string> header{"month", "actual"};
        for (const auto& r : runs) header.push_back(to_string(r.model));
        CsvWriter w(c.out / "fig_forecasts.csv", header);
        for (std::size_t i = 0; i < runs.front().size(); ++i) {
            std::vector<std::string> row{format_month(runs.front().months[i]), num(runs.front().actual[i])};
            for (const auto& r : runs) row.push_back(num(r.forecast[i]));
            w.row(row);
        }
    }
    const bool midas = std::any_of(models.begin(), models.end(), [](ForecastModel m) {
        return m == ForecastModel::MidasCavi || m == ForecastModel::MidasGibbs;
    });
    if (midas) {
        const CaviFit fit = fit_cavi(data.dataset, c.priors, c.cavi);
        std::vector<WeightBand> bands;
        for (std::size_t j = 0; j < data.dataset.J(); ++j)
            bands.push_back(cavi_weight_band(fit, data.dataset, j, c.level, c.kappa));
        write_weights(c.out / "fig_weights_forecast.csv", bands);
    }
    write_json(c.out / "forecast.json", {{"schema", "midasvi.forecast/1"},
                                         {"source", source},
                                         {"months", rv.size()},
                                         {"dropped_months", rv.dropped.size()},
                                         {"rows", data.T()},
                                         {"first_target", format_month(rv.months[data.target.front()])},
                                         {"initial_window", fo.initial_window},
                                         {"forecasts", runs.front().size()},
                                         {"baseline", to_string(baseline)}});
    std::cout << "wrote " << runs.front().size() << " forecast months to " << c.out.string() << "\n";
    return status;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Variational and Gibbs inference for Bayesian MIDAS regression"};
    app.require_subcommand(1);

    struct Sub {
        CLI::App* app;
        std::vector<Key> keys;
        FlagValues values;
        std::string config;
        int (*run)(const RunConfig&);
    };
    std::vector<std::unique_ptr<Sub>> subs;
    auto add = [&](const char* name, const char* help, std::vector<Key> keys, int (*run)(const RunConfig&)) {
        auto s = std::make_unique<Sub>();
        s->app = app.add_subcommand(name, help);
        s->keys = std::move(keys);
        s->run = run;
        s->app->add_option("--config", s->config, "JSON config file; flags override its values");
        register_keys(*s->app, s->keys, s->values);
        subs.push_back(std::move(s));
    };
    add("simulate", "Generate a synthetic dataset and its truth", concat({&common_keys, &simulate_keys}), cmd_simulate);
    add("fit", "Fit a dataset with CAVI and/or Gibbs", concat({&common_keys, &engine_keys, &fit_keys}), cmd_fit);
    add("mc", "Monte Carlo study over named configurations", concat({&common_keys, &engine_keys, &mc_keys}), cmd_mc);
    add("forecast", "Expanding-window realized-volatility forecasts", concat({&common_keys, &engine_keys, &forecast_keys}),
        cmd_forecast);

    CLI11_PARSE(app, argc, argv);

    for (auto& s : subs) {
        if (!s->app->parsed()) continue;
        try {
            const RunConfig cfg(s->config, s->keys, s->values);
            return s->run(cfg);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 1;
        }
    }
    return 1;
}
