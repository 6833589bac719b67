#include "eqevid/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"

#include "eqevid/errors.hpp"
#include "eqevid/serialize.hpp"

namespace eqevid {

using nlohmann::json;
namespace fs = std::filesystem;

void RunConfig::apply_seed(std::uint64_t s) {
    seed = s;
    dataset.seed = s;
    split.seed = s;
    train.seed = s;
}

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& dst) {
    if (j.contains(key) && !j[key].is_null()) dst = j[key].get<T>();
}

} // namespace

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    try {
        if (j.contains("dataset")) {
            const json& d = j["dataset"];
            read_opt(d, "n_configs", c.dataset.n_configs);
            read_opt(d, "min_atoms", c.dataset.min_atoms);
            read_opt(d, "max_atoms", c.dataset.max_atoms);
            read_opt(d, "rho_min", c.dataset.rho_min);
            read_opt(d, "rho_max", c.dataset.rho_max);
            read_opt(d, "min_separation", c.dataset.min_separation);
            read_opt(d, "sigma_iso", c.dataset.sigma_iso);
            read_opt(d, "sigma_aniso", c.dataset.sigma_aniso);
            read_opt(d, "cutoff", c.dataset.cutoff);
        }
        if (j.contains("split")) {
            const json& s = j["split"];
            read_opt(s, "ood_fraction", c.split.ood_fraction);
            if (s.contains("threshold") && !s["threshold"].is_null()) {
                c.split.threshold = s["threshold"].get<double>();
            }
            read_opt(s, "train_fraction", c.split.train_fraction);
            read_opt(s, "val_fraction", c.split.val_fraction);
        }
        if (j.contains("train")) {
            const json& t = j["train"];
            read_opt(t, "learning_rate", c.train.optimizer.learning_rate);
            read_opt(t, "beta1", c.train.optimizer.beta1);
            read_opt(t, "beta2", c.train.optimizer.beta2);
            read_opt(t, "weight_decay", c.train.optimizer.weight_decay);
            read_opt(t, "plateau_factor", c.train.optimizer.plateau_factor);
            read_opt(t, "plateau_patience", c.train.optimizer.plateau_patience);
            read_opt(t, "epochs", c.train.epochs);
            read_opt(t, "batch_size", c.train.batch_size);
            read_opt(t, "max_steps", c.train.max_steps);
            read_opt(t, "energy_weight", c.train.weights.energy);
            read_opt(t, "force_weight", c.train.weights.forces);
            read_opt(t, "reg_weight", c.train.weights.reg);
            read_opt(t, "damper_threshold", c.train.head.damper.threshold);
            read_opt(t, "damper_ceiling", c.train.head.damper.ceiling);
            read_opt(t, "damper_epsilon", c.train.head.damper.epsilon);
            read_opt(t, "damper_enabled", c.train.head.damping);
            read_opt(t, "n_rbf", c.train.n_rbf);
            read_opt(t, "cutoff", c.train.cutoff);
            read_opt(t, "hidden", c.train.hidden);
            read_opt(t, "tensor_init_scale", c.train.tensor_init_scale);
            read_opt(t, "warm_start", c.train.warm_start);
        }
        if (j.contains("eval")) {
            const json& e = j["eval"];
            read_opt(e, "es_samples", c.eval.es_samples);
            read_opt(e, "n_rotations", c.n_rotations);
            read_opt(e, "equivariance_configs", c.equivariance_configs);
        }
        if (j.contains("ensemble")) {
            const json& e = j["ensemble"];
            read_opt(e, "members", c.ensemble_members);
            read_opt(e, "p_target", c.ensemble.p_target);
        }
        std::uint64_t seed = 0;
        read_opt(j, "seed", seed);
        c.apply_seed(seed);
    } catch (const json::exception& e) {
        throw InputError(std::string("config: ") + e.what());
    }
    return c;
}

json to_json(const RunConfig& c) {
    return {
        {"seed", c.seed},
        {"dataset",
         {{"n_configs", c.dataset.n_configs}, {"min_atoms", c.dataset.min_atoms},
          {"max_atoms", c.dataset.max_atoms}, {"rho_min", c.dataset.rho_min},
          {"rho_max", c.dataset.rho_max}, {"min_separation", c.dataset.min_separation},
          {"sigma_iso", c.dataset.sigma_iso}, {"sigma_aniso", c.dataset.sigma_aniso},
          {"cutoff", c.dataset.cutoff}}},
        {"split",
         {{"ood_fraction", c.split.ood_fraction},
          {"threshold", c.split.threshold ? json(*c.split.threshold) : json(nullptr)},
          {"train_fraction", c.split.train_fraction}, {"val_fraction", c.split.val_fraction}}},
        {"train",
         {{"learning_rate", c.train.optimizer.learning_rate}, {"beta1", c.train.optimizer.beta1},
          {"beta2", c.train.optimizer.beta2}, {"weight_decay", c.train.optimizer.weight_decay},
          {"plateau_factor", c.train.optimizer.plateau_factor},
          {"plateau_patience", c.train.optimizer.plateau_patience}, {"epochs", c.train.epochs},
          {"batch_size", c.train.batch_size}, {"max_steps", c.train.max_steps},
          {"energy_weight", c.train.weights.energy}, {"force_weight", c.train.weights.forces},
          {"reg_weight", c.train.weights.reg}, {"damper_threshold", c.train.head.damper.threshold},
          {"damper_ceiling", c.train.head.damper.ceiling},
          {"damper_epsilon", c.train.head.damper.epsilon},
          {"damper_enabled", c.train.head.damping}, {"n_rbf", c.train.n_rbf},
          {"cutoff", c.train.cutoff}, {"hidden", c.train.hidden},
          {"tensor_init_scale", c.train.tensor_init_scale}, {"warm_start", c.train.warm_start}}},
        {"eval",
         {{"es_samples", c.eval.es_samples}, {"n_rotations", c.n_rotations},
          {"equivariance_configs", c.equivariance_configs}}},
        {"ensemble", {{"members", c.ensemble_members}, {"p_target", c.ensemble.p_target}}},
    };
}

json to_json(const RunReport& r) {
    json epochs = json::array();
    for (const EpochRecord& e : r.epochs) {
        epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss},
                          {"learning_rate", e.learning_rate}});
    }
    double cmax = 0.0, cmin = 0.0;
    if (!r.condition.empty()) {
        cmin = r.condition.front().min;
        for (const ConditionRecord& c : r.condition) {
            cmax = std::max(cmax, c.max);
            cmin = std::min(cmin, c.min);
        }
    }
    json j = {{"steps", r.steps},
              {"epochs", epochs},
              {"condition_ratio", {{"batches", r.condition.size()}, {"min", cmin}, {"max", cmax}}}};
    if (r.failure) {
        j["failure"] = {{"step", r.failure->step}, {"class", r.failure->failure_class},
                        {"message", r.failure->message}};
    } else {
        j["failure"] = nullptr;
    }
    return j;
}

namespace {

struct Globals {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir = ".";
    bool deterministic = false;
};

RunConfig load_config(const Globals& g) {
    RunConfig c = g.config_path.empty() ? RunConfig{} : run_config_from_json(read_json(g.config_path));
    if (g.seed_set) c.apply_seed(g.seed);
    c.train.deterministic = c.train.deterministic || g.deterministic;
    return c;
}

fs::path out_path(const Globals& g, const std::string& name) {
    fs::create_directories(g.out_dir);
    return fs::path(g.out_dir) / name;
}

const std::vector<Configuration>& pick_split(const DatasetSplit& split,
                                             const std::vector<Configuration>& all,
                                             const std::string& name) {
    if (name == "train") return split.train;
    if (name == "val") return split.val;
    if (name == "test_id") return split.test_id;
    if (name == "test_ood") return split.test_ood;
    if (name == "all") return all;
    throw InputError("unknown split '" + name + "' (train, val, test_id, test_ood, all)");
}

void write_condition_csv(const fs::path& path, const RunReport& r) {
    std::vector<std::vector<double>> rows;
    rows.reserve(r.condition.size());
    for (const ConditionRecord& c : r.condition) {
        rows.push_back({static_cast<double>(c.step), c.mean, c.min, c.max});
    }
    write_csv(path, "step,mean,min,max", rows);
}

void write_curve_csv(const fs::path& path, const CalibrationReport& r) {
    std::vector<std::vector<double>> rows;
    for (std::size_t m = 0; m < r.grid.size(); ++m) rows.push_back({r.grid[m], r.obs[m]});
    write_csv(path, "p,obs", rows);
}

void write_deviation_csv(const fs::path& path, const EquivarianceResult& e) {
    std::vector<std::vector<double>> rows;
    rows.reserve(e.records.size());
    for (const DeviationRecord& d : e.records) {
        rows.push_back({static_cast<double>(d.rotation), static_cast<double>(d.config),
                        static_cast<double>(d.atom), static_cast<double>(d.kind),
                        static_cast<double>(d.component), d.value});
    }
    write_csv(path, "rotation,config,atom,kind,component,deviation", rows);
}

json equivariance_json(const EquivarianceResult& e) {
    json hist = json::object();
    for (int kind : {0, 1}) {
        json bins = json::array();
        for (const auto& [center, count] : deviation_histogram(e.records, kind, 41)) {
            bins.push_back({center, count});
        }
        hist[kind == 0 ? "force" : "covariance"] = bins;
    }
    return {{"rotations", e.rho_rotated.size()},
            {"max_abs_force_dev", e.max_force_dev},
            {"max_abs_cov_dev", e.max_cov_dev},
            {"rho_original", e.rho_original},
            {"max_abs_delta_rho", e.max_abs_delta_rho},
            {"histogram", hist}};
}

std::vector<Configuration> head_of(const std::vector<Configuration>& set, int n) {
    return {set.begin(), set.begin() + std::min<std::ptrdiff_t>(n, static_cast<std::ptrdiff_t>(set.size()))};
}

struct Manifest {
    std::vector<std::string> members;
    std::optional<double> sigma_sq;
    double p_target = 0.9;
    json extra = json::object();
};

Manifest read_manifest(const fs::path& path) {
    const json j = read_json(path);
    Manifest m;
    try {
        m.members = j.at("members").get<std::vector<std::string>>();
        if (j.contains("sigma_sq") && !j["sigma_sq"].is_null()) m.sigma_sq = j["sigma_sq"].get<double>();
        read_opt(j, "p_target", m.p_target);
        if (j.contains("calibration")) m.extra = j["calibration"];
    } catch (const json::exception& e) {
        throw InputError(std::string("manifest: ") + e.what());
    }
    if (m.members.size() < 2) throw InputError("manifest: need at least two members");
    return m;
}

void write_manifest(const fs::path& path, const Manifest& m) {
    write_json(path, {{"members", m.members},
                      {"sigma_sq", m.sigma_sq ? json(*m.sigma_sq) : json(nullptr)},
                      {"p_target", m.p_target},
                      {"calibration", m.extra}});
}

std::vector<ModelParams> load_members(const fs::path& manifest_path, const Manifest& m) {
    std::vector<ModelParams> out;
    for (const std::string& p : m.members) {
        fs::path mp(p);
        if (mp.is_relative()) mp = manifest_path.parent_path() / mp;
        out.push_back(checkpoint_from_json(read_json(mp)).params);
    }
    return out;
}

int cmd_gen_data(const Globals& g, std::ostream& out) {
    const RunConfig c = load_config(g);
    const std::vector<Configuration> data = generate_dataset(c.dataset);
    const fs::path path = out_path(g, "dataset.jsonl");
    write_dataset(path, data);
    out << "wrote " << data.size() << " configurations to " << path.string() << '\n';
    return kExitOk;
}

int cmd_train(const Globals& g, const std::string& data_path, bool no_damper, int epochs,
              std::ostream& out, std::ostream& err) {
    RunConfig c = load_config(g);
    if (no_damper) c.train.head.damping = false;
    if (epochs >= 0) c.train.epochs = epochs;
    const std::vector<Configuration> data = read_dataset(data_path);
    const DatasetSplit split = ood_split(data, c.split);
    const TrainResult res = train(split.train, split.val, c.train);
    write_json(out_path(g, "checkpoint.json"), to_json(Checkpoint{res.params, c.train.head, c.train.weights}));
    write_json(out_path(g, "run_report.json"), to_json(res.report));
    write_condition_csv(out_path(g, "condition_ratio.csv"), res.report);
    if (res.report.failure) {
        err << "numerical failure: " << res.report.failure->failure_class << " at step "
            << res.report.failure->step << ": " << res.report.failure->message << '\n';
        return kExitNumerical;
    }
    out << "trained " << res.report.steps << " steps\n";
    return kExitOk;
}

int cmd_eval(const Globals& g, const std::string& checkpoint, const std::string& manifest,
             const std::string& data_path, const std::string& split_name, std::ostream& out) {
    const RunConfig c = load_config(g);
    const std::vector<Configuration> data = read_dataset(data_path);
    const DatasetSplit split = ood_split(data, c.split);
    const std::vector<Configuration>& set = pick_split(split, data, split_name);
    std::mt19937_64 rng(c.seed);
    EvalResult res;
    json j;
    if (!manifest.empty()) {
        const Manifest m = read_manifest(manifest);
        const std::vector<ModelParams> members = load_members(manifest, m);
        const double s2 = m.sigma_sq.value_or(0.0);
        res = evaluate_ensemble(members, s2, set, rng, c.eval);
        j = to_json(res.report);
        j["family"] = "gaussian";
        j["sigma_sq"] = s2;
    } else {
        const Checkpoint ck = checkpoint_from_json(read_json(checkpoint));
        res = evaluate(ck.params, ck.head, set, rng, c.eval);
        j = to_json(res.report);
        j["family"] = "student_t";
    }
    j["split"] = split_name;
    write_json(out_path(g, "report.json"), j);
    write_curve_csv(out_path(g, "calibration_curve.csv"), res.report);
    out << "evaluated " << res.report.n << " atoms on " << split_name << '\n';
    return kExitOk;
}

int cmd_verify(const Globals& g, const std::string& checkpoint, const std::string& data_path,
               const std::string& split_name, int rotations, std::ostream& out) {
    RunConfig c = load_config(g);
    if (rotations > 0) c.n_rotations = rotations;
    const std::vector<Configuration> data = read_dataset(data_path);
    const DatasetSplit split = ood_split(data, c.split);
    const std::vector<Configuration> sample = head_of(pick_split(split, data, split_name), c.equivariance_configs);
    const Checkpoint ck = checkpoint_from_json(read_json(checkpoint));
    std::mt19937_64 rng(c.seed);
    const EquivarianceResult e = verify_equivariance(ck.params, ck.head, sample, c.n_rotations, rng);
    write_deviation_csv(out_path(g, "equivariance_dev.csv"), e);
    write_json(out_path(g, "equivariance_summary.json"), equivariance_json(e));
    out << "max |dF| = " << e.max_force_dev << ", max |dU| = " << e.max_cov_dev
        << ", max |delta rho| = " << e.max_abs_delta_rho << '\n';
    return kExitOk;
}

int cmd_ensemble_train(const Globals& g, const std::string& data_path, int members,
                       std::ostream& out, std::ostream& err) {
    RunConfig c = load_config(g);
    if (members > 0) c.ensemble_members = members;
    if (c.ensemble_members < 2) throw InputError("ensemble-train: need at least two members");
    const std::vector<Configuration> data = read_dataset(data_path);
    const DatasetSplit split = ood_split(data, c.split);
    Manifest m;
    m.p_target = c.ensemble.p_target;
    for (int k = 0; k < c.ensemble_members; ++k) {
        TrainConfig tc = c.train;
        tc.seed = c.seed + static_cast<std::uint64_t>(k) + 1;
        const TrainResult res = train(split.train, split.val, tc);
        if (res.report.failure) {
            err << "numerical failure in member " << k << ": " << res.report.failure->failure_class << '\n';
            return kExitNumerical;
        }
        const std::string name = "member_" + std::to_string(k) + ".json";
        write_json(out_path(g, name), to_json(Checkpoint{res.params, tc.head, tc.weights}));
        m.members.push_back(name);
    }
    write_manifest(out_path(g, "manifest.json"), m);
    out << "trained " << m.members.size() << " ensemble members\n";
    return kExitOk;
}

int cmd_ensemble_calibrate(const Globals& g, const std::string& manifest_path,
                           const std::string& data_path, std::ostream& out) {
    const RunConfig c = load_config(g);
    Manifest m = read_manifest(manifest_path);
    const std::vector<ModelParams> members = load_members(manifest_path, m);
    const std::vector<Configuration> data = read_dataset(data_path);
    const DatasetSplit split = ood_split(data, c.split);
    std::vector<Vec3> residuals;
    std::vector<SymMat3> covs;
    ensemble_residuals(members, split.val, residuals, covs);
    EnsembleCalibration cal = c.ensemble;
    cal.p_target = m.p_target;
    const Sigma2Fit fit = calibrate_sigma2(residuals, covs, cal);
    m.sigma_sq = fit.sigma_sq;
    m.extra = {{"val_coverage", fit.coverage}, {"reached", fit.reached}, {"iterations", fit.iterations}};
    write_manifest(manifest_path, m);
    out << "sigma^2 = " << fit.sigma_sq << " (validation coverage " << fit.coverage << ")\n";
    return kExitOk;
}

int cmd_report(const Globals& g, const std::string& checkpoint, const std::string& manifest,
               const std::string& data_path, std::ostream& out) {
    const RunConfig c = load_config(g);
    const std::vector<Configuration> data = read_dataset(data_path);
    const DatasetSplit split = ood_split(data, c.split);
    const Checkpoint ck = checkpoint_from_json(read_json(checkpoint));
    std::mt19937_64 rng(c.seed);
    json j;
    j["config"] = to_json(c);
    j["ood_threshold"] = split.threshold;
    const EvalResult id = evaluate(ck.params, ck.head, split.test_id, rng, c.eval);
    const EvalResult ood = evaluate(ck.params, ck.head, split.test_ood, rng, c.eval);
    j["evidential"] = {{"test_id", to_json(id.report)}, {"test_ood", to_json(ood.report)}};
    write_curve_csv(out_path(g, "calibration_curve.csv"), id.report);

    const EquivarianceResult e = verify_equivariance(
        ck.params, ck.head, head_of(split.test_ood, c.equivariance_configs), c.n_rotations, rng);
    j["equivariance"] = equivariance_json(e);
    write_deviation_csv(out_path(g, "equivariance_dev.csv"), e);

    if (!manifest.empty()) {
        const Manifest m = read_manifest(manifest);
        const std::vector<ModelParams> members = load_members(manifest, m);
        const double s2 = m.sigma_sq.value_or(0.0);
        j["ensemble"] = {
            {"sigma_sq", s2},
            {"raw", {{"test_id", to_json(evaluate_ensemble(members, 0.0, split.test_id, rng, c.eval).report)}}},
            {"calibrated",
             {{"test_id", to_json(evaluate_ensemble(members, s2, split.test_id, rng, c.eval).report)},
              {"test_ood", to_json(evaluate_ensemble(members, s2, split.test_ood, rng, c.eval).report)}}},
        };
    }
    write_json(out_path(g, "report.json"), j);
    out << "wrote report for " << id.report.n << " in-distribution and " << ood.report.n
        << " out-of-distribution atoms\n";
    return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Equivariant evidential force uncertainty toolkit", "eqevid"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config_path, "JSON run configuration");
    app.add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& s) { g.seed = s; g.seed_set = true; }, "Random seed");
    app.add_option("--out", g.out_dir, "Output directory");
    app.add_flag("--deterministic", g.deterministic, "Fixed-order reductions");

    std::string data, checkpoint, manifest, split_name = "test_id";
    bool no_damper = false;
    int epochs = -1, rotations = 0, members = 0;

    CLI::App* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
    CLI::App* tr = app.add_subcommand("train", "Train an evidential model");
    tr->add_option("--data", data, "Dataset JSON-lines")->required();
    tr->add_flag("--no-damper", no_damper, "Disable spectral damping (ablation)");
    tr->add_option("--epochs", epochs, "Override the configured epoch count");
    CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint or an ensemble");
    ev->add_option("--data", data)->required();
    auto* ck_opt = ev->add_option("--checkpoint", checkpoint);
    auto* mf_opt = ev->add_option("--manifest", manifest);
    ck_opt->excludes(mf_opt);
    ev->add_option("--split", split_name, "train, val, test_id, test_ood or all");
    CLI::App* ver = app.add_subcommand("verify-equivariance", "Random-rotation deviation test");
    ver->add_option("--checkpoint", checkpoint)->required();
    ver->add_option("--data", data)->required();
    ver->add_option("--split", split_name);
    ver->add_option("--rotations", rotations);
    CLI::App* ens = app.add_subcommand("ensemble-train", "Train ensemble members");
    ens->add_option("--data", data)->required();
    ens->add_option("--members", members);
    CLI::App* cal = app.add_subcommand("ensemble-calibrate", "Fit the isotropic variance floor");
    cal->add_option("--manifest", manifest)->required();
    cal->add_option("--data", data)->required();
    CLI::App* rep = app.add_subcommand("report", "Evaluate, verify and compare in one report");
    rep->add_option("--checkpoint", checkpoint)->required();
    rep->add_option("--data", data)->required();
    rep->add_option("--manifest", manifest);

    std::vector<std::string> storage = args;
    if (storage.empty()) storage.push_back("eqevid");
    std::vector<char*> argv;
    for (std::string& s : storage) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n' << app.help();
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(g, out);
        if (tr->parsed()) return cmd_train(g, data, no_damper, epochs, out, err);
        if (ev->parsed()) {
            if (checkpoint.empty() && manifest.empty()) {
                throw InputError("eval: need --checkpoint or --manifest");
            }
            return cmd_eval(g, checkpoint, manifest, data, split_name, out);
        }
        if (ver->parsed()) return cmd_verify(g, checkpoint, data, split_name, rotations, out);
        if (ens->parsed()) return cmd_ensemble_train(g, data, members, out, err);
        if (cal->parsed()) return cmd_ensemble_calibrate(g, manifest, data, out);
        if (rep->parsed()) return cmd_report(g, checkpoint, manifest, data, out);
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.failure_class() << ": " << e.what() << '\n';
        return kExitNumerical;
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

} // namespace eqevid
