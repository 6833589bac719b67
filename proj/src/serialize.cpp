#include "eqevid/serialize.hpp"

#include <fstream>
#include <sstream>

#include "eqevid/errors.hpp"

namespace eqevid {

using nlohmann::json;

namespace {

json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec_from(const json& j) {
    if (!j.is_array() || j.size() != 3) throw InputError("expected a 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json sym_json(const SymMat3& s) {
    return json::array({json::array({s.d1, s.o12, s.o13}), json::array({s.o12, s.d2, s.o23}),
                        json::array({s.o13, s.o23, s.d3})});
}

SymMat3 sym_from(const json& j) {
    if (!j.is_array() || j.size() != 3) throw InputError("expected a 3x3 matrix");
    const auto at = [&](int r, int c) { return j.at(r).at(c).get<double>(); };
    return {at(0, 0), at(1, 1), at(2, 2), 0.5 * (at(0, 1) + at(1, 0)), 0.5 * (at(0, 2) + at(2, 0)),
            0.5 * (at(1, 2) + at(2, 1))};
}

json block_json(const DenseBlock& b) {
    return {{"n_in", b.n_in}, {"hidden", b.hidden}, {"w1", b.w1}, {"b1", b.b1}, {"w2", b.w2}, {"b2", b.b2}};
}

DenseBlock block_from(const json& j) {
    DenseBlock b;
    b.n_in = j.at("n_in").get<int>();
    b.hidden = j.at("hidden").get<int>();
    b.w1 = j.at("w1").get<std::vector<double>>();
    b.b1 = j.at("b1").get<std::vector<double>>();
    b.w2 = j.at("w2").get<std::vector<double>>();
    b.b2 = j.at("b2").get<double>();
    if (b.w1.size() != static_cast<std::size_t>(b.n_in * b.hidden) ||
        b.b1.size() != static_cast<std::size_t>(b.hidden) || b.w2.size() != static_cast<std::size_t>(b.hidden)) {
        throw InputError("checkpoint: dense block shape mismatch");
    }
    return b;
}

} // namespace

json to_json(const Configuration& c) {
    json j;
    j["species"] = c.species;
    json pos = json::array(), frc = json::array();
    for (const Vec3& p : c.positions) pos.push_back(vec_json(p));
    for (const Vec3& f : c.forces) frc.push_back(vec_json(f));
    j["positions"] = std::move(pos);
    j["energy"] = c.energy;
    j["forces"] = std::move(frc);
    if (c.noise_cov) {
        json cov = json::array();
        for (const SymMat3& s : *c.noise_cov) cov.push_back(sym_json(s));
        j["noise_cov"] = std::move(cov);
    }
    return j;
}

Configuration configuration_from_json(const json& j) {
    Configuration c;
    c.species = j.at("species").get<std::vector<int>>();
    for (const json& p : j.at("positions")) c.positions.push_back(vec_from(p));
    c.energy = j.at("energy").get<double>();
    for (const json& f : j.at("forces")) c.forces.push_back(vec_from(f));
    if (j.contains("noise_cov") && !j["noise_cov"].is_null()) {
        std::vector<SymMat3> cov;
        for (const json& s : j["noise_cov"]) cov.push_back(sym_from(s));
        c.noise_cov = std::move(cov);
    }
    c.validate();
    return c;
}

void write_dataset(const std::filesystem::path& path, const std::vector<Configuration>& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    for (const Configuration& c : data) out << to_json(c).dump() << '\n';
}

std::vector<Configuration> read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path.string());
    std::vector<Configuration> data;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            data.push_back(configuration_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return data;
}

json to_json(const Checkpoint& c) {
    const ModelParams& p = c.params;
    return {
        {"format_version", kCheckpointFormatVersion},
        {"basis", {{"n_rbf", p.basis.n_rbf}, {"cutoff", p.basis.cutoff}}},
        {"params",
         {{"energy_w", p.energy_w},
          {"iso_w", p.iso_w},
          {"iso_bias", p.iso_bias},
          {"aniso_w", p.aniso_w},
          {"nu_block", block_json(p.nu_block)},
          {"kappa_block", block_json(p.kappa_block)}}},
        {"damper",
         {{"threshold", c.head.damper.threshold},
          {"ceiling", c.head.damper.ceiling},
          {"epsilon", c.head.damper.epsilon},
          {"enabled", c.head.damping}}},
        {"loss_weights", {{"energy", c.weights.energy}, {"forces", c.weights.forces}, {"reg", c.weights.reg}}},
    };
}

Checkpoint checkpoint_from_json(const json& j) {
    try {
        if (j.at("format_version").get<int>() != kCheckpointFormatVersion) {
            throw InputError("checkpoint: unsupported format_version");
        }
        Checkpoint c;
        ModelParams& p = c.params;
        p.basis.n_rbf = j.at("basis").at("n_rbf").get<int>();
        p.basis.cutoff = j.at("basis").at("cutoff").get<double>();
        const json& pj = j.at("params");
        p.energy_w = pj.at("energy_w").get<std::vector<double>>();
        p.iso_w = pj.at("iso_w").get<std::vector<double>>();
        p.iso_bias = pj.at("iso_bias").get<double>();
        p.aniso_w = pj.at("aniso_w").get<std::vector<double>>();
        p.nu_block = block_from(pj.at("nu_block"));
        p.kappa_block = block_from(pj.at("kappa_block"));
        const auto n = static_cast<std::size_t>(p.basis.n_rbf);
        if (p.energy_w.size() != n || p.iso_w.size() != n || p.aniso_w.size() != n ||
            p.nu_block.n_in != p.basis.n_rbf || p.kappa_block.n_in != p.basis.n_rbf) {
            throw InputError("checkpoint: parameter shapes do not match n_rbf");
        }
        const json& d = j.at("damper");
        c.head.damper.threshold = d.at("threshold").get<double>();
        c.head.damper.ceiling = d.at("ceiling").get<double>();
        c.head.damper.epsilon = d.at("epsilon").get<double>();
        c.head.damping = d.at("enabled").get<bool>();
        const json& w = j.at("loss_weights");
        c.weights.energy = w.at("energy").get<double>();
        c.weights.forces = w.at("forces").get<double>();
        c.weights.reg = w.at("reg").get<double>();
        return c;
    } catch (const json::exception& e) {
        throw InputError(std::string("checkpoint: ") + e.what());
    }
}

json to_json(const CalibrationReport& r) {
    json cov = json::object();
    for (const auto& [p, obs] : r.coverage) {
        std::ostringstream key;
        key << p;
        cov[key.str()] = obs;
    }
    return {
        {"n", r.n},
        {"force_mae", r.force_mae},
        {"nll", r.nll},
        {"energy_score", r.energy_score},
        {"ce_l1", r.ce_l1},
        {"coverage", cov},
        {"spearman_rho", r.spearman_rho},
        {"spearman_degenerate", r.spearman_degenerate},
        {"mean_u_scalar", r.mean_u_scalar},
        {"grid", r.grid},
        {"obs", r.obs},
    };
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void write_csv(const std::filesystem::path& path, const std::string& header,
               const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out.precision(17);
    out << header << '\n';
    for (const auto& row : rows) {
        for (std::size_t k = 0; k < row.size(); ++k) {
            if (k) out << ',';
            out << row[k];
        }
        out << '\n';
    }
}

} // namespace eqevid
