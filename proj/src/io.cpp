#include "twocabin/io.hpp"

#include <charconv>
#include <fstream>
#include <stdexcept>

#include "twocabin/common.hpp"

namespace twocabin {

namespace {
constexpr int kModelFormatVersion = 1;
}

std::string format_double(double x) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

void to_json(nlohmann::json& j, const FlightParams& p) {
    j = nlohmann::json{{"mu_l", p.mu_l},       {"cv_l", p.cv_l},
                       {"delta_b", p.delta_b}, {"cv_b", p.cv_b},
                       {"mu_xi", p.mu_xi},     {"lambda0", p.lambda0},
                       {"d_lambda", p.d_lambda}, {"d_theta", p.d_theta},
                       {"T", p.T},             {"c_e", p.c_e},
                       {"c_f", p.c_f}};
}

void from_json(const nlohmann::json& j, FlightParams& p) {
    j.at("mu_l").get_to(p.mu_l);
    j.at("cv_l").get_to(p.cv_l);
    j.at("delta_b").get_to(p.delta_b);
    j.at("cv_b").get_to(p.cv_b);
    j.at("mu_xi").get_to(p.mu_xi);
    j.at("lambda0").get_to(p.lambda0);
    j.at("d_lambda").get_to(p.d_lambda);
    j.at("d_theta").get_to(p.d_theta);
    p.T = j.value("T", 8);
    p.c_e = j.value("c_e", 14.0);
    p.c_f = j.value("c_f", 40.0);
}

void to_json(nlohmann::json& j, const SolverConfig& cfg) {
    j = nlohmann::json{
        {"release_mode", static_cast<int>(cfg.release_mode)},
        {"window", cfg.window},
        {"refine_top", cfg.refine_top},
        {"multistart", cfg.multistart},
        {"max_price_evals", cfg.max_price_evals},
        {"price_tol", cfg.price_tol},
        {"poisson_eps", cfg.poisson_eps},
        {"warm_start", cfg.warm_start},
        {"uniform_price", cfg.uniform_price},
        {"pooled_release", cfg.pooled_release},
        {"typed_prices", cfg.typed_prices},
        {"re_choice", cfg.rules.re_choice},
        {"workers", cfg.workers},
        {"price_hi_e", cfg.price_hi_e},
        {"price_hi_f", cfg.price_hi_f},
    };
}

void from_json(const nlohmann::json& j, SolverConfig& cfg) {
    cfg.release_mode = static_cast<SolverConfig::ReleaseMode>(j.value("release_mode", 0));
    cfg.window = j.value("window", cfg.window);
    cfg.refine_top = j.value("refine_top", cfg.refine_top);
    cfg.multistart = j.value("multistart", cfg.multistart);
    cfg.max_price_evals = j.value("max_price_evals", cfg.max_price_evals);
    cfg.price_tol = j.value("price_tol", cfg.price_tol);
    cfg.poisson_eps = j.value("poisson_eps", cfg.poisson_eps);
    cfg.warm_start = j.value("warm_start", cfg.warm_start);
    cfg.uniform_price = j.value("uniform_price", cfg.uniform_price);
    cfg.pooled_release = j.value("pooled_release", cfg.pooled_release);
    cfg.typed_prices = j.value("typed_prices", cfg.typed_prices);
    cfg.rules.re_choice = j.value("re_choice", cfg.rules.re_choice);
    cfg.workers = j.value("workers", cfg.workers);
    cfg.price_hi_e = j.value("price_hi_e", cfg.price_hi_e);
    cfg.price_hi_f = j.value("price_hi_f", cfg.price_hi_f);
}

void to_json(nlohmann::json& j, const TypedPolicy& p) {
    j = nlohmann::json{{"p_e_b", p.business.p_e}, {"p_f_b", p.business.p_f},
                       {"p_e_l", p.leisure.p_e},  {"p_f_l", p.leisure.p_f},
                       {"q_e", p.q_e},            {"q_f", p.q_f},
                       {"cap_total", p.cap_total}};
}

void from_json(const nlohmann::json& j, TypedPolicy& p) {
    j.at("p_e_b").get_to(p.business.p_e);
    j.at("p_f_b").get_to(p.business.p_f);
    j.at("p_e_l").get_to(p.leisure.p_e);
    j.at("p_f_l").get_to(p.leisure.p_f);
    j.at("q_e").get_to(p.q_e);
    j.at("q_f").get_to(p.q_f);
    p.cap_total = j.value("cap_total", -1);
}

void save_model(const SolvedModel& model, const std::string& path) {
    nlohmann::json j;
    j["format_version"] = kModelFormatVersion;
    j["params"] = model.params;
    j["cfg"] = model.cfg;
    j["initial"] = {model.initial.k_e, model.initial.k_f};
    j["hash"] = hash_hex(model.content_hash);

    nlohmann::json bands = nlohmann::json::array();
    for (const StateBand& b : model.bands)
        bands.push_back({b.lo_e, b.lo_f, b.hi_e, b.hi_f});
    j["bands"] = std::move(bands);
    j["value"] = model.value;
    j["policy"] = model.policy;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << j.dump(1, '\t') << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

SolvedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("corrupt model file " + path + ": " + e.what());
    }
    if (j.value("format_version", -1) != kModelFormatVersion)
        throw std::runtime_error("unsupported model format version in " + path);

    SolvedModel model;
    model.params = j.at("params").get<FlightParams>();
    model.cfg = j.at("cfg").get<SolverConfig>();
    model.initial = {j.at("initial")[0].get<int>(), j.at("initial")[1].get<int>()};
    for (const auto& b : j.at("bands"))
        model.bands.push_back(
            {b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()});
    model.value = j.at("value").get<std::vector<std::vector<double>>>();
    model.policy = j.at("policy").get<std::vector<std::vector<TypedPolicy>>>();

    model.content_hash = model.compute_hash();
    if (hash_hex(model.content_hash) != j.at("hash").get<std::string>())
        throw std::runtime_error("model checksum mismatch in " + path);
    return model;
}

}  // namespace twocabin
