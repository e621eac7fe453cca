#include "twocabin/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "twocabin/common.hpp"
#include "twocabin/io.hpp"

namespace twocabin {

namespace {

namespace fs = std::filesystem;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                  const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

double elapsed_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// every CSV gets a sidecar describing the run that produced it
struct OutputWriter {
    fs::path dir;
    std::uint64_t config_hash = 0;
    std::string command;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    fs::path path(const std::string& name) const { return dir / name; }

    std::ofstream open(const std::string& name) const {
        std::ofstream out(path(name), std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + (dir / name).string());
        return out;
    }

    void sidecar(const std::string& name) const {
        nlohmann::json meta{{"command", command},
                            {"config_hash", hash_hex(config_hash)},
                            {"version", std::string(kVersion)},
                            {"runtime_seconds", elapsed_since(t0)}};
        std::ofstream out(path(name + ".meta.json"), std::ios::trunc);
        out << meta.dump(1, '\t') << '\n';
    }
};

OutputWriter make_writer(const RunConfig& cfg, const std::string& command) {
    OutputWriter w;
    w.dir = cfg.output_dir;
    fs::create_directories(w.dir);
    w.command = command;
    const std::string resolved = cfg.to_json().dump(1, '\t');
    w.config_hash = fnv1a64(resolved.data(), resolved.size());
    std::ofstream snap(w.dir / "resolved_config.json", std::ios::trunc);
    snap << resolved << '\n';
    return w;
}

int classify_error(const std::exception& e, const std::string& command) {
    std::cerr << "twocabin " << command << ": " << e.what() << '\n';
    if (dynamic_cast<const TicketParseError*>(&e)) return kExitData;
    if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
    if (dynamic_cast<const std::domain_error*>(&e)) return kExitConfig;
    if (dynamic_cast<const std::out_of_range*>(&e)) return kExitConfig;
    return kExitSolver;
}

FlightParams require_params(const RunConfig& cfg) {
    if (!cfg.params) throw ConfigError("this command needs a 'params' block");
    cfg.params->validate();
    if (cfg.box) {
        const std::array<double, 8> psi = to_psi(*cfg.params);
        for (int i = 0; i < 8; ++i) {
            const auto k = static_cast<std::size_t>(i);
            if (psi[k] < cfg.box->lo[k] || psi[k] > cfg.box->hi[k])
                throw ConfigError(std::string("params.") + ParamBox::names()[k] +
                                  " lies outside its box component");
        }
    }
    return *cfg.params;
}

// model cache: reuse when the stored model matches parameters, solver config
// and initial capacity
SolvedModel obtain_model(const RunConfig& cfg, const OutputWriter& w) {
    const FlightParams params = require_params(cfg);
    SolverConfig scfg = cfg.solver;
    scfg.workers = cfg.workers;
    const fs::path model_path = w.path("model.json");
    if (!cfg.force && fs::exists(model_path)) {
        try {
            SolvedModel cached = load_model(model_path.string());
            if (cached.cfg.content_hash(cached.params) == scfg.content_hash(params) &&
                cached.initial == cfg.initial) {
                std::cout << "reusing cached model (" << hash_hex(cached.content_hash)
                          << ")\n";
                return cached;
            }
        } catch (const std::exception&) {
            // fall through to a fresh solve
        }
    }
    SolvedModel model = solve(params, cfg.initial, scfg);
    save_model(model, model_path.string());
    return model;
}

void write_shadow_reports(const SolvedModel& model, const OutputWriter& w) {
    const ShadowCostReport rep = shadow_costs(model);
    {
        auto out = w.open("shadow_costs.csv");
        out << "t,k_e,k_f,visit_prob,opp_e,opp_f,mc_e,mc_f,dEV_dpe,dEV_dpf,"
               "p_e_b,p_f_b,p_e_l,p_f_l,q_e,q_f\n";
        for (const ShadowEntry& e : rep.entries) {
            const TypedPolicy& pol = model.policy_at(e.t, e.state);
            out << e.t << ',' << e.state.k_e << ',' << e.state.k_f << ','
                << format_double(e.visit_prob) << ',' << format_double(e.opp_e) << ','
                << format_double(e.opp_f) << ',' << format_double(e.mc_e) << ','
                << format_double(e.mc_f) << ',' << format_double(e.dEV_dpe) << ','
                << format_double(e.dEV_dpf) << ',' << format_double(pol.business.p_e)
                << ',' << format_double(pol.business.p_f) << ','
                << format_double(pol.leisure.p_e) << ',' << format_double(pol.leisure.p_f)
                << ',' << pol.q_e << ',' << pol.q_f << '\n';
        }
    }
    w.sidecar("shadow_costs.csv");
    {
        auto out = w.open("state_visitation.csv");
        out << "t,k_e,k_f,prob\n";
        for (const ShadowEntry& e : rep.entries)
            if (e.visit_prob > 0.0)
                out << e.t << ',' << e.state.k_e << ',' << e.state.k_f << ','
                    << format_double(e.visit_prob) << '\n';
    }
    w.sidecar("state_visitation.csv");
}

void write_wtp_curves(const FlightParams& params, const OutputWriter& w) {
    auto out = w.open("wtp_density.csv");
    out << "cabin,t,value,density\n";
    for (int t = 1; t <= params.T; ++t) {
        for (const Cabin cabin : {Cabin::Economy, Cabin::First}) {
            const auto curve = wtp_density(params, t, cabin, 1024);
            for (const auto& [v, dens] : curve)
                out << (cabin == Cabin::Economy ? 'E' : 'F') << ',' << t << ','
                    << format_double(v) << ',' << format_double(dens) << '\n';
        }
    }
    out.close();
    w.sidecar("wtp_density.csv");
}

nlohmann::json report_json(const WelfareReport& r) {
    return nlohmann::json{{"ps", r.producer_surplus},
                          {"ps_se", r.ps_se},
                          {"cs", r.consumer_surplus},
                          {"cs_se", r.cs_se},
                          {"cs_business", r.cs_business},
                          {"cs_leisure", r.cs_leisure},
                          {"ts", r.total_surplus},
                          {"ts_se", r.ts_se},
                          {"seats_sold_e", r.seats_sold_e},
                          {"seats_sold_f", r.seats_sold_f},
                          {"load_factor", r.load_factor},
                          {"replications", r.replications}};
}

void write_comparison(const Comparison& cmp, const OutputWriter& w) {
    {
        auto out = w.open("counterfactual.csv");
        out << "mechanism,ps,cs,cs_business,cs_leisure,ts,ts_se,efficiency_ratio\n";
        for (const ComparisonRow& row : cmp.rows) {
            const WelfareReport& r = row.report;
            out << row.mechanism << ',' << format_double(r.producer_surplus) << ','
                << format_double(r.consumer_surplus) << ','
                << format_double(r.cs_business) << ',' << format_double(r.cs_leisure)
                << ',' << format_double(r.total_surplus) << ','
                << format_double(r.ts_se) << ',' << format_double(row.efficiency_ratio)
                << '\n';
        }
    }
    w.sidecar("counterfactual.csv");

    nlohmann::json j;
    for (const ComparisonRow& row : cmp.rows) {
        nlohmann::json r = report_json(row.report);
        r["efficiency_ratio"] = row.efficiency_ratio;
        j["mechanisms"][row.mechanism] = std::move(r);
    }
    // welfare-triangle coordinates, (consumer surplus, producer surplus)
    auto point = [&](const char* name) {
        const WelfareReport& r = cmp.row(name).report;
        return nlohmann::json{r.consumer_surplus, r.producer_surplus};
    };
    const double ts_fb = cmp.row("first_best").report.total_surplus;
    const double ts_fd = cmp.row("first_degree").report.total_surplus;
    j["triangle"] = {{"O", {0.0, 0.0}},       {"A", {0.0, ts_fb}},
                     {"B", {ts_fb, 0.0}},     {"C", point("baseline")},
                     {"D", point("third_degree")}, {"E", {0.0, ts_fd}},
                     {"F", {ts_fd, 0.0}},     {"G", point("vcg")},
                     {"H", point("uniform")}};
    auto out = w.open("counterfactual.json");
    out << j.dump(1, '\t') << '\n';
    out.close();
    w.sidecar("counterfactual.json");
}

std::vector<CabinState> capacities_in(const std::vector<TicketRecord>& tickets) {
    std::vector<CabinState> caps;
    for (const TicketRecord& tk : tickets) {
        const CabinState c{tk.cap_econ, tk.cap_first};
        if (std::find(caps.begin(), caps.end(), c) == caps.end()) caps.push_back(c);
    }
    std::sort(caps.begin(), caps.end(), [](const CabinState& a, const CabinState& b) {
        return std::pair{a.k_e, a.k_f} < std::pair{b.k_e, b.k_f};
    });
    return caps;
}

std::string cap_tag(const CabinState& c) {
    return std::to_string(c.k_e) + "x" + std::to_string(c.k_f);
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return from_json(j);
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    require_keys(j, {"params", "box", "initial_capacity", "seed", "workers", "output_dir",
                     "force", "solver", "estimation", "counterfactual", "simulate",
                     "tickets", "estimates", "psi_draws"},
                 "config");
    RunConfig cfg;
    try {
        if (j.contains("params")) {
            require_keys(j.at("params"),
                         {"mu_l", "cv_l", "delta_b", "cv_b", "mu_xi", "lambda0",
                          "d_lambda", "d_theta", "T", "c_e", "c_f"},
                         "params");
            cfg.params = j.at("params").get<FlightParams>();
        }
        if (j.contains("box")) {
            require_keys(j.at("box"), {"lo", "hi"}, "box");
            ParamBox box;
            for (int i = 0; i < 8; ++i) {
                box.lo[static_cast<std::size_t>(i)] =
                    j.at("box").at("lo").at(static_cast<std::size_t>(i)).get<double>();
                box.hi[static_cast<std::size_t>(i)] =
                    j.at("box").at("hi").at(static_cast<std::size_t>(i)).get<double>();
            }
            box.validate();
            cfg.box = box;
        }
        if (j.contains("initial_capacity")) {
            cfg.initial = {j.at("initial_capacity").at(0).get<int>(),
                           j.at("initial_capacity").at(1).get<int>()};
            if (cfg.initial.k_e < 0 || cfg.initial.k_f < 0)
                throw ConfigError("initial_capacity must be nonnegative");
        }
        cfg.seed = j.value("seed", cfg.seed);
        cfg.workers = j.value("workers", cfg.workers);
        cfg.output_dir = j.value("output_dir", cfg.output_dir);
        cfg.force = j.value("force", cfg.force);
        if (j.contains("solver")) {
            require_keys(j.at("solver"),
                         {"release_mode", "window", "refine_top", "multistart",
                          "max_price_evals", "price_tol", "poisson_eps", "warm_start",
                          "uniform_price", "pooled_release", "typed_prices", "re_choice",
                          "workers", "price_hi_e", "price_hi_f"},
                         "solver");
            cfg.solver = j.at("solver").get<SolverConfig>();
        }
        if (j.contains("estimation")) {
            const nlohmann::json& e = j.at("estimation");
            require_keys(e,
                         {"S", "B", "deciles", "min_tickets", "model_flights",
                          "fit_starts", "fit_max_evals", "full_cholesky", "sigma_lo",
                          "sigma_hi"},
                         "estimation");
            cfg.est_S = e.value("S", cfg.est_S);
            cfg.est_B = e.value("B", cfg.est_B);
            cfg.estimation.deciles = e.value("deciles", cfg.estimation.deciles);
            cfg.estimation.min_tickets = e.value("min_tickets", cfg.estimation.min_tickets);
            cfg.estimation.model_flights =
                e.value("model_flights", cfg.estimation.model_flights);
            cfg.estimation.fit_starts = e.value("fit_starts", cfg.estimation.fit_starts);
            cfg.estimation.fit_max_evals =
                e.value("fit_max_evals", cfg.estimation.fit_max_evals);
            cfg.estimation.full_cholesky =
                e.value("full_cholesky", cfg.estimation.full_cholesky);
            cfg.estimation.sigma_lo = e.value("sigma_lo", cfg.estimation.sigma_lo);
            cfg.estimation.sigma_hi = e.value("sigma_hi", cfg.estimation.sigma_hi);
        }
        if (j.contains("counterfactual")) {
            const nlohmann::json& c = j.at("counterfactual");
            require_keys(c, {"R", "M", "pooled_release"}, "counterfactual");
            cfg.counterfactual.R = c.value("R", cfg.counterfactual.R);
            cfg.counterfactual.M = c.value("M", cfg.counterfactual.M);
            cfg.counterfactual.pooled_release =
                c.value("pooled_release", cfg.counterfactual.pooled_release);
        }
        if (j.contains("simulate")) {
            const nlohmann::json& s = j.at("simulate");
            require_keys(s, {"R", "price_paths"}, "simulate");
            cfg.sim_flights = s.value("R", cfg.sim_flights);
            cfg.sim_price_paths = s.value("price_paths", cfg.sim_price_paths);
        }
        cfg.tickets_path = j.value("tickets", cfg.tickets_path);
        cfg.estimates_path = j.value("estimates", cfg.estimates_path);
        cfg.psi_draws = j.value("psi_draws", cfg.psi_draws);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config field error: ") + e.what());
    }
    if (cfg.params) cfg.params->validate();
    return cfg;
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    if (params) j["params"] = *params;
    if (box) j["box"] = {{"lo", box->lo}, {"hi", box->hi}};
    j["initial_capacity"] = {initial.k_e, initial.k_f};
    j["seed"] = seed;
    j["workers"] = workers;
    j["output_dir"] = output_dir;
    j["force"] = force;
    j["solver"] = solver;
    j["estimation"] = {{"S", est_S},
                       {"B", est_B},
                       {"deciles", estimation.deciles},
                       {"min_tickets", estimation.min_tickets},
                       {"model_flights", estimation.model_flights},
                       {"fit_starts", estimation.fit_starts},
                       {"fit_max_evals", estimation.fit_max_evals},
                       {"full_cholesky", estimation.full_cholesky},
                       {"sigma_lo", estimation.sigma_lo},
                       {"sigma_hi", estimation.sigma_hi}};
    j["counterfactual"] = {{"R", counterfactual.R},
                           {"M", counterfactual.M},
                           {"pooled_release", counterfactual.pooled_release}};
    j["simulate"] = {{"R", sim_flights}, {"price_paths", sim_price_paths}};
    if (!tickets_path.empty()) j["tickets"] = tickets_path;
    if (!estimates_path.empty()) j["estimates"] = estimates_path;
    if (psi_draws > 0) j["psi_draws"] = psi_draws;
    return j;
}

int cmd_solve(const RunConfig& cfg) {
    try {
        const OutputWriter w = make_writer(cfg, "solve");
        const SolvedModel model = obtain_model(cfg, w);
        write_shadow_reports(model, w);
        std::cout << "V1 = " << format_double(model.value_at(1, model.initial)) << " at ("
                  << model.initial.k_e << "," << model.initial.k_f << ")\n";
        return kExitOk;
    } catch (const std::exception& e) {
        return classify_error(e, "solve");
    }
}

int cmd_simulate(const RunConfig& cfg) {
    try {
        const OutputWriter w = make_writer(cfg, "simulate");
        const SolvedModel model = obtain_model(cfg, w);
        const auto tickets = simulate_tickets(model, cfg.seed, cfg.sim_flights);
        write_tickets_csv(tickets, w.path("tickets.csv").string());
        w.sidecar("tickets.csv");
        if (cfg.sim_price_paths) {
            // per-flight economy fare path, normalized by the first observed fare
            auto out = w.open("price_paths.csv");
            out << "flight_id,period,econ_fare,normalized\n";
            std::map<std::string, std::map<int, std::pair<double, int>>> agg;
            for (const TicketRecord& tk : tickets)
                if (tk.cabin == Cabin::Economy) {
                    auto& cell = agg[tk.flight_id][tk.period];
                    cell.first += tk.fare;
                    cell.second += 1;
                }
            for (const auto& [fid, by_t] : agg) {
                double first_fare = 0.0;
                for (const auto& [t, cell] : by_t) {
                    const double fare = cell.first / cell.second;
                    if (first_fare == 0.0) first_fare = fare;
                    out << fid << ',' << t << ',' << format_double(fare) << ','
                        << format_double(fare / first_fare) << '\n';
                }
            }
            out.close();
            w.sidecar("price_paths.csv");
        }
        std::cout << "wrote " << tickets.size() << " tickets for " << cfg.sim_flights
                  << " flights\n";
        return kExitOk;
    } catch (const std::exception& e) {
        return classify_error(e, "simulate");
    }
}

int cmd_moments(const RunConfig& cfg) {
    try {
        const OutputWriter w = make_writer(cfg, "moments");
        if (cfg.tickets_path.empty()) throw ConfigError("moments needs a 'tickets' path");
        const auto tickets = read_tickets_csv(cfg.tickets_path);
        EstimationConfig ecfg = cfg.estimation;
        if (cfg.params) ecfg.T = cfg.params->T;
        nlohmann::json all;
        for (const CabinState& cap : capacities_in(tickets)) {
            MomentVector m;
            try {
                m = empirical_moments(tickets, cap, ecfg);
            } catch (const std::runtime_error&) {
                continue;  // no eligible flights at this capacity
            }
            const auto labels = moment_labels(m.T, m.deciles);
            const std::string name = "moments_" + cap_tag(cap) + ".csv";
            auto out = w.open(name);
            out << "label,value,count\n";
            for (std::size_t c = 0; c < m.dim(); ++c)
                out << labels[c] << ',' << format_double(m.values[c]) << ','
                    << m.counts[c] << '\n';
            out.close();
            w.sidecar(name);
            all[cap_tag(cap)] = {{"dim", m.dim()}, {"T", m.T}, {"deciles", m.deciles}};
        }
        if (all.empty()) throw TicketParseError("no capacity group has enough flights", 0);
        auto out = w.open("moments_index.json");
        out << all.dump(1, '\t') << '\n';
        return kExitOk;
    } catch (const std::exception& e) {
        return classify_error(e, "moments");
    }
}

int cmd_estimate(const RunConfig& cfg) {
    try {
        const OutputWriter w = make_writer(cfg, "estimate");
        if (!cfg.box) throw ConfigError("estimate needs a 'box' block");
        if (cfg.tickets_path.empty()) throw ConfigError("estimate needs a 'tickets' path");
        const auto tickets = read_tickets_csv(cfg.tickets_path);

        EstimationConfig ecfg = cfg.estimation;
        ecfg.solver = cfg.solver;
        ecfg.solver.workers = cfg.workers;
        if (cfg.params) ecfg.T = cfg.params->T;

        struct CapacityFit {
            CabinState cap;
            double weight = 0.0;
            FitResult fit;
            long flights = 0;
            BootstrapResult boot;
            bool has_boot = false;
        };
        std::vector<CapacityFit> fits;
        long total_flights = 0;

        for (const CabinState& cap : capacities_in(tickets)) {
            MomentVector rho;
            try {
                rho = empirical_moments(tickets, cap, ecfg);
            } catch (const std::runtime_error&) {
                continue;
            }
            // count eligible flights for the capacity weights
            std::map<std::string, int> per_flight;
            for (const TicketRecord& tk : tickets)
                if (tk.cap_econ == cap.k_e && tk.cap_first == cap.k_f)
                    ++per_flight[tk.flight_id];
            long flights = 0;
            for (const auto& [fid, n] : per_flight)
                if (n >= ecfg.min_tickets) ++flights;
            if (flights == 0) continue;

            const std::string lib_name = "library_" + cap_tag(cap) + ".json";
            const fs::path lib_path = w.path(lib_name);
            MomentLibrary lib;
            bool reuse = false;
            if (!cfg.force && fs::exists(lib_path)) {
                try {
                    lib = load_library(lib_path.string());
                    reuse = lib.S == cfg.est_S && lib.seed == cfg.seed &&
                            lib.cfg_hash == ecfg.content_hash() &&
                            lib.box.lo == cfg.box->lo && lib.box.hi == cfg.box->hi;
                } catch (const std::exception&) {
                    reuse = false;
                }
            }
            if (!reuse) {
                const std::string partial = w.path("library_" + cap_tag(cap) +
                                                   ".partial.jsonl").string();
                lib = build_library(*cfg.box, cfg.est_S, cap, ecfg, cfg.seed, partial);
                save_library(lib, lib_path.string());
                std::remove(partial.c_str());
            } else {
                std::cout << "reusing cached library " << lib_name << "\n";
            }
            if (lib.draws.empty()) continue;

            CapacityFit cf;
            cf.cap = cap;
            cf.flights = flights;
            cf.fit = fit(lib, rho, ecfg, cfg.seed);
            if (cfg.est_B >= 2) {
                cf.boot = bootstrap(tickets, lib, cfg.est_B, ecfg, cfg.seed);
                cf.has_boot = true;
            }
            fits.push_back(std::move(cf));
            total_flights += flights;
        }
        if (fits.empty()) throw TicketParseError("no capacity group could be estimated", 0);

        std::vector<std::pair<MixingDensity, double>> parts;
        for (CapacityFit& cf : fits) {
            cf.weight = static_cast<double>(cf.flights) / static_cast<double>(total_flights);
            parts.push_back({cf.fit.density, cf.weight});
        }
        const PooledSummary pooled = pool_capacities(parts, 100'000, cfg.seed);

        nlohmann::json j;
        for (const CapacityFit& cf : fits) {
            nlohmann::json e;
            e["omega1"] = {cf.cap.k_e, cf.cap.k_f};
            e["weight"] = cf.weight;
            e["flights"] = cf.flights;
            e["mu"] = cf.fit.density.mu;
            e["chol"] = cf.fit.density.chol;
            e["objective"] = cf.fit.objective;
            e["ess"] = cf.fit.ess;
            e["identified"] = cf.fit.identified;
            e["local_optima"] = cf.fit.local_optima;
            if (cf.has_boot) {
                e["se_mu"] = cf.boot.se_mu;
                e["se_sigma"] = cf.boot.se_sigma;
            }
            j["capacities"].push_back(std::move(e));
        }
        j["box"] = {{"lo", cfg.box->lo}, {"hi", cfg.box->hi}};
        j["pooled"] = {{"mean", pooled.mean}, {"sd", pooled.sd}};
        {
            auto out = w.open("estimates.json");
            out << j.dump(1, '\t') << '\n';
        }
        w.sidecar("estimates.json");

        {
            auto out = w.open("estimates_table.csv");
            out << "parameter,estimate,sd,boot_se\n";
            for (int i = 0; i < 8; ++i) {
                const auto k = static_cast<std::size_t>(i);
                out << ParamBox::names()[k] << ',' << format_double(pooled.mean[k]) << ','
                    << format_double(pooled.sd[k]) << ',';
                if (fits.size() == 1 && fits[0].has_boot)
                    out << format_double(fits[0].boot.se_mu[k]);
                out << '\n';
            }
        }
        w.sidecar("estimates_table.csv");
        std::cout << "estimated " << fits.size() << " capacity group(s)\n";
        return kExitOk;
    } catch (const std::exception& e) {
        return classify_error(e, "estimate");
    }
}

int cmd_counterfactual(const RunConfig& cfg) {
    try {
        const OutputWriter w = make_writer(cfg, "counterfactual");
        SolverConfig scfg = cfg.solver;
        scfg.workers = cfg.workers;
        MechanismConfig mcfg = cfg.counterfactual;
        mcfg.seed = cfg.seed;
        mcfg.workers = cfg.workers;

        if (cfg.estimates_path.empty()) {
            const FlightParams params = require_params(cfg);
            const Comparison cmp = compare(params, cfg.initial, scfg, mcfg);
            write_comparison(cmp, w);
            return kExitOk;
        }

        // density-averaged counterfactual: draw parameters from the estimated
        // mixture and average the comparisons
        if (cfg.psi_draws < 1)
            throw ConfigError("counterfactual over a density needs psi_draws >= 1");
        std::ifstream in(cfg.estimates_path);
        if (!in) throw ConfigError("cannot open estimates file " + cfg.estimates_path);
        nlohmann::json je;
        in >> je;
        struct Part {
            MixingDensity h;
            double weight = 0.0;
        };
        std::vector<Part> parts;
        for (const auto& e : je.at("capacities")) {
            Part part;
            part.h.mu = e.at("mu").get<std::array<double, 8>>();
            part.h.chol = e.at("chol").get<std::array<double, 64>>();
            part.h.box.lo = je.at("box").at("lo").get<std::array<double, 8>>();
            part.h.box.hi = je.at("box").at("hi").get<std::array<double, 8>>();
            part.weight = e.at("weight").get<double>();
            parts.push_back(std::move(part));
        }
        // allocate draws to components by largest remainder
        std::vector<int> alloc(parts.size(), 0);
        {
            std::vector<std::pair<double, std::size_t>> rema;
            int assigned = 0;
            for (std::size_t c = 0; c < parts.size(); ++c) {
                const double exact = parts[c].weight * cfg.psi_draws;
                alloc[c] = static_cast<int>(exact);
                assigned += alloc[c];
                rema.push_back({exact - alloc[c], c});
            }
            std::sort(rema.rbegin(), rema.rend());
            for (int i = 0; i < cfg.psi_draws - assigned; ++i)
                ++alloc[rema[static_cast<std::size_t>(i)].second];
        }

        std::vector<Comparison> cmps;
        int ti = 0;
        for (std::size_t c = 0; c < parts.size(); ++c) {
            if (alloc[c] == 0) continue;
            const auto draws = sample_mixing(parts[c].h, alloc[c], cfg.seed + c);
            for (const auto& psi : draws) {
                const FlightParams params =
                    from_psi(psi, cfg.estimation.T, cfg.estimation.c_e, cfg.estimation.c_f);
                MechanismConfig m2 = mcfg;
                m2.seed = cfg.seed + static_cast<std::uint64_t>(1000 + ti++);
                cmps.push_back(compare(params, cfg.initial, scfg, m2));
            }
        }
        // average the mechanism rows across parameter draws
        Comparison avg = cmps.front();
        const double n = static_cast<double>(cmps.size());
        for (std::size_t row = 0; row < avg.rows.size(); ++row) {
            WelfareReport& r = avg.rows[row].report;
            r = WelfareReport{};
            double se2 = 0.0, ratio = 0.0;
            for (const Comparison& c : cmps) {
                const WelfareReport& s = c.rows[row].report;
                r.producer_surplus += s.producer_surplus / n;
                r.consumer_surplus += s.consumer_surplus / n;
                r.cs_business += s.cs_business / n;
                r.cs_leisure += s.cs_leisure / n;
                r.total_surplus += s.total_surplus / n;
                r.seats_sold_e += s.seats_sold_e / n;
                r.seats_sold_f += s.seats_sold_f / n;
                r.load_factor += s.load_factor / n;
                r.replications += s.replications;
                se2 += s.ts_se * s.ts_se;
                ratio += c.rows[row].efficiency_ratio / n;
            }
            r.ts_se = std::sqrt(se2) / n;
            avg.rows[row].efficiency_ratio = ratio;
        }
        write_comparison(avg, w);
        return kExitOk;
    } catch (const std::exception& e) {
        return classify_error(e, "counterfactual");
    }
}

int cmd_report(const RunConfig& cfg) {
    try {
        const OutputWriter w = make_writer(cfg, "report");
        const fs::path model_path = w.path("model.json");
        if (!fs::exists(model_path))
            throw ConfigError("report needs " + model_path.string() + "; run solve first");
        const SolvedModel model = load_model(model_path.string());
        write_shadow_reports(model, w);
        write_wtp_curves(model.params, w);
        return kExitOk;
    } catch (const std::exception& e) {
        return classify_error(e, "report");
    }
}

}  // namespace twocabin
