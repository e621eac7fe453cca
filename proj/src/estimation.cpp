#include "twocabin/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "twocabin/common.hpp"
#include "twocabin/io.hpp"
#include "twocabin/parallel.hpp"

namespace twocabin {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kSimDomain = 0x51D0u;
constexpr std::uint64_t kDrawDomain = 0xD4A0u;
constexpr std::uint64_t kFitDomain = 0xF17Du;
constexpr std::uint64_t kBootDomain = 0xB007u;
constexpr std::uint64_t kPoolDomain = 0x900Du;

// type-7 quantile of a sorted sample
double quantile7(const std::vector<double>& sorted, double q) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double h = (static_cast<double>(n) - 1.0) * q;
    const std::size_t lo = static_cast<std::size_t>(h);
    const double frac = h - static_cast<double>(lo);
    if (lo + 1 >= n) return sorted[n - 1];
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

// per-flight aggregates of one group's tickets
struct FlightAgg {
    int cap_e = 0, cap_f = 0;
    std::vector<double> fare_sum_e, fare_sum_f;
    std::vector<int> n_e, n_f, n_biz;
    int total = 0;

    explicit FlightAgg(int T)
        : fare_sum_e(static_cast<std::size_t>(T), 0.0),
          fare_sum_f(static_cast<std::size_t>(T), 0.0),
          n_e(static_cast<std::size_t>(T), 0),
          n_f(static_cast<std::size_t>(T), 0),
          n_biz(static_cast<std::size_t>(T), 0) {}
};

// the nine per-period moment families plus the across-horizon extras
enum Family {
    kEconFare,
    kFirstFare,
    kDEconFare,
    kDFirstFare,
    kShareSold,
    kDShareSold,
    kFareGap,
    kBizShare,
    kLoadFactor,
    kFamilies
};

const char* family_name(int f) {
    static const char* names[kFamilies] = {
        "econ_fare",  "first_fare", "d_econ_fare", "d_first_fare", "share_sold",
        "d_share_sold", "fare_gap", "business_share", "load_factor"};
    return names[f];
}

bool family_has_t1(int f) {
    return f != kDEconFare && f != kDFirstFare && f != kDShareSold;
}

// flight-level statistic for one (family, t) cell; NaN when unobserved
double flight_stat(const FlightAgg& fl, int f, int t) {
    const std::size_t i = static_cast<std::size_t>(t - 1);
    const int cap = fl.cap_e + fl.cap_f;
    auto fare_e = [&](std::size_t k) {
        return fl.n_e[k] > 0 ? fl.fare_sum_e[k] / fl.n_e[k] : kNaN;
    };
    auto fare_f = [&](std::size_t k) {
        return fl.n_f[k] > 0 ? fl.fare_sum_f[k] / fl.n_f[k] : kNaN;
    };
    auto share = [&](std::size_t k) {
        return cap > 0 ? static_cast<double>(fl.n_e[k] + fl.n_f[k]) / cap : kNaN;
    };
    switch (f) {
        case kEconFare: return fare_e(i);
        case kFirstFare: return fare_f(i);
        case kDEconFare: return fare_e(i) - fare_e(i - 1);
        case kDFirstFare: return fare_f(i) - fare_f(i - 1);
        case kShareSold: return share(i);
        case kDShareSold: return share(i) - share(i - 1);
        case kFareGap: return fare_f(i) - fare_e(i);
        case kBizShare: {
            const int sold = fl.n_e[i] + fl.n_f[i];
            return sold > 0 ? static_cast<double>(fl.n_biz[i]) / sold : kNaN;
        }
        case kLoadFactor: {
            if (cap == 0) return kNaN;
            int cum = 0;
            for (std::size_t k = 0; k <= i; ++k) cum += fl.n_e[k] + fl.n_f[k];
            return static_cast<double>(cum) / cap;
        }
        default: return kNaN;
    }
}

MomentVector moments_from_flights(const std::vector<FlightAgg>& flights, int T,
                                  int deciles) {
    MomentVector out;
    out.T = T;
    out.deciles = deciles;

    auto push_deciles = [&](std::vector<double>& obs) {
        std::sort(obs.begin(), obs.end());
        for (int d = 1; d <= deciles; ++d) {
            if (obs.empty()) {
                out.values.push_back(0.0);
                out.counts.push_back(0);
            } else {
                out.values.push_back(
                    quantile7(obs, static_cast<double>(d) / (deciles + 1)));
                out.counts.push_back(static_cast<long>(obs.size()));
            }
        }
    };

    for (int f = 0; f < kFamilies; ++f) {
        for (int t = family_has_t1(f) ? 1 : 2; t <= T; ++t) {
            std::vector<double> obs;
            obs.reserve(flights.size());
            for (const FlightAgg& fl : flights) {
                const double x = flight_stat(fl, f, t);
                if (std::isfinite(x)) obs.push_back(x);
            }
            push_deciles(obs);
        }
    }

    // extreme fare gaps over the horizon, across flights
    for (const bool take_max : {true, false}) {
        std::vector<double> obs;
        for (const FlightAgg& fl : flights) {
            double best = kNaN;
            for (int t = 1; t <= T; ++t) {
                const double g = flight_stat(fl, kFareGap, t);
                if (!std::isfinite(g)) continue;
                if (!std::isfinite(best)) best = g;
                else best = take_max ? std::max(best, g) : std::min(best, g);
            }
            if (std::isfinite(best)) obs.push_back(best);
        }
        push_deciles(obs);
    }

    // overall business share, pooled over every ticket in the group
    long biz = 0, all = 0;
    for (const FlightAgg& fl : flights) {
        all += fl.total;
        for (int b : fl.n_biz) biz += b;
    }
    out.values.push_back(all > 0 ? static_cast<double>(biz) / static_cast<double>(all)
                                 : 0.0);
    out.counts.push_back(all);
    return out;
}

std::vector<FlightAgg> group_flights(const std::vector<TicketRecord>& tickets,
                                     const CabinState& omega1,
                                     const EstimationConfig& cfg) {
    std::map<std::string, FlightAgg> by_flight;
    for (const TicketRecord& tk : tickets) {
        if (tk.cap_econ != omega1.k_e || tk.cap_first != omega1.k_f) continue;
        if (tk.period < 1 || tk.period > cfg.T)
            throw std::runtime_error("ticket period outside 1..T");
        auto [it, fresh] = by_flight.try_emplace(tk.flight_id, cfg.T);
        FlightAgg& fl = it->second;
        if (fresh) {
            fl.cap_e = tk.cap_econ;
            fl.cap_f = tk.cap_first;
        }
        const std::size_t i = static_cast<std::size_t>(tk.period - 1);
        if (tk.cabin == Cabin::Economy) {
            fl.fare_sum_e[i] += tk.fare;
            ++fl.n_e[i];
        } else {
            fl.fare_sum_f[i] += tk.fare;
            ++fl.n_f[i];
        }
        if (tk.reason == PassengerType::Business) ++fl.n_biz[i];
        ++fl.total;
    }
    std::vector<FlightAgg> flights;
    for (auto& [id, fl] : by_flight)
        if (fl.total >= cfg.min_tickets) flights.push_back(std::move(fl));
    return flights;
}

// ---- general-dimension Nelder-Mead (maximization by negation not needed;
// this one minimizes) -----------------------------------------------------------

struct VecNM {
    std::vector<double> x;
    double f = std::numeric_limits<double>::infinity();
};

template <typename F>
VecNM nelder_mead_min(const F& fn, const std::vector<double>& x0,
                      const std::vector<double>& step, int max_evals, double rel_tol) {
    const std::size_t n = x0.size();
    std::vector<std::vector<double>> pts(n + 1, x0);
    std::vector<double> fv(n + 1);
    VecNM best;
    best.x = x0;
    int evals = 0;
    auto eval = [&](const std::vector<double>& x) {
        ++evals;
        const double v = fn(x);
        if (v < best.f) {
            best.f = v;
            best.x = x;
        }
        return v;
    };
    for (std::size_t i = 0; i <= n; ++i) {
        if (i > 0) pts[i][i - 1] += step[i - 1];
        fv[i] = eval(pts[i]);
    }
    std::vector<std::size_t> ord(n + 1);
    std::vector<double> cen(n), xr(n), xe(n), xc(n);
    while (evals < max_evals) {
        for (std::size_t i = 0; i <= n; ++i) ord[i] = i;
        std::sort(ord.begin(), ord.end(),
                  [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        const std::size_t ib = ord[0], iw = ord[n];
        if (std::fabs(fv[iw] - fv[ib]) <= rel_tol * (std::fabs(fv[ib]) + 1e-12)) break;
        std::fill(cen.begin(), cen.end(), 0.0);
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == iw) continue;
            for (std::size_t d = 0; d < n; ++d) cen[d] += pts[i][d] / static_cast<double>(n);
        }
        for (std::size_t d = 0; d < n; ++d) xr[d] = cen[d] + (cen[d] - pts[iw][d]);
        const double fr = eval(xr);
        if (fr < fv[ib]) {
            for (std::size_t d = 0; d < n; ++d) xe[d] = cen[d] + 2.0 * (cen[d] - pts[iw][d]);
            const double fe = eval(xe);
            pts[iw] = fe < fr ? xe : xr;
            fv[iw] = std::min(fe, fr);
        } else if (fr < fv[ord[n - 1]]) {
            pts[iw] = xr;
            fv[iw] = fr;
        } else {
            for (std::size_t d = 0; d < n; ++d) xc[d] = cen[d] - 0.5 * (cen[d] - pts[iw][d]);
            const double fc = eval(xc);
            if (fc < fv[iw]) {
                pts[iw] = xc;
                fv[iw] = fc;
            } else {
                for (std::size_t i = 0; i <= n && evals < max_evals; ++i) {
                    if (i == ib) continue;
                    for (std::size_t d = 0; d < n; ++d)
                        pts[i][d] = 0.5 * (pts[i][d] + pts[ib][d]);
                    fv[i] = eval(pts[i]);
                }
            }
        }
    }
    return best;
}

}  // namespace

// ---- CSV --------------------------------------------------------------------------

std::vector<TicketRecord> read_tickets_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    long lineno = 0;
    if (!std::getline(in, line)) throw TicketParseError("empty ticket file", 1);
    ++lineno;
    if (line == "flight_id,market_id,cap_econ,cap_first,period,cabin,fare,reason\r")
        line.pop_back();
    if (line != "flight_id,market_id,cap_econ,cap_first,period,cabin,fare,reason")
        throw TicketParseError("unexpected ticket CSV header", 1);

    std::vector<TicketRecord> out;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::array<std::string, 8> field;
        std::size_t start = 0;
        int nf = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == ',') {
                if (nf >= 8) throw TicketParseError("too many fields", lineno);
                field[static_cast<std::size_t>(nf++)] = line.substr(start, i - start);
                start = i + 1;
            }
        }
        if (nf != 8) throw TicketParseError("expected 8 fields", lineno);
        TicketRecord tk;
        tk.flight_id = field[0];
        tk.market_id = field[1];
        try {
            tk.cap_econ = std::stoi(field[2]);
            tk.cap_first = std::stoi(field[3]);
            tk.period = std::stoi(field[4]);
            tk.fare = std::stod(field[6]);
        } catch (const std::exception&) {
            throw TicketParseError("malformed numeric field", lineno);
        }
        if (field[5] == "E") tk.cabin = Cabin::Economy;
        else if (field[5] == "F") tk.cabin = Cabin::First;
        else throw TicketParseError("cabin must be E or F", lineno);
        if (field[7] == "B") tk.reason = PassengerType::Business;
        else if (field[7] == "L") tk.reason = PassengerType::Leisure;
        else throw TicketParseError("reason must be B or L", lineno);
        if (!(tk.fare > 0.0)) throw TicketParseError("fare must be positive", lineno);
        if (tk.cap_econ < 0 || tk.cap_first < 0 || tk.cap_econ + tk.cap_first == 0)
            throw TicketParseError("capacities must be positive", lineno);
        if (tk.period < 1) throw TicketParseError("period must be >= 1", lineno);
        out.push_back(std::move(tk));
    }
    return out;
}

void write_tickets_csv(const std::vector<TicketRecord>& tickets, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "flight_id,market_id,cap_econ,cap_first,period,cabin,fare,reason\n";
    for (const TicketRecord& tk : tickets) {
        out << tk.flight_id << ',' << tk.market_id << ',' << tk.cap_econ << ','
            << tk.cap_first << ',' << tk.period << ','
            << (tk.cabin == Cabin::Economy ? 'E' : 'F') << ',' << format_double(tk.fare)
            << ',' << (tk.reason == PassengerType::Business ? 'B' : 'L') << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

// ---- moments ------------------------------------------------------------------------

std::vector<std::string> moment_labels(int T, int deciles) {
    std::vector<std::string> labels;
    for (int f = 0; f < kFamilies; ++f)
        for (int t = family_has_t1(f) ? 1 : 2; t <= T; ++t)
            for (int d = 1; d <= deciles; ++d)
                labels.push_back(std::string(family_name(f)) + "_t" + std::to_string(t) +
                                 "_d" + std::to_string(d));
    for (const char* fam : {"max_fare_gap", "min_fare_gap"})
        for (int d = 1; d <= deciles; ++d)
            labels.push_back(std::string(fam) + "_d" + std::to_string(d));
    labels.push_back("overall_business_share");
    return labels;
}

MomentVector empirical_moments(const std::vector<TicketRecord>& tickets,
                               const CabinState& omega1, const EstimationConfig& cfg) {
    const std::vector<FlightAgg> flights = group_flights(tickets, omega1, cfg);
    if (flights.empty())
        throw std::runtime_error("no flights with at least " +
                                 std::to_string(cfg.min_tickets) +
                                 " tickets at the requested capacity");
    return moments_from_flights(flights, cfg.T, cfg.deciles);
}

std::vector<TicketRecord> simulate_tickets(const SolvedModel& model, std::uint64_t seed,
                                           int R, const std::string& market_id) {
    const FlightParams& p = model.params;
    RandomStream root(seed, kSimDomain);
    std::vector<TicketRecord> out;
    for (int r = 0; r < R; ++r) {
        RandomStream s = root.child(static_cast<std::uint64_t>(r));
        char fid[16];
        std::snprintf(fid, sizeof(fid), "f%06d", r);
        CabinState st = model.initial;
        for (int t = 1; t <= p.T; ++t) {
            const TypedPolicy& pol = model.policy_at(t, st);
            const PeriodOutcome o =
                simulate_period_typed(s, p, t, st, pol, model.cfg.rules);
            for (const ServedPassenger& sp : o.served) {
                TicketRecord tk;
                tk.flight_id = fid;
                tk.market_id = market_id;
                tk.cap_econ = model.initial.k_e;
                tk.cap_first = model.initial.k_f;
                tk.period = t;
                tk.cabin = sp.cabin;
                tk.fare = sp.fare;
                tk.reason = sp.type;
                out.push_back(std::move(tk));
            }
            st.k_e -= o.sales_e;
            st.k_f -= o.sales_f;
        }
    }
    return out;
}

MomentVector model_moments(const SolvedModel& model, std::uint64_t seed, int R,
                           const EstimationConfig& cfg) {
    EstimationConfig c = cfg;
    c.T = model.params.T;
    const std::vector<TicketRecord> tickets = simulate_tickets(model, seed, R);
    return empirical_moments(tickets, model.initial, c);
}

// ---- parameter box and mixing density ------------------------------------------------

const std::array<const char*, 8>& ParamBox::names() {
    static const std::array<const char*, 8> n = {"mu_l",  "cv_l",    "delta_b",
                                                 "cv_b",  "mu_xi",   "lambda0",
                                                 "d_lambda", "d_theta"};
    return n;
}

bool ParamBox::contains(const std::array<double, 8>& psi) const {
    for (int i = 0; i < 8; ++i)
        if (psi[static_cast<std::size_t>(i)] < lo[static_cast<std::size_t>(i)] ||
            psi[static_cast<std::size_t>(i)] > hi[static_cast<std::size_t>(i)])
            return false;
    return true;
}

void ParamBox::validate() const {
    for (int i = 0; i < 8; ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (!(lo[k] < hi[k]) || !std::isfinite(lo[k]) || !std::isfinite(hi[k]))
            throw std::domain_error(std::string("parameter box: need finite lo < hi for ") +
                                    names()[k]);
    }
}

std::array<double, 8> to_psi(const FlightParams& p) {
    return {p.mu_l, p.cv_l, p.delta_b, p.cv_b, p.mu_xi, p.lambda0, p.d_lambda, p.d_theta};
}

FlightParams from_psi(const std::array<double, 8>& psi, int T, double c_e, double c_f) {
    FlightParams p;
    p.mu_l = psi[0];
    p.cv_l = psi[1];
    p.delta_b = psi[2];
    p.cv_b = psi[3];
    p.mu_xi = psi[4];
    p.lambda0 = psi[5];
    p.d_lambda = psi[6];
    p.d_theta = psi[7];
    p.T = T;
    p.c_e = c_e;
    p.c_f = c_f;
    return p;
}

std::uint64_t EstimationConfig::content_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (int x : {deciles, min_tickets, model_flights, T})
        h = hash_u64(static_cast<std::uint64_t>(x), h);
    for (double x : {sigma_lo, sigma_hi, c_e, c_f}) h = hash_double(x, h);
    FlightParams dummy;  // solver hash needs parameters; only config fields matter here
    h = hash_u64(solver.content_hash(dummy) ^ (full_cholesky ? 1u : 0u), h);
    return h;
}

double MixingDensity::log_density_untruncated(const std::array<double, 8>& psi) const {
    // forward-solve L y = psi - mu
    std::array<double, 8> y{};
    for (int i = 0; i < 8; ++i) {
        double acc = psi[static_cast<std::size_t>(i)] - mu[static_cast<std::size_t>(i)];
        for (int j = 0; j < i; ++j)
            acc -= chol[static_cast<std::size_t>(i * 8 + j)] * y[static_cast<std::size_t>(j)];
        y[static_cast<std::size_t>(i)] = acc / chol[static_cast<std::size_t>(i * 8 + i)];
    }
    double quad = 0.0, logdet = 0.0;
    for (int i = 0; i < 8; ++i) {
        quad += y[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
        logdet += std::log(chol[static_cast<std::size_t>(i * 8 + i)]);
    }
    return -0.5 * quad - logdet - 4.0 * std::log(2.0 * M_PI);
}

void MixingDensity::validate() const {
    box.validate();
    for (int i = 0; i < 8; ++i)
        if (!(chol[static_cast<std::size_t>(i * 8 + i)] > 0.0))
            throw std::domain_error("mixing density: Cholesky diagonal must be positive");
}

// ---- library ------------------------------------------------------------------------

namespace {

nlohmann::json box_to_json(const ParamBox& box) {
    return nlohmann::json{{"lo", box.lo}, {"hi", box.hi}};
}

ParamBox box_from_json(const nlohmann::json& j) {
    ParamBox box;
    for (int i = 0; i < 8; ++i) {
        box.lo[static_cast<std::size_t>(i)] = j.at("lo")[static_cast<std::size_t>(i)];
        box.hi[static_cast<std::size_t>(i)] = j.at("hi")[static_cast<std::size_t>(i)];
    }
    return box;
}

nlohmann::json library_header(const MomentLibrary& lib) {
    return nlohmann::json{{"box", box_to_json(lib.box)},
                          {"omega1", {lib.omega1.k_e, lib.omega1.k_f}},
                          {"S", lib.S},
                          {"seed", lib.seed},
                          {"cfg_hash", hash_hex(lib.cfg_hash)},
                          {"T", lib.T},
                          {"deciles", lib.deciles}};
}

}  // namespace

MomentLibrary build_library(const ParamBox& box, int S, const CabinState& omega1,
                            const EstimationConfig& cfg, std::uint64_t seed,
                            const std::string& partial_path) {
    box.validate();
    if (S < 1) throw std::domain_error("build_library: S must be >= 1");

    MomentLibrary lib;
    lib.box = box;
    lib.omega1 = omega1;
    lib.S = S;
    lib.seed = seed;
    lib.cfg_hash = cfg.content_hash();
    lib.T = cfg.T;
    lib.deciles = cfg.deciles;

    struct Row {
        bool done = false;
        bool ok = false;
        std::array<double, 8> psi{};
        std::vector<double> m;
    };
    std::vector<Row> rows(static_cast<std::size_t>(S));

    // resume: accept rows whose header matches this configuration exactly
    const nlohmann::json header = library_header(lib);
    if (!partial_path.empty()) {
        std::ifstream in(partial_path);
        if (in) {
            std::string line;
            bool header_ok = false;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
                if (j.is_discarded()) break;
                if (j.contains("header")) {
                    header_ok = j["header"] == header;
                    if (!header_ok) break;
                    continue;
                }
                if (!header_ok) break;
                const int idx = j.at("j").get<int>();
                if (idx < 0 || idx >= S) continue;
                Row& row = rows[static_cast<std::size_t>(idx)];
                row.done = true;
                row.ok = !j.value("failed", false);
                if (row.ok) {
                    for (int i = 0; i < 8; ++i)
                        row.psi[static_cast<std::size_t>(i)] =
                            j.at("psi")[static_cast<std::size_t>(i)];
                    row.m = j.at("m").get<std::vector<double>>();
                }
            }
        }
    }

    std::ofstream partial;
    std::mutex partial_mu;
    if (!partial_path.empty()) {
        const bool fresh = !std::ifstream(partial_path).good();
        partial.open(partial_path, std::ios::app);
        if (fresh && partial) partial << nlohmann::json{{"header", header}}.dump() << '\n';
    }

    RandomStream draw_root(seed, kDrawDomain);
    parallel_for(static_cast<std::size_t>(S), cfg.solver.workers, [&](std::size_t j) {
        Row& row = rows[j];
        RandomStream s = draw_root.child(j);
        std::array<double, 8> psi{};
        for (int i = 0; i < 8; ++i)
            psi[static_cast<std::size_t>(i)] = s.uniform(box.lo[static_cast<std::size_t>(i)],
                                                         box.hi[static_cast<std::size_t>(i)]);
        if (row.done) return;  // restored from the partial file
        row.psi = psi;
        try {
            const FlightParams params = from_psi(psi, cfg.T, cfg.c_e, cfg.c_f);
            SolverConfig scfg = cfg.solver;
            scfg.workers = 1;  // the draw loop owns the parallelism
            const SolvedModel model = solve(params, omega1, scfg);
            EstimationConfig mc = cfg;
            const std::uint64_t sim_seed = hash_u64(seed ^ (0x9e3779b97f4a7c15ull * (j + 1)));
            const MomentVector m = model_moments(model, sim_seed, cfg.model_flights, mc);
            row.m = m.values;
            row.ok = true;
        } catch (const std::exception&) {
            row.ok = false;
        }
        row.done = true;
        if (partial.is_open()) {
            nlohmann::json rec;
            rec["j"] = static_cast<int>(j);
            if (row.ok) {
                rec["psi"] = row.psi;
                rec["m"] = row.m;
            } else {
                rec["failed"] = true;
            }
            const std::lock_guard<std::mutex> lock(partial_mu);
            partial << rec.dump() << '\n';
            partial.flush();
        }
    });

    for (int j = 0; j < S; ++j) {
        const Row& row = rows[static_cast<std::size_t>(j)];
        if (row.ok) {
            lib.draws.push_back(row.psi);
            lib.moments.push_back(row.m);
        } else {
            lib.failed.push_back(j);
        }
    }
    return lib;
}

void save_library(const MomentLibrary& lib, const std::string& path) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["header"] = library_header(lib);
    j["draws"] = lib.draws;
    j["moments"] = lib.moments;
    j["failed"] = lib.failed;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << j.dump() << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

MomentLibrary load_library(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    in >> j;
    if (j.value("format_version", -1) != 1)
        throw std::runtime_error("unsupported library format in " + path);
    const nlohmann::json& h = j.at("header");
    MomentLibrary lib;
    lib.box = box_from_json(h.at("box"));
    lib.omega1 = {h.at("omega1")[0].get<int>(), h.at("omega1")[1].get<int>()};
    lib.S = h.at("S").get<int>();
    lib.seed = h.at("seed").get<std::uint64_t>();
    lib.cfg_hash = std::stoull(h.at("cfg_hash").get<std::string>(), nullptr, 16);
    lib.T = h.at("T").get<int>();
    lib.deciles = h.at("deciles").get<int>();
    lib.draws = j.at("draws").get<std::vector<std::array<double, 8>>>();
    lib.moments = j.at("moments").get<std::vector<std::vector<double>>>();
    lib.failed = j.at("failed").get<std::vector<int>>();
    return lib;
}

// ---- mixtures and fitting --------------------------------------------------------------

MixtureResult mixture_moments(const MomentLibrary& lib) {
    if (lib.draws.empty()) throw std::runtime_error("mixture_moments: empty library");
    MixtureResult out;
    const std::size_t S = lib.draws.size();
    out.weights.assign(S, 1.0 / static_cast<double>(S));
    out.ess = static_cast<double>(S);
    out.moments.T = lib.T;
    out.moments.deciles = lib.deciles;
    const std::size_t dim = lib.moments[0].size();
    out.moments.values.assign(dim, 0.0);
    out.moments.counts.assign(dim, static_cast<long>(S));
    for (std::size_t j = 0; j < S; ++j)
        for (std::size_t c = 0; c < dim; ++c)
            out.moments.values[c] += out.weights[j] * lib.moments[j][c];
    return out;
}

MixtureResult mixture_moments(const MomentLibrary& lib, const MixingDensity& h) {
    if (lib.draws.empty()) throw std::runtime_error("mixture_moments: empty library");
    for (int i = 0; i < 8; ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (h.box.lo[k] != lib.box.lo[k] || h.box.hi[k] != lib.box.hi[k])
            throw std::domain_error("mixture_moments: density box must equal the library box");
    }
    const std::size_t S = lib.draws.size();
    std::vector<double> logw(S);
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < S; ++j) {
        logw[j] = h.log_density_untruncated(lib.draws[j]);
        m = std::max(m, logw[j]);
    }
    if (!std::isfinite(m))
        throw std::runtime_error("mixture_moments: the density puts no mass on the library");

    MixtureResult out;
    out.weights.assign(S, 0.0);
    double sum = 0.0;
    for (std::size_t j = 0; j < S; ++j) {
        out.weights[j] = std::exp(logw[j] - m);
        sum += out.weights[j];
    }
    double sq = 0.0;
    for (double& w : out.weights) {
        w /= sum;
        sq += w * w;
    }
    out.ess = 1.0 / sq;

    out.moments.T = lib.T;
    out.moments.deciles = lib.deciles;
    const std::size_t dim = lib.moments[0].size();
    out.moments.values.assign(dim, 0.0);
    out.moments.counts.assign(dim, static_cast<long>(S));
    for (std::size_t j = 0; j < S; ++j) {
        const double w = out.weights[j];
        if (w == 0.0) continue;
        for (std::size_t c = 0; c < dim; ++c)
            out.moments.values[c] += w * lib.moments[j][c];
    }
    return out;
}

namespace {

// parameter vector <-> mixing density; diagonal mode uses 16 coordinates,
// full Cholesky appends the 28 scaled off-diagonal entries
struct FitSpace {
    ParamBox box;
    bool full = false;
    double sig_lo = 0.01, sig_hi = 2.0;

    std::size_t dims() const { return full ? 44 : 16; }

    double width(int i) const {
        return box.hi[static_cast<std::size_t>(i)] - box.lo[static_cast<std::size_t>(i)];
    }

    MixingDensity unpack(const std::vector<double>& th, double* penalty) const {
        MixingDensity h;
        h.box = box;
        double pen = 0.0;
        auto clampv = [&pen](double x, double lo, double hi) {
            const double c = std::clamp(x, lo, hi);
            pen += (x - c) * (x - c);
            return c;
        };
        for (int i = 0; i < 8; ++i) {
            const auto k = static_cast<std::size_t>(i);
            h.mu[k] = clampv(th[k], box.lo[k], box.hi[k]);
        }
        for (int i = 0; i < 8; ++i) {
            const auto k = static_cast<std::size_t>(i);
            const double s =
                clampv(th[8 + k], std::log(sig_lo), std::log(sig_hi));
            h.chol[k * 8 + k] = width(i) * std::exp(s);
        }
        if (full) {
            std::size_t idx = 16;
            for (int i = 1; i < 8; ++i)
                for (int j = 0; j < i; ++j) {
                    const double raw = clampv(th[idx++], -3.0, 3.0);
                    h.chol[static_cast<std::size_t>(i * 8 + j)] = raw * width(i);
                }
        }
        if (penalty) *penalty = pen;
        return h;
    }
};

}  // namespace

FitResult fit(const MomentLibrary& lib, const MomentVector& rho_hat,
              const EstimationConfig& cfg, std::uint64_t seed) {
    if (lib.moments.empty()) throw std::runtime_error("fit: empty library");
    if (rho_hat.values.size() != lib.moments[0].size())
        throw std::domain_error("fit: moment dimensions differ");

    FitSpace space;
    space.box = lib.box;
    space.full = cfg.full_cholesky;
    space.sig_lo = cfg.sigma_lo;
    space.sig_hi = cfg.sigma_hi;

    auto objective_of = [&](const MixingDensity& h) {
        const MixtureResult mix = mixture_moments(lib, h);
        double obj = 0.0;
        for (std::size_t c = 0; c < rho_hat.values.size(); ++c) {
            const double d = rho_hat.values[c] - mix.moments.values[c];
            obj += d * d;
        }
        return obj;
    };
    auto objective = [&](const std::vector<double>& th) {
        double pen = 0.0;
        const MixingDensity h = space.unpack(th, &pen);
        return objective_of(h) + 1e8 * pen;
    };

    // start set: space filling over mu, a near-flat density, and the library
    // draw whose moments sit closest to the target
    std::vector<std::vector<double>> starts;
    RandomStream s(seed, kFitDomain);
    const std::size_t dims = space.dims();
    {
        std::vector<double> th(dims, 0.0);
        for (int i = 0; i < 8; ++i)
            th[static_cast<std::size_t>(i)] =
                0.5 * (lib.box.lo[static_cast<std::size_t>(i)] +
                       lib.box.hi[static_cast<std::size_t>(i)]);
        for (int i = 0; i < 8; ++i) th[8 + static_cast<std::size_t>(i)] = std::log(1.0);
        starts.push_back(th);  // wide, near-uniform
        std::size_t nearest = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < lib.moments.size(); ++j) {
            double d2 = 0.0;
            for (std::size_t c = 0; c < rho_hat.values.size(); ++c) {
                const double d = rho_hat.values[c] - lib.moments[j][c];
                d2 += d * d;
            }
            if (d2 < best) {
                best = d2;
                nearest = j;
            }
        }
        for (int i = 0; i < 8; ++i)
            th[static_cast<std::size_t>(i)] = lib.draws[nearest][static_cast<std::size_t>(i)];
        for (int i = 0; i < 8; ++i)
            th[8 + static_cast<std::size_t>(i)] = std::log(std::max(cfg.sigma_lo * 2.0, 0.08));
        starts.push_back(th);
    }
    while (static_cast<int>(starts.size()) < cfg.fit_starts) {
        std::vector<double> th(dims, 0.0);
        for (int i = 0; i < 8; ++i)
            th[static_cast<std::size_t>(i)] =
                s.uniform(lib.box.lo[static_cast<std::size_t>(i)],
                          lib.box.hi[static_cast<std::size_t>(i)]);
        for (int i = 0; i < 8; ++i)
            th[8 + static_cast<std::size_t>(i)] =
                s.uniform(std::log(cfg.sigma_lo * 2.0), std::log(cfg.sigma_hi * 0.5));
        starts.push_back(th);
    }

    const int per_start = std::max(400, cfg.fit_max_evals / std::max(1, cfg.fit_starts));
    VecNM best;
    std::vector<double> locals;
    std::vector<VecNM> results(starts.size());
    parallel_for(starts.size(), cfg.solver.workers, [&](std::size_t i) {
        std::vector<double> step(dims);
        for (std::size_t d = 0; d < dims; ++d) {
            if (d < 8) step[d] = 0.15 * space.width(static_cast<int>(d));
            else if (d < 16) step[d] = 0.5;
            else step[d] = 0.2;
        }
        results[i] = nelder_mead_min(objective, starts[i], step, per_start, 1e-10);
    });
    for (const VecNM& r : results) {
        locals.push_back(r.f);
        if (r.f < best.f) best = r;
    }
    // polish the incumbent at shrinking scales
    for (double scale : {0.2, 0.02}) {
        std::vector<double> step(dims);
        for (std::size_t d = 0; d < dims; ++d) {
            if (d < 8) step[d] = scale * space.width(static_cast<int>(d));
            else step[d] = scale;
        }
        const VecNM r = nelder_mead_min(objective, best.x, step, per_start, 1e-13);
        if (r.f < best.f) best = r;
    }
    std::sort(locals.begin(), locals.end());

    FitResult out;
    double pen = 0.0;
    out.density = space.unpack(best.x, &pen);
    out.objective = objective_of(out.density);
    out.ess = mixture_moments(lib, out.density).ess;
    out.identified = lib.moments.size() > 1;
    out.local_optima = std::move(locals);
    return out;
}

// ---- pooling and bootstrap ---------------------------------------------------------------

namespace {

// draws from a box-truncated normal: rejection first, Gibbs fallback
std::vector<std::array<double, 8>> sample_truncated(const MixingDensity& h, int n,
                                                    RandomStream s) {
    std::vector<std::array<double, 8>> out;
    out.reserve(static_cast<std::size_t>(n));
    long tries = 0;
    const long try_cap = 40L * n;
    while (static_cast<int>(out.size()) < n && tries < try_cap) {
        ++tries;
        std::array<double, 8> z{};
        for (int i = 0; i < 8; ++i)
            z[static_cast<std::size_t>(i)] = normal_quantile(s.uniform01());
        std::array<double, 8> x = h.mu;
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j <= i; ++j)
                x[static_cast<std::size_t>(i)] +=
                    h.chol[static_cast<std::size_t>(i * 8 + j)] * z[static_cast<std::size_t>(j)];
        if (h.box.contains(x)) out.push_back(x);
    }
    if (static_cast<int>(out.size()) == n) return out;

    // Gibbs sweep over coordinates with truncated conditionals
    // precision matrix from the Cholesky factor
    std::array<std::array<double, 8>, 8> sigma{};
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            double acc = 0.0;
            for (int k = 0; k <= std::min(i, j); ++k)
                acc += h.chol[static_cast<std::size_t>(i * 8 + k)] *
                       h.chol[static_cast<std::size_t>(j * 8 + k)];
            sigma[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = acc;
        }
    // invert via Gauss-Jordan (8x8, well conditioned by construction)
    std::array<std::array<double, 16>, 8> aug{};
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j)
            aug[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                sigma[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        aug[static_cast<std::size_t>(i)][static_cast<std::size_t>(8 + i)] = 1.0;
    }
    for (int col = 0; col < 8; ++col) {
        int piv = col;
        for (int r = col + 1; r < 8; ++r)
            if (std::fabs(aug[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)]) >
                std::fabs(aug[static_cast<std::size_t>(piv)][static_cast<std::size_t>(col)]))
                piv = r;
        std::swap(aug[static_cast<std::size_t>(col)], aug[static_cast<std::size_t>(piv)]);
        const double d = aug[static_cast<std::size_t>(col)][static_cast<std::size_t>(col)];
        for (int j = 0; j < 16; ++j) aug[static_cast<std::size_t>(col)][static_cast<std::size_t>(j)] /= d;
        for (int r = 0; r < 8; ++r) {
            if (r == col) continue;
            const double f = aug[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)];
            if (f == 0.0) continue;
            for (int j = 0; j < 16; ++j)
                aug[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)] -=
                    f * aug[static_cast<std::size_t>(col)][static_cast<std::size_t>(j)];
        }
    }
    auto prec = [&](int i, int j) {
        return aug[static_cast<std::size_t>(i)][static_cast<std::size_t>(8 + j)];
    };

    std::array<double, 8> x{};
    for (int i = 0; i < 8; ++i)
        x[static_cast<std::size_t>(i)] = std::clamp(h.mu[static_cast<std::size_t>(i)],
                                                    h.box.lo[static_cast<std::size_t>(i)],
                                                    h.box.hi[static_cast<std::size_t>(i)]);
    auto sweep = [&] {
        for (int i = 0; i < 8; ++i) {
            const double pii = prec(i, i);
            double shift = 0.0;
            for (int j = 0; j < 8; ++j)
                if (j != i)
                    shift += prec(i, j) * (x[static_cast<std::size_t>(j)] -
                                           h.mu[static_cast<std::size_t>(j)]);
            const double cmean = h.mu[static_cast<std::size_t>(i)] - shift / pii;
            const double csd = std::sqrt(1.0 / pii);
            const double a = normal_cdf((h.box.lo[static_cast<std::size_t>(i)] - cmean) / csd);
            const double b = normal_cdf((h.box.hi[static_cast<std::size_t>(i)] - cmean) / csd);
            const double u = a + (b - a) * s.uniform01();
            const double z = normal_quantile(std::clamp(u, 1e-15, 1.0 - 1e-15));
            x[static_cast<std::size_t>(i)] = std::clamp(cmean + csd * z,
                                                        h.box.lo[static_cast<std::size_t>(i)],
                                                        h.box.hi[static_cast<std::size_t>(i)]);
        }
    };
    for (int burn = 0; burn < 100; ++burn) sweep();
    while (static_cast<int>(out.size()) < n) {
        sweep();
        out.push_back(x);
    }
    return out;
}

}  // namespace

std::vector<std::array<double, 8>> sample_mixing(const MixingDensity& h, int n,
                                                 std::uint64_t seed) {
    h.validate();
    return sample_truncated(h, n, RandomStream(seed, kPoolDomain));
}

PooledSummary pool_capacities(const std::vector<std::pair<MixingDensity, double>>& parts,
                              int draws_per_part, std::uint64_t seed) {
    if (parts.empty()) throw std::domain_error("pool_capacities: no components");
    double wsum = 0.0;
    for (const auto& [h, w] : parts) wsum += w;
    if (!(std::fabs(wsum - 1.0) < 1e-9))
        throw std::domain_error("pool_capacities: weights must sum to one");

    PooledSummary out;
    std::array<double, 8> second{};
    std::vector<std::vector<std::array<double, 8>>> all_draws;
    RandomStream root(seed, kPoolDomain);
    for (std::size_t c = 0; c < parts.size(); ++c) {
        const auto& [h, w] = parts[c];
        h.validate();
        auto draws = sample_truncated(h, draws_per_part, root.child(c));
        std::array<double, 8> mean{};
        for (const auto& x : draws)
            for (int i = 0; i < 8; ++i) mean[static_cast<std::size_t>(i)] += x[static_cast<std::size_t>(i)];
        for (int i = 0; i < 8; ++i) mean[static_cast<std::size_t>(i)] /= draws.size();
        for (const auto& x : draws)
            for (int i = 0; i < 8; ++i)
                second[static_cast<std::size_t>(i)] +=
                    w * x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)] /
                    static_cast<double>(draws.size());
        for (int i = 0; i < 8; ++i)
            out.mean[static_cast<std::size_t>(i)] += w * mean[static_cast<std::size_t>(i)];
        all_draws.push_back(std::move(draws));
    }
    for (int i = 0; i < 8; ++i) {
        const auto k = static_cast<std::size_t>(i);
        out.sd[k] = std::sqrt(std::max(0.0, second[k] - out.mean[k] * out.mean[k]));
    }

    // weighted marginal density curves on the union box
    out.curves.resize(8);
    const int bins = 64;
    for (int i = 0; i < 8; ++i) {
        double lo = 1e300, hi = -1e300;
        for (const auto& [h, w] : parts) {
            lo = std::min(lo, h.box.lo[static_cast<std::size_t>(i)]);
            hi = std::max(hi, h.box.hi[static_cast<std::size_t>(i)]);
        }
        const double width = (hi - lo) / bins;
        std::vector<double> dens(static_cast<std::size_t>(bins), 0.0);
        for (std::size_t c = 0; c < parts.size(); ++c) {
            const double w = parts[c].second;
            const auto& draws = all_draws[c];
            for (const auto& x : draws) {
                int b = static_cast<int>((x[static_cast<std::size_t>(i)] - lo) / width);
                b = std::clamp(b, 0, bins - 1);
                dens[static_cast<std::size_t>(b)] +=
                    w / (static_cast<double>(draws.size()) * width);
            }
        }
        auto& curve = out.curves[static_cast<std::size_t>(i)];
        curve.reserve(static_cast<std::size_t>(bins));
        for (int b = 0; b < bins; ++b)
            curve.push_back({lo + (b + 0.5) * width, dens[static_cast<std::size_t>(b)]});
    }
    return out;
}

BootstrapResult bootstrap(const std::vector<TicketRecord>& tickets,
                          const MomentLibrary& lib, int B, const EstimationConfig& cfg,
                          std::uint64_t seed) {
    if (B < 2) throw std::domain_error("bootstrap: B must be >= 2");
    std::vector<const TicketRecord*> group;
    for (const TicketRecord& tk : tickets)
        if (tk.cap_econ == lib.omega1.k_e && tk.cap_first == lib.omega1.k_f)
            group.push_back(&tk);
    if (group.empty()) throw std::runtime_error("bootstrap: no tickets at the library capacity");

    std::vector<std::array<double, 8>> mus;
    std::vector<std::array<double, 8>> sigmas;
    RandomStream root(seed, kBootDomain);
    for (int b = 0; b < B; ++b) {
        RandomStream s = root.child(static_cast<std::uint64_t>(b));
        std::vector<TicketRecord> resampled;
        resampled.reserve(group.size());
        for (std::size_t i = 0; i < group.size(); ++i)
            resampled.push_back(*group[s.below(group.size())]);
        const MomentVector rho = empirical_moments(resampled, lib.omega1, cfg);
        // one fit seed for every refit: variation across b reflects the data
        // resampling alone, and identical resamples refit identically
        const FitResult f = fit(lib, rho, cfg, seed);
        mus.push_back(f.density.mu);
        std::array<double, 8> sig{};
        for (int i = 0; i < 8; ++i)
            sig[static_cast<std::size_t>(i)] =
                f.density.chol[static_cast<std::size_t>(i * 8 + i)];
        sigmas.push_back(sig);
    }

    BootstrapResult out;
    out.refits = B;
    auto sd_of = [B](const std::vector<std::array<double, 8>>& xs, int i) {
        double mean = 0.0;
        for (const auto& x : xs) mean += x[static_cast<std::size_t>(i)];
        mean /= B;
        double ss = 0.0;
        for (const auto& x : xs) {
            const double d = x[static_cast<std::size_t>(i)] - mean;
            ss += d * d;
        }
        return std::sqrt(ss / (B - 1));
    };
    for (int i = 0; i < 8; ++i) {
        out.se_mu[static_cast<std::size_t>(i)] = sd_of(mus, i);
        out.se_sigma[static_cast<std::size_t>(i)] = sd_of(sigmas, i);
    }
    return out;
}

}  // namespace twocabin
