#include "twocabin/mechanisms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "twocabin/parallel.hpp"

namespace twocabin {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// stream domains, so table construction and evaluation never share draws
constexpr std::uint64_t kEvalDomain = 0xE7A1u;
constexpr std::uint64_t kTableDomain = 0x0B5Eu;

struct RepOutcome {
    double ps = 0.0;
    double cs_b = 0.0;
    double cs_l = 0.0;
    int sold_e = 0;
    int sold_f = 0;

    double cs() const { return cs_b + cs_l; }
    double ts() const { return ps + cs_b + cs_l; }
};

// ---- posted-price mechanisms ---------------------------------------------------

RepOutcome eval_posted(const SolvedModel& model, const ArrivalDraw& draw) {
    const FlightParams& p = model.params;
    const bool re_choice = model.cfg.rules.re_choice;
    RepOutcome out;
    CabinState st = model.initial;
    for (int t = 1; t <= p.T; ++t) {
        const TypedPolicy& pol = model.policy_at(t, st);
        int se = 0, sf = 0;
        for (const ArrivalDraw::Arrival& a : draw.periods[static_cast<std::size_t>(t - 1)]) {
            const PricePair& prices = a.business ? pol.business : pol.leisure;
            bool open_e = se < pol.q_e;
            bool open_f = sf < pol.q_f;
            if (pol.cap_total >= 0 && se + sf >= pol.cap_total) open_e = open_f = false;
            int got = -1;
            if (re_choice) {
                got = choose_option(a.v, a.xi, prices, open_e, open_f);
            } else {
                const int wants = choose_option(a.v, a.xi, prices, true, true);
                if (wants == 0 && open_e) got = 0;
                if (wants == 1 && open_f) got = 1;
            }
            if (got == 0) {
                ++se;
                out.ps += prices.p_e - p.c_e;
                (a.business ? out.cs_b : out.cs_l) += a.v - prices.p_e;
            } else if (got == 1) {
                ++sf;
                out.ps += prices.p_f - p.c_f;
                (a.business ? out.cs_b : out.cs_l) += a.v * a.xi - prices.p_f;
            }
        }
        st.k_e -= se;
        st.k_f -= sf;
        out.sold_e += se;
        out.sold_f += sf;
    }
    return out;
}

// ---- efficient within-period assignment -----------------------------------------

// Passenger-indexed dynamic program.  back(i, r) is the best value from
// passengers i..n-1 with remaining seats r, terminal layer taken from the
// continuation; fwd(i, u) is the best value from passengers 0..i-1 using
// exactly u seats (-inf where infeasible), used for the removal problems in
// the auction payments.
struct AssignTables {
    int n = 0, ke = 0, kf = 0;
    std::vector<double> back;
    std::vector<double> fwd;

    std::size_t grid() const {
        return static_cast<std::size_t>(ke + 1) * static_cast<std::size_t>(kf + 1);
    }
    double& B(int i, int re, int rf) {
        return back[static_cast<std::size_t>(i) * grid() +
                    static_cast<std::size_t>(re) * static_cast<std::size_t>(kf + 1) +
                    static_cast<std::size_t>(rf)];
    }
    double& F(int i, int ue, int uf) {
        return fwd[static_cast<std::size_t>(i) * grid() +
                   static_cast<std::size_t>(ue) * static_cast<std::size_t>(kf + 1) +
                   static_cast<std::size_t>(uf)];
    }
};

template <typename Cont>
void build_backward(AssignTables& tab, const std::vector<ArrivalDraw::Arrival>& batch,
                    double c_e, double c_f, const Cont& cont) {
    const int n = tab.n, ke = tab.ke, kf = tab.kf;
    tab.back.resize(static_cast<std::size_t>(n + 1) * tab.grid());
    for (int re = 0; re <= ke; ++re)
        for (int rf = 0; rf <= kf; ++rf) tab.B(n, re, rf) = cont(re, rf);
    for (int i = n - 1; i >= 0; --i) {
        const double ve = batch[static_cast<std::size_t>(i)].v - c_e;
        const double vf =
            batch[static_cast<std::size_t>(i)].v * batch[static_cast<std::size_t>(i)].xi -
            c_f;
        for (int re = 0; re <= ke; ++re)
            for (int rf = 0; rf <= kf; ++rf) {
                double best = tab.B(i + 1, re, rf);
                if (re > 0) best = std::max(best, ve + tab.B(i + 1, re - 1, rf));
                if (rf > 0) best = std::max(best, vf + tab.B(i + 1, re, rf - 1));
                tab.B(i, re, rf) = best;
            }
    }
}

void build_forward(AssignTables& tab, const std::vector<ArrivalDraw::Arrival>& batch,
                   double c_e, double c_f) {
    const int n = tab.n, ke = tab.ke, kf = tab.kf;
    tab.fwd.assign(static_cast<std::size_t>(n + 1) * tab.grid(), kNegInf);
    tab.F(0, 0, 0) = 0.0;
    for (int i = 1; i <= n; ++i) {
        const double ve = batch[static_cast<std::size_t>(i - 1)].v - c_e;
        const double vf = batch[static_cast<std::size_t>(i - 1)].v *
                              batch[static_cast<std::size_t>(i - 1)].xi -
                          c_f;
        for (int ue = 0; ue <= ke; ++ue)
            for (int uf = 0; uf <= kf; ++uf) {
                double best = tab.F(i - 1, ue, uf);
                if (ue > 0 && tab.F(i - 1, ue - 1, uf) > kNegInf)
                    best = std::max(best, tab.F(i - 1, ue - 1, uf) + ve);
                if (uf > 0 && tab.F(i - 1, ue, uf - 1) > kNegInf)
                    best = std::max(best, tab.F(i - 1, ue, uf - 1) + vf);
                tab.F(i, ue, uf) = best;
            }
    }
}

// Recover the optimal assignment (ties prefer first class, then economy,
// matching the posted-price tie convention).
std::vector<int> backtrack(AssignTables& tab, const std::vector<ArrivalDraw::Arrival>& batch,
                           double c_e, double c_f) {
    std::vector<int> assign(static_cast<std::size_t>(tab.n), -1);
    int re = tab.ke, rf = tab.kf;
    for (int i = 0; i < tab.n; ++i) {
        const double skip = tab.B(i + 1, re, rf);
        const double ve = batch[static_cast<std::size_t>(i)].v - c_e;
        const double vf =
            batch[static_cast<std::size_t>(i)].v * batch[static_cast<std::size_t>(i)].xi -
            c_f;
        const double serve_e = re > 0 ? ve + tab.B(i + 1, re - 1, rf) : kNegInf;
        const double serve_f = rf > 0 ? vf + tab.B(i + 1, re, rf - 1) : kNegInf;
        if (serve_f >= serve_e && serve_f >= skip) {
            assign[static_cast<std::size_t>(i)] = 1;
            --rf;
        } else if (serve_e >= skip) {
            assign[static_cast<std::size_t>(i)] = 0;
            --re;
        }
    }
    return assign;
}

struct FdVcgOutcome {
    RepOutcome fd;
    RepOutcome vcg;
};

FdVcgOutcome eval_observed(const FlightParams& p, const CabinState& initial,
                           const ObservedValueTable& table, const ArrivalDraw& draw,
                           bool with_vcg) {
    FdVcgOutcome out;
    CabinState st = initial;
    for (int t = 1; t <= p.T; ++t) {
        const auto& batch = draw.periods[static_cast<std::size_t>(t - 1)];
        const PeriodAuction auction = auction_period(
            batch, st, p.c_e, p.c_f,
            [&](int re, int rf) { return table.at(t + 1, re, rf); }, with_vcg);
        int se = 0, sf = 0;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const int a = auction.assignment[i];
            if (a < 0) continue;
            const ArrivalDraw::Arrival& arr = batch[i];
            const double val = a == 0 ? arr.v : arr.v * arr.xi;
            const double cost = a == 0 ? p.c_e : p.c_f;
            (a == 0 ? se : sf) += 1;
            out.fd.ps += val - cost;  // fares equal valuations
            if (with_vcg) {
                const double pay = auction.payments[i];
                out.vcg.ps += pay - cost;
                (arr.business ? out.vcg.cs_b : out.vcg.cs_l) += val - pay;
            }
        }
        out.fd.sold_e += se;
        out.fd.sold_f += sf;
        out.vcg.sold_e += se;
        out.vcg.sold_f += sf;
        st.k_e -= se;
        st.k_f -= sf;
    }
    return out;
}

RepOutcome eval_first_best(const FlightParams& p, const CabinState& initial,
                           const ArrivalDraw& draw) {
    std::vector<ArrivalDraw::Arrival> pool;
    for (const auto& period : draw.periods)
        pool.insert(pool.end(), period.begin(), period.end());
    const PeriodAuction best = auction_period(
        pool, initial, p.c_e, p.c_f, [](int, int) { return 0.0; }, false);
    RepOutcome out;
    out.ps = best.welfare;  // full extraction: the seller keeps everything
    for (int a : best.assignment) {
        if (a == 0) ++out.sold_e;
        if (a == 1) ++out.sold_f;
    }
    return out;
}

// ---- aggregation -----------------------------------------------------------------

WelfareReport summarize(const std::vector<RepOutcome>& reps, const CabinState& initial) {
    WelfareReport rep;
    const std::size_t R = reps.size();
    rep.replications = static_cast<long>(R);
    if (R == 0) return rep;
    auto mean_se = [R](auto&& get, double& mean, double& se) {
        double sum = 0.0;
        for (std::size_t i = 0; i < R; ++i) sum += get(i);
        mean = sum / static_cast<double>(R);
        double ss = 0.0;
        for (std::size_t i = 0; i < R; ++i) {
            const double d = get(i) - mean;
            ss += d * d;
        }
        se = R > 1
                 ? std::sqrt(ss / (static_cast<double>(R) * (static_cast<double>(R) - 1)))
                 : 0.0;
    };
    mean_se([&](std::size_t i) { return reps[i].ps; }, rep.producer_surplus, rep.ps_se);
    mean_se([&](std::size_t i) { return reps[i].cs(); }, rep.consumer_surplus, rep.cs_se);
    mean_se([&](std::size_t i) { return reps[i].cs_b; }, rep.cs_business,
            rep.cs_business_se);
    mean_se([&](std::size_t i) { return reps[i].cs_l; }, rep.cs_leisure, rep.cs_leisure_se);
    mean_se([&](std::size_t i) { return reps[i].ts(); }, rep.total_surplus, rep.ts_se);
    double se_unused = 0.0;
    mean_se([&](std::size_t i) { return static_cast<double>(reps[i].sold_e); },
            rep.seats_sold_e, se_unused);
    mean_se([&](std::size_t i) { return static_cast<double>(reps[i].sold_f); },
            rep.seats_sold_f, se_unused);
    const int cap = initial.k_e + initial.k_f;
    rep.load_factor = cap > 0 ? (rep.seats_sold_e + rep.seats_sold_f) / cap : 0.0;
    return rep;
}

std::vector<double> ts_of(const std::vector<RepOutcome>& reps) {
    std::vector<double> out(reps.size());
    for (std::size_t i = 0; i < reps.size(); ++i) out[i] = reps[i].ts();
    return out;
}

}  // namespace

PeriodAuction auction_period(const std::vector<ArrivalDraw::Arrival>& batch,
                             const CabinState& remaining, double c_e, double c_f,
                             const std::function<double(int, int)>& continuation,
                             bool with_payments) {
    PeriodAuction out;
    const int n = static_cast<int>(batch.size());
    out.assignment.assign(static_cast<std::size_t>(n), -1);
    out.payments.assign(static_cast<std::size_t>(n), 0.0);
    if (n == 0) {
        out.welfare = continuation(remaining.k_e, remaining.k_f);
        return out;
    }
    AssignTables tab;
    tab.n = n;
    tab.ke = remaining.k_e;
    tab.kf = remaining.k_f;
    build_backward(tab, batch, c_e, c_f,
                   [&](int re, int rf) { return continuation(re, rf); });
    out.assignment = backtrack(tab, batch, c_e, c_f);
    out.welfare = tab.B(0, tab.ke, tab.kf);
    if (!with_payments) return out;

    build_forward(tab, batch, c_e, c_f);
    for (int i = 0; i < n; ++i) {
        const int a = out.assignment[static_cast<std::size_t>(i)];
        if (a < 0) continue;
        const ArrivalDraw::Arrival& arr = batch[static_cast<std::size_t>(i)];
        const double val = a == 0 ? arr.v : arr.v * arr.xi;
        // optimal welfare with passenger i removed: split the others into a
        // prefix using u seats and a suffix on the remainder
        double w_minus = kNegInf;
        for (int ue = 0; ue <= tab.ke; ++ue)
            for (int uf = 0; uf <= tab.kf; ++uf) {
                const double f = tab.F(i, ue, uf);
                if (f == kNegInf) continue;
                w_minus = std::max(w_minus, f + tab.B(i + 1, tab.ke - ue, tab.kf - uf));
            }
        out.payments[static_cast<std::size_t>(i)] = w_minus - (out.welfare - val);
    }
    return out;
}

ArrivalDraw ArrivalDraw::generate(const FlightParams& p, RandomStream s) {
    ArrivalDraw draw;
    draw.periods.resize(static_cast<std::size_t>(p.T));
    const TruncNormal fb = p.business_values();
    const TruncNormal fl = p.leisure_values();
    const PremiumDist xi = p.premium();
    for (int t = 1; t <= p.T; ++t) {
        const double lam = arrival_rate(p, t);
        const double theta = business_share(p, t);
        auto& period = draw.periods[static_cast<std::size_t>(t - 1)];
        if (lam <= 0.0) continue;
        const PoissonWeights pw = poisson_weights(lam);
        const int n = pw.sample(s);
        period.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            Arrival a;
            a.business = s.uniform01() < theta;
            a.v = (a.business ? fb : fl).quantile(s.uniform01());
            a.xi = xi.quantile(s.uniform01());
            period.push_back(a);
        }
    }
    return draw;
}

ObservedValueTable observed_value_table(const FlightParams& p, const CabinState& cap,
                                        int batches, std::uint64_t seed, int workers) {
    p.validate();
    ObservedValueTable table;
    table.T = p.T;
    table.cap = cap;
    const std::size_t grid =
        static_cast<std::size_t>(cap.k_e + 1) * static_cast<std::size_t>(cap.k_f + 1);
    table.v.assign(static_cast<std::size_t>(p.T), std::vector<double>(grid, 0.0));

    RandomStream root(seed, kTableDomain);
    const TruncNormal fb = p.business_values();
    const TruncNormal fl = p.leisure_values();
    const PremiumDist xi = p.premium();

    for (int t = p.T; t >= 1; --t) {
        const double lam = arrival_rate(p, t);
        const double theta = business_share(p, t);
        std::vector<std::vector<double>> batch_vals(static_cast<std::size_t>(batches));
        RandomStream tstream = root.child(static_cast<std::uint64_t>(t));
        std::vector<RandomStream> streams;
        streams.reserve(static_cast<std::size_t>(batches));
        for (int m = 0; m < batches; ++m)
            streams.push_back(tstream.child(static_cast<std::uint64_t>(m)));

        // one batch prices every state at once: the draws are common across
        // states by construction, which keeps the table smooth in the state
        parallel_for(static_cast<std::size_t>(batches), workers, [&](std::size_t m) {
            RandomStream s = streams[m];
            std::vector<ArrivalDraw::Arrival> batch;
            if (lam > 0.0) {
                const PoissonWeights pw = poisson_weights(lam);
                const int n = pw.sample(s);
                batch.reserve(static_cast<std::size_t>(n));
                for (int i = 0; i < n; ++i) {
                    ArrivalDraw::Arrival a;
                    a.business = s.uniform01() < theta;
                    a.v = (a.business ? fb : fl).quantile(s.uniform01());
                    a.xi = xi.quantile(s.uniform01());
                    batch.push_back(a);
                }
            }
            AssignTables tab;
            tab.n = static_cast<int>(batch.size());
            tab.ke = cap.k_e;
            tab.kf = cap.k_f;
            build_backward(tab, batch, p.c_e, p.c_f,
                           [&](int re, int rf) { return table.at(t + 1, re, rf); });
            batch_vals[m].assign(grid, 0.0);
            for (int re = 0; re <= cap.k_e; ++re)
                for (int rf = 0; rf <= cap.k_f; ++rf)
                    batch_vals[m][static_cast<std::size_t>(re) *
                                      static_cast<std::size_t>(cap.k_f + 1) +
                                  static_cast<std::size_t>(rf)] = tab.B(0, re, rf);
        });

        auto& layer = table.v[static_cast<std::size_t>(t - 1)];
        for (int m = 0; m < batches; ++m)
            for (std::size_t c = 0; c < grid; ++c)
                layer[c] += batch_vals[static_cast<std::size_t>(m)][c];
        for (std::size_t c = 0; c < grid; ++c) layer[c] /= batches;
    }
    return table;
}

const ComparisonRow& Comparison::row(const std::string& name) const {
    for (const ComparisonRow& r : rows)
        if (r.mechanism == name) return r;
    throw std::out_of_range("no mechanism named " + name);
}

WelfareReport run_baseline(const SolvedModel& model, std::uint64_t seed, int R,
                           int workers) {
    RandomStream root(seed, kEvalDomain);
    std::vector<RepOutcome> reps(static_cast<std::size_t>(R));
    parallel_for(reps.size(), workers, [&](std::size_t r) {
        const ArrivalDraw draw =
            ArrivalDraw::generate(model.params, root.child(static_cast<std::uint64_t>(r)));
        reps[r] = eval_posted(model, draw);
    });
    return summarize(reps, model.initial);
}

WelfareReport run_third_degree(const FlightParams& p, const CabinState& initial,
                               const SolverConfig& cfg, std::uint64_t seed, int R,
                               int workers) {
    const SolvedModel model = solve_third_degree(p, initial, cfg);
    return run_baseline(model, seed, R, workers);
}

WelfareReport run_first_degree(const FlightParams& p, const CabinState& initial,
                               const SolverConfig& cfg, std::uint64_t seed, int R, int M,
                               int workers) {
    (void)cfg;  // the observed-valuation mechanisms need no price solver
    const ObservedValueTable table = observed_value_table(p, initial, M, seed, workers);
    RandomStream root(seed, kEvalDomain);
    std::vector<RepOutcome> reps(static_cast<std::size_t>(R));
    parallel_for(reps.size(), workers, [&](std::size_t r) {
        const ArrivalDraw draw =
            ArrivalDraw::generate(p, root.child(static_cast<std::uint64_t>(r)));
        reps[r] = eval_observed(p, initial, table, draw, false).fd;
    });
    return summarize(reps, initial);
}

WelfareReport run_vcg(const FlightParams& p, const CabinState& initial,
                      const SolverConfig& cfg, std::uint64_t seed, int R, int M,
                      int workers) {
    (void)cfg;
    const ObservedValueTable table = observed_value_table(p, initial, M, seed, workers);
    RandomStream root(seed, kEvalDomain);
    std::vector<RepOutcome> reps(static_cast<std::size_t>(R));
    parallel_for(reps.size(), workers, [&](std::size_t r) {
        const ArrivalDraw draw =
            ArrivalDraw::generate(p, root.child(static_cast<std::uint64_t>(r)));
        reps[r] = eval_observed(p, initial, table, draw, true).vcg;
    });
    return summarize(reps, initial);
}

WelfareReport run_first_best(const FlightParams& p, const CabinState& initial,
                             std::uint64_t seed, int R, int workers) {
    p.validate();
    RandomStream root(seed, kEvalDomain);
    std::vector<RepOutcome> reps(static_cast<std::size_t>(R));
    parallel_for(reps.size(), workers, [&](std::size_t r) {
        const ArrivalDraw draw =
            ArrivalDraw::generate(p, root.child(static_cast<std::uint64_t>(r)));
        reps[r] = eval_first_best(p, initial, draw);
    });
    return summarize(reps, initial);
}

Comparison compare(const FlightParams& p, const CabinState& initial,
                   const SolverConfig& cfg, const MechanismConfig& mcfg) {
    p.validate();

    SolverConfig ucfg = cfg;
    ucfg.pooled_release = mcfg.pooled_release;
    const SolvedModel uniform = solve_uniform_price(p, initial, ucfg);
    const SolvedModel baseline = solve(p, initial, cfg, uniform);
    const SolvedModel third = solve_third_degree(p, initial, cfg, baseline);
    const ObservedValueTable table =
        observed_value_table(p, initial, mcfg.M, mcfg.seed, mcfg.workers);

    const std::size_t R = static_cast<std::size_t>(mcfg.R);
    std::vector<RepOutcome> r_base(R), r_unif(R), r_third(R), r_fd(R), r_vcg(R), r_fb(R);
    RandomStream root(mcfg.seed, kEvalDomain);
    parallel_for(R, mcfg.workers, [&](std::size_t r) {
        const ArrivalDraw draw =
            ArrivalDraw::generate(p, root.child(static_cast<std::uint64_t>(r)));
        r_base[r] = eval_posted(baseline, draw);
        r_unif[r] = eval_posted(uniform, draw);
        r_third[r] = eval_posted(third, draw);
        const FdVcgOutcome fv = eval_observed(p, initial, table, draw, true);
        r_fd[r] = fv.fd;
        r_vcg[r] = fv.vcg;
        r_fb[r] = eval_first_best(p, initial, draw);
    });

    Comparison cmp;
    const WelfareReport fb = summarize(r_fb, initial);
    auto add = [&](const std::string& name, const std::vector<RepOutcome>& reps) {
        ComparisonRow row;
        row.mechanism = name;
        row.report = summarize(reps, initial);
        row.efficiency_ratio =
            fb.total_surplus > 0.0 ? row.report.total_surplus / fb.total_surplus : 0.0;
        cmp.rows.push_back(std::move(row));
        cmp.ts_series.push_back(ts_of(reps));
    };
    add("baseline", r_base);
    add("uniform", r_unif);
    add("third_degree", r_third);
    add("first_degree", r_fd);
    add("vcg", r_vcg);
    add("first_best", r_fb);
    return cmp;
}

}  // namespace twocabin
