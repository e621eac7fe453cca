#include "twocabin/solver.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "twocabin/common.hpp"
#include "twocabin/parallel.hpp"

namespace twocabin {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum class PriceMode { Uniform, TwoPrice, Typed };

int free_dims(PriceMode mode, double theta) {
    switch (mode) {
        case PriceMode::Uniform: return 1;
        case PriceMode::TwoPrice: return 2;
        case PriceMode::Typed: return (theta <= 0.0 || theta >= 1.0) ? 2 : 4;
    }
    return 2;
}

// expand the reduced price vector into a full typed policy
TypedPolicy expand_prices(PriceMode mode, double theta, const double* x, int q_e, int q_f,
                          int cap_total) {
    TypedPolicy pol;
    pol.q_e = q_e;
    pol.q_f = q_f;
    pol.cap_total = cap_total;
    switch (mode) {
        case PriceMode::Uniform:
            pol.business = pol.leisure = {x[0], x[0]};
            break;
        case PriceMode::TwoPrice:
            pol.business = pol.leisure = {x[0], x[1]};
            break;
        case PriceMode::Typed:
            if (theta <= 0.0 || theta >= 1.0) {
                // one type absent: a single price pair controls everything
                pol.business = pol.leisure = {x[0], x[1]};
            } else {
                pol.business = {x[0], x[1]};
                pol.leisure = {x[2], x[3]};
            }
            break;
    }
    return pol;
}

// reduce a typed policy back to the free price coordinates
void reduce_prices(PriceMode mode, double theta, const TypedPolicy& pol, double* x) {
    switch (mode) {
        case PriceMode::Uniform:
            x[0] = pol.leisure.p_e;
            break;
        case PriceMode::TwoPrice:
            x[0] = pol.leisure.p_e;
            x[1] = pol.leisure.p_f;
            break;
        case PriceMode::Typed:
            if (theta <= 0.0 || theta >= 1.0) {
                const PricePair& pp = theta >= 1.0 ? pol.business : pol.leisure;
                x[0] = pp.p_e;
                x[1] = pp.p_f;
            } else {
                x[0] = pol.business.p_e;
                x[1] = pol.business.p_f;
                x[2] = pol.leisure.p_e;
                x[3] = pol.leisure.p_f;
            }
            break;
    }
}

bool policy_less(const TypedPolicy& a, const TypedPolicy& b) {
    auto key = [](const TypedPolicy& p) {
        return std::array<double, 7>{static_cast<double>(p.q_e), static_cast<double>(p.q_f),
                                     static_cast<double>(p.cap_total), p.leisure.p_e,
                                     p.leisure.p_f, p.business.p_e, p.business.p_f};
    };
    return key(a) < key(b);
}

struct Best {
    double val = kNegInf;
    TypedPolicy pol;

    void offer(double v, const TypedPolicy& p) {
        if (v > val || (v == val && policy_less(p, pol))) {
            val = v;
            pol = p;
        }
    }
};

// ---- Nelder-Mead maximizer with best-ever tracking ---------------------------

struct NMOut {
    std::array<double, 4> x{};
    double val = kNegInf;
};

template <typename F>
NMOut nelder_mead(const F& f, int n, const double* x0, const double* step, int max_evals,
                  double rel_tol) {
    std::array<std::array<double, 4>, 5> pts{};
    std::array<double, 5> fv{};
    NMOut best;
    int evals = 0;

    auto eval = [&](const double* x) {
        ++evals;
        const double v = f(x);
        if (v > best.val) {
            best.val = v;
            std::copy(x, x + n, best.x.begin());
        }
        return v;
    };

    const auto un = static_cast<std::size_t>(n);
    for (int i = 0; i <= n; ++i) {
        auto& pt = pts[static_cast<std::size_t>(i)];
        pt.fill(0.0);
        std::copy(x0, x0 + n, pt.begin());
        if (i > 0) pt[static_cast<std::size_t>(i - 1)] += step[i - 1];
        fv[static_cast<std::size_t>(i)] = eval(pt.data());
    }

    std::array<int, 5> ord{};
    while (evals < max_evals) {
        for (int i = 0; i <= n; ++i) ord[static_cast<std::size_t>(i)] = i;
        std::sort(ord.begin(), ord.begin() + n + 1, [&](int a, int b) {
            return fv[static_cast<std::size_t>(a)] > fv[static_cast<std::size_t>(b)];
        });
        const int ib = ord[0];
        const int iw = ord[un];
        const double fbest = fv[static_cast<std::size_t>(ib)];
        const double fworst = fv[static_cast<std::size_t>(iw)];
        if (std::fabs(fbest - fworst) <= rel_tol * (std::fabs(fbest) + 1e-9)) break;

        std::array<double, 4> cen{};
        for (int i = 0; i <= n; ++i) {
            if (i == iw) continue;
            for (int d = 0; d < n; ++d)
                cen[static_cast<std::size_t>(d)] +=
                    pts[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)] / n;
        }
        auto blend = [&](double coef) {
            std::array<double, 4> out{};
            for (int d = 0; d < n; ++d)
                out[static_cast<std::size_t>(d)] =
                    cen[static_cast<std::size_t>(d)] +
                    coef * (cen[static_cast<std::size_t>(d)] -
                            pts[static_cast<std::size_t>(iw)][static_cast<std::size_t>(d)]);
            return out;
        };

        const auto xr = blend(1.0);
        const double fr = eval(xr.data());
        if (fr > fbest) {
            const auto xe = blend(2.0);
            const double fe = eval(xe.data());
            pts[static_cast<std::size_t>(iw)] = fe > fr ? xe : xr;
            fv[static_cast<std::size_t>(iw)] = std::max(fe, fr);
        } else if (fr > fv[static_cast<std::size_t>(ord[un - 1])]) {
            pts[static_cast<std::size_t>(iw)] = xr;
            fv[static_cast<std::size_t>(iw)] = fr;
        } else {
            const auto xc = blend(-0.5);
            const double fc = eval(xc.data());
            if (fc > fworst) {
                pts[static_cast<std::size_t>(iw)] = xc;
                fv[static_cast<std::size_t>(iw)] = fc;
            } else {
                for (int i = 0; i <= n && evals < max_evals; ++i) {
                    if (i == ib) continue;
                    for (int d = 0; d < n; ++d)
                        pts[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)] =
                            0.5 * (pts[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)] +
                                   pts[static_cast<std::size_t>(ib)][static_cast<std::size_t>(d)]);
                    fv[static_cast<std::size_t>(i)] = eval(pts[static_cast<std::size_t>(i)].data());
                }
            }
        }
    }
    return best;
}

// ---- per-state objective ------------------------------------------------------

struct PriceBox {
    std::array<double, 4> lo{};
    std::array<double, 4> hi{};
};

PriceBox make_price_box(const FlightParams& p, PriceMode mode, double theta,
                        const SolverConfig& cfg) {
    // demand above mu + 10 sigma at the 99.9th-percentile premium is negligible,
    // so higher prices are all equivalent to exclusion
    double hi_e = cfg.price_hi_e;
    double hi_f = cfg.price_hi_f;
    if (hi_e <= 0.0) hi_e = p.mu_b() + 10.0 * p.sigma_b();
    if (hi_f <= 0.0) hi_f = hi_e * (1.0 + p.mu_xi * std::log(1000.0));
    PriceBox box;
    const int n = free_dims(mode, theta);
    if (mode == PriceMode::Uniform) {
        box.lo[0] = p.c_e;
        box.hi[0] = hi_f;
    } else {
        for (int i = 0; i < n; i += 2) {
            box.lo[static_cast<std::size_t>(i)] = p.c_e;
            box.hi[static_cast<std::size_t>(i)] = hi_e;
            box.lo[static_cast<std::size_t>(i + 1)] = p.c_f;
            box.hi[static_cast<std::size_t>(i + 1)] = hi_f;
        }
    }
    return box;
}

// continuation accessor over the next period's band (zero table at t = T)
struct Continuation {
    const std::vector<double>* values = nullptr;
    StateBand band;

    double at(int k_e, int k_f) const {
        if (!values) return 0.0;
        return (*values)[band.index({k_e, k_f})];
    }
};

struct StateObjective {
    const FlightParams* params = nullptr;
    int t = 0;
    double lambda = 0.0;
    double theta = 0.0;
    CabinState state;
    PriceMode mode = PriceMode::TwoPrice;
    MarketRules rules;
    double eps = 1e-10;
    PriceBox box;
    Continuation cont;
    ChainWorkspace* ws = nullptr;

    double eval_policy(const TypedPolicy& pol, const RegimeChoice& rc) const {
        return chain_value(*ws, rc, lambda, state, pol, eps, params->c_e, params->c_f,
                           [this](int a, int b) {
                               return cont.at(state.k_e - a, state.k_f - b);
                           });
    }

    double eval_policy(const TypedPolicy& pol) const {
        return eval_policy(pol, RegimeChoice::make(*params, t, pol, rules));
    }

    // price-vector objective at fixed releases, with an out-of-box penalty
    double operator()(const double* x, int q_e, int q_f, int cap_total) const {
        double xc[4];
        double pen = 0.0;
        const int n = free_dims(mode, theta);
        for (int i = 0; i < n; ++i) {
            xc[i] = std::clamp(x[i], box.lo[static_cast<std::size_t>(i)],
                               box.hi[static_cast<std::size_t>(i)]);
            const double d = x[i] - xc[i];
            pen += d * d;
        }
        const TypedPolicy pol = expand_prices(mode, theta, xc, q_e, q_f, cap_total);
        return eval_policy(pol) - 1e3 * pen;
    }
};

struct QCand {
    int q_e = 0;
    int q_f = 0;
    int cap = -1;

    bool operator==(const QCand&) const = default;
    bool operator<(const QCand& o) const {
        return std::array<int, 3>{q_e, q_f, cap} < std::array<int, 3>{o.q_e, o.q_f, o.cap};
    }
};

void add_range(std::vector<int>& out, int lo, int hi, int cap) {
    for (int q = std::max(lo, 0); q <= std::min(hi, cap); ++q) out.push_back(q);
}

std::vector<QCand> release_candidates(const SolverConfig& cfg, bool pooled,
                                      const CabinState& st, int n_max, int anchor_e,
                                      int anchor_f) {
    std::vector<QCand> out;
    if (pooled) {
        std::vector<int> totals;
        const int ktot = st.k_e + st.k_f;
        const int anchor = std::min(anchor_e + anchor_f, ktot);
        totals.push_back(0);
        add_range(totals, anchor - cfg.window, anchor + cfg.window, std::min(ktot, n_max));
        totals.push_back(ktot);
        std::sort(totals.begin(), totals.end());
        totals.erase(std::unique(totals.begin(), totals.end()), totals.end());
        for (int q : totals) out.push_back({st.k_e, st.k_f, q});
        return out;
    }

    auto mode = cfg.release_mode;
    if (mode == SolverConfig::ReleaseMode::Auto)
        mode = (static_cast<long>(st.k_e) * std::max(st.k_f, 1) <= 512)
                   ? SolverConfig::ReleaseMode::Full
                   : SolverConfig::ReleaseMode::Window;

    std::vector<int> qes, qfs;
    switch (mode) {
        case SolverConfig::ReleaseMode::AllRemaining:
            qes = {st.k_e};
            qfs = {st.k_f};
            break;
        case SolverConfig::ReleaseMode::Full:
            // releases beyond the arrival support never bind; k itself stands
            // in for all of them
            add_range(qes, 0, std::min(st.k_e, n_max), st.k_e);
            qes.push_back(st.k_e);
            add_range(qfs, 0, std::min(st.k_f, n_max), st.k_f);
            qfs.push_back(st.k_f);
            break;
        case SolverConfig::ReleaseMode::Window:
        case SolverConfig::ReleaseMode::Auto:
            qes.push_back(0);
            add_range(qes, anchor_e - cfg.window, anchor_e + cfg.window,
                      std::min(st.k_e, n_max));
            qes.push_back(st.k_e);
            qfs.push_back(0);
            add_range(qfs, anchor_f - cfg.window, anchor_f + cfg.window,
                      std::min(st.k_f, n_max));
            qfs.push_back(st.k_f);
            break;
    }
    std::sort(qes.begin(), qes.end());
    qes.erase(std::unique(qes.begin(), qes.end()), qes.end());
    std::sort(qfs.begin(), qfs.end());
    qfs.erase(std::unique(qfs.begin(), qfs.end()), qfs.end());
    for (int qe : qes)
        for (int qf : qfs) out.push_back({qe, qf, -1});
    return out;
}

void solve_state(const SolverConfig& cfg, PriceMode mode, const StateObjective& obj,
                 const CabinState& st, const std::vector<TypedPolicy>& warm, bool pooled,
                 Best& out) {
    // no arrivals: every policy is value-equivalent, keep the canonical one
    if (obj.lambda <= 0.0) {
        const TypedPolicy pol = expand_prices(mode, obj.theta, obj.box.lo.data(), 0, 0, -1);
        out.offer(obj.cont.at(st.k_e, st.k_f), pol);
        return;
    }

    const int n = free_dims(mode, obj.theta);

    std::vector<std::array<double, 4>> starts;
    auto push_start = [&](const double* x) {
        std::array<double, 4> s{};
        for (int i = 0; i < n; ++i)
            s[static_cast<std::size_t>(i)] =
                std::clamp(x[i], obj.box.lo[static_cast<std::size_t>(i)],
                           obj.box.hi[static_cast<std::size_t>(i)]);
        for (const auto& o : starts) {
            double d = 0.0;
            for (int i = 0; i < n; ++i)
                d += std::fabs(s[static_cast<std::size_t>(i)] - o[static_cast<std::size_t>(i)]);
            if (d < 1e-7) return;
        }
        starts.push_back(s);
    };
    for (const TypedPolicy& pol : warm) {
        double x[4];
        reduce_prices(mode, obj.theta, pol, x);
        push_start(x);
    }
    {
        // demand-primitive heuristic start
        const FlightParams& p = *obj.params;
        const double x[4] = {p.mu_l, p.mu_b() * (1.0 + p.mu_xi), p.mu_l,
                             p.mu_b() * (1.0 + p.mu_xi)};
        push_start(x);
    }

    // exact warm-policy candidates: evaluating the neighbor / reference /
    // next-period policies as-is keeps value monotonicity and strategy-space
    // nesting intact even where the heuristic search misses
    for (const TypedPolicy& w : warm) {
        if (w.q_e > st.k_e || w.q_f > st.k_f) continue;
        out.offer(obj.eval_policy(w), w);
    }

    // screen all candidate release pairs at the leading warm prices
    const TypedPolicy screen_pol =
        expand_prices(mode, obj.theta, starts.front().data(), 0, 0, -1);
    const RegimeChoice screen_rc =
        RegimeChoice::make(*obj.params, obj.t, screen_pol, obj.rules);
    const ChoiceProbs screen_cp = choice_probs_typed(
        *obj.params, obj.t, screen_pol.business, screen_pol.leisure, Regime::BothOpen);
    const int anchor_e = static_cast<int>(std::lround(obj.lambda * screen_cp.pooled.p_e));
    const int anchor_f = static_cast<int>(std::lround(obj.lambda * screen_cp.pooled.p_f));

    const PoissonWeights pw = poisson_weights(obj.lambda, obj.eps);
    std::vector<QCand> cands =
        release_candidates(cfg, pooled, st, pw.n_max, anchor_e, anchor_f);
    for (const TypedPolicy& w : warm)
        if (w.q_e <= st.k_e && w.q_f <= st.k_f)
            cands.push_back({w.q_e, w.q_f, w.cap_total});
    std::sort(cands.begin(), cands.end());
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());

    std::vector<std::pair<double, QCand>> screened;
    screened.reserve(cands.size());
    for (const QCand& qc : cands) {
        TypedPolicy pol = screen_pol;
        pol.q_e = qc.q_e;
        pol.q_f = qc.q_f;
        pol.cap_total = qc.cap;
        const double v = obj.eval_policy(pol, screen_rc);
        out.offer(v, pol);
        screened.push_back({v, qc});
    }
    std::stable_sort(screened.begin(), screened.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });

    // refine the leading pairs with the full price search, carrying the
    // previous pair's optimum as a start (optimal prices move smoothly in q)
    const int refine = std::min<int>(cfg.refine_top, static_cast<int>(screened.size()));
    std::array<double, 4> carry{};
    bool have_carry = false;
    for (int r = 0; r < refine; ++r) {
        const QCand qc = screened[static_cast<std::size_t>(r)].second;
        auto f = [&](const double* x) { return obj(x, qc.q_e, qc.q_f, qc.cap); };

        std::vector<std::array<double, 4>> local;
        if (r == 0) {
            for (int i = 0; i < std::min<int>(cfg.multistart, static_cast<int>(starts.size())); ++i)
                local.push_back(starts[static_cast<std::size_t>(i)]);
        } else {
            if (have_carry) local.push_back(carry);
            local.push_back(starts.front());
        }
        const int budget =
            (r == 0 ? cfg.max_price_evals : (2 * cfg.max_price_evals) / 3) * (n > 2 ? 2 : 1);
        NMOut pair_best;
        for (const auto& s : local) {
            double step[4];
            for (int i = 0; i < n; ++i)
                step[i] = std::max(5.0, 0.05 * s[static_cast<std::size_t>(i)]);
            const NMOut nm = nelder_mead(f, n, s.data(), step, budget, cfg.price_tol);
            if (nm.val > pair_best.val) pair_best = nm;
        }
        if (pair_best.val > kNegInf) {
            double xc[4];
            for (int i = 0; i < n; ++i)
                xc[i] = std::clamp(pair_best.x[static_cast<std::size_t>(i)],
                                   obj.box.lo[static_cast<std::size_t>(i)],
                                   obj.box.hi[static_cast<std::size_t>(i)]);
            const TypedPolicy pol = expand_prices(mode, obj.theta, xc, qc.q_e, qc.q_f, qc.cap);
            out.offer(obj.eval_policy(pol), pol);
            carry = pair_best.x;
            have_carry = true;
        }
    }

    if (out.val == kNegInf)
        throw std::runtime_error("price optimization failed at t=" + std::to_string(obj.t) +
                                 " state (" + std::to_string(st.k_e) + "," +
                                 std::to_string(st.k_f) + ")");
}

SolvedModel solve_impl(const FlightParams& params, const CabinState& initial,
                       const SolverConfig& cfg, PriceMode mode, const SolvedModel* ref) {
    params.validate();
    if (initial.k_e < 0 || initial.k_f < 0)
        throw std::domain_error("initial capacities must be >= 0");

    const int T = params.T;
    SolvedModel model;
    model.params = params;
    model.initial = initial;
    model.cfg = cfg;
    model.bands.resize(static_cast<std::size_t>(T));
    model.value.resize(static_cast<std::size_t>(T));
    model.policy.resize(static_cast<std::size_t>(T));

    // reachable-state bands: sales per period are bounded by the retained
    // arrival support; one extra seat of margin for seat-difference reports
    long cum = 0;
    for (int t = 1; t <= T; ++t) {
        StateBand band;
        band.hi_e = initial.k_e;
        band.hi_f = initial.k_f;
        const long margin = (t == 1) ? 0 : 1;
        band.lo_e = static_cast<int>(std::max<long>(0, initial.k_e - cum - margin));
        band.lo_f = static_cast<int>(std::max<long>(0, initial.k_f - cum - margin));
        model.bands[static_cast<std::size_t>(t - 1)] = band;
        const double lam = arrival_rate(params, t);
        if (lam > 0.0) cum += poisson_weights(lam, cfg.poisson_eps).n_max;
    }

    const bool pooled = cfg.uniform_price && cfg.pooled_release;

    for (int t = T; t >= 1; --t) {
        const StateBand band = model.bands[static_cast<std::size_t>(t - 1)];
        std::vector<double> values(band.size(), 0.0);
        std::vector<TypedPolicy> policies(band.size());
        std::vector<char> done(band.size(), 0);

        Continuation cont;
        if (t < T) {
            cont.values = &model.value[static_cast<std::size_t>(t)];
            cont.band = model.bands[static_cast<std::size_t>(t)];
        }
        const double lam = arrival_rate(params, t);
        const double theta = business_share(params, t);

        // anti-diagonal wavefront: same-period neighbors (k_e-1, k_f) and
        // (k_e, k_f-1) complete before (k_e, k_f) starts
        for (int d = band.lo_e + band.lo_f; d <= band.hi_e + band.hi_f; ++d) {
            std::vector<CabinState> diag;
            for (int ke = band.lo_e; ke <= band.hi_e; ++ke) {
                const int kf = d - ke;
                if (kf >= band.lo_f && kf <= band.hi_f) diag.push_back({ke, kf});
            }
            parallel_for(diag.size(), cfg.workers, [&](std::size_t i) {
                const CabinState st = diag[i];
                ChainWorkspace ws;
                StateObjective obj;
                obj.params = &params;
                obj.t = t;
                obj.lambda = lam;
                obj.theta = theta;
                obj.state = st;
                obj.mode = mode;
                obj.rules = cfg.rules;
                obj.eps = cfg.poisson_eps;
                obj.box = make_price_box(params, mode, theta, cfg);
                obj.cont = cont;
                obj.ws = &ws;

                std::vector<TypedPolicy> warm;
                if (ref) {
                    const StateBand& rb = ref->bands[static_cast<std::size_t>(t - 1)];
                    if (rb.contains(st))
                        warm.push_back(ref->policy[static_cast<std::size_t>(t - 1)][rb.index(st)]);
                }
                if (cfg.warm_start) {
                    const CabinState left{st.k_e - 1, st.k_f};
                    const CabinState down{st.k_e, st.k_f - 1};
                    if (band.contains(left) && done[band.index(left)])
                        warm.push_back(policies[band.index(left)]);
                    if (band.contains(down) && done[band.index(down)])
                        warm.push_back(policies[band.index(down)]);
                    if (t < T) {
                        const StateBand& nb = model.bands[static_cast<std::size_t>(t)];
                        if (nb.contains(st))
                            warm.push_back(model.policy[static_cast<std::size_t>(t)][nb.index(st)]);
                    }
                }

                Best best;
                solve_state(cfg, mode, obj, st, warm, pooled, best);
                values[band.index(st)] = best.val;
                policies[band.index(st)] = best.pol;
                done[band.index(st)] = 1;
            });
        }
        model.value[static_cast<std::size_t>(t - 1)] = std::move(values);
        model.policy[static_cast<std::size_t>(t - 1)] = std::move(policies);
    }

    model.content_hash = model.compute_hash();
    return model;
}

}  // namespace

// ---- public surface ------------------------------------------------------------

std::uint64_t SolverConfig::content_hash(const FlightParams& p) const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (double x : {p.mu_l, p.cv_l, p.delta_b, p.cv_b, p.mu_xi, p.lambda0, p.d_lambda,
                     p.d_theta, p.c_e, p.c_f})
        h = hash_double(x, h);
    h = hash_u64(static_cast<std::uint64_t>(p.T), h);
    h = hash_u64(static_cast<std::uint64_t>(release_mode), h);
    for (int x : {window, refine_top, multistart, max_price_evals})
        h = hash_u64(static_cast<std::uint64_t>(x), h);
    for (double x : {price_tol, poisson_eps, price_hi_e, price_hi_f}) h = hash_double(x, h);
    h = hash_u64((warm_start ? 1u : 0u) | (uniform_price ? 2u : 0u) |
                     (pooled_release ? 4u : 0u) | (typed_prices ? 8u : 0u) |
                     (rules.re_choice ? 16u : 0u),
                 h);
    return h;
}

double SolvedModel::value_at(int t, const CabinState& s) const {
    if (t == params.T + 1) return 0.0;
    const StateBand& band = bands.at(static_cast<std::size_t>(t - 1));
    if (!band.contains(s)) throw std::out_of_range("state outside the solved band");
    return value[static_cast<std::size_t>(t - 1)][band.index(s)];
}

const TypedPolicy& SolvedModel::policy_at(int t, const CabinState& s) const {
    const StateBand& band = bands.at(static_cast<std::size_t>(t - 1));
    if (!band.contains(s)) throw std::out_of_range("state outside the solved band");
    return policy[static_cast<std::size_t>(t - 1)][band.index(s)];
}

std::uint64_t SolvedModel::compute_hash() const {
    std::uint64_t h = cfg.content_hash(params);
    h = hash_u64(static_cast<std::uint64_t>(initial.k_e), h);
    h = hash_u64(static_cast<std::uint64_t>(initial.k_f), h);
    for (const auto& v : value)
        for (double x : v) h = hash_double(x, h);
    for (const auto& pt : policy)
        for (const TypedPolicy& pol : pt) {
            for (double x :
                 {pol.business.p_e, pol.business.p_f, pol.leisure.p_e, pol.leisure.p_f})
                h = hash_double(x, h);
            h = hash_u64(static_cast<std::uint64_t>(pol.q_e), h);
            h = hash_u64(static_cast<std::uint64_t>(pol.q_f), h);
            h = hash_u64(static_cast<std::uint64_t>(pol.cap_total + 1), h);
        }
    return h;
}

SolvedModel solve_uniform_price(const FlightParams& params, const CabinState& initial,
                                const SolverConfig& cfg_in) {
    SolverConfig cfg = cfg_in;
    cfg.uniform_price = true;
    cfg.typed_prices = false;
    return solve_impl(params, initial, cfg, PriceMode::Uniform, nullptr);
}

SolvedModel solve(const FlightParams& params, const CabinState& initial,
                  const SolverConfig& cfg_in) {
    SolverConfig cfg = cfg_in;
    cfg.uniform_price = false;
    cfg.typed_prices = false;
    if (cfg.warm_start) {
        SolverConfig ucfg = cfg;
        ucfg.pooled_release = false;
        const SolvedModel uniform = solve_uniform_price(params, initial, ucfg);
        return solve_impl(params, initial, cfg, PriceMode::TwoPrice, &uniform);
    }
    return solve_impl(params, initial, cfg, PriceMode::TwoPrice, nullptr);
}

SolvedModel solve(const FlightParams& params, const CabinState& initial,
                  const SolverConfig& cfg_in, const SolvedModel& reference) {
    SolverConfig cfg = cfg_in;
    cfg.uniform_price = false;
    cfg.typed_prices = false;
    return solve_impl(params, initial, cfg, PriceMode::TwoPrice, &reference);
}

SolvedModel solve_third_degree(const FlightParams& params, const CabinState& initial,
                               const SolverConfig& cfg_in) {
    SolverConfig cfg = cfg_in;
    cfg.uniform_price = false;
    cfg.typed_prices = true;
    if (cfg.warm_start) {
        SolverConfig bcfg = cfg;
        bcfg.typed_prices = false;
        const SolvedModel baseline = solve(params, initial, bcfg);
        return solve_impl(params, initial, cfg, PriceMode::Typed, &baseline);
    }
    return solve_impl(params, initial, cfg, PriceMode::Typed, nullptr);
}

SolvedModel solve_third_degree(const FlightParams& params, const CabinState& initial,
                               const SolverConfig& cfg_in, const SolvedModel& reference) {
    SolverConfig cfg = cfg_in;
    cfg.uniform_price = false;
    cfg.typed_prices = true;
    return solve_impl(params, initial, cfg, PriceMode::Typed, &reference);
}

PriceOpt optimize_prices(const FlightParams& params, int t, const CabinState& state,
                         int q_e, int q_f,
                         const std::function<double(CabinState)>& v_next,
                         const SolverConfig& cfg) {
    params.validate();
    if (q_e < 0 || q_f < 0 || q_e > state.k_e || q_f > state.k_f)
        throw std::domain_error("optimize_prices: infeasible releases");

    const PriceMode mode = cfg.uniform_price ? PriceMode::Uniform : PriceMode::TwoPrice;
    const double theta = business_share(params, t);

    // wrap the externally supplied continuation as a dense table
    StateBand band{0, 0, state.k_e, state.k_f};
    std::vector<double> vals(band.size(), 0.0);
    for (int ke = 0; ke <= state.k_e; ++ke)
        for (int kf = 0; kf <= state.k_f; ++kf)
            vals[band.index({ke, kf})] = v_next ? v_next({ke, kf}) : 0.0;

    ChainWorkspace ws;
    StateObjective obj;
    obj.params = &params;
    obj.t = t;
    obj.lambda = arrival_rate(params, t);
    obj.theta = theta;
    obj.state = state;
    obj.mode = mode;
    obj.rules = cfg.rules;
    obj.eps = cfg.poisson_eps;
    obj.box = make_price_box(params, mode, theta, cfg);
    obj.cont = Continuation{&vals, band};
    obj.ws = &ws;

    if (obj.lambda <= 0.0 || (q_e == 0 && q_f == 0)) {
        const TypedPolicy pol = expand_prices(mode, theta, obj.box.lo.data(), q_e, q_f, -1);
        return {pol.leisure.p_e, pol.leisure.p_f, obj.eval_policy(pol)};
    }

    const int n = free_dims(mode, theta);
    std::vector<std::array<double, 4>> starts;
    {
        std::array<double, 4> s{};
        s[0] = params.mu_l;
        if (n > 1) s[1] = params.mu_b() * (1.0 + params.mu_xi);
        starts.push_back(s);
        for (double frac : {0.5, 0.15}) {
            std::array<double, 4> g{};
            for (int i = 0; i < n; ++i)
                g[static_cast<std::size_t>(i)] =
                    obj.box.lo[static_cast<std::size_t>(i)] +
                    frac * (obj.box.hi[static_cast<std::size_t>(i)] -
                            obj.box.lo[static_cast<std::size_t>(i)]);
            starts.push_back(g);
        }
    }

    auto f = [&](const double* x) { return obj(x, q_e, q_f, -1); };
    NMOut best;
    for (const auto& s : starts) {
        double step[4];
        for (int i = 0; i < n; ++i)
            step[i] = std::max(5.0, 0.05 * s[static_cast<std::size_t>(i)]);
        NMOut nm = nelder_mead(f, n, s.data(), step, 4 * cfg.max_price_evals, cfg.price_tol);
        // polish from the incumbent at a finer scale
        double fine[4];
        for (int i = 0; i < n; ++i)
            fine[i] = std::max(0.05, 1e-4 * std::fabs(nm.x[static_cast<std::size_t>(i)]));
        const NMOut nm2 = nelder_mead(f, n, nm.x.data(), fine, 2 * cfg.max_price_evals, 1e-13);
        if (nm2.val > nm.val) nm = nm2;
        if (nm.val > best.val) best = nm;
    }
    if (best.val == kNegInf) throw std::runtime_error("optimize_prices: all starts failed");

    const TypedPolicy pol = expand_prices(mode, theta, best.x.data(), q_e, q_f, -1);
    return {pol.leisure.p_e, pol.leisure.p_f, obj.eval_policy(pol)};
}

ShadowCostReport shadow_costs(const SolvedModel& model) {
    const FlightParams& p = model.params;
    const int T = p.T;
    ShadowCostReport report;

    std::vector<double> dist(model.bands[0].size(), 0.0);
    dist[model.bands[0].index(model.initial)] = 1.0;

    ChainWorkspace ws;
    for (int t = 1; t <= T; ++t) {
        const StateBand& band = model.bands[static_cast<std::size_t>(t - 1)];
        const double lam = arrival_rate(p, t);
        std::vector<double> next_dist;
        const StateBand* next_band = nullptr;
        if (t < T) {
            next_band = &model.bands[static_cast<std::size_t>(t)];
            next_dist.assign(next_band->size(), 0.0);
        }

        for (int ke = band.lo_e; ke <= band.hi_e; ++ke)
            for (int kf = band.lo_f; kf <= band.hi_f; ++kf) {
                const CabinState st{ke, kf};
                const TypedPolicy& pol = model.policy_at(t, st);
                ShadowEntry e;
                e.t = t;
                e.state = st;
                e.visit_prob = dist[band.index(st)];

                auto pmf_at = [&](const TypedPolicy& q) {
                    return sales_pmf_with(ws, RegimeChoice::make(p, t, q, model.cfg.rules),
                                          lam, st, q, model.cfg.poisson_eps);
                };
                const SalesPmf pmf = pmf_at(pol);
                for (int a = 0; a <= pmf.a_max; ++a)
                    for (int b = 0; b <= pmf.b_max; ++b) {
                        const double pr = pmf.p(a, b);
                        if (pr == 0.0) continue;
                        const CabinState nxt{ke - a, kf - b};
                        if (t == T) continue;
                        const double vn = model.value_at(t + 1, nxt);
                        if (nxt.k_e > 0)
                            e.opp_e += pr * (vn - model.value_at(t + 1, {nxt.k_e - 1, nxt.k_f}));
                        if (nxt.k_f > 0)
                            e.opp_f += pr * (vn - model.value_at(t + 1, {nxt.k_e, nxt.k_f - 1}));
                        next_dist[next_band->index(nxt)] += e.visit_prob * pr;
                    }
                e.mc_e = e.opp_e + p.c_e;
                e.mc_f = e.opp_f + p.c_f;

                if (t < T && lam > 0.0) {
                    // continuation derivative with respect to today's prices
                    // (the first-order-condition diagnostic)
                    auto cont_of = [&](double dpe, double dpf) {
                        TypedPolicy q = pol;
                        q.business.p_e += dpe;
                        q.leisure.p_e += dpe;
                        q.business.p_f += dpf;
                        q.leisure.p_f += dpf;
                        const SalesPmf pm = pmf_at(q);
                        double c = 0.0;
                        for (int a = 0; a <= pm.a_max; ++a)
                            for (int b = 0; b <= pm.b_max; ++b)
                                if (pm.p(a, b) > 0.0)
                                    c += pm.p(a, b) * model.value_at(t + 1, {ke - a, kf - b});
                        return c;
                    };
                    const double h = 0.5;
                    e.dEV_dpe = (cont_of(h, 0.0) - cont_of(-h, 0.0)) / (2.0 * h);
                    e.dEV_dpf = (cont_of(0.0, h) - cont_of(0.0, -h)) / (2.0 * h);
                }
                report.entries.push_back(e);
            }
        if (t < T) dist = std::move(next_dist);
    }
    return report;
}

RegularityReport check_regularity(const FlightParams& params, int t, double p_lo,
                                  double p_hi, int grid_n) {
    RegularityReport rep;
    const double h = std::max(1.0, (p_hi - p_lo) / (50.0 * grid_n));
    const double slack = 1e-7;
    auto qe = [&](double pe, double pf) { return expected_demand(params, t, pe, pf).first; };
    auto qf = [&](double pe, double pf) { return expected_demand(params, t, pe, pf).second; };
    for (int i = 0; i < grid_n; ++i)
        for (int j = 0; j < grid_n; ++j) {
            const double pe = p_lo + (p_hi - p_lo) * (i + 0.5) / grid_n;
            const double pf = pe + (p_hi - pe) * (j + 0.5) / grid_n;  // keep pf >= pe
            ++rep.points_checked;
            const double qe_pe = (qe(pe + h, pf) - qe(pe - h, pf)) / (2 * h);
            const double qf_pf = (qf(pe, pf + h) - qf(pe, pf - h)) / (2 * h);
            if (qe_pe > slack || qf_pf > slack) ++rep.downward_violations;

            const double qe_pepe =
                (qe(pe + h, pf) - 2 * qe(pe, pf) + qe(pe - h, pf)) / (h * h);
            const double qe_pepf = (qe(pe + h, pf + h) - qe(pe + h, pf - h) -
                                    qe(pe - h, pf + h) + qe(pe - h, pf - h)) /
                                   (4 * h * h);
            const double qf_pfpf =
                (qf(pe, pf + h) - 2 * qf(pe, pf) + qf(pe, pf - h)) / (h * h);
            if (qe_pepe > qe_pepf + slack || qe_pepf > slack) ++rep.concavity_violations;
            if (qf_pfpf > qe_pepf + slack) ++rep.concavity_violations;

            const double qe_pfpf =
                (qe(pe, pf + h) - 2 * qe(pe, pf) + qe(pe, pf - h)) / (h * h);
            const double qf_pepe =
                (qf(pe + h, pf) - 2 * qf(pe, pf) + qf(pe - h, pf)) / (h * h);
            if (qe_pfpf > -slack || qf_pepe > -slack) ++rep.cross_violations;
        }
    return rep;
}

}  // namespace twocabin
