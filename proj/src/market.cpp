#include "twocabin/market.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace twocabin {

namespace {

void check_policy(const CabinState& state, const TypedPolicy& pol) {
    if (pol.q_e < 0 || pol.q_f < 0 || pol.q_e > state.k_e || pol.q_f > state.k_f)
        throw std::domain_error("policy releases must satisfy 0 <= q <= unsold seats");
    for (double px : {pol.business.p_e, pol.business.p_f, pol.leisure.p_e, pol.leisure.p_f})
        if (!(px >= 0.0)) throw std::domain_error("policy prices must be >= 0");
}

// availability regime index
constexpr int kBoth = 0, kEconOnly = 1, kFirstOnly = 2;

}  // namespace

int choose_option(double v, double xi, const PricePair& prices, bool open_e, bool open_f) {
    const double ue = v - prices.p_e;
    const double uf = v * xi - prices.p_f;
    if (open_f && uf >= 0.0 && (!open_e || uf >= ue)) return 1;
    if (open_e && ue >= 0.0) return 0;
    return -1;
}

double SalesPmf::expected_sales_e() const {
    double s = 0.0;
    for (int a = 0; a <= a_max; ++a)
        for (int b = 0; b <= b_max; ++b) s += a * p(a, b);
    return s;
}

double SalesPmf::expected_sales_f() const {
    double s = 0.0;
    for (int a = 0; a <= a_max; ++a)
        for (int b = 0; b <= b_max; ++b) s += b * p(a, b);
    return s;
}

double SalesPmf::expected_revenue() const {
    double s = 0.0;
    for (double x : rev) s += x;
    return s;
}

RegimeChoice RegimeChoice::make(const FlightParams& p, int t, const TypedPolicy& pol,
                                const MarketRules& rules) {
    RegimeChoice rc;
    const ChoiceProbs both =
        choice_probs_typed(p, t, pol.business, pol.leisure, Regime::BothOpen);
    rc.pe[kBoth] = both.pooled.p_e;
    rc.pf[kBoth] = both.pooled.p_f;
    rc.fare_e[kBoth] = both.pooled.fare_e;
    rc.fare_f[kBoth] = both.pooled.fare_f;
    if (rules.re_choice) {
        const ChoiceProbs eo =
            choice_probs_typed(p, t, pol.business, pol.leisure, Regime::EconomyOnly);
        const ChoiceProbs fo =
            choice_probs_typed(p, t, pol.business, pol.leisure, Regime::FirstOnly);
        rc.pe[kEconOnly] = eo.pooled.p_e;
        rc.fare_e[kEconOnly] = eo.pooled.fare_e;
        rc.pf[kFirstOnly] = fo.pooled.p_f;
        rc.fare_f[kFirstOnly] = fo.pooled.fare_f;
    } else {
        // no re-choice: an arrival whose both-open pick is unavailable leaves
        rc.pe[kEconOnly] = both.pooled.p_e;
        rc.fare_e[kEconOnly] = both.pooled.fare_e;
        rc.pf[kFirstOnly] = both.pooled.p_f;
        rc.fare_f[kFirstOnly] = both.pooled.fare_f;
    }
    return rc;
}

SalesPmf sales_pmf_with(ChainWorkspace& ws, const RegimeChoice& rc, double lambda_t,
                        const CabinState& state, const TypedPolicy& pol, double eps) {
    check_policy(state, pol);
    const PoissonWeights pw = poisson_weights(lambda_t, eps);

    // sales cannot exceed the retained arrival support
    const int A = std::min(pol.q_e, pw.n_max);
    const int B = std::min(pol.q_f, pw.n_max);
    const int W = B + 1;
    const std::size_t cells = static_cast<std::size_t>(A + 1) * static_cast<std::size_t>(W);

    SalesPmf out;
    out.a_max = A;
    out.b_max = B;
    out.prob.assign(cells, 0.0);
    out.rev.assign(cells, 0.0);

    // Uncapped shortcut: when neither cap is reachable within eps the regime
    // never switches, so sales are independent thinned Poisson counts.
    const bool pooled_cap = pol.cap_total >= 0 && pol.cap_total < A + B;
    if (!pooled_cap && lambda_t > 0.0) {
        const PoissonWeights we = poisson_weights(std::max(lambda_t * rc.pe[kBoth], 0.0), eps);
        const PoissonWeights wf = poisson_weights(std::max(lambda_t * rc.pf[kBoth], 0.0), eps);
        if (we.n_max <= A && wf.n_max <= B) {
            for (int a = 0; a <= we.n_max; ++a)
                for (int b = 0; b <= wf.n_max; ++b) {
                    const double pr = we.weights[static_cast<std::size_t>(a)] *
                                      wf.weights[static_cast<std::size_t>(b)];
                    out.prob[out.idx(a, b)] = pr;
                    out.rev[out.idx(a, b)] =
                        pr * (a * rc.fare_e[kBoth] + b * rc.fare_f[kBoth]);
                }
            return out;
        }
    }

    auto& cur_p = ws.cur_p;
    auto& cur_r = ws.cur_r;
    auto& nxt_p = ws.nxt_p;
    auto& nxt_r = ws.nxt_r;
    cur_p.assign(cells, 0.0);
    cur_r.assign(cells, 0.0);
    nxt_p.assign(cells, 0.0);
    nxt_r.assign(cells, 0.0);

    cur_p[0] = 1.0;
    double assigned = pw.weights[0];
    out.prob[0] = pw.weights[0];

    for (int j = 1; j <= pw.n_max; ++j) {
        std::fill(nxt_p.begin(), nxt_p.end(), 0.0);
        std::fill(nxt_r.begin(), nxt_r.end(), 0.0);
        double moved = 0.0;
        for (int a = 0; a <= A; ++a) {
            const std::size_t row = static_cast<std::size_t>(a) * static_cast<std::size_t>(W);
            for (int b = 0; b <= B; ++b) {
                const double m = cur_p[row + b];
                const double mr = cur_r[row + b];
                if (m == 0.0 && mr == 0.0) continue;
                bool open_e = a < pol.q_e;
                bool open_f = b < pol.q_f;
                if (pol.cap_total >= 0 && a + b >= pol.cap_total) open_e = open_f = false;
                int reg;
                if (open_e && open_f) reg = kBoth;
                else if (open_e) reg = kEconOnly;
                else if (open_f) reg = kFirstOnly;
                else {  // closed: mass stays put
                    nxt_p[row + b] += m;
                    nxt_r[row + b] += mr;
                    continue;
                }
                const double pe = open_e ? rc.pe[reg] : 0.0;
                const double pf = open_f ? rc.pf[reg] : 0.0;
                const double stay = 1.0 - pe - pf;
                nxt_p[row + b] += m * stay;
                nxt_r[row + b] += mr * stay;
                if (pe > 0.0) {
                    nxt_p[row + W + b] += m * pe;
                    nxt_r[row + W + b] += mr * pe + m * pe * rc.fare_e[reg];
                }
                if (pf > 0.0) {
                    nxt_p[row + b + 1] += m * pf;
                    nxt_r[row + b + 1] += mr * pf + m * pf * rc.fare_f[reg];
                }
                moved += m * (pe + pf);
            }
        }
        cur_p.swap(nxt_p);
        cur_r.swap(nxt_r);
        const double w = pw.weights[static_cast<std::size_t>(j)];
        assigned += w;
        for (std::size_t c = 0; c < cells; ++c) {
            out.prob[c] += w * cur_p[c];
            out.rev[c] += w * cur_r[c];
        }
        if (moved < 1e-16 && j < pw.n_max) {
            // chain has absorbed; the remaining arrival-count mass sees the
            // same sales distribution
            const double rest = 1.0 - assigned;
            for (std::size_t c = 0; c < cells; ++c) {
                out.prob[c] += rest * cur_p[c];
                out.rev[c] += rest * cur_r[c];
            }
            break;
        }
    }

    double sum = 0.0;
    for (double x : out.prob) sum += x;
    if (sum > 0.0) {
        const double inv = 1.0 / sum;
        for (double& x : out.prob) x *= inv;
        for (double& x : out.rev) x *= inv;
    }
    return out;
}

double chain_value(ChainWorkspace& ws, const RegimeChoice& rc, double lambda_t,
                   const CabinState& state, const TypedPolicy& pol, double eps,
                   double c_e, double c_f,
                   const std::function<double(int, int)>& cont_at_sales) {
    check_policy(state, pol);
    if (lambda_t <= 0.0) return cont_at_sales(0, 0);
    const PoissonWeights pw = poisson_weights(lambda_t, eps);

    const int A = std::min(pol.q_e, pw.n_max);
    const int B = std::min(pol.q_f, pw.n_max);
    const int W = B + 1;

    // margins from one arrival, by regime
    const double me[3] = {rc.pe[kBoth] * (rc.fare_e[kBoth] - c_e),
                          rc.pe[kEconOnly] * (rc.fare_e[kEconOnly] - c_e), 0.0};
    const double mf[3] = {rc.pf[kBoth] * (rc.fare_f[kBoth] - c_f), 0.0,
                          rc.pf[kFirstOnly] * (rc.fare_f[kFirstOnly] - c_f)};

    // uncapped shortcut: independent thinned Poisson sales
    const bool pooled_cap = pol.cap_total >= 0 && pol.cap_total < A + B;
    if (!pooled_cap) {
        const PoissonWeights we =
            poisson_weights(std::max(lambda_t * rc.pe[kBoth], 0.0), eps);
        const PoissonWeights wf =
            poisson_weights(std::max(lambda_t * rc.pf[kBoth], 0.0), eps);
        if (we.n_max <= A && wf.n_max <= B) {
            double val = lambda_t * (me[kBoth] + mf[kBoth]);
            for (int a = 0; a <= we.n_max; ++a) {
                const double pa = we.weights[static_cast<std::size_t>(a)];
                for (int b = 0; b <= wf.n_max; ++b)
                    val += pa * wf.weights[static_cast<std::size_t>(b)] *
                           cont_at_sales(a, b);
            }
            return val;
        }
    }

    if (pooled_cap) {
        // pooled-cap policies take the generic route
        const SalesPmf pmf = sales_pmf_with(ws, rc, lambda_t, state, pol, eps);
        double val = 0.0;
        for (int a = 0; a <= pmf.a_max; ++a)
            for (int b = 0; b <= pmf.b_max; ++b) {
                const double pr = pmf.p(a, b);
                if (pr == 0.0 && pmf.r(a, b) == 0.0) continue;
                val += pmf.r(a, b) - pr * (c_e * a + c_f * b) +
                       pr * cont_at_sales(a, b);
            }
        return val;
    }

    const std::size_t cells = static_cast<std::size_t>(A + 1) * static_cast<std::size_t>(W);
    auto& cur = ws.cur_p;
    auto& nxt = ws.nxt_p;
    auto& fin = ws.cur_r;  // accumulates the final sales distribution
    cur.assign(cells, 0.0);
    nxt.assign(cells, 0.0);
    fin.assign(cells, 0.0);
    cur[0] = 1.0;
    fin[0] = pw.weights[0];

    // P(N >= j), for the expected-margin telescoping
    std::vector<double>& tail = ws.nxt_r;
    tail.assign(static_cast<std::size_t>(pw.n_max) + 1, 0.0);
    {
        double acc = 0.0;
        for (int j = pw.n_max; j >= 1; --j) {
            acc += pw.weights[static_cast<std::size_t>(j)];
            tail[static_cast<std::size_t>(j)] = acc;
        }
    }

    double flow = 0.0;
    double assigned = pw.weights[0];
    for (int j = 1; j <= pw.n_max; ++j) {
        const int arow = std::min(A, j - 1);
        std::fill(nxt.begin(),
                  nxt.begin() + static_cast<std::ptrdiff_t>(
                                    std::min<std::size_t>(cells, static_cast<std::size_t>(arow + 2) *
                                                                     static_cast<std::size_t>(W))),
                  0.0);
        double margin_rate = 0.0;
        double moved = 0.0;
        for (int a = 0; a <= arow; ++a) {
            const bool open_e = a < pol.q_e;
            const int reg = open_e ? kBoth : kFirstOnly;
            const double pe = open_e ? rc.pe[kBoth] : 0.0;
            const double pf = rc.pf[reg];
            const double stay = 1.0 - pe - pf;
            const double m_unit = me[open_e ? kBoth : 2] + mf[reg];
            double* curp = cur.data() + static_cast<std::size_t>(a) * static_cast<std::size_t>(W);
            double* nxtp = nxt.data() + static_cast<std::size_t>(a) * static_cast<std::size_t>(W);
            double* down = nxtp + W;
            // interior columns: first class still open
            const int bhi = std::min({B, pol.q_f - 1, j - 1 - a});
            double rowmass = 0.0;
            for (int b = 0; b <= bhi; ++b) {
                const double m = curp[b];
                rowmass += m;
                nxtp[b] += m * stay;
                nxtp[b + 1] += m * pf;
                if (open_e) down[b] += m * pe;
            }
            margin_rate += rowmass * m_unit;
            moved += rowmass * (pe + pf);
            // boundary column: first class exhausted
            if (pol.q_f <= B && pol.q_f <= j - 1 - a) {
                const double m = curp[pol.q_f];
                if (m != 0.0) {
                    if (open_e) {
                        const double pe2 = rc.pe[kEconOnly];
                        nxtp[pol.q_f] += m * (1.0 - pe2);
                        down[pol.q_f] += m * pe2;
                        margin_rate += m * me[kEconOnly];
                        moved += m * pe2;
                    } else {
                        nxtp[pol.q_f] += m;
                    }
                }
            }
        }
        flow += tail[static_cast<std::size_t>(j)] * margin_rate;
        cur.swap(nxt);
        const double w = pw.weights[static_cast<std::size_t>(j)];
        assigned += w;
        const int amax = std::min(A, j);
        for (int a = 0; a <= amax; ++a) {
            const std::size_t row = static_cast<std::size_t>(a) * static_cast<std::size_t>(W);
            const int bmax = std::min(B, j - a);
            for (int b = 0; b <= bmax; ++b) fin[row + static_cast<std::size_t>(b)] += w * cur[row + static_cast<std::size_t>(b)];
        }
        if (moved < 1e-16 && j < pw.n_max) {
            const double rest = 1.0 - assigned;
            for (int a = 0; a <= amax; ++a) {
                const std::size_t row = static_cast<std::size_t>(a) * static_cast<std::size_t>(W);
                const int bmax = std::min(B, j - a);
                for (int b = 0; b <= bmax; ++b)
                    fin[row + static_cast<std::size_t>(b)] += rest * cur[row + static_cast<std::size_t>(b)];
            }
            break;
        }
    }

    double val = flow;
    for (int a = 0; a <= A; ++a) {
        const std::size_t row = static_cast<std::size_t>(a) * static_cast<std::size_t>(W);
        for (int b = 0; b <= B; ++b) {
            const double pr = fin[row + static_cast<std::size_t>(b)];
            if (pr != 0.0) val += pr * cont_at_sales(a, b);
        }
    }
    return val;
}

SalesPmf sales_pmf_typed(const FlightParams& p, int t, const CabinState& state,
                         const TypedPolicy& pol, double eps, const MarketRules& rules) {
    ChainWorkspace ws;
    const RegimeChoice rc = RegimeChoice::make(p, t, pol, rules);
    return sales_pmf_with(ws, rc, arrival_rate(p, t), state, pol, eps);
}

SalesPmf sales_pmf(const FlightParams& p, int t, const CabinState& state,
                   const PolicyEntry& pol, double eps, const MarketRules& rules) {
    return sales_pmf_typed(p, t, state, TypedPolicy::from(pol), eps, rules);
}

std::vector<std::pair<CabinState, double>> transition_kernel(
    const FlightParams& p, int t, const CabinState& state, const PolicyEntry& pol,
    double eps, const MarketRules& rules) {
    const SalesPmf pmf = sales_pmf(p, t, state, pol, eps, rules);
    std::vector<std::pair<CabinState, double>> out;
    out.reserve(pmf.prob.size());
    for (int a = 0; a <= pmf.a_max; ++a)
        for (int b = 0; b <= pmf.b_max; ++b) {
            const double pr = pmf.p(a, b);
            if (pr > 0.0)
                out.push_back({CabinState{state.k_e - a, state.k_f - b}, pr});
        }
    return out;
}

std::vector<double> single_cabin_kernel(double lambda_t, double buy_prob, int m) {
    if (m < 0) throw std::domain_error("single_cabin_kernel: m must be >= 0");
    std::vector<double> out(static_cast<std::size_t>(m) + 1, 0.0);
    const double rate = lambda_t * buy_prob;
    if (rate <= 0.0 || m == 0) {
        out[static_cast<std::size_t>(m)] = rate <= 0.0 ? 1.0 : 0.0;
        if (rate > 0.0) out[0] = 1.0;  // m == 0: already sold out
        return out;
    }
    const PoissonWeights w = poisson_weights(rate, 1e-14);
    double below = 0.0;
    for (int d = 0; d < m; ++d) {
        const double pr = d <= w.n_max ? w.weights[static_cast<std::size_t>(d)] : 0.0;
        out[static_cast<std::size_t>(m - d)] = pr;
        below += pr;
    }
    out[0] = std::max(0.0, 1.0 - below);  // sell-out pools the tail
    return out;
}

double expected_flow_profit(const FlightParams& p, int t, const CabinState& state,
                            const PolicyEntry& pol, double eps, const MarketRules& rules) {
    const SalesPmf pmf = sales_pmf(p, t, state, pol, eps, rules);
    double profit = 0.0;
    for (int a = 0; a <= pmf.a_max; ++a)
        for (int b = 0; b <= pmf.b_max; ++b)
            profit += pmf.r(a, b) - pmf.p(a, b) * (p.c_e * a + p.c_f * b);
    return profit;
}

PeriodOutcome simulate_period_typed(RandomStream& s, const FlightParams& p, int t,
                                    const CabinState& state, const TypedPolicy& pol,
                                    const MarketRules& rules) {
    check_policy(state, pol);
    PeriodOutcome out;
    const double lam = arrival_rate(p, t);
    const double theta = business_share(p, t);
    if (lam == 0.0) return out;

    const PoissonWeights pw = poisson_weights(lam);
    const int n = pw.sample(s);
    const TruncNormal fb = p.business_values();
    const TruncNormal fl = p.leisure_values();
    const PremiumDist xi = p.premium();

    for (int i = 0; i < n; ++i) {
        const bool is_b = s.uniform01() < theta;
        const double v = (is_b ? fb : fl).quantile(s.uniform01());
        const double x = xi.quantile(s.uniform01());
        const PricePair& prices = is_b ? pol.business : pol.leisure;

        bool open_e = out.sales_e < pol.q_e;
        bool open_f = out.sales_f < pol.q_f;
        if (pol.cap_total >= 0 && out.sales_e + out.sales_f >= pol.cap_total)
            open_e = open_f = false;

        const int wants = choose_option(v, x, prices, true, true);
        int got = -1;
        if (rules.re_choice) {
            got = choose_option(v, x, prices, open_e, open_f);
        } else {
            if (wants == 0 && open_e) got = 0;
            if (wants == 1 && open_f) got = 1;
        }
        if (got == 0) {
            ++out.sales_e;
            out.served.push_back({is_b ? PassengerType::Business : PassengerType::Leisure,
                                  v, x, Cabin::Economy, prices.p_e});
        } else if (got == 1) {
            ++out.sales_f;
            out.served.push_back({is_b ? PassengerType::Business : PassengerType::Leisure,
                                  v, x, Cabin::First, prices.p_f});
        } else if (wants >= 0) {
            ++out.turned_away;
        }
    }
    return out;
}

PeriodOutcome simulate_period(RandomStream& s, const FlightParams& p, int t,
                              const CabinState& state, const PolicyEntry& pol,
                              const MarketRules& rules) {
    return simulate_period_typed(s, p, t, state, TypedPolicy::from(pol), rules);
}

}  // namespace twocabin
