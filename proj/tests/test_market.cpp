#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "support/stats.hpp"
#include "twocabin/market.hpp"

using namespace twocabin;

namespace {

FlightParams modal_params() {
    FlightParams p;
    p.mu_l = 508.054;
    p.cv_l = 0.247;
    p.delta_b = 0.116;
    p.cv_b = 0.371;
    p.mu_xi = 0.267;
    p.lambda0 = 18.119;
    p.d_lambda = -0.052;
    p.d_theta = 0.071;
    return p;
}

// Brute-force oracle: enumerate every choice sequence of every retained
// arrival count, applying the caps sequentially.  Exponential in n, so only
// usable for small arrival support; written without the chain machinery.
struct Enumerated {
    std::map<std::pair<int, int>, double> cells;
    double revenue = 0.0;
};

void enumerate_sequences(const FlightParams& p, int t, const TypedPolicy& pol, int n,
                         int a, int b, double prob, double rev, Enumerated& out) {
    if (prob == 0.0) return;
    if (n == 0) {
        out.cells[{a, b}] += prob;
        out.revenue += prob * rev;
        return;
    }
    const bool open_e = a < pol.q_e;
    const bool open_f = b < pol.q_f;
    Regime reg;
    if (open_e && open_f) reg = Regime::BothOpen;
    else if (open_e) reg = Regime::EconomyOnly;
    else if (open_f) reg = Regime::FirstOnly;
    else reg = Regime::Closed;
    const ChoiceProbs cp = choice_probs_typed(p, t, pol.business, pol.leisure, reg);
    const double pe = cp.pooled.p_e, pf = cp.pooled.p_f;
    enumerate_sequences(p, t, pol, n - 1, a, b, prob * (1.0 - pe - pf), rev, out);
    if (pe > 0.0)
        enumerate_sequences(p, t, pol, n - 1, a + 1, b, prob * pe,
                            rev + cp.pooled.fare_e, out);
    if (pf > 0.0)
        enumerate_sequences(p, t, pol, n - 1, a, b + 1, prob * pf,
                            rev + cp.pooled.fare_f, out);
}

Enumerated enumerate_oracle(const FlightParams& p, int t, const TypedPolicy& pol,
                            const PoissonWeights& pw) {
    Enumerated out;
    for (int n = 0; n <= pw.n_max; ++n) {
        Enumerated per;
        enumerate_sequences(p, t, pol, n, 0, 0, 1.0, 0.0, per);
        for (const auto& [cell, pr] : per.cells)
            out.cells[cell] += pw.weights[static_cast<std::size_t>(n)] * pr;
        out.revenue += pw.weights[static_cast<std::size_t>(n)] * per.revenue;
    }
    return out;
}

// chi-square comparison of simulated frequencies against an exact pmf
teststat::Chi2Result chi2_sim_vs_pmf(const FlightParams& p, int t, const CabinState& st,
                                     const PolicyEntry& pol, const MarketRules& rules,
                                     int reps, std::uint64_t seed) {
    const SalesPmf pmf = sales_pmf(p, t, st, pol, 1e-10, rules);
    std::vector<double> observed(pmf.prob.size(), 0.0);
    RandomStream root(seed, 0);
    for (int r = 0; r < reps; ++r) {
        RandomStream s = root.child(static_cast<std::uint64_t>(r));
        const PeriodOutcome o = simulate_period(s, p, t, st, pol, rules);
        observed[pmf.idx(o.sales_e, o.sales_f)] += 1.0;
    }
    std::vector<double> expected(pmf.prob.size());
    for (std::size_t i = 0; i < pmf.prob.size(); ++i) expected[i] = pmf.prob[i] * reps;
    return teststat::chi2_gof(observed, expected, 0.01);
}

}  // namespace

TEST_CASE("closed market sells nothing and counts the turned away") {
    FlightParams p = modal_params();
    CabinState st{10, 2};
    PolicyEntry pol{400.0, 900.0, 0, 0};
    RandomStream s(3, 1);
    int total_turned = 0, total_served = 0;
    for (int r = 0; r < 200; ++r) {
        const PeriodOutcome o = simulate_period(s, p, 2, st, pol);
        CHECK(o.sales_e == 0);
        CHECK(o.sales_f == 0);
        total_served += static_cast<int>(o.served.size());
        total_turned += o.turned_away;
    }
    CHECK(total_served == 0);
    CHECK(total_turned > 0);  // plenty of arrivals would buy at these prices
}

TEST_CASE("no arrivals produce an empty outcome") {
    FlightParams p = modal_params();
    p.lambda0 = 0.0;
    p.d_lambda = 0.0;
    RandomStream s(4, 1);
    const PeriodOutcome o = simulate_period(s, p, 1, {5, 2}, {300.0, 700.0, 5, 2});
    CHECK(o.sales_e == 0);
    CHECK(o.sales_f == 0);
    CHECK(o.served.empty());
    CHECK(o.turned_away == 0);
}

TEST_CASE("policy validation") {
    FlightParams p = modal_params();
    RandomStream s(5, 1);
    CHECK_THROWS_AS(simulate_period(s, p, 1, {2, 1}, {300.0, 700.0, 3, 1}),
                    std::domain_error);
    CHECK_THROWS_AS(sales_pmf(p, 1, {2, 1}, {300.0, 700.0, 2, 2}), std::domain_error);
    CHECK_THROWS_AS(sales_pmf(p, 1, {2, 1}, {-1.0, 700.0, 2, 1}), std::domain_error);
}

TEST_CASE("simulated frequencies match the exact pmf cellwise and by chi-square") {
    FlightParams p = modal_params();
    const CabinState st{10, 2};
    const PolicyEntry pol{400.0, 900.0, 5, 1};
    const int t = 2;
    const int reps = 1'000'000;

    const SalesPmf pmf = sales_pmf(p, t, st, pol);
    std::vector<double> observed(pmf.prob.size(), 0.0);
    RandomStream root(11, 0);
    for (int r = 0; r < reps; ++r) {
        RandomStream s = root.child(static_cast<std::uint64_t>(r));
        const PeriodOutcome o = simulate_period(s, p, t, st, pol);
        CHECK(o.sales_e <= pol.q_e);
        CHECK(o.sales_f <= pol.q_f);
        observed[pmf.idx(o.sales_e, o.sales_f)] += 1.0;
    }
    for (int a = 0; a <= pmf.a_max; ++a)
        for (int b = 0; b <= pmf.b_max; ++b) {
            const double phat = observed[pmf.idx(a, b)] / reps;
            const double se = teststat::prop_se(pmf.p(a, b), reps);
            CHECK(std::fabs(phat - pmf.p(a, b)) < 4.0 * se + 1e-9);
        }
    std::vector<double> expected(pmf.prob.size());
    for (std::size_t i = 0; i < pmf.prob.size(); ++i) expected[i] = pmf.prob[i] * reps;
    const auto gof = teststat::chi2_gof(observed, expected, 0.01);
    CHECK_FALSE(gof.rejected);
}

TEST_CASE("exact and simulated sales agree on random configurations") {
    RandomStream gen(23, 0);
    int n_checked = 0;
    for (int trial = 0; trial < 8; ++trial) {
        FlightParams p;
        p.mu_l = gen.uniform(150.0, 600.0);
        p.cv_l = gen.uniform(0.25, 0.9);
        p.delta_b = gen.uniform(0.0, 0.5);
        p.cv_b = gen.uniform(0.25, 0.7);
        p.mu_xi = gen.uniform(0.08, 0.5);
        p.lambda0 = gen.uniform(2.0, 14.0);
        p.d_lambda = gen.uniform(-0.4, 0.4);
        p.d_theta = gen.uniform(0.0, 0.12);
        const int t = 1 + static_cast<int>(gen.below(8));
        CabinState st{static_cast<int>(gen.below(10)) + 1, static_cast<int>(gen.below(4))};
        PolicyEntry pol;
        pol.q_e = static_cast<int>(gen.below(static_cast<std::uint64_t>(st.k_e) + 1));
        pol.q_f = static_cast<int>(gen.below(static_cast<std::uint64_t>(st.k_f) + 1));
        pol.p_e = gen.uniform(0.3 * p.mu_l, 1.8 * p.mu_l);
        pol.p_f = gen.uniform(0.8 * p.mu_l, 3.0 * p.mu_l);
        MarketRules rules;
        rules.re_choice = trial % 2 == 0;  // exercise both clearing conventions
        const auto gof =
            chi2_sim_vs_pmf(p, t, st, pol, rules, 100'000, 1000 + static_cast<std::uint64_t>(trial));
        CHECK_FALSE(gof.rejected);
        ++n_checked;
    }
    CHECK(n_checked == 8);
}

TEST_CASE("uncapped sales are independent thinned Poisson counts") {
    FlightParams p = modal_params();
    const int t = 3;
    const double lam = arrival_rate(p, t);
    const ChoiceProbs cp = choice_probs(p, t, 450.0, 950.0, Regime::BothOpen);
    const CabinState st{80, 60};
    const PolicyEntry pol{450.0, 950.0, 80, 60};  // caps far beyond arrival support
    const SalesPmf pmf = sales_pmf(p, t, st, pol);

    const PoissonWeights we = poisson_weights(lam * cp.pooled.p_e, 1e-10);
    for (int a = 0; a <= we.n_max; ++a) {
        double marg = 0.0;
        for (int b = 0; b <= pmf.b_max; ++b) marg += pmf.p(a, b);
        CHECK(marg == doctest::Approx(we.weights[static_cast<std::size_t>(a)]).epsilon(1e-6));
    }
    // independence: joint equals product of marginals
    const PoissonWeights wf = poisson_weights(lam * cp.pooled.p_f, 1e-10);
    CHECK(pmf.p(3, 1) ==
          doctest::Approx(we.weights[3] * wf.weights[1]).epsilon(1e-8));
}

TEST_CASE("astronomical prices leave a point mass at zero sales") {
    FlightParams p = modal_params();
    const SalesPmf pmf = sales_pmf(p, 4, {10, 3}, {1e9, 1e9, 10, 3});
    CHECK(pmf.p(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("small-support enumeration oracle matches the chain") {
    FlightParams p = modal_params();
    p.lambda0 = 1.3;  // keeps the retained arrival support tiny
    p.d_lambda = 0.0;
    const int t = 2;
    const CabinState st{1, 1};
    const PolicyEntry pol{420.0, 800.0, 1, 1};

    const PoissonWeights pw = poisson_weights(arrival_rate(p, t), 1e-4);
    REQUIRE(pw.n_max <= 9);
    const Enumerated oracle = enumerate_oracle(p, t, TypedPolicy::from(pol), pw);

    const SalesPmf pmf = sales_pmf(p, t, st, pol, 1e-4);
    for (const auto& [cell, pr] : oracle.cells)
        CHECK(pmf.p(cell.first, cell.second) == doctest::Approx(pr).epsilon(1e-9));
    CHECK(pmf.expected_revenue() == doctest::Approx(oracle.revenue).epsilon(1e-9));
}

TEST_CASE("transition kernel") {
    FlightParams p = modal_params();

    SUBCASE("zero releases give the identity transition") {
        const auto kernel = transition_kernel(p, 3, {6, 2}, {400.0, 900.0, 0, 0});
        REQUIRE(kernel.size() == 1);
        CHECK(kernel[0].first == CabinState{6, 2});
        CHECK(kernel[0].second == doctest::Approx(1.0));
    }

    SUBCASE("support never adds seats and rows sum to one") {
        const auto kernel = transition_kernel(p, 2, {8, 2}, {380.0, 850.0, 6, 2});
        double sum = 0.0;
        for (const auto& [next, pr] : kernel) {
            CHECK(next.k_e <= 8);
            CHECK(next.k_f <= 2);
            CHECK(next.k_e >= 0);
            CHECK(next.k_f >= 0);
            CHECK(pr >= 0.0);
            sum += pr;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("single-cabin kernel") {
    SUBCASE("no demand is an identity") {
        const auto k = single_cabin_kernel(10.0, 0.0, 5);
        CHECK(k[5] == 1.0);
        for (int m = 0; m < 5; ++m) CHECK(k[static_cast<std::size_t>(m)] == 0.0);
    }

    SUBCASE("thinning moments at large capacity") {
        const int m = 60;
        const auto k = single_cabin_kernel(10.0, 0.3, m);
        double mean = 0.0, second = 0.0, sum = 0.0;
        for (int mp = 0; mp <= m; ++mp) {
            const double d = m - mp;
            mean += d * k[static_cast<std::size_t>(mp)];
            second += d * d * k[static_cast<std::size_t>(mp)];
            sum += k[static_cast<std::size_t>(mp)];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(mean == doctest::Approx(3.0).epsilon(1e-9));
        CHECK(second - mean * mean == doctest::Approx(3.0).epsilon(1e-8));
    }

    SUBCASE("equals the two-cabin machinery specialized to one cabin") {
        FlightParams p = modal_params();
        const int t = 5;
        const double p_e = 480.0;
        const int m = 12;
        // first class closed: the per-arrival buy probability is the value tail
        const ChoiceProbs cp = choice_probs(p, t, p_e, 0.0, Regime::EconomyOnly);
        const auto closed_form = single_cabin_kernel(arrival_rate(p, t), cp.pooled.p_e, m);

        const PolicyEntry pol{p_e, 1e306, m, 0};
        const SalesPmf pmf = sales_pmf(p, t, {m, 5}, pol, 1e-10);
        for (int mp = 0; mp <= m; ++mp) {
            double chain = 0.0;
            for (int a = 0; a <= pmf.a_max; ++a)
                if (m - a == mp)
                    for (int b = 0; b <= pmf.b_max; ++b) chain += pmf.p(a, b);
            CHECK(chain == doctest::Approx(closed_form[static_cast<std::size_t>(mp)])
                               .epsilon(1e-7));
        }
    }
}

TEST_CASE("expected flow profit") {
    FlightParams p = modal_params();

    SUBCASE("zero releases earn nothing") {
        CHECK(expected_flow_profit(p, 2, {5, 2}, {400.0, 900.0, 0, 0}) == 0.0);
    }

    SUBCASE("uncapped profit reduces to the expected-demand identity") {
        const int t = 3;
        const double p_e = 430.0, p_f = 920.0;
        const auto [de, df] = expected_demand(p, t, p_e, p_f);
        const double direct = de * (p_e - p.c_e) + df * (p_f - p.c_f);
        const double viapmf = expected_flow_profit(p, t, {90, 70}, {p_e, p_f, 90, 70});
        CHECK(viapmf == doctest::Approx(direct).epsilon(1e-7));
    }

    SUBCASE("pricing below cost with demand loses money") {
        CHECK(expected_flow_profit(p, 1, {10, 2}, {5.0, 20.0, 10, 2}) < 0.0);
    }
}

TEST_CASE("raising the economy release weakly raises expected economy sales") {
    FlightParams p = modal_params();
    const CabinState st{12, 3};
    double prev = -1.0;
    for (int q = 0; q <= 12; ++q) {
        const SalesPmf pmf = sales_pmf(p, 2, st, {430.0, 900.0, q, 2});
        const double mean = pmf.expected_sales_e();
        CHECK(mean >= prev - 1e-10);
        prev = mean;
    }
}

TEST_CASE("fused chain value agrees with the pmf route on random configurations") {
    RandomStream gen(41, 0);
    for (int trial = 0; trial < 40; ++trial) {
        FlightParams p;
        p.mu_l = gen.uniform(150.0, 600.0);
        p.cv_l = gen.uniform(0.25, 0.9);
        p.delta_b = gen.uniform(0.0, 0.5);
        p.cv_b = gen.uniform(0.25, 0.7);
        p.mu_xi = gen.uniform(0.08, 0.5);
        p.lambda0 = gen.uniform(0.5, 25.0);
        p.d_theta = gen.uniform(0.0, 0.12);
        const int t = 1 + static_cast<int>(gen.below(8));
        const CabinState st{static_cast<int>(gen.below(40)) + 1,
                            static_cast<int>(gen.below(8))};
        TypedPolicy pol;
        pol.q_e = static_cast<int>(gen.below(static_cast<std::uint64_t>(st.k_e) + 1));
        pol.q_f = static_cast<int>(gen.below(static_cast<std::uint64_t>(st.k_f) + 1));
        pol.business = {gen.uniform(0.0, 2.0 * p.mu_l), gen.uniform(0.0, 3.0 * p.mu_l)};
        pol.leisure = {gen.uniform(0.0, 2.0 * p.mu_l), gen.uniform(0.0, 3.0 * p.mu_l)};
        auto cont = [](int a, int b) { return 37.0 * a + 90.0 * b + 11.0; };

        ChainWorkspace ws;
        const RegimeChoice rc = RegimeChoice::make(p, t, pol);
        const double lam = arrival_rate(p, t);
        const double fused =
            chain_value(ws, rc, lam, st, pol, 1e-10, p.c_e, p.c_f, cont);

        const SalesPmf pmf = sales_pmf_with(ws, rc, lam, st, pol, 1e-10);
        double viapmf = 0.0;
        for (int a = 0; a <= pmf.a_max; ++a)
            for (int b = 0; b <= pmf.b_max; ++b)
                viapmf += pmf.r(a, b) -
                          pmf.p(a, b) * (p.c_e * a + p.c_f * b - cont(a, b));
        CHECK(fused == doctest::Approx(viapmf).epsilon(1e-9));
    }
}

TEST_CASE("pooled release cap binds across cabins") {
    FlightParams p = modal_params();
    TypedPolicy pol = TypedPolicy::from({380.0, 820.0, 6, 2});
    pol.cap_total = 3;
    const SalesPmf pmf = sales_pmf_typed(p, 2, {6, 2}, pol);
    double over = 0.0, sum = 0.0;
    for (int a = 0; a <= pmf.a_max; ++a)
        for (int b = 0; b <= pmf.b_max; ++b) {
            if (a + b > 3) over += pmf.p(a, b);
            sum += pmf.p(a, b);
        }
    CHECK(over == 0.0);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

    // simulator honors the same cap
    RandomStream s(9, 2);
    for (int r = 0; r < 500; ++r) {
        const PeriodOutcome o = simulate_period_typed(s, p, 2, {6, 2}, pol);
        CHECK(o.sales_e + o.sales_f <= 3);
    }
}
