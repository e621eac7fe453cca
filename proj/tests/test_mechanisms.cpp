#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support/stats.hpp"
#include "twocabin/mechanisms.hpp"

using namespace twocabin;

namespace {

FlightParams small_params() {
    FlightParams p;
    p.mu_l = 320.0;
    p.cv_l = 0.5;
    p.delta_b = 0.25;
    p.cv_b = 0.4;
    p.mu_xi = 0.22;
    p.lambda0 = 4.0;
    p.d_lambda = -0.2;
    p.d_theta = 0.08;
    p.T = 3;
    return p;
}

// exhaustive search over all 3^n assignments, the auction oracle
double enumerate_assignments(const std::vector<ArrivalDraw::Arrival>& batch, int skip_i,
                             int ke, int kf, double c_e, double c_f,
                             const std::function<double(int, int)>& cont) {
    const int n = static_cast<int>(batch.size());
    double best = -1e300;
    std::vector<int> choice(static_cast<std::size_t>(n), -1);
    const long total = static_cast<long>(std::pow(3.0, n));
    for (long code = 0; code < total; ++code) {
        long c = code;
        int ue = 0, uf = 0;
        double val = 0.0;
        bool ok = true;
        for (int i = 0; i < n && ok; ++i) {
            const int a = static_cast<int>(c % 3) - 1;
            c /= 3;
            if (i == skip_i && a >= 0) {
                ok = false;
                break;
            }
            if (a == 0) {
                ++ue;
                val += batch[static_cast<std::size_t>(i)].v - c_e;
            } else if (a == 1) {
                ++uf;
                val += batch[static_cast<std::size_t>(i)].v *
                           batch[static_cast<std::size_t>(i)].xi -
                       c_f;
            }
            choice[static_cast<std::size_t>(i)] = a;
        }
        if (!ok || ue > ke || uf > kf) continue;
        best = std::max(best, val + cont(ke - ue, kf - uf));
    }
    return best;
}

}  // namespace

TEST_CASE("simulated producer surplus matches the solved value function") {
    // the module's key oracle: R large, mean PS within 4 standard errors of V1
    FlightParams p = small_params();
    const CabinState init{6, 2};
    SolverConfig cfg;
    cfg.workers = 1;
    const SolvedModel model = solve(p, init, cfg);
    const WelfareReport rep = run_baseline(model, 17, 40'000, 1);
    CHECK(std::fabs(rep.producer_surplus - model.value_at(1, init)) < 4.0 * rep.ps_se);
    CHECK(rep.producer_surplus >= 0.0);
    CHECK(rep.load_factor >= 0.0);
    CHECK(rep.load_factor <= 1.0);
}

TEST_CASE("degenerate demand yields an all-zero report") {
    FlightParams p = small_params();
    p.lambda0 = 0.0;
    p.d_lambda = 0.0;
    const SolvedModel model = solve(p, {4, 1});
    const WelfareReport rep = run_baseline(model, 3, 200);
    CHECK(rep.producer_surplus == 0.0);
    CHECK(rep.consumer_surplus == 0.0);
    CHECK(rep.total_surplus == 0.0);
    CHECK(rep.seats_sold_e == 0.0);
}

TEST_CASE("auction assignment matches exhaustive enumeration on small batches") {
    RandomStream gen(31, 0);
    FlightParams p = small_params();
    for (int trial = 0; trial < 12; ++trial) {
        const int n = 2 + static_cast<int>(gen.below(5));  // up to 6 arrivals
        std::vector<ArrivalDraw::Arrival> batch;
        for (int i = 0; i < n; ++i) {
            ArrivalDraw::Arrival a;
            a.business = gen.uniform01() < 0.4;
            a.v = gen.uniform(50.0, 900.0);
            a.xi = 1.0 - 0.3 * std::log(gen.uniform01());
            batch.push_back(a);
        }
        auto cont = [](int re, int rf) { return 25.0 * re + 55.0 * rf; };
        const CabinState rem{3, 2};
        const PeriodAuction auction = auction_period(batch, rem, p.c_e, p.c_f, cont);

        const double best =
            enumerate_assignments(batch, -1, rem.k_e, rem.k_f, p.c_e, p.c_f, cont);
        CHECK(auction.welfare == doctest::Approx(best).epsilon(1e-12));

        // payments: individual rationality and the removal identity
        for (int i = 0; i < n; ++i) {
            const int a = auction.assignment[static_cast<std::size_t>(i)];
            if (a < 0) {
                CHECK(auction.payments[static_cast<std::size_t>(i)] == 0.0);
                continue;
            }
            const double val = a == 0 ? batch[static_cast<std::size_t>(i)].v
                                      : batch[static_cast<std::size_t>(i)].v *
                                            batch[static_cast<std::size_t>(i)].xi;
            const double w_minus =
                enumerate_assignments(batch, i, rem.k_e, rem.k_f, p.c_e, p.c_f, cont);
            const double expected_pay = w_minus - (auction.welfare - val);
            CHECK(auction.payments[static_cast<std::size_t>(i)] ==
                  doctest::Approx(expected_pay).epsilon(1e-10));
            CHECK(auction.payments[static_cast<std::size_t>(i)] <= val + 1e-9);
        }
    }
}

TEST_CASE("lone winner with slack capacity pays the peanut cost") {
    std::vector<ArrivalDraw::Arrival> batch{{false, 500.0, 1.1}};
    const PeriodAuction auction = auction_period(batch, {5, 5}, 14.0, 40.0,
                                                 [](int, int) { return 0.0; });
    REQUIRE(auction.assignment[0] >= 0);
    const double cost = auction.assignment[0] == 0 ? 14.0 : 40.0;
    CHECK(auction.payments[0] == doctest::Approx(cost));
}

TEST_CASE("no arrival gains from misreporting its tastes (spot check)") {
    RandomStream gen(57, 0);
    FlightParams p = small_params();
    auto cont = [](int re, int rf) { return 30.0 * re + 70.0 * rf; };
    for (int trial = 0; trial < 4; ++trial) {
        std::vector<ArrivalDraw::Arrival> batch;
        const int n = 3 + static_cast<int>(gen.below(2));
        for (int i = 0; i < n; ++i)
            batch.push_back({gen.uniform01() < 0.5, gen.uniform(100.0, 800.0),
                             1.0 - 0.25 * std::log(gen.uniform01())});
        const CabinState rem{2, 1};
        const PeriodAuction truthful = auction_period(batch, rem, p.c_e, p.c_f, cont);
        for (int i = 0; i < n; ++i) {
            const double tv = batch[static_cast<std::size_t>(i)].v;
            const double tx = batch[static_cast<std::size_t>(i)].xi;
            double truthful_u = 0.0;
            if (truthful.assignment[static_cast<std::size_t>(i)] == 0)
                truthful_u = tv - truthful.payments[static_cast<std::size_t>(i)];
            if (truthful.assignment[static_cast<std::size_t>(i)] == 1)
                truthful_u = tv * tx - truthful.payments[static_cast<std::size_t>(i)];
            for (double fv : {0.5 * tv, 0.9 * tv, 1.1 * tv, 2.0 * tv, 10.0}) {
                for (double fx : {1.0, tx, 2.0 * tx}) {
                    auto lie = batch;
                    lie[static_cast<std::size_t>(i)].v = fv;
                    lie[static_cast<std::size_t>(i)].xi = fx;
                    const PeriodAuction misreport =
                        auction_period(lie, rem, p.c_e, p.c_f, cont);
                    double u = 0.0;
                    if (misreport.assignment[static_cast<std::size_t>(i)] == 0)
                        u = tv - misreport.payments[static_cast<std::size_t>(i)];
                    if (misreport.assignment[static_cast<std::size_t>(i)] == 1)
                        u = tv * tx - misreport.payments[static_cast<std::size_t>(i)];
                    CHECK(u <= truthful_u + 1e-9);
                }
            }
        }
    }
}

TEST_CASE("first-best mirrors the random-rationing misallocation example") {
    // two arrivals, one economy and one first-class seat: the planner keeps
    // the high-valuation unit buyer in economy and upgrades the taste buyer
    std::vector<ArrivalDraw::Arrival> batch{{false, 5000.0, 1.0}, {false, 2500.0, 2.0}};
    const PeriodAuction best = auction_period(batch, {1, 1}, 14.0, 40.0,
                                              [](int, int) { return 0.0; }, false);
    CHECK(best.assignment[0] == 0);  // v = 5000 stays in economy
    CHECK(best.assignment[1] == 1);  // the xi = 2 arrival takes first class
    CHECK(best.welfare == doctest::Approx((5000.0 - 14.0) + (5000.0 - 40.0)));
}

TEST_CASE("slack capacity serves everyone with positive net value") {
    FlightParams p = small_params();
    const CabinState init{200, 100};
    RandomStream s(5, 900);
    const ArrivalDraw draw = ArrivalDraw::generate(p, s);
    const WelfareReport rep = run_first_best(p, init, 5, 1, 1);
    // recompute the unconstrained optimum directly from the same draw
    RandomStream s2(5, 0);
    (void)s2;
    double expect = 0.0;
    RandomStream root(5, 0xE7A1u);
    const ArrivalDraw d0 = ArrivalDraw::generate(p, root.child(0));
    for (const auto& period : d0.periods)
        for (const auto& a : period)
            expect += std::max({a.v - p.c_e, a.v * a.xi - p.c_f, 0.0});
    CHECK(rep.total_surplus == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("ample-capacity single-period auction leaves sellers no rent") {
    FlightParams p = small_params();
    p.T = 1;
    p.lambda0 = 3.0;
    const WelfareReport rep = run_vcg(p, {60, 60}, {}, 11, 400, 40, 1);
    // nobody's presence displaces anyone: payments equal peanut costs
    CHECK(rep.producer_surplus == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(rep.consumer_surplus == doctest::Approx(rep.total_surplus));
}

TEST_CASE("observed-valuation table is monotone and vanishing at the horizon") {
    FlightParams p = small_params();
    const ObservedValueTable table = observed_value_table(p, {5, 2}, 60, 9, 1);
    CHECK(table.at(p.T + 1, 5, 2) == 0.0);
    for (int t = 1; t <= p.T; ++t)
        for (int ke = 0; ke <= 5; ++ke)
            for (int kf = 0; kf <= 2; ++kf) {
                CHECK(table.at(t, ke, kf) >= 0.0);
                if (ke > 0) CHECK(table.at(t, ke, kf) >= table.at(t, ke - 1, kf) - 1e-9);
                if (kf > 0) CHECK(table.at(t, ke, kf) >= table.at(t, ke, kf - 1) - 1e-9);
            }
}

TEST_CASE("comparison of all mechanisms on common draws") {
    FlightParams p = small_params();
    const CabinState init{6, 2};
    SolverConfig cfg;
    cfg.workers = 1;
    MechanismConfig mcfg;
    mcfg.R = 2'000;
    mcfg.M = 80;
    mcfg.seed = 23;
    mcfg.workers = 1;
    const Comparison cmp = compare(p, init, cfg, mcfg);

    const auto& base = cmp.row("baseline");
    const auto& unif = cmp.row("uniform");
    const auto& third = cmp.row("third_degree");
    const auto& fd = cmp.row("first_degree");
    const auto& vcg = cmp.row("vcg");
    const auto& fb = cmp.row("first_best");

    SUBCASE("accounting identities and basic sanity") {
        for (const ComparisonRow& row : cmp.rows) {
            const WelfareReport& r = row.report;
            CHECK(r.producer_surplus + r.consumer_surplus ==
                  doctest::Approx(r.total_surplus).epsilon(1e-9));
            CHECK(r.cs_business + r.cs_leisure == doctest::Approx(r.consumer_surplus));
            CHECK(r.load_factor >= 0.0);
            CHECK(r.load_factor <= 1.0);
        }
        CHECK(fd.report.consumer_surplus == 0.0);
    }

    SUBCASE("pathwise dominance and first-degree equivalence") {
        const auto& ts_fb = cmp.ts_series[5];
        for (std::size_t mech = 0; mech < 5; ++mech)
            for (std::size_t r = 0; r < ts_fb.size(); ++r)
                CHECK(cmp.ts_series[mech][r] <= ts_fb[r] + 1e-6);
        for (std::size_t r = 0; r < ts_fb.size(); ++r)
            CHECK(cmp.ts_series[3][r] == doctest::Approx(cmp.ts_series[4][r]).epsilon(1e-9));
    }

    SUBCASE("expected surplus orderings from strategy-space nesting") {
        const double tol_fd = 4.0 * std::hypot(fd.report.ps_se, third.report.ps_se);
        CHECK(fd.report.producer_surplus >= third.report.producer_surplus - tol_fd);
        const double tol_3 = 4.0 * std::hypot(third.report.ps_se, base.report.ps_se);
        CHECK(third.report.producer_surplus >= base.report.producer_surplus - tol_3);
        const double tol_u = 4.0 * std::hypot(base.report.ps_se, unif.report.ps_se);
        CHECK(base.report.producer_surplus >= unif.report.producer_surplus - tol_u);
    }

    SUBCASE("efficiency ratios are ordered and bounded") {
        CHECK(fb.efficiency_ratio == doctest::Approx(1.0));
        for (const ComparisonRow& row : cmp.rows) {
            CHECK(row.efficiency_ratio > 0.0);
            CHECK(row.efficiency_ratio <= 1.0 + 1e-9);
        }
    }

    SUBCASE("rerunning with the same seed reproduces every number bitwise") {
        const Comparison again = compare(p, init, cfg, mcfg);
        for (std::size_t i = 0; i < cmp.rows.size(); ++i) {
            CHECK(again.rows[i].report.producer_surplus ==
                  cmp.rows[i].report.producer_surplus);
            CHECK(again.rows[i].report.consumer_surplus ==
                  cmp.rows[i].report.consumer_surplus);
            CHECK(again.rows[i].report.total_surplus == cmp.rows[i].report.total_surplus);
            CHECK(again.rows[i].report.ts_se == cmp.rows[i].report.ts_se);
        }
    }
}

TEST_CASE("third degree collapses toward baseline without business arrivals") {
    FlightParams p = small_params();
    p.d_theta = 0.0;  // theta is identically zero
    const CabinState init{5, 2};
    const SolvedModel base = solve(p, init);
    const SolvedModel third = solve_third_degree(p, init);
    const double vb = base.value_at(1, init);
    const double vt = third.value_at(1, init);
    CHECK(vt >= vb - 1e-9);
    CHECK(vt == doctest::Approx(vb).epsilon(1e-5));
}

TEST_CASE("identical type distributions make the optimal type prices coincide") {
    FlightParams p = small_params();
    p.delta_b = 0.0;  // business and leisure share one valuation law
    p.cv_b = p.cv_l;
    p.lambda0 = 2.5;
    p.T = 2;
    const CabinState init{8, 3};  // slack capacity keeps the problem separable
    const SolvedModel third = solve_third_degree(p, init);
    const TypedPolicy& pol = third.policy_at(1, init);
    if (pol.q_e > 0)
        CHECK(pol.business.p_e == doctest::Approx(pol.leisure.p_e).epsilon(0.02));
    if (pol.q_f > 0)
        CHECK(pol.business.p_f == doctest::Approx(pol.leisure.p_f).epsilon(0.02));
}
