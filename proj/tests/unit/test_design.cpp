#include <gtest/gtest.h>

#include <cmath>

#include "uvoc/design.hpp"
#include "uvoc/scenario.hpp"

using namespace uvoc;

namespace {

DesignSpec table2() { return DesignSpec{}; }

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST(Design, QuadratureGains) {
    const EtaMu g = design_eta_mu(table2());
    EXPECT_LT(rel(g.eta, 16.6253), 1e-5);
    EXPECT_LT(rel(g.mu, 5.2029e-4), 1e-4);
}

TEST(Design, InPhaseUsesReactiveRatingForFrequency) {
    DesignSpec s = table2();
    s.phi = 0.0;
    const EtaMu g = design_eta_mu(s);
    EXPECT_NEAR(g.eta, 3.0 * kPi * 126.0 * 126.0 / 4400.0, 1e-9);
    EXPECT_NEAR(g.eta, 34.01, 5e-3);
}

TEST(Design, GainsScaleWithFrequencyBand) {
    DesignSpec s = table2();
    s.domega_max = 1e-9;
    const EtaMu g = design_eta_mu(s);
    EXPECT_LT(g.eta, 1e-8);
    EXPECT_LT(g.mu, 1e-12);
    s = table2();
    s.domega_max = 2.0 * kPi;
    EXPECT_NEAR(design_eta_mu(s).eta, 2.0 * design_eta_mu(table2()).eta, 1e-9);
}

TEST(Design, RejectsInfeasibleSpecs) {
    DesignSpec s = table2();
    s.dV_max = 0.0;
    try {
        design_eta_mu(s);
        FAIL() << "expected Infeasible";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Infeasible);
    }
    s = table2();
    s.phi = 0.3;
    EXPECT_THROW(design_eta_mu(s), Error);
    s = table2();
    s.domega_max = -1.0;
    EXPECT_THROW(design_eta_mu(s), Error);
}

TEST(Design, ReportHitsRatedCorners) {
    const DesignReport r = design_report(table2());
    EXPECT_DOUBLE_EQ(r.V_max, 126.0);
    EXPECT_LT(std::abs(r.rated_power_residual), 1e-12);
    EXPECT_LT(std::abs(r.rated_voltage_residual), 1e-12);
    EXPECT_NEAR(r.V_min_symmetric, std::sqrt(2.0 * 14400.0 - 126.0 * 126.0), 1e-12);
    // The exact root sits below the symmetric approximation.
    const double V0 = 120.0;
    const double rad = 1.0 - 2.0 * r.gains.eta * 4400.0 / (r.gains.mu * 3.0 * V0 * V0 * V0 * V0);
    EXPECT_NEAR(r.V_min, V0 / std::sqrt(2.0) * std::sqrt(1.0 + std::sqrt(rad)), 1e-9);
    EXPECT_LT(r.V_min, r.V_min_symmetric);
}

TEST(SteadyVoltage, NominalAndExtremes) {
    const DesignSpec spec = table2();
    const SvoParams p = svo_params_from_design(spec, design_eta_mu(spec));
    EXPECT_NEAR(steady_state_voltage(0.0, 0.0, p), 120.0, 1e-12);
    EXPECT_NEAR(steady_state_voltage(5000.0, 0.0, p), 120.0, 1e-12);
    EXPECT_NEAR(steady_state_voltage(0.0, -4400.0, p), 126.0, 1e-9);
    const double v_low = steady_state_voltage(0.0, 4400.0, p);
    EXPECT_LT(v_low, 120.0);
    EXPECT_GT(v_low, 110.0);
}

TEST(SteadyVoltage, ErrorsForGridFollowingAndNegativeRadicand) {
    const DesignSpec spec = table2();
    SvoParams p = svo_params_from_design(spec, design_eta_mu(spec));
    EXPECT_THROW(steady_state_voltage(0.0, 1e6, p), Error);
    p.mu = 0.0;
    try {
        steady_state_voltage(0.0, 0.0, p);
        FAIL() << "expected InvalidArgument";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
    }
}

TEST(Droop, FrequencyAtRatedPower) {
    const DesignSpec spec = table2();
    const SvoParams p = svo_params_from_design(spec, design_eta_mu(spec));
    EXPECT_NEAR(droop_frequency(9000.0, 0.0, 120.0, p) - p.omega0, -3.4636, 1e-4);
    EXPECT_NEAR(droop_frequency(-9000.0, 0.0, 126.0, p) - p.omega0, kPi, 1e-12);
    EXPECT_NEAR(droop_frequency(0.0, 2000.0, 120.0, p), p.omega0, 1e-12);
}

TEST(Droop, InPhaseUsesReactivePower) {
    DesignSpec spec = table2();
    spec.phi = 0.0;
    const SvoParams p = svo_params_from_design(spec, design_eta_mu(spec));
    const double V = 121.0;
    EXPECT_NEAR(droop_frequency(3000.0, 1000.0, V, p) - p.omega0, p.eta * 1000.0 / (3.0 * V * V), 1e-10);
}

TEST(PowerMap, NominalGridGivesZeroActivePower) {
    const DesignConfig cfg = load_design(std::string(UVOC_SCENARIO_DIR) + "/design_table2.json");
    const SvoParams p = svo_params_from_design(cfg.spec, design_eta_mu(cfg.spec));
    const PowerMapNode n = solve_power_flow(p, cfg.plant, cfg.evi, 120.0, p.omega0);
    ASSERT_TRUE(n.converged);
    EXPECT_NEAR(n.P_svo, 0.0, 1e-6);
    // The filter capacitor still draws reactive power, which sags V.
    EXPECT_GT(n.Q_svo, 0.0);
    EXPECT_NEAR(steady_state_voltage(n.P_svo, n.Q_svo, p), n.V, 1e-8);
    EXPECT_LT(n.V, 120.0);
}

TEST(PowerMap, FlowsFollowDroopOnGrid) {
    const DesignConfig cfg = load_design(std::string(UVOC_SCENARIO_DIR) + "/design_table2.json");
    const SvoParams p = svo_params_from_design(cfg.spec, design_eta_mu(cfg.spec));
    const PowerMapNode n = solve_power_flow(p, cfg.plant, cfg.evi, 123.0, p.omega0 - 2.0);
    ASSERT_TRUE(n.converged);
    EXPECT_NEAR(droop_frequency(n.P_svo, n.Q_svo, n.V, p), p.omega0 - 2.0, 1e-8);
    EXPECT_NEAR(steady_state_voltage(n.P_svo, n.Q_svo, p), n.V, 1e-8);
    EXPECT_GT(n.P_svo, 0.0);
    EXPECT_LT(n.Q_svo, 0.0);
}

TEST(PowerMap, GridOrdering) {
    const DesignConfig cfg = load_design(std::string(UVOC_SCENARIO_DIR) + "/design_table2.json");
    const SvoParams p = svo_params_from_design(cfg.spec, design_eta_mu(cfg.spec));
    PowerMapOptions opt;
    opt.n_V = 3;
    opt.n_omega = 2;
    const auto map = power_limit_map(p, cfg.plant, cfg.evi, opt);
    ASSERT_EQ(map.size(), 6u);
    EXPECT_DOUBLE_EQ(map[0].V_g, opt.V_g_min);
    EXPECT_DOUBLE_EQ(map[1].V_g, opt.V_g_min);
    EXPECT_DOUBLE_EQ(map[1].omega_g, opt.omega_g_max);
    EXPECT_DOUBLE_EQ(map[5].V_g, opt.V_g_max);
}

TEST(PowerMap, RefinementKeepsSharedNodes) {
    const DesignConfig cfg = load_design(std::string(UVOC_SCENARIO_DIR) + "/design_table2.json");
    const SvoParams p = svo_params_from_design(cfg.spec, design_eta_mu(cfg.spec));
    PowerMapOptions coarse = cfg.map;
    coarse.n_V = coarse.n_omega = 3;
    PowerMapOptions fine = coarse;
    fine.n_V = fine.n_omega = 5;
    const auto a = power_limit_map(p, cfg.plant, cfg.evi, coarse);
    const auto b = power_limit_map(p, cfg.plant, cfg.evi, fine);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            const PowerMapNode& x = a[static_cast<std::size_t>(3 * i + j)];
            const PowerMapNode& y = b[static_cast<std::size_t>(5 * (2 * i) + 2 * j)];
            ASSERT_TRUE(x.converged && y.converged);
            EXPECT_DOUBLE_EQ(x.V_g, y.V_g);
            EXPECT_NEAR(x.P_poc, y.P_poc, 1e-6);
            EXPECT_NEAR(x.Q_poc, y.Q_poc, 1e-6);
        }
    }
}
