#pragma once

#include <complex>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "uvoc/controller.hpp"

namespace uvoc {

enum class AnalysisMode { Normal, Fault };

struct SmallSignalParams {
    SvoParams svo;
    double R_e = 0.2117;
    double L_e = 2.492e-3;
    double C_dc = 2e-3;
    double V_dc_ref = 400.0;
    double R0 = 5.25;    ///< fault mode only
    double tau_f = 0.028;
    double boost_impedance_base = 1.0;  ///< see FaultConfig
    double I_m = 39.28;  ///< peak

    void validate() const;
};

struct GridCondition {
    double V_g = 120.0;  ///< RMS
    double omega_star = 2.0 * kPi * 60.0;
};

/// Currents and voltages are RMS-scaled in the frame rotating at omega_star:
/// i = sqrt(2) (I_d + j I_q) e^{j omega_star t}, v = sqrt(2) V e^{j(omega_star t + theta_s)}.
struct OperatingPoint {
    double I_d = 0.0;
    double I_q = 0.0;
    double V = 0.0;
    double theta_s = 0.0;
    double v_dc = 0.0;
    double P_dc = 0.0;
    double P0 = 0.0;
    double Q0 = 0.0;
    GridCondition grid;
    AnalysisMode mode = AnalysisMode::Normal;
    double residual = 0.0;
    int iterations = 0;
};

using StateVector = Eigen::Matrix<double, 5, 1>;
using InputVector = Eigen::Vector2d;

/// Nonlinear right-hand side, states [I_d, I_q, V, theta_s, v_dc], inputs [P0, Q0].
StateVector nonlinear_rhs(const StateVector& x, const InputVector& u, double P_dc, const GridCondition& g,
                          const SmallSignalParams& p, AnalysisMode mode);

struct LinearModel {
    Eigen::Matrix<double, 5, 5> A;
    Eigen::Matrix<double, 5, 2> B;
    OperatingPoint op;

    Eigen::Matrix4d A11() const { return A.topLeftCorner<4, 4>(); }
    Eigen::Vector4d A12() const { return A.topRightCorner<4, 1>(); }
    Eigen::RowVector4d A21() const { return A.bottomLeftCorner<1, 4>(); }
    double A22() const { return A(4, 4); }
    Eigen::Matrix<double, 4, 2> B11() const { return B.topRows<4>(); }
    Eigen::RowVector2d B21() const { return B.bottomRows<1>(); }
};

struct EquilibriumOptions {
    int max_iterations = 100;
    double tolerance = 1e-10;
    double V_guess = 0.0;  ///< 0 selects V_p0 / sqrt(2)
    double theta_guess = 0.0;
};

/// Damped Newton on the four AC states at v_dc = V*_dc; P_dc follows from the
/// DC power balance. Throws NonConvergence with the final residual.
OperatingPoint equilibrium_solve(const SmallSignalParams& p, const GridCondition& g, double P0, double Q0,
                                 AnalysisMode mode, const EquilibriumOptions& opt = {});

/// Analytic Jacobians at an equilibrium. Throws InvalidArgument if the
/// residual at op exceeds `tolerance`.
LinearModel linearize(const OperatingPoint& op, const SmallSignalParams& p, double tolerance = 1e-6);

/// Sorted by real part then imaginary part, both descending.
std::vector<std::complex<double>> eigenvalues(const Eigen::MatrixXd& M);

/// G(s) = C (sI - A)^{-1} B for one output row and one input column.
class TransferFunction {
public:
    TransferFunction(Eigen::MatrixXd A, Eigen::VectorXd b, Eigen::RowVectorXd c, double gain = 1.0);
    /// Throws PoleEvaluation when s sits on an eigenvalue of A.
    std::complex<double> operator()(std::complex<double> s) const;
    std::complex<double> at_omega(double omega) const { return (*this)({0.0, omega}); }

private:
    Eigen::MatrixXd A_;
    Eigen::VectorXd b_;
    Eigen::RowVectorXd c_;
    double gain_;
    std::vector<std::complex<double>> poles_;
};

enum class OutputSelector { I_d = 0, I_q = 1, V = 2, theta_s = 3, v_dc = 4 };
enum class InputSelector { P0 = 0, Q0 = 1 };

TransferFunction transfer_function(const LinearModel& m, OutputSelector y, InputSelector u);
/// G_OL = Delta v_dc / (-Delta P0).
TransferFunction open_loop_dc(const LinearModel& m);

std::complex<double> dc_compensator_response(const DcRegParams& p, double omega);
std::vector<std::complex<double>> dc_compensator_response(const DcRegParams& p, const std::vector<double>& omegas);

struct MarginReport {
    double gain_crossover = 0.0;  ///< rad/s, first crossing
    double phase_margin_deg = 0.0;
    double phase_crossover = 0.0;  ///< rad/s, 0 if none
    double gain_margin_db = 0.0;   ///< +inf if no phase crossover
    std::vector<double> gain_crossovers;
    std::vector<double> phase_crossovers;
};

/// Log-spaced scan of L(j omega) over [omega_lo, omega_hi] refined by bisection.
/// Throws NonConvergence when |L| never crosses unity.
MarginReport margins(const std::function<std::complex<double>(double)>& L, double omega_lo, double omega_hi,
                     int scan_points = 4000, double bisection_tolerance = 1e-6);

struct BodePoint {
    double omega = 0.0;
    double mag_db = 0.0;
    double phase_deg = 0.0;
};

/// Phase is unwrapped along the frequency list.
std::vector<BodePoint> bode(const std::function<std::complex<double>(double)>& L, const std::vector<double>& omegas);

std::vector<double> log_space(double lo, double hi, int n);

}  // namespace uvoc
