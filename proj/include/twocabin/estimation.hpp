#pragma once
#include <array>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "twocabin/mechanisms.hpp"
#include "twocabin/solver.hpp"

namespace twocabin {

/// One observed ticket purchase.
struct TicketRecord {
    std::string flight_id;
    std::string market_id;
    int cap_econ = 0;
    int cap_first = 0;
    int period = 1;  // 1..T
    Cabin cabin = Cabin::Economy;
    double fare = 0.0;
    PassengerType reason = PassengerType::Leisure;
};

/// Thrown by the ticket CSV reader with the offending line number.
struct TicketParseError : std::runtime_error {
    TicketParseError(const std::string& what, long line_)
        : std::runtime_error(what + " (line " + std::to_string(line_) + ")"),
          line(line_) {}
    long line = 0;
};

std::vector<TicketRecord> read_tickets_csv(const std::string& path);
void write_tickets_csv(const std::vector<TicketRecord>& tickets, const std::string& path);

/// Fixed-order concatenation of decile summaries across flights: per period,
/// economy fare, first fare, fare changes, per-period share of capacity sold,
/// its change, the first-minus-economy fare gap, the business share among
/// purchases, and the cumulative load factor; then deciles of the max and min
/// fare gap over the horizon, and the overall business share.  counts records
/// the observations behind each cell (zero means the cell was unobserved and
/// holds 0).
struct MomentVector {
    std::vector<double> values;
    std::vector<long> counts;
    int T = 8;
    int deciles = 9;

    std::size_t dim() const { return values.size(); }
};

/// Cell labels matching the fixed moment order.
std::vector<std::string> moment_labels(int T, int deciles);

/// Demand-parameter box in the fixed order
/// (mu_l, cv_l, delta_b, cv_b, mu_xi, lambda0, d_lambda, d_theta).
struct ParamBox {
    std::array<double, 8> lo{};
    std::array<double, 8> hi{};

    static const std::array<const char*, 8>& names();
    bool contains(const std::array<double, 8>& psi) const;
    void validate() const;
};

std::array<double, 8> to_psi(const FlightParams& p);
FlightParams from_psi(const std::array<double, 8>& psi, int T = 8, double c_e = 14.0,
                      double c_f = 40.0);

struct EstimationConfig {
    int deciles = 9;
    int min_tickets = 10;   // flights with fewer tickets are dropped
    int model_flights = 200;  // simulated flights per moment evaluation
    int fit_starts = 24;
    int fit_max_evals = 6000;
    bool full_cholesky = false;  // default: diagonal mixing covariance
    double sigma_lo = 0.01;      // diagonal bounds, in box-width units
    double sigma_hi = 2.0;
    int T = 8;
    double c_e = 14.0;
    double c_f = 40.0;
    SolverConfig solver;

    std::uint64_t content_hash() const;
};

/// Truncated multivariate normal over the demand primitives: location mu and
/// lower-triangular Cholesky factor of the untruncated covariance, boxed to
/// the library support.
struct MixingDensity {
    std::array<double, 8> mu{};
    std::array<double, 64> chol{};  // row-major lower triangle, positive diagonal
    ParamBox box;

    /// log of the untruncated normal density (the box constant cancels in
    /// self-normalized importance weights).
    double log_density_untruncated(const std::array<double, 8>& psi) const;
    void validate() const;
};

/// Importance-sampling library: uniform draws over the box with their solved
/// model moments.
struct MomentLibrary {
    ParamBox box;
    CabinState omega1;
    int S = 0;
    std::uint64_t seed = 0;
    std::uint64_t cfg_hash = 0;
    int T = 8;
    int deciles = 9;
    std::vector<std::array<double, 8>> draws;
    std::vector<std::vector<double>> moments;  // per successful draw
    std::vector<int> failed;                   // draw indices dropped after solver failure
};

/// Decile moments of observed tickets for one initial-capacity group;
/// flights with fewer than cfg.min_tickets tickets are excluded.  Throws
/// std::runtime_error when the group is empty.
MomentVector empirical_moments(const std::vector<TicketRecord>& tickets,
                               const CabinState& omega1,
                               const EstimationConfig& cfg = {});

/// Simulate R flights under the stored policy and emit their tickets.
std::vector<TicketRecord> simulate_tickets(const SolvedModel& model, std::uint64_t seed,
                                           int R, const std::string& market_id = "m0");

/// Same statistic pipeline as empirical_moments, applied to simulated flights.
MomentVector model_moments(const SolvedModel& model, std::uint64_t seed, int R,
                           const EstimationConfig& cfg = {});

/// Draw S parameter vectors uniformly over the box, solve each, and record
/// its model moments.  When partial_path is nonempty, finished draws are
/// appended there and picked up again after an interruption.
MomentLibrary build_library(const ParamBox& box, int S, const CabinState& omega1,
                            const EstimationConfig& cfg, std::uint64_t seed,
                            const std::string& partial_path = "");

void save_library(const MomentLibrary& lib, const std::string& path);
MomentLibrary load_library(const std::string& path);

struct MixtureResult {
    MomentVector moments;
    std::vector<double> weights;  // self-normalized, sum to one
    double ess = 0.0;             // effective sample size 1/sum(w^2)
};

/// Self-normalized importance-sampling estimate of the mixture moments under
/// the mixing density h (uniform proposal cancels).  Throws when every weight
/// underflows.
MixtureResult mixture_moments(const MomentLibrary& lib, const MixingDensity& h);

/// Uniform mixing (h equals the proposal): the exact column mean.
MixtureResult mixture_moments(const MomentLibrary& lib);

struct FitResult {
    MixingDensity density;
    double objective = 0.0;
    double ess = 0.0;
    bool identified = true;
    // objective at each local search's end point, best first
    std::vector<double> local_optima;
};

/// Least-squares fit of the mixing density to the target moments by
/// multistart derivative-free search over (mu, log-diagonal Cholesky).
FitResult fit(const MomentLibrary& lib, const MomentVector& rho_hat,
              const EstimationConfig& cfg, std::uint64_t seed = 1);

/// Across-capacity marginal: capacity-weighted mixture of the per-capacity
/// truncated normals, reported as parameter means plus marginal density
/// curves (Monte Carlo, fixed seed).
struct PooledSummary {
    std::array<double, 8> mean{};
    std::array<double, 8> sd{};
    std::vector<std::vector<std::pair<double, double>>> curves;  // per parameter
};

PooledSummary pool_capacities(const std::vector<std::pair<MixingDensity, double>>& parts,
                              int draws_per_part = 200'000, std::uint64_t seed = 7);

/// Draws from one box-truncated mixing density (rejection sampling with a
/// Gibbs fallback when the box carries little mass).
std::vector<std::array<double, 8>> sample_mixing(const MixingDensity& h, int n,
                                                 std::uint64_t seed);

/// Bootstrap standard errors: resample tickets with replacement within the
/// capacity group, recompute the target moments, refit against the fixed
/// library.
struct BootstrapResult {
    std::array<double, 8> se_mu{};
    std::array<double, 8> se_sigma{};
    int refits = 0;
};

BootstrapResult bootstrap(const std::vector<TicketRecord>& tickets,
                          const MomentLibrary& lib, int B, const EstimationConfig& cfg,
                          std::uint64_t seed);

}  // namespace twocabin
