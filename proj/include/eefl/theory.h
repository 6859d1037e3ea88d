// Copyright 2026 The eefl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EEFL_THEORY_H_
#define EEFL_THEORY_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "eefl/models.h"
#include "eefl/strategies.h"

namespace eefl {

/// Values indexed [client][exit-1] over exits 1..E_c.
using PairTable = std::vector<std::vector<double>>;

/// Half the L1 distance. Throws kNotNormalized unless both are probability
/// vectors of equal length.
double tv_distance(const ExitWeights &a, const ExitWeights &b);

/// Statistical heterogeneity: max over pairs in the pools of
/// F_{c,e}(w*) - F*_{c,e}, with w* the weighted empirical minimizer.
double heterogeneity(const QuadraticTask &task, const ExitWeights &lambda, const ExitPools &pools);

/// alpha_{c,e} = eta_s Lambda~_e |S_c| / |S_{e,p}| for pairs in the pools,
/// zero elsewhere.
PairTable alpha_table(const ExitWeights &lambda, const ExitPools &pools,
                      std::span<const std::size_t> client_sizes, std::span<const int> client_exits,
                      double server_lr);

/// Noise scale of every quadratic pair.
PairTable quadratic_sigmas(const QuadraticTask &task);

struct SecondMoments {
    PairTable per_pair;
    double max = 0.0;
};

/// G_{c,e} = sigma_{c,e}^2 + (2 L R)^2.
SecondMoments grad_second_moment(const PairTable &sigma, double smoothness, double radius);

struct BoundInputs {
    PairTable alpha;
    PairTable sigma;
    SecondMoments moments;
    double smoothness = 0.0;
    double heterogeneity = 0.0;
};

/// sum alpha^2 sigma^2 + 6 L Gamma + 8 (J-1)^2 G^2
///   + 4 J^2 sum alpha^2 (1-p)/p G_{c,e}.
/// Throws kZeroProbabilityWithWeight when a weighted pair has p = 0.
double bound_B(const BoundInputs &in, const SamplingMatrix &p, int local_steps);

/// 4 eta^2 J^2 sum alpha^2 (1-p)/p G_{c,e}: the participation-variance term.
double participation_variance_bound(const PairTable &alpha, const SamplingMatrix &p,
                                    const PairTable &moments, double eta, int local_steps);

enum class BoundDenominator {
    /// gamma + J T.
    kLocalSteps,
    /// gamma + T.
    kRounds,
};

/// kappa / (gamma + J T) (2B/mu + mu (gamma+1)/2 * dist0), with dist0 the
/// expected squared initial distance to w*.
double opt_error_bound(double mu, double smoothness, double B, int rounds, int local_steps,
                       double initial_dist_sq,
                       BoundDenominator denominator = BoundDenominator::kLocalSteps);

/// 2 M tv(trained, served).
double bias_bound(double loss_cap, const ExitWeights &trained, const ExitWeights &served);

/// Max over probes w uniform in the radius ball of the clipped population-loss
/// gap between the two weightings.
double empirical_bias(const QuadraticTask &task, const ExitWeights &trained,
                      const ExitWeights &served, double radius, double loss_cap,
                      std::size_t num_probes, std::uint64_t seed);

/// sum_e Lambda~_e sqrt(flops_e / |S_{e,p}|). Throws kEmptyPool.
double gen_proxy(const ExitWeights &lambda, std::span<const double> flops,
                 std::span<const std::size_t> pool_sizes);

/// Mean of F(w_T) - F* over per-seed final objective values.
double empirical_opt_error(std::span<const double> final_objectives, double f_star);

struct ErrorReport {
    double tv = 0.0;
    double gamma_schedule = 0.0;
    double heterogeneity = 0.0;
    PairTable G_per_pair;
    double G_max = 0.0;
    double B = 0.0;
    /// True when sigma was estimated from sampled batch gradients.
    bool B_estimated = false;
    double opt_bound = 0.0;
    double empirical_opt_error = 0.0;
    double loss_cap = 0.0;
    double bias_bound = 0.0;
    double empirical_bias = 0.0;
    double gen_proxy = 0.0;
};

/// Estimated per-pair sigma for a generic task: max over `num_points` random
/// models and `num_batches` batches of ||g_batch - g_full||.
PairTable estimate_sigmas(const Task &task, std::span<const Params> points, std::size_t batch_size,
                          std::size_t num_batches, std::uint64_t seed);

}  // namespace eefl

#endif  // EEFL_THEORY_H_
