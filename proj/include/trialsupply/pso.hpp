#pragma once

#include "trialsupply/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace trialsupply {

template <typename Scalar>
using PsoVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct PsoParams {
    int population = 20;
    int max_iterations = 100;
    Scalar inertia = Scalar(0.9);
    Scalar cognitive = Scalar(1.6);
    Scalar social = Scalar(1.8);
    PsoVector<Scalar> lower;
    PsoVector<Scalar> upper;
    Scalar velocity_clamp = Scalar(0.2);  // fraction of each dimension's range
    int init_retry_limit = 100;            // draws per particle before giving up
    bool per_coordinate = false;           // one uniform per coordinate instead of per term

    int dimension() const { return static_cast<int>(lower.size()); }
    std::vector<std::string> problems() const;
};

/// What the optimizer sees from one evaluation. `admissible` gates
/// initialization; during iteration only `value` matters and +inf never wins.
template <typename Scalar>
struct Score {
    Scalar value = std::numeric_limits<Scalar>::infinity();
    bool admissible = false;
};

template <typename Scalar>
using PsoObjective = std::function<Score<Scalar>(const PsoVector<Scalar>&)>;

template <typename Scalar>
struct Particle {
    PsoVector<Scalar> position;
    PsoVector<Scalar> velocity;
    PsoVector<Scalar> best_position;
    Scalar best_value = std::numeric_limits<Scalar>::infinity();
    Scalar value = std::numeric_limits<Scalar>::infinity();  // at the current position
};

template <typename Scalar>
struct Swarm {
    std::vector<Particle<Scalar>> particles;
    PsoVector<Scalar> best_position;
    Scalar best_value = std::numeric_limits<Scalar>::infinity();
    int evaluations = 0;
    int rejected = 0;
};

template <typename Scalar>
struct PsoResult {
    PsoVector<Scalar> best_position;
    Scalar best_value = std::numeric_limits<Scalar>::infinity();
    std::vector<Scalar> trace;  // best value after initialization, then after each iteration
    int evaluations = 0;
    int rejected = 0;
};

class InitializationFailure : public std::runtime_error {
  public:
    InitializationFailure(int accepted, int rejected)
        : std::runtime_error("swarm initialization found " + std::to_string(accepted) +
                             " admissible particles after " + std::to_string(rejected) +
                             " rejected draws; widen the search bounds"),
          accepted_(accepted),
          rejected_(rejected) {}
    int accepted() const noexcept { return accepted_; }
    int rejected() const noexcept { return rejected_; }

  private:
    int accepted_;
    int rejected_;
};

template <typename Scalar>
std::vector<std::string> PsoParams<Scalar>::problems() const {
    std::vector<std::string> out;
    if (population < 2) out.push_back("population must be >= 2");
    if (max_iterations < 0) out.push_back("max_iterations must be >= 0");
    if (!(inertia > Scalar(0) && inertia <= Scalar(1))) out.push_back("inertia must lie in (0, 1]");
    if (!(cognitive > Scalar(0))) out.push_back("cognitive must be > 0");
    if (!(social > Scalar(0))) out.push_back("social must be > 0");
    if (lower.size() == 0 || lower.size() != upper.size()) out.push_back("bounds must be non-empty and equal length");
    else if (!(lower.array() < upper.array()).all()) out.push_back("lower bounds must be below upper bounds");
    if (!(velocity_clamp > Scalar(0))) out.push_back("velocity_clamp must be > 0");
    if (init_retry_limit < 1) out.push_back("init_retry_limit must be >= 1");
    return out;
}

namespace detail {

template <typename Scalar>
Scalar draw(Engine& eng) {
    return static_cast<Scalar>(uniform01(eng));
}

template <typename Scalar>
void absorb(Swarm<Scalar>& swarm) {
    // Lowest index wins ties.
    for (const auto& p : swarm.particles) {
        if (p.best_value < swarm.best_value) {
            swarm.best_value = p.best_value;
            swarm.best_position = p.best_position;
        }
    }
}

}  // namespace detail

/// Draws uniform positions until `population` admissible particles are found
/// or population * init_retry_limit draws were rejected.
template <typename Scalar>
Swarm<Scalar> initialize_swarm(const PsoParams<Scalar>& params, const PsoObjective<Scalar>& objective, Engine& eng) {
    const int D = params.dimension();
    const PsoVector<Scalar> range = params.upper - params.lower;
    const PsoVector<Scalar> vmax = params.velocity_clamp * range;
    const long budget = static_cast<long>(params.population) * params.init_retry_limit;

    Swarm<Scalar> swarm;
    swarm.best_position = PsoVector<Scalar>::Zero(D);
    while (static_cast<int>(swarm.particles.size()) < params.population) {
        if (swarm.rejected >= budget)
            throw InitializationFailure(static_cast<int>(swarm.particles.size()), swarm.rejected);
        Particle<Scalar> p;
        p.position.resize(D);
        for (int d = 0; d < D; ++d) p.position[d] = params.lower[d] + range[d] * detail::draw<Scalar>(eng);
        p.velocity.resize(D);
        for (int d = 0; d < D; ++d) p.velocity[d] = vmax[d] * (Scalar(2) * detail::draw<Scalar>(eng) - Scalar(1));
        const Score<Scalar> score = objective(p.position);
        ++swarm.evaluations;
        if (!score.admissible || !std::isfinite(static_cast<double>(score.value))) {
            ++swarm.rejected;
            continue;
        }
        p.value = score.value;
        p.best_position = p.position;
        p.best_value = score.value;
        swarm.particles.push_back(std::move(p));
    }
    detail::absorb(swarm);
    return swarm;
}

/// One synchronous iteration: all velocities and positions move against the
/// global best of the previous iteration, then bests are updated.
template <typename Scalar>
void step(Swarm<Scalar>& swarm, const PsoParams<Scalar>& params, const PsoObjective<Scalar>& objective, Engine& eng) {
    const int D = params.dimension();
    const PsoVector<Scalar> vmax = params.velocity_clamp * (params.upper - params.lower);
    const PsoVector<Scalar> g = swarm.best_position;

    for (auto& p : swarm.particles) {
        if (params.per_coordinate) {
            for (int d = 0; d < D; ++d) {
                const Scalar r1 = detail::draw<Scalar>(eng);
                const Scalar r2 = detail::draw<Scalar>(eng);
                p.velocity[d] = params.inertia * p.velocity[d] +
                                params.cognitive * r1 * (p.best_position[d] - p.position[d]) +
                                params.social * r2 * (g[d] - p.position[d]);
            }
        } else {
            const Scalar r1 = detail::draw<Scalar>(eng);
            const Scalar r2 = detail::draw<Scalar>(eng);
            p.velocity = params.inertia * p.velocity + params.cognitive * r1 * (p.best_position - p.position) +
                         params.social * r2 * (g - p.position);
        }
        p.velocity = p.velocity.cwiseMax(-vmax).cwiseMin(vmax);
        p.position += p.velocity;
        for (int d = 0; d < D; ++d) {
            if (p.position[d] < params.lower[d]) {
                p.position[d] = params.lower[d];
                p.velocity[d] = Scalar(0);
            } else if (p.position[d] > params.upper[d]) {
                p.position[d] = params.upper[d];
                p.velocity[d] = Scalar(0);
            }
        }
    }
    for (auto& p : swarm.particles) {
        const Score<Scalar> score = objective(p.position);
        ++swarm.evaluations;
        p.value = std::isfinite(static_cast<double>(score.value)) ? score.value
                                                                   : std::numeric_limits<Scalar>::infinity();
        if (p.value < p.best_value) {
            p.best_value = p.value;
            p.best_position = p.position;
        }
    }
    detail::absorb(swarm);
}

template <typename Scalar>
PsoResult<Scalar> optimize(const PsoParams<Scalar>& params, const PsoObjective<Scalar>& objective, Seed seed) {
    if (const auto problems = params.problems(); !problems.empty()) throw std::invalid_argument(problems.front());
    Engine eng = make_engine(seed);
    Swarm<Scalar> swarm = initialize_swarm(params, objective, eng);

    PsoResult<Scalar> result;
    result.trace.reserve(static_cast<std::size_t>(params.max_iterations) + 1);
    result.trace.push_back(swarm.best_value);
    for (int it = 0; it < params.max_iterations; ++it) {
        step(swarm, params, objective, eng);
        result.trace.push_back(swarm.best_value);
    }
    result.best_position = swarm.best_position;
    result.best_value = swarm.best_value;
    result.evaluations = swarm.evaluations;
    result.rejected = swarm.rejected;
    return result;
}

}  // namespace trialsupply
