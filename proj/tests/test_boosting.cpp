#include <catch2/catch_amalgamated.hpp>

#include "stratboost/boosting.hpp"
#include "stratboost/simulate.hpp"

#include <cmath>

#include "oracles.hpp"

using namespace stratboost;

namespace {

SurvivalDataset three_subject_instance() {
    RawColumns raw;
    raw.time = {3.0, 2.0, 1.0};
    raw.status = {1, 1, 0};
    raw.covariates.resize(3, 1);
    raw.covariates << 1.0, 0.0, 2.0;
    return validate_dataset(std::move(raw));
}

SimulatedDataset small_simulation(std::uint64_t seed = 3) {
    SimulationConfig config;
    Eigen::VectorXd beta(10);
    beta << 0.5, 0.5, 0, 0, 0, -0.5, 0.5, 0.5, 0, 0;
    config.true_beta = beta;
    config.num_strata = 5;
    config.mean_stratum_size = 60;
    config.covariance = ArBlockCovariance{5, 0.6};
    config.censoring = UniformCensoring{2.0};
    return simulate_survival_cox(config, seed);
}

}  // namespace

TEST_CASE("boost_step applies the damped Newton update") {
    const SurvivalDataset d = three_subject_instance();
    const StratumIndex index = build_stratum_index(d);
    auto st = detail::initial_state(d, index);
    const StepRecord rec = boost_step(d, index, st, 0.1);
    REQUIRE(rec.selected == 0);
    REQUIRE(rec.l1 == Catch::Approx(-0.5).epsilon(1e-12));
    REQUIRE(rec.l2 == Catch::Approx(0.25).epsilon(1e-12));
    REQUIRE(rec.delta == Catch::Approx(-0.2).epsilon(1e-12));
    REQUIRE(st.beta[0] == Catch::Approx(-0.2).epsilon(1e-12));
    REQUIRE(rec.support_size == 1);
}

TEST_CASE("ties in |L1| break toward the smaller index") {
    RawColumns raw;
    raw.time = {3.0, 2.0, 1.0};
    raw.status = {1, 1, 0};
    raw.covariates.resize(3, 2);
    raw.covariates << 1.0, 1.0, 0.0, 0.0, 2.0, 2.0;  // two identical columns
    const SurvivalDataset d = validate_dataset(std::move(raw));
    const StratumIndex index = build_stratum_index(d);
    auto st = detail::initial_state(d, index);
    const StepRecord rec = boost_step(d, index, st, 0.1);
    REQUIRE(rec.selected == 0);
}

TEST_CASE("constant columns give a degenerate-curvature error") {
    RawColumns raw;
    raw.time = {1.0, 2.0, 3.0};
    raw.status = {1, 1, 1};
    raw.covariates = Eigen::MatrixXd::Constant(3, 2, 1.5);
    raw.variable_names = {"a", "b"};
    const SurvivalDataset d = validate_dataset(std::move(raw));
    const StratumIndex index = build_stratum_index(d);
    auto st = detail::initial_state(d, index);
    REQUIRE_THROWS_WITH(boost_step(d, index, st, 0.1),
                        Catch::Matchers::ContainsSubstring("degenerate curvature"));
}

TEST_CASE("fixed rule runs exactly the requested iterations") {
    const auto sim = small_simulation();
    BoostingConfig config;
    config.rate = 0.1;
    const BoostingFit fit = run_boosting(sim.dataset, config, FixedRule{75});
    REQUIRE(fit.iterations_run == 75);
    REQUIRE(fit.trace.steps.size() == 75);
    REQUIRE(static_cast<int>(fit.selected.size()) == fit.trace.steps.back().support_size);
}

TEST_CASE("num-selected rule stops with exactly the target support") {
    const auto sim = small_simulation();
    BoostingConfig config;
    config.rate = 0.1;
    const BoostingFit fit = run_boosting(sim.dataset, config, NumSelectedRule{5});
    REQUIRE(fit.selected.size() == 5);
    REQUIRE_FALSE(fit.capped);
}

TEST_CASE("rate scaling leaves the first selection unchanged and doubles the step") {
    const auto sim = small_simulation();
    BoostingConfig slow;
    slow.rate = 0.05;
    BoostingConfig fast;
    fast.rate = 0.1;
    const BoostingFit a = run_boosting(sim.dataset, slow, FixedRule{1});
    const BoostingFit b = run_boosting(sim.dataset, fast, FixedRule{1});
    REQUIRE(a.trace.steps[0].selected == b.trace.steps[0].selected);
    REQUIRE(b.trace.steps[0].delta == Catch::Approx(2.0 * a.trace.steps[0].delta).epsilon(1e-12));
}

TEST_CASE("boosting ascends the likelihood at small rates") {
    const auto sim = small_simulation();
    BoostingConfig config;
    config.rate = 0.1;
    const BoostingFit fit = run_boosting(sim.dataset, config, FixedRule{100});
    double previous = fit.trace.initial_loglik;
    for (const auto& rec : fit.trace.steps) {
        REQUIRE(rec.loglik >= previous - 1e-12);
        REQUIRE_FALSE(rec.ascent_violated);
        previous = rec.loglik;
    }
}

TEST_CASE("support never grows by more than one per iteration") {
    const auto sim = small_simulation(17);
    BoostingConfig config;
    config.rate = 0.1;
    const BoostingFit fit = run_boosting(sim.dataset, config, FixedRule{60});
    int previous = 0;
    for (const auto& rec : fit.trace.steps) {
        REQUIRE(rec.support_size >= previous);  // non-decreasing on this fixture
        REQUIRE(rec.support_size <= previous + 1);
        previous = rec.support_size;
    }
}

TEST_CASE("serial reruns are bit-identical") {
    const auto sim = small_simulation(29);
    BoostingConfig config;
    config.rate = 0.1;
    const BoostingFit a = run_boosting(sim.dataset, config, FixedRule{50});
    const BoostingFit b = run_boosting(sim.dataset, config, FixedRule{50});
    REQUIRE(a.beta == b.beta);
    for (std::size_t k = 0; k < a.trace.steps.size(); ++k) {
        REQUIRE(a.trace.steps[k].selected == b.trace.steps[k].selected);
        REQUIRE(a.trace.steps[k].delta == b.trace.steps[k].delta);
        REQUIRE(a.trace.steps[k].loglik == b.trace.steps[k].loglik);
    }
}

TEST_CASE("selection frequency counts sum to the iteration count") {
    const auto sim = small_simulation(31);
    BoostingConfig config;
    config.rate = 0.1;
    const BoostingFit fit = run_boosting(sim.dataset, config, FixedRule{40});
    const auto counts = selection_frequency(fit.trace, sim.dataset.p());
    long total = 0;
    for (const auto& c : counts) total += c.count;
    REQUIRE(total == fit.iterations_run);

    SECTION("single iteration selects exactly one variable") {
        const BoostingFit one = run_boosting(sim.dataset, config, FixedRule{1});
        const auto one_counts = selection_frequency(one.trace, sim.dataset.p());
        long nonzero = 0;
        for (const auto& c : one_counts) nonzero += c.count > 0;
        REQUIRE(nonzero == 1);
    }
    SECTION("single covariate gets every selection") {
        RawColumns raw;
        raw.time = {1.0, 2.0, 3.0, 4.0};
        raw.status = {1, 1, 1, 0};
        raw.covariates.resize(4, 1);
        raw.covariates << 0.3, -0.2, 0.8, 0.1;
        const SurvivalDataset d = validate_dataset(std::move(raw));
        const BoostingFit ten = run_boosting(d, config, FixedRule{10});
        const auto ten_counts = selection_frequency(ten.trace, 1);
        REQUIRE(ten_counts[0].count == 10);
        REQUIRE(ten_counts[0].first_iteration == 1);
    }
}

TEST_CASE("coefficient paths reconstruct any truncated rerun") {
    const auto sim = small_simulation(37);
    BoostingConfig config;
    config.rate = 0.1;
    const BoostingFit fit = run_boosting(sim.dataset, config, FixedRule{30});
    const auto paths = coefficient_path(fit.trace, sim.dataset.p());

    auto beta_at = [&](long m) {
        Eigen::VectorXd beta = Eigen::VectorXd::Zero(sim.dataset.p());
        for (Eigen::Index j = 0; j < sim.dataset.p(); ++j) {
            double value = 0.0;
            for (const auto& bp : paths[static_cast<std::size_t>(j)]) {
                if (bp.iteration > m) break;
                value = bp.value;
            }
            beta[j] = value;
        }
        return beta;
    };

    for (long m : {0L, 7L, 18L, 30L}) {
        const BoostingFit truncated = run_boosting(sim.dataset, config, FixedRule{static_cast<int>(m)});
        REQUIRE((beta_at(m) - truncated.beta).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
    SECTION("path endpoint equals the final beta") {
        REQUIRE((beta_at(30) - fit.beta).lpNorm<Eigen::Infinity>() == 0.0);
    }
    SECTION("never-selected variables have empty paths, i.e. constant zero") {
        for (Eigen::Index j = 0; j < sim.dataset.p(); ++j) {
            if (std::find(fit.selected.begin(), fit.selected.end(), j) != fit.selected.end()) continue;
            bool touched = false;
            for (const auto& rec : fit.trace.steps) touched = touched || rec.selected == j;
            if (!touched) REQUIRE(paths[static_cast<std::size_t>(j)].empty());
        }
    }
    SECTION("three-subject derived path") {
        const SurvivalDataset d = three_subject_instance();
        const BoostingFit one = run_boosting(d, config, FixedRule{1});
        const auto small_paths = coefficient_path(one.trace, 1);
        REQUIRE(small_paths[0].size() == 1);
        REQUIRE(small_paths[0][0].iteration == 1);
        REQUIRE(small_paths[0][0].value == Catch::Approx(-0.2).epsilon(1e-12));
    }
}

TEST_CASE("threaded boosting matches serial bitwise") {
    const auto sim = small_simulation(41);
    BoostingConfig serial;
    serial.rate = 0.1;
    BoostingConfig threaded = serial;
    threaded.threads = 4;
    const BoostingFit a = run_boosting(sim.dataset, serial, FixedRule{25});
    const BoostingFit b = run_boosting(sim.dataset, threaded, FixedRule{25});
    REQUIRE(a.beta == b.beta);
}
