#include <algorithm>
#include <numeric>

#include "doctest.h"

#include "cloudvote/error.hpp"
#include "cloudvote/text.hpp"
#include "cloudvote/voting.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace cloudvote;
using namespace cloudvote::voting;

namespace {

// Row for class `c` of `x` carrying `score`, with the remainder spread evenly.
std::vector<double> peaked(int x, int c, double score) {
    std::vector<double> row(static_cast<std::size_t>(x), (1.0 - score) / (x - 1));
    row[static_cast<std::size_t>(c - 1)] = score;
    return row;
}

prediction::EnsembleRun one_image_run(int x, const std::vector<std::pair<int, double>>& votes) {
    std::vector<prediction::PredictionMatrix> ms;
    for (std::size_t b = 0; b < votes.size(); ++b) {
        prediction::PredictionMatrix m;
        m.backend_id = "b" + std::to_string(b);
        m.classes = x;
        m.image_ids = {"img"};
        m.posteriors = peaked(x, votes[b].first, votes[b].second);
        ms.push_back(std::move(m));
    }
    return prediction::EnsembleRun::assemble(std::move(ms));
}

std::vector<std::vector<double>> column(const prediction::EnsembleRun& run, std::size_t image) {
    std::vector<std::vector<double>> rows;
    for (const auto& b : run.backends()) {
        const auto r = b.row(image);
        rows.emplace_back(r.begin(), r.end());
    }
    return rows;
}

double grouped(double l, double h, double f0, double f1, double f2) {
    return grouped_mode(GroupedModeInput{l, h, f1, f0, f2});
}

Errc code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return Errc::usage;
}

}  // namespace

TEST_CASE("discrete mode examples") {
    const std::vector<int> plural{3, 1, 3, 2};
    const std::vector<double> s4(4, 0.9);
    auto r = discrete_mode(plural, s4, 3);
    CHECK(r.modal_set == std::vector<int>{3});
    CHECK(r.modal_count == 2);
    CHECK(r.vote_counts == std::vector<int>{1, 1, 2});
    CHECK_FALSE(r.tie_broken);

    const std::vector<int> unanimous{2, 2, 2};
    r = discrete_mode(unanimous, std::vector<double>{0.5, 0.6, 0.7}, 2);
    CHECK(r.modal_set == std::vector<int>{2});
    CHECK(r.voters == std::vector<std::size_t>{0, 1, 2});

    const std::vector<int> tied{1, 2, 1, 2};
    r = discrete_mode(tied, s4, 2);
    CHECK(r.modal_set == std::vector<int>{1, 2});
    CHECK(r.tie_broken);
    CHECK(r.dm == 1);

    CHECK(code_of([] { discrete_mode(std::vector<int>{}, std::vector<double>{}, 3); }) == Errc::invalid_argument);
    CHECK(code_of([] { discrete_mode(std::vector<int>{1, 2}, std::vector<double>{0.5}, 3); }) == Errc::invalid_argument);
}

TEST_CASE("aggregate examples") {
    auto out = aggregate(one_image_run(5, {{2, 0.9}, {2, 0.8}, {5, 0.95}}));
    REQUIRE(out.size() == 1);
    CHECK(out[0].dm == 2);
    CHECK(out[0].ds == doctest::Approx(0.85).epsilon(1e-12));
    CHECK_FALSE(out[0].tie_broken);

    for (const auto& order : {std::vector<std::pair<int, double>>{{1, 0.7}, {2, 0.9}}, {{2, 0.9}, {1, 0.7}}}) {
        out = aggregate(one_image_run(2, order));
        CHECK(out[0].dm == 2);
        CHECK(out[0].ds == 0.9);
        CHECK(out[0].tie_broken);
        CHECK(out[0].modal_set == std::vector<int>{1, 2});
    }

    out = aggregate(one_image_run(5, {{4, 0.6}}));
    CHECK(out[0].dm == 4);
    CHECK(out[0].ds == 0.6);
}

TEST_CASE("equal mean scores fall back to the lowest class") {
    const auto out = aggregate(one_image_run(4, {{3, 0.8}, {2, 0.8}}));
    CHECK(out[0].dm == 2);
    CHECK(out[0].tie_broken);
}

TEST_CASE("aggregate agrees with the brute-force oracle") {
    Rng rng(101);
    for (int trial = 0; trial < 600; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(9));
        const int x = 2 + static_cast<int>(rng.below(10));
        const int k = 1 + static_cast<int>(rng.below(20));
        const auto run = prediction::EnsembleRun::assemble(testsupport::random_backends(rng, n, x, k, trial % 3 != 0));
        const auto out = aggregate(run);
        REQUIRE(out.size() == static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) {
            const auto want = oracle::vote(column(run, static_cast<std::size_t>(i)), x);
            const auto& got = out[static_cast<std::size_t>(i)];
            CHECK(got.dm == want.dm);
            CHECK(std::abs(got.ds - want.ds) <= 1e-12);
            CHECK(got.tie_broken == want.tie);
            CHECK(std::accumulate(got.vote_counts.begin(), got.vote_counts.end(), 0) == n);
            CHECK(std::find(got.modal_set.begin(), got.modal_set.end(), got.dm) != got.modal_set.end());
            CHECK(got.ds >= 1.0 / x - 1e-12);
            CHECK(got.ds <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("backend order never changes the outcome") {
    Rng rng(202);
    for (int trial = 0; trial < 150; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(4));
        const int x = 2 + static_cast<int>(rng.below(4));
        const int k = 1 + static_cast<int>(rng.below(8));
        auto backends = testsupport::random_backends(rng, n, x, k, true);
        const auto base = aggregate(prediction::EnsembleRun::assemble(backends));
        std::vector<std::size_t> perm(backends.size());
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        while (std::next_permutation(perm.begin(), perm.end())) {
            std::vector<prediction::PredictionMatrix> shuffled;
            for (auto p : perm) shuffled.push_back(backends[p]);
            const auto got = aggregate(prediction::EnsembleRun::assemble(std::move(shuffled)));
            for (int i = 0; i < k; ++i) {
                CHECK(got[static_cast<std::size_t>(i)].dm == base[static_cast<std::size_t>(i)].dm);
                CHECK(got[static_cast<std::size_t>(i)].ds == base[static_cast<std::size_t>(i)].ds);
            }
        }
    }
}

TEST_CASE("a strict majority always wins") {
    Rng rng(303);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(9));
        const int x = 2 + static_cast<int>(rng.below(8));
        const int winner = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(x)));
        const int majority = n / 2 + 1;
        std::vector<int> votes;
        std::vector<double> scores;
        for (int b = 0; b < n; ++b) {
            votes.push_back(b < majority ? winner : 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(x))));
            scores.push_back(b < majority ? 1.0 / x + 1e-3 : 1.0);
        }
        CHECK(discrete_mode(votes, scores, x).dm == winner);
    }
}

TEST_CASE("mean_score ignores input order") {
    const std::vector<double> a{0.1, 0.7, 0.2, 1e-17, 0.3};
    auto b = a;
    std::reverse(b.begin(), b.end());
    CHECK(mean_score(a) == mean_score(b));
}

TEST_CASE("grouped mode examples") {
    CHECK(std::abs(grouped(10, 5, 2, 8, 4) - 13.0) <= 1e-12);
    CHECK(std::abs(grouped(3, 2, 4, 9, 4) - 4.0) <= 1e-12);
    CHECK(grouped(7.5, 3, 6, 6, 1) == 7.5);
    CHECK(code_of([] { grouped(0, 1, 5, 5, 5); }) == Errc::degenerate_mode);
    CHECK(code_of([] { grouped(0, 1, 0, 0, 0); }) == Errc::degenerate_mode);
    CHECK(code_of([] { grouped(0, 0, 1, 5, 2); }) == Errc::invalid_argument);
    CHECK(code_of([] { grouped(0, 1, 6, 5, 2); }) == Errc::invalid_argument);
}

TEST_CASE("grouped mode stays inside its interval") {
    Rng rng(404);
    for (int trial = 0; trial < 2000; ++trial) {
        const double l = 100.0 * (rng.uniform() - 0.5);
        const double h = 0.01 + 10.0 * rng.uniform();
        const double f1 = 1.0 + 50.0 * rng.uniform();
        const double f0 = f1 * rng.uniform();
        const double f2 = f1 * rng.uniform();
        const double m = grouped(l, h, f0, f1, f2);
        CHECK(m >= l);
        CHECK(m <= l + h);
        const double symmetric = grouped(l, h, f0, f1, f0);
        CHECK(std::abs(symmetric - (l + h / 2)) <= 1e-12 * std::max(1.0, std::abs(l) + h));
    }
}

TEST_CASE("vote report round trip") {
    Rng rng(505);
    const auto run = prediction::EnsembleRun::assemble(testsupport::random_backends(rng, 3, 4, 12, false));
    VoteReport report{aggregate(run), {{"seed", "5"}, {"tool_version", std::string(kToolVersion)}}};
    const auto first = serialize_votes(report);
    std::vector<std::string> lines;
    for (auto sv : text::split(first, '\n'))
        if (!sv.empty()) lines.emplace_back(sv);
    const auto back = parse_votes(lines);
    REQUIRE(back.outcomes.size() == 12);
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(back.outcomes[i].dm == report.outcomes[i].dm);
        CHECK(back.outcomes[i].ds == report.outcomes[i].ds);
        CHECK(back.outcomes[i].vote_counts == report.outcomes[i].vote_counts);
    }
    CHECK(serialize_votes(back) == first);
}
