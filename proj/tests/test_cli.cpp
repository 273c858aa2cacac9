#include <sstream>

#include "doctest.h"

#include "cloudvote/cli.hpp"
#include "cloudvote/error.hpp"
#include "cloudvote/prediction.hpp"
#include "cloudvote/text.hpp"
#include "cloudvote/voting.hpp"
#include "support.hpp"

using namespace cloudvote;

namespace {

struct Outcome {
    int status = 0;
    std::string out;
    std::string err;
};

Outcome invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "cloudvote");
    std::ostringstream out, err;
    const int status = cli::run(args, out, err);
    return {status, out.str(), err.str()};
}

std::string p(const std::filesystem::path& path) { return path.string(); }

}  // namespace

TEST_CASE("groupedmode prints the interpolated mode") {
    auto r = invoke({"groupedmode", "10", "5", "2", "8", "4"});
    CHECK(r.status == 0);
    CHECK(r.out == "13.0\n");
    r = invoke({"groupedmode", "0", "1", "3", "3", "3"});
    CHECK(r.status == 4);
    CHECK(r.err.rfind("error[degenerate_mode]:", 0) == 0);
    r = invoke({"groupedmode", "1", "2"});
    CHECK(r.status == 2);
    CHECK(r.err.rfind("error[usage]:", 0) == 0);
}

TEST_CASE("usage and io errors map to their exit codes") {
    CHECK(invoke({}).status == 2);
    CHECK(invoke({"frobnicate"}).status == 2);
    CHECK(invoke({"split", "x.tsv"}).status == 2);
    const auto r = invoke({"vote", "/nonexistent/a.tsv", "--out", "/tmp/never.tsv"});
    CHECK(r.status == 3);
    CHECK(r.err.rfind("error[io]:", 0) == 0);
    CHECK(invoke({"--version"}).out == std::string(kToolVersion) + "\n");
}

TEST_CASE("vote on a single file copies the backend argmax") {
    testsupport::TempDir dir("vote1");
    text::write_file(dir / "one.tsv", "#backend_id=solo\n#classes=3\n#seed=9\na\t0.2\t0.5\t0.3\nb\t0.6\t0.2\t0.2\nc\t0.3\t0.3\t0.4\n");
    const auto r = invoke({"vote", p(dir / "one.tsv"), "--out", p(dir / "votes.tsv")});
    REQUIRE(r.status == 0);
    const auto votes = voting::load_votes(dir / "votes.tsv");
    REQUIRE(votes.outcomes.size() == 3);
    CHECK(votes.outcomes[0].dm == 2);
    CHECK(votes.outcomes[1].dm == 1);
    CHECK(votes.outcomes[2].dm == 3);
    CHECK(votes.outcomes[2].ds == 0.4);
    const auto body = text::read_file(dir / "votes.tsv");
    CHECK(body.find("#seed=9") != std::string::npos);
    CHECK(body.find("#tool_version=") != std::string::npos);
}

TEST_CASE("vote rejects a corrupted row sum with exit 4") {
    testsupport::TempDir dir("vote_bad");
    text::write_file(dir / "bad.tsv", "#backend_id=solo\n#classes=2\na\t0.5\t0.3\n");
    const auto r = invoke({"vote", p(dir / "bad.tsv"), "--out", p(dir / "v.tsv")});
    CHECK(r.status == 4);
    CHECK(r.err.rfind("error[row_sum]:", 0) == 0);
}

TEST_CASE("vote rejects files over different images") {
    testsupport::TempDir dir("vote_ids");
    text::write_file(dir / "a.tsv", "#backend_id=a\n#classes=2\nx\t0.5\t0.5\n");
    text::write_file(dir / "b.tsv", "#backend_id=b\n#classes=2\ny\t0.5\t0.5\n");
    const auto r = invoke({"vote", p(dir / "a.tsv"), p(dir / "b.tsv"), "--out", p(dir / "v.tsv")});
    CHECK(r.status == 4);
    CHECK(r.err.rfind("error[id_mismatch]:", 0) == 0);
}

TEST_CASE("step-by-step pipeline through every subcommand") {
    testsupport::TempDir dir("pipeline");
    REQUIRE(invoke({"synth", "--out", p(dir / "imgs"), "--classes", "3", "--per-class", "20", "--side", "16"}).status == 0);
    REQUIRE(invoke({"ingest", p(dir / "imgs"), "--name", "tiny", "--out", p(dir / "m.tsv"), "--seed", "4"}).status == 0);
    CHECK(text::read_file(dir / "m.tsv").find("#source_root=imgs") != std::string::npos);

    auto r = invoke({"split", p(dir / "m.tsv"), "--plan", "perclass:10:10:2", "--seed", "4", "--out", p(dir / "s.tsv")});
    REQUIRE(r.status == 0);
    CHECK(text::read_file(dir / "s.tsv").find("#seed=4") != std::string::npos);

    for (const auto& [id, pool, fseed] : {std::tuple{"a", "2", "1"}, std::tuple{"b", "1", "2"}, std::tuple{"c", "3", "3"}}) {
        const std::string model = p(dir / (std::string(id) + ".model"));
        r = invoke({"train", p(dir / "m.tsv"), "--split", p(dir / "s.tsv"), "--run", "1", "--id", id, "--side", "16",
                    "--pool", pool, "--bins", "4", "--feature-seed", fseed, "--seed", "4", "--out", model});
        REQUIRE(r.status == 0);
        r = invoke({"predict", model, p(dir / "m.tsv"), "--split", p(dir / "s.tsv"), "--run", "1", "--subset", "test",
                    "--out", p(dir / (std::string(id) + ".tsv"))});
        REQUIRE(r.status == 0);
        CHECK(prediction::load_predictions(dir / (std::string(id) + ".tsv")).rows() == 30);
    }
    r = invoke({"vote", p(dir / "a.tsv"), p(dir / "b.tsv"), p(dir / "c.tsv"), "--out", p(dir / "v.tsv")});
    REQUIRE(r.status == 0);
    r = invoke({"eval", "--votes", p(dir / "v.tsv"), "--manifest", p(dir / "m.tsv"), "--out", p(dir / "eval")});
    REQUIRE(r.status == 0);
    CHECK(r.out.rfind("accuracy 1", 0) == 0);
    const auto kv = text::read_file(dir / "eval" / "report.kv");
    CHECK(kv.find("tool_version=") != std::string::npos);
    CHECK(kv.find("seed=4") != std::string::npos);
}

TEST_CASE("eval with a run config writes votes and reports") {
    testsupport::TempDir dir("evalcfg");
    REQUIRE(invoke({"synth", "--out", p(dir / "imgs"), "--classes", "2", "--per-class", "12", "--side", "12"}).status == 0);
    REQUIRE(invoke({"ingest", p(dir / "imgs"), "--out", p(dir / "m.tsv")}).status == 0);
    text::write_file(dir / "run.cfg",
                     "# two builtin backends\nmanifest=m.tsv\nplan=kfold:3\nseed=6\nout=result\n\n"
                     "backend.id=p2\nbackend.side=12\nbackend.pool=2\nbackend.bins=4\n"
                     "backend.id=p1\nbackend.side=8\nbackend.pool=1\nbackend.bins=8\n");
    const auto r = invoke({"eval", "--config", p(dir / "run.cfg")});
    REQUIRE(r.status == 0);
    CHECK(std::filesystem::exists(dir / "result" / "report.txt"));
    CHECK(std::filesystem::exists(dir / "result" / "report.kv"));
    for (const char* run : {"run_000.tsv", "run_001.tsv", "run_002.tsv"})
        CHECK(std::filesystem::exists(dir / "result" / "votes" / run));

    const auto infeasible = invoke({"eval", "--config", p(dir / "run.cfg"), "--plan", "perclass:10:5:1"});
    CHECK(infeasible.status == 5);
    CHECK(infeasible.err.rfind("error[infeasible]:", 0) == 0);
}

TEST_CASE("run config parsing") {
    const std::vector<std::string> lines{"manifest=data/m.tsv", "plan=perclass:1:1:2", "seed=3",  "jobs=2",
                                         "format=kv",           "backend.id=net",      "backend.kind=external",
                                         "backend.path=net.tsv", "backend.id=own",     "backend.pool=2"};
    const auto cfg = cli::parse_run_config(lines, "/base");
    CHECK(cfg.manifest == std::filesystem::path("/base/data/m.tsv"));
    CHECK(cfg.seed == 3);
    CHECK(cfg.jobs == 2);
    CHECK(cfg.format == cli::ReportFormat::kv);
    REQUIRE(cfg.backends.size() == 2);
    const auto& ext = std::get<evaluation::ExternalBackendConfig>(cfg.backends[0]);
    CHECK(ext.path == std::filesystem::path("/base/net.tsv"));
    const auto& own = std::get<evaluation::BuiltinBackendConfig>(cfg.backends[1]);
    CHECK(own.features.pool_side == 2);
    CHECK(own.train.seed == 3);

    auto code = [](const std::vector<std::string>& bad) {
        try {
            cli::parse_run_config(bad, "/");
        } catch (const Error& e) {
            return e.code();
        }
        return Errc::io;
    };
    CHECK(code({"backend.pool=2"}) == Errc::schema);
    CHECK(code({"manifest=m", "nonsense=1", "backend.id=a"}) == Errc::schema);
    CHECK(code({"manifest=m"}) == Errc::schema);
}
