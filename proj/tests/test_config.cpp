#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "steer/config.hpp"

using namespace steer;

namespace {

bool has_code(const ValidationResult& vr, const std::string& code) {
    for (const auto& v : vr.violations)
        if (v.code == code) return true;
    return false;
}

}  // namespace

TEST_CASE("defaults validate") {
    auto vr = validate_config("");
    REQUIRE(vr.ok());
    CHECK(vr.config->n_sims == 8);
    CHECK(vr.config->n_aggregators == 2);
    CHECK(vr.config->beads == 28);
    CHECK(vr.config->latent_dim == 10);
    CHECK(vr.config->kmeans_k == 50);
}

TEST_CASE("paper-scale shape: 120 sims over 10 aggregators") {
    auto vr = validate_config("n_sims = 120\nn_aggregators = 10\n");
    REQUIRE(vr.ok());
    CHECK(vr.config->n_sims / vr.config->n_aggregators == 12);
}

TEST_CASE("N must exceed M") {
    auto vr = validate_config("n_sims = 4\nn_aggregators = 4\n");
    CHECK(!vr.ok());
    CHECK(has_code(vr, "CONSTRAINT_VIOLATION"));
}

TEST_CASE("N must divide by M") {
    auto vr = validate_config("n_sims = 8\nn_aggregators = 3\n");
    CHECK(!vr.ok());
    CHECK(has_code(vr, "CONSTRAINT_VIOLATION"));
}

TEST_CASE("unknown keys are rejected by name") {
    auto vr = validate_config("frobnicate = 7\n");
    CHECK(!vr.ok());
    REQUIRE(has_code(vr, "UNKNOWN_KEY"));
    bool named = false;
    for (const auto& v : vr.violations) named = named || v.message.find("frobnicate") != std::string::npos;
    CHECK(named);
}

TEST_CASE("invalid document yields no partial config") {
    auto vr = validate_config("n_sims = 4\nn_aggregators = 4\nbeads = 16\n");
    CHECK(!vr.ok());
    CHECK(!vr.config.has_value());
}

TEST_CASE("violations accumulate") {
    auto vr = validate_config("n_sims = 4\nn_aggregators = 4\nnope = 1\n");
    CHECK(!vr.ok());
    CHECK(vr.violations.size() >= 2);
}

TEST_CASE("comments and blank lines are ignored") {
    auto vr = validate_config("# hello\n\n  n_sims = 16 # trailing\n");
    REQUIRE(vr.ok());
    CHECK(vr.config->n_sims == 16);
}

TEST_CASE("overrides apply after the document") {
    auto vr = validate_config("n_sims = 16\n", {"n_sims=32", "mode=F"});
    REQUIRE(vr.ok());
    CHECK(vr.config->n_sims == 32);
    CHECK(vr.config->mode == Mode::F);
}

TEST_CASE("stability bound on dt is enforced") {
    auto vr = validate_config("dt = 0.01\nbond_k = 100\ngamma = 1\n");
    CHECK(!vr.ok());
    CHECK(has_code(vr, "CONSTRAINT_VIOLATION"));
}

TEST_CASE("report interval must divide segment length") {
    auto vr = validate_config("steps_per_segment = 100\nreport_interval = 33\n");
    CHECK(!vr.ok());
}

TEST_CASE("some budget is required") {
    auto vr = validate_config("budget_segments = 0\nbudget_wall_clock = 0\n");
    CHECK(!vr.ok());
}

TEST_CASE("serialize/parse/validate round-trips exactly") {
    auto vr = validate_config("mode = F\nn_sims = 24\nn_aggregators = 4\nseed = 77\n"
                              "temperature = 0.31\ndropout = 0.25\nbudget_wall_clock = 123.5\n"
                              "budget_segments = 0\npolicy = ML_ONLY\ncoupling = FILE\n");
    REQUIRE(vr.ok());
    std::string once = serialize_config(*vr.config);
    auto vr2 = validate_config(once);
    REQUIRE(vr2.ok());
    CHECK(serialize_config(*vr2.config) == once);
}

TEST_CASE("defaulted helpers") {
    auto vr = validate_config("");
    REQUIRE(vr.ok());
    CHECK(vr.config->effective_restart_count() == vr.config->n_sims);
    CHECK(vr.config->effective_slots() == vr.config->n_sims + vr.config->n_aggregators + 2);
    auto vf = validate_config("mode = F\n");
    REQUIRE(vf.ok());
    CHECK(vf.config->effective_slots() == vf.config->n_sims);
}
