// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "preditor/config.hpp"

using namespace preditor;

namespace {

std::string parse_error_key(std::string_view text, std::set<std::string> known = {}) {
    try {
        Config::parse(text, std::move(known));
    } catch (const ParseError& e) {
        return e.key();
    }
    return "<no error>";
}

}  // namespace

TEST(Config, SectionsCommentsAndTypes) {
    const auto cfg = Config::parse(
        "# header\n"
        "top = 1\n"
        "[edit]\n"
        "c = 0.6   ; inline comment\n"
        "prompt = disc bright\n"
        "\n"
        "[ run ]\n"
        "seed = 18446744073709551615\n"
        "verbose = yes\n"
        "grid = 0.1, 0.2 ,0.3\n");
    EXPECT_EQ(cfg.get_int("top", 0), 1);
    EXPECT_DOUBLE_EQ(cfg.get_double("edit.c", 0.0), 0.6);
    EXPECT_EQ(cfg.get_string("edit.prompt", ""), "disc bright");
    EXPECT_EQ(cfg.get_u64("run.seed", 0), 18446744073709551615ULL);
    EXPECT_TRUE(cfg.get_bool("run.verbose", false));
    EXPECT_EQ(cfg.get_doubles("run.grid", {}), (std::vector<double>{0.1, 0.2, 0.3}));
    EXPECT_EQ(cfg.get_double("edit.s", 0.45), 0.45);
    EXPECT_FALSE(cfg.has("edit.s"));
}

TEST(Config, LineErrorsNameTheLine) {
    EXPECT_EQ(parse_error_key("a = 1\nno equals sign\n"), "line 2");
    EXPECT_EQ(parse_error_key("[open\n"), "line 1");
    EXPECT_EQ(parse_error_key("x = 1\n\n[]\n"), "line 3");
    EXPECT_EQ(parse_error_key(" = 3\n"), "line 1");
}

TEST(Config, ValueErrorsNameTheKey) {
    const auto cfg = Config::parse("[edit]\nc = high\nn = 3.5\nflag = maybe\nlist = 1,,2\nseed = -1\n");
    auto key_of = [](auto&& f) {
        try {
            f();
        } catch (const ParseError& e) {
            return e.key();
        }
        return std::string("<no error>");
    };
    EXPECT_EQ(key_of([&] { cfg.get_double("edit.c", 0); }), "edit.c");
    EXPECT_EQ(key_of([&] { cfg.get_int("edit.n", 0); }), "edit.n");
    EXPECT_EQ(key_of([&] { cfg.get_bool("edit.flag", false); }), "edit.flag");
    EXPECT_EQ(key_of([&] { cfg.get_doubles("edit.list", {}); }), "edit.list");
    EXPECT_EQ(key_of([&] { cfg.get_u64("edit.seed", 0); }), "edit.seed");
    const auto inf = Config::parse("x = inf\n");
    EXPECT_THROW(inf.get_double("x", 0), ParseError);
}

TEST(Config, UnknownKeysRejectedWhenKnownSetGiven) {
    EXPECT_EQ(parse_error_key("[edit]\nc = 1\ncc = 2\n", {"edit.c"}), "edit.cc");
    EXPECT_NO_THROW(Config::parse("[edit]\nc = 1\n", {"edit.c"}));
    Config cfg({"a"});
    EXPECT_THROW(cfg.set("b", "1"), ParseError);
}

TEST(Config, LaterValuesOverrideAndTextRoundTrips) {
    const auto cfg = Config::parse("[b]\nx = 1\n[a]\ny = 2\n[b]\nx = 3\nz = w\n");
    EXPECT_EQ(cfg.get_int("b.x", 0), 3);
    const std::string text = cfg.to_string();
    EXPECT_EQ(text, "[a]\ny = 2\n\n[b]\nx = 3\nz = w\n");
    EXPECT_EQ(Config::parse(text).values(), cfg.values());
}

TEST(Config, MissingFileIsAParseError) {
    EXPECT_THROW(Config::load("/nonexistent/preditor.conf"), ParseError);
}
