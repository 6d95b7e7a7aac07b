// Tests for the key/value configuration parser: file syntax, comment and
// whitespace handling, typed getters with strict error reporting, override
// precedence, the unknown-key guard, and canonical serialization.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "maskoff/common.hpp"
#include "maskoff/config.hpp"

#include "support/fixtures.hpp"

using doctest::Contains;
using maskoff::Error;
using maskoff::cfg::KeyValueConfig;

TEST_CASE("parsing skips comments and blank lines, trims whitespace") {
    const std::string text =
        "# leading comment\n"
        "\n"
        "  epochs = 30   # trailing comment\n"
        "\tname =  desk run \n"
        "   # indented comment only\n"
        "lr=2e-4\n";
    const KeyValueConfig cfg = KeyValueConfig::from_string(text);

    CHECK(cfg.keys() == std::vector<std::string>{"epochs", "name", "lr"});
    CHECK(cfg.get_int("epochs") == 30);
    // Inner whitespace is preserved, outer whitespace is trimmed.
    CHECK(cfg.get_str("name") == "desk run");
    CHECK(cfg.get_double("lr") == 2e-4);
}

TEST_CASE("malformed lines are rejected with the line number") {
    CHECK_THROWS_WITH_AS((void)KeyValueConfig::from_string("epochs = 1\nno_equals_here\n"),
                         Contains("line 2"), Error);
    CHECK_THROWS_WITH_AS((void)KeyValueConfig::from_string(" = 7\n"), Contains("empty key"), Error);
    // A line that is only a comment after '#' stripping is fine.
    CHECK_NOTHROW((void)KeyValueConfig::from_string("# x = 1\n"));
}

TEST_CASE("later assignments win, including programmatic overrides") {
    KeyValueConfig cfg = KeyValueConfig::from_string("steps = 100\nsteps = 250\n");
    CHECK(cfg.get_int("steps") == 250);
    // keys() keeps first-seen order without duplicates.
    CHECK(cfg.keys() == std::vector<std::string>{"steps"});

    cfg.set("steps", "4000");  // CLI-style override applied after parsing
    cfg.set("resume", "out/last.ckpt");
    CHECK(cfg.get_int("steps") == 4000);
    CHECK(cfg.keys() == std::vector<std::string>{"steps", "resume"});
}

TEST_CASE("typed getters: strict forms throw on absence, fallbacks engage") {
    const KeyValueConfig cfg = KeyValueConfig::from_string("a = -12\nb = 3.5\nf = off\n");

    CHECK(cfg.get_int("a") == -12);
    CHECK(cfg.get_double("b") == 3.5);
    CHECK(cfg.get_double("a") == -12.0);  // integers parse as doubles too
    CHECK(cfg.get_bool("f", true) == false);

    CHECK(cfg.get_int("missing", 77) == 77);
    CHECK(cfg.get_double("missing", 1.5) == 1.5);
    CHECK(cfg.get_u64("missing", 42u) == 42u);
    CHECK(cfg.get_bool("missing", true) == true);
    CHECK(cfg.get_str("missing", "dflt") == "dflt");

    CHECK_THROWS_WITH_AS((void)cfg.get_int("nope"), Contains("nope"), Error);
    CHECK_THROWS_WITH_AS((void)cfg.get_str("nope"), Contains("missing config key"), Error);
}

TEST_CASE("typed getters: malformed values always throw, naming key and value") {
    const KeyValueConfig cfg = KeyValueConfig::from_string(
        "count = 12abc\nrate = 1.5x\nflag = maybe\nneg = -3\nwords = zzz\n");

    CHECK_THROWS_WITH_AS((void)cfg.get_int("count"), Contains("trailing junk"), Error);
    CHECK_THROWS_WITH_AS((void)cfg.get_int("words"), Contains("not an integer"), Error);
    CHECK_THROWS_WITH_AS((void)cfg.get_double("rate"), Contains("trailing junk"), Error);
    CHECK_THROWS_WITH_AS((void)cfg.get_double("words"), Contains("not a number"), Error);
    CHECK_THROWS_WITH_AS((void)cfg.get_bool("flag", false), Contains("not a boolean"), Error);
    CHECK_THROWS_AS((void)cfg.get_u64("neg", 0), Error);

    // Error messages should identify the offending key.
    CHECK_THROWS_WITH_AS((void)cfg.get_int("count"), Contains("count"), Error);
}

TEST_CASE("boolean spellings accepted case-insensitively") {
    const KeyValueConfig cfg = KeyValueConfig::from_string(
        "a = true\nb = TRUE\nc = Yes\nd = on\ne = 1\n"
        "f = false\ng = False\nh = no\ni = OFF\nj = 0\n");
    for (const char* key : {"a", "b", "c", "d", "e"}) CHECK(cfg.get_bool(key, false) == true);
    for (const char* key : {"f", "g", "h", "i", "j"}) CHECK(cfg.get_bool(key, true) == false);
}

TEST_CASE("require_known flags the first unexpected key") {
    const KeyValueConfig cfg = KeyValueConfig::from_string("epochs = 1\nsteps = 2\nepohcs = 3\n");
    CHECK_NOTHROW(cfg.require_known({"epochs", "steps", "epohcs"}));
    CHECK_THROWS_WITH_AS(cfg.require_known({"epochs", "steps"}), Contains("epohcs"), Error);
}

TEST_CASE("to_string emits canonical lines that re-parse identically") {
    KeyValueConfig cfg = KeyValueConfig::from_string("# hi\nsize=64\n  lr = 2e-4\nname = run a\n");
    cfg.set("size", "128");

    const std::string canon = cfg.to_string();
    CHECK(canon == "size = 128\nlr = 2e-4\nname = run a\n");

    const KeyValueConfig again = KeyValueConfig::from_string(canon);
    CHECK(again.keys() == cfg.keys());
    for (const std::string& key : cfg.keys()) CHECK(again.get_str(key) == cfg.get_str(key));
    CHECK(again.to_string() == canon);
}

TEST_CASE("from_file reads what was written and rejects missing paths") {
    namespace fs = std::filesystem;
    const fs::path dir = fixtures::temp_dir("config");
    const fs::path path = dir / "run.cfg";
    {
        std::ofstream out(path);
        out << "# run settings\nseed = 7\nout_dir = " << (dir / "out").string() << "\n";
    }

    const KeyValueConfig cfg = KeyValueConfig::from_file(path.string());
    CHECK(cfg.get_u64("seed", 0) == 7u);
    CHECK(cfg.get_str("out_dir") == (dir / "out").string());

    CHECK_THROWS_WITH_AS((void)KeyValueConfig::from_file((dir / "absent.cfg").string()),
                         Contains("absent.cfg"), Error);
    fs::remove_all(dir);
}
