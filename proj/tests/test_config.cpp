#include <cstdio>
#include <fstream>
#include <string>

#include "cwg/config.hpp"
#include "doctest.h"

using cwg::ValidationError;
using cwg::Vec2;
using cwg::config::ConfigFile;
using cwg::config::Reader;

namespace {

std::string catch_message(const std::string& text) {
    try {
        ConfigFile::parse_text(text);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("config text parses into sections with comments stripped") {
    std::string text =
        "schema = cwg/1\n"
        "# full-line comment\n"
        "[section]\n"
        "kind = disk   # trailing comment\n"
        "radius=1.5\n"
        "\n"
        "[extra]\n"
        "mystery = 42\n";
    ConfigFile f = ConfigFile::parse_text(text);
    CHECK(f.schema == "cwg/1");
    CHECK(f.has("section", "kind"));
    CHECK(f.sections.at("section").at("kind") == "disk");
    CHECK(f.sections.at("section").at("radius") == "1.5");
    // unknown sections and keys are preserved, not rejected
    CHECK(f.has("extra", "mystery"));
    CHECK(!f.has("section", "h"));
    CHECK(!f.has("nope", "kind"));
}

TEST_CASE("config hash is a function of the raw text") {
    std::string text = "schema = cwg/1\n[a]\nx = 1\n";
    ConfigFile f1 = ConfigFile::parse_text(text);
    ConfigFile f2 = ConfigFile::parse_text(text);
    CHECK(f1.hash == f2.hash);
    // even a comment-only change moves the hash (reports must pin the file)
    ConfigFile f3 = ConfigFile::parse_text(text + "# note\n");
    CHECK(f1.hash != f3.hash);
}

TEST_CASE("schema line is mandatory and checked") {
    CHECK_THROWS_AS(ConfigFile::parse_text("x = 1\n"), ValidationError);
    CHECK_THROWS_AS(ConfigFile::parse_text("schema = cwg/2\n"), ValidationError);
    // schema inside a section does not count as the top-level schema line
    CHECK_THROWS_AS(ConfigFile::parse_text("[a]\nschema = cwg/1\n"), ValidationError);
    CHECK(catch_message("x = 1\n").find("schema") != std::string::npos);
}

TEST_CASE("malformed lines are reported with their line number") {
    CHECK(catch_message("schema = cwg/1\n[oops\n").find("line 2") != std::string::npos);
    CHECK(catch_message("schema = cwg/1\nnoequals\n").find("key = value") != std::string::npos);
    CHECK(catch_message("schema = cwg/1\n= 3\n").find("empty key") != std::string::npos);
    CHECK(catch_message("schema = cwg/1\n[]\n").find("empty section") != std::string::npos);
}

TEST_CASE("typed reader accessors convert and default") {
    ConfigFile f = ConfigFile::parse_text(
        "schema = cwg/1\n"
        "[num]\n"
        "a = 2.5\n"
        "b = nope\n"
        "c = 7\n"
        "list = 1 2 3\n"
        "v = 0.25 -4\n"
        "vbad = 1 2 3\n");
    Reader r(f);
    CHECK(r.number("num", "a", 0.0) == doctest::Approx(2.5));
    CHECK(r.number("num", "missing", 9.5) == doctest::Approx(9.5));
    CHECK(r.integer("num", "c", 0) == 7);
    CHECK(r.text("num", "absent", "dflt") == "dflt");
    std::vector<double> xs = r.numbers("num", "list", {});
    REQUIRE(xs.size() == 3);
    CHECK(xs[1] == doctest::Approx(2.0));
    Vec2 v = r.vec2("num", "v", Vec2(0, 0));
    CHECK(v.x() == doctest::Approx(0.25));
    CHECK(v.y() == doctest::Approx(-4.0));
    CHECK(r.ok());
    CHECK_NOTHROW(r.finish());
}

TEST_CASE("reader aggregates every offending key into one error") {
    ConfigFile f = ConfigFile::parse_text(
        "schema = cwg/1\n"
        "[num]\n"
        "a = 2.5\n"
        "b = nope\n"
        "vbad = 1 2 3\n");
    Reader r(f);
    r.number("num", "b", 0.0);       // not a number
    r.vec2("num", "vbad", Vec2(0, 0));  // wrong arity
    r.need_number("num", "absent");  // required key missing
    r.integer("num", "a", 0);        // 2.5 is not an integer
    CHECK(!r.ok());
    std::string msg;
    try {
        r.finish();
    } catch (const ValidationError& e) {
        msg = e.what();
    }
    REQUIRE(!msg.empty());
    CHECK(msg.find("4 keys") != std::string::npos);
    CHECK(msg.find("num.b") != std::string::npos);
    CHECK(msg.find("num.vbad") != std::string::npos);
    CHECK(msg.find("num.absent") != std::string::npos);
    CHECK(msg.find("num.a") != std::string::npos);
}

TEST_CASE("parse_file round-trips the text and rejects missing paths") {
    std::string text = "schema = cwg/1\n[s]\nk = v\n";
    std::string path = std::string(std::tmpnam(nullptr)) + "_cwg.cfg";
    {
        std::ofstream out(path);
        out << text;
    }
    ConfigFile f = ConfigFile::parse_file(path);
    CHECK(f.hash == ConfigFile::parse_text(text).hash);
    CHECK(f.sections.at("s").at("k") == "v");
    std::remove(path.c_str());
    CHECK_THROWS_AS(ConfigFile::parse_file(path), ValidationError);
}
