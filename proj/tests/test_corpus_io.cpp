#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "helpers.hpp"
#include "mcad/corpus.hpp"
#include "mcad/geometry.hpp"
#include "mcad/io.hpp"

using namespace mcad;
using namespace mcad::corpus;

namespace {

std::string record_of_length(int raw_length) {
    REQUIRE(raw_length >= 3);
    std::vector<std::string> cmds;
    const std::string extrude =
        R"({"kind":"Extrude","params":{"theta":0,"phi":0,"gamma":1.5707963267948966,"px":0,"py":0,"pz":0,"s":1,"e1":0.5,"e2":0,"b":0,"u":0}})";
    auto circle_unit = [&](int len) {  // odd len = SOL+Circle pairs then Extrude
        REQUIRE(len % 2 == 1);
        double r = 0.2;
        for (int l = 0; l < (len - 1) / 2; ++l) {
            cmds.push_back(R"({"kind":"SOL","params":{}})");
            cmds.push_back(R"({"kind":"Circle","params":{"x":0.0,"y":0.0,"r":)" +
                           std::to_string(r) + "}}");
            r += 0.05;
        }
        cmds.push_back(extrude);
    };
    auto lens_unit = [&]() {  // SOL, Line, Arc back to origin, Extrude (4)
        cmds.push_back(R"({"kind":"SOL","params":{}})");
        cmds.push_back(R"({"kind":"Line","params":{"x":0.5,"y":0.0}})");
        cmds.push_back(R"({"kind":"Arc","params":{"x":0.0,"y":0.0,"alpha":3.14159,"f":1}})");
        cmds.push_back(extrude);
    };
    if (raw_length % 2 == 1) circle_unit(raw_length);
    else if (raw_length == 4) lens_unit();
    else {  // even >= 6: two odd circle units
        circle_unit(3);
        circle_unit(raw_length - 3);
    }
    std::string joined;
    for (size_t i = 0; i < cmds.size(); ++i) joined += (i ? "," : "") + cmds[i];
    return R"({"id":"len)" + std::to_string(raw_length) + R"(","commands":[)" + joined + "]}";
}

}  // namespace

TEST_CASE("filter: thresholds 10 and 128, reasons, idempotence") {
    std::vector<std::string> lines;
    lines.push_back(record_of_length(9));    // too_short
    lines.push_back(record_of_length(10));   // kept (boundary)
    lines.push_back(record_of_length(33));   // kept
    lines.push_back(record_of_length(128));  // kept (boundary)
    lines.push_back("not json at all");      // malformed
    lines.push_back(R"({"id":"z","commands":[{"kind":"Bezier","params":{}}]})");

    FilterResult r = filter_corpus(lines, 10, 128);
    CHECK(r.stats.seen == 6);
    CHECK(r.stats.kept == 3);
    CHECK(r.stats.rejected.at("too_short") == 1);
    CHECK(r.stats.rejected.at("malformed") == 1);
    CHECK(r.stats.rejected.at("unsupported_command") == 1);
    CHECK(r.stats.length_buckets.at("60-128") == 1);
    CHECK(r.stats.length_buckets.at("26-40") == 1);

    FilterResult again = filter_corpus(r.records, 10, 128);
    CHECK(again.records == r.records);
    CHECK(again.stats.kept == r.stats.kept);

    std::string stats = stats_to_json(r.stats);
    CHECK(stats.find("too_short") != std::string::npos);
}

TEST_CASE("split: paper arithmetic and partition properties") {
    SplitResult r = split(77078, 0.8, 0.1, 7);
    CHECK(int(r.train.size()) == 61662);
    CHECK(int(r.val.size()) == 7707);
    CHECK(int(r.test.size()) == 7709);

    SplitResult s = split(10, 0.8, 0.1, 3);
    CHECK(int(s.train.size()) == 8);
    CHECK(int(s.val.size()) == 1);
    CHECK(int(s.test.size()) == 1);

    // disjoint and exhaustive
    std::vector<int> seen(10, 0);
    for (int i : s.train) seen[size_t(i)]++;
    for (int i : s.val) seen[size_t(i)]++;
    for (int i : s.test) seen[size_t(i)]++;
    for (int v : seen) CHECK(v == 1);

    // deterministic
    SplitResult s2 = split(10, 0.8, 0.1, 3);
    CHECK(s.train == s2.train);
    CHECK(s.test == s2.test);

    CHECK_THROWS_AS(split(9, 0.8, 0.1, 1), TooFewRecords);
}

TEST_CASE("synthesize: validity, determinism, exact lengths") {
    SynthConfig cfg;
    cfg.count = 40;
    cfg.min_len = 10;
    cfg.max_len = 60;
    cfg.seed = 11;
    auto recs = synthesize(cfg);
    REQUIRE(int(recs.size()) == 40);

    for (const auto& line : recs) {
        CadSequence seq = sequence_from_record(line);
        CHECK(seq.raw_length >= 10);
        CHECK(seq.raw_length <= 60);
        CadSequence norm = normalize(seq);
        QuantizedSequence q = quantize(norm);
        (void)q;
        auto scene = geom::build_scene(norm);
        CHECK(!scene.bodies().empty());
    }

    auto recs2 = synthesize(cfg);
    CHECK(recs == recs2);  // byte-for-byte
}

TEST_CASE("synthesize: paper length-bucket mix within 3 points per bucket") {
    SynthConfig cfg;
    cfg.count = 3000;  // sampling noise per bucket ~0.8%, well inside the 3% gate
    cfg.min_len = 11;
    cfg.max_len = 128;
    cfg.seed = 23;
    auto recs = synthesize(cfg);
    std::map<std::string, int> buckets;
    for (const auto& line : recs) buckets[length_bucket(sequence_from_record(line).raw_length)]++;
    double n = double(recs.size());
    CHECK(std::abs(buckets["11-25"] / n - 0.4125) < 0.03);
    CHECK(std::abs(buckets["26-40"] / n - 0.2660) < 0.03);
    CHECK(std::abs(buckets["41-60"] / n - 0.1613) < 0.03);
    CHECK(std::abs(buckets["60-128"] / n - 0.1602) < 0.03);
}

TEST_CASE("quantized tensor container round trip") {
    Rng rng(31);
    std::vector<QuantizedSequence> seqs;
    for (int i = 0; i < 7; ++i)
        seqs.push_back(quantize(mcad::testing::random_valid_sequence(rng, 4, 100)));
    io::write_quantized("/tmp/mcad_test.mcad1", seqs);
    auto back = io::read_quantized("/tmp/mcad_test.mcad1");
    REQUIRE(back.size() == seqs.size());
    for (size_t i = 0; i < seqs.size(); ++i) CHECK(back[i] == seqs[i]);

    // header check: magic + count
    std::ifstream in("/tmp/mcad_test.mcad1", std::ios::binary);
    char magic[5];
    in.read(magic, 5);
    CHECK(std::string(magic, 5) == "MCAD1");
    uint32_t count = 0;
    in.read(reinterpret_cast<char*>(&count), 4);
    CHECK(count == 7);
}

TEST_CASE("checkpoint container round trip with manifest") {
    std::vector<io::NamedArrayData> arrays;
    arrays.push_back({"a.w", {2, 3}, {1, 2, 3, 4, 5, 6}});
    arrays.push_back({"b.bias", {4}, {0.5f, -0.5f, 1.5f, 0.0f}});
    io::write_checkpoint("/tmp/mcad_test.mcpt", arrays, R"({"note":"test"})");
    auto [back, meta] = io::read_checkpoint("/tmp/mcad_test.mcpt");
    REQUIRE(back.size() == 2);
    CHECK(back[0].name == "a.w");
    CHECK(back[0].shape == std::vector<int>{2, 3});
    CHECK(back[0].data == arrays[0].data);
    CHECK(back[1].data == arrays[1].data);
    CHECK(meta.find("note") != std::string::npos);

    CHECK_THROWS_AS(io::read_checkpoint("/tmp/does_not_exist.mcpt"), IoError);
}

TEST_CASE("config: sections, types, overrides, hash stability") {
    std::string text = R"(
# experiment configuration
[model]
d_e = 96
block_type = "mamba"
bottleneck = false

[train]
lr = 0.001
batch = 16
seed = 42
)";
    io::Config cfg = io::Config::parse(text);
    CHECK(cfg.get_int("model.d_e", 0) == 96);
    CHECK(cfg.get_str("model.block_type", "") == "mamba");
    CHECK(cfg.get_bool("model.bottleneck", true) == false);
    CHECK(cfg.get_num("train.lr", 0) == doctest::Approx(0.001));
    CHECK(cfg.get_u64("train.seed", 0) == 42);
    CHECK(cfg.get_int("train.missing", 7) == 7);

    uint64_t h1 = cfg.hash();
    io::Config cfg2 = io::Config::parse(text);
    CHECK(cfg2.hash() == h1);
    cfg2.set("train.batch", "32");
    CHECK(cfg2.hash() != h1);

    CHECK_THROWS_AS(io::Config::parse("key_without_value\n"), ConfigError);
    CHECK_THROWS_AS(cfg.get_num("model.block_type", 0), ConfigError);
}

TEST_CASE("jsonl io round trip") {
    std::vector<std::string> lines = {R"({"id":"a"})", R"({"id":"b"})"};
    io::write_lines("/tmp/mcad_lines.jsonl", lines);
    auto back = io::read_lines("/tmp/mcad_lines.jsonl");
    CHECK(back == lines);
    CHECK_THROWS_AS(io::read_lines("/tmp/nope_nope.jsonl"), IoError);
}
