#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>

#include "simbil/image.hpp"
#include "simbil/mask.hpp"
#include "simbil/synthetic.hpp"
#include "support.hpp"

using namespace simbil;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code = -1;
    std::string out;
};

CliRun run(const std::string& args)
{
    const std::string cmd = std::string(SIMBIL_CLI_PATH) + " " + args + " 2>/dev/null";
    CliRun r;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int status = ::pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Relative file -> bytes for every regular file under root.
std::map<std::string, std::vector<std::uint8_t>> snapshot(const fs::path& root)
{
    std::map<std::string, std::vector<std::uint8_t>> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_file(e.path());
    return files;
}

const char* kNet = " --depth 3 --channels 8 --skip-channels 2";

} // namespace

TEST(Cli, HelpAndUsageErrors)
{
    EXPECT_EQ(run("--help").code, 0);
    EXPECT_NE(run("edit --help").out.find("--ops"), std::string::npos);
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("no-such-command").code, 2);
    EXPECT_EQ(run("inpaint --image /does/not/exist.png --mask x --out y").code, 2);
    EXPECT_EQ(run("metrics --before").code, 2);
}

TEST(Cli, GenSyntheticIsDeterministic)
{
    test::TempDir a, b;
    ASSERT_EQ(run("gen-synthetic --scenes 5 --seed 7 --out " + q(a.path())).code, 0);
    ASSERT_EQ(run("gen-synthetic --scenes 5 --seed 7 --out " + q(b.path())).code, 0);
    const auto sa = snapshot(a.path());
    EXPECT_GE(sa.size(), 20u);
    EXPECT_EQ(sa, snapshot(b.path()));
}

TEST(Cli, ValidationAndRuntimeExitCodes)
{
    test::TempDir dir;
    const auto scene = synthetic::generate_scene({}, 3);
    write_png(dir / "in.png", scene.image);
    write_text(dir / "graph.json", serialize(scene.graph).dump());
    write_text(dir / "bad_graph.json", R"({"objects": [{"id": "a"}], "relationships": []})");
    write_text(dir / "ops.json", json{{"kind", "remove"}, {"target_id", scene.shapes[0].id}}.dump());
    write_text(dir / "ghost.json", json{{"kind", "remove"}, {"target_id", "ghost"}}.dump());

    const std::string base = "edit --image " + q(dir / "in.png") + " --iters 5" + kNet;
    EXPECT_EQ(run(base + " --graph " + q(dir / "bad_graph.json") + " --ops " + q(dir / "ops.json") +
                  " --out " + q(dir / "j1"))
                  .code,
              3);
    EXPECT_EQ(run(base + " --graph " + q(dir / "graph.json") + " --ops " + q(dir / "ghost.json") + " --out " +
                  q(dir / "j2"))
                  .code,
              3);
    EXPECT_EQ(run(base + " --graph " + q(dir / "graph.json") + " --ops " + q(dir / "ops.json") +
                  " --mode sideways --out " + q(dir / "j3"))
                  .code,
              2);
    EXPECT_EQ(run(base + " --graph " + q(dir / "graph.json") + " --ops " + q(dir / "ops.json") +
                  " --segmentation http --segmentation-url http://127.0.0.1:9 --out " + q(dir / "j4"))
                  .code,
              4);
}

TEST(Cli, InpaintGuidedWithZeroLambdaMatchesPlain)
{
    test::TempDir dir;
    std::mt19937_64 rng(5);
    write_png(dir / "img.png", test::random_image(rng, 24, 20));
    write_mask_png(dir / "mask.png", mask_from_bbox({0.3, 0.3, 0.7, 0.6}, 24, 20));
    const std::string base =
        "inpaint --image " + q(dir / "img.png") + " --mask " + q(dir / "mask.png") + " --iters 40 --seed 3" + kNet;
    ASSERT_EQ(run(base + " --mode plain --out " + q(dir / "plain.png")).code, 0);
    ASSERT_EQ(run(base + " --mode guided --lambda 0 --out " + q(dir / "guided.png")).code, 0);
    ASSERT_EQ(run(base + " --mode guided --lambda 0.5 --out " + q(dir / "weighted.png")).code, 0);
    EXPECT_EQ(read_file(dir / "plain.png"), read_file(dir / "guided.png"));
    EXPECT_NE(read_file(dir / "plain.png"), read_file(dir / "weighted.png"));
}

TEST(Cli, EditIsReproducibleAndWritesJobLayout)
{
    test::TempDir dir;
    const auto scene = synthetic::generate_scene({}, 11);
    write_png(dir / "in.png", scene.image);
    write_text(dir / "graph.json", serialize(scene.graph).dump());
    write_text(dir / "ops.json", json{{"ops", {{{"kind", "remove"}, {"target_id", scene.shapes[0].id}}}}}.dump());
    const std::string base = "edit --image " + q(dir / "in.png") + " --graph " + q(dir / "graph.json") +
                             " --ops " + q(dir / "ops.json") + " --iters 30 --seed 2" + kNet + " --out ";
    const CliRun first = run(base + q(dir / "a"));
    ASSERT_EQ(first.code, 0);
    ASSERT_EQ(run(base + q(dir / "b")).code, 0);

    const json summary = json::parse(first.out);
    EXPECT_TRUE(summary["metrics"].contains("ssim_all"));
    for (const char* f : {"config.json", "graph_before.json", "graph_after.json", "ops.json", "result.png",
                          "metrics.json", "log.txt", "steps/01_segment/mask.png", "steps/02_remove_inpaint/hole.png",
                          "steps/03_measure/metrics.json"})
        EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
    EXPECT_EQ(read_file(dir / "a" / "result.png"), read_file(dir / "b" / "result.png"));
    EXPECT_EQ(read_file(dir / "a" / "metrics.json"), read_file(dir / "b" / "metrics.json"));
    EXPECT_EQ(read_file(dir / "a" / "graph_after.json"), read_file(dir / "b" / "graph_after.json"));

    // Rerunning into a finished job directory reuses it and keeps the result.
    ASSERT_EQ(run(base + q(dir / "a")).code, 0);
    EXPECT_EQ(read_file(dir / "a" / "result.png"), read_file(dir / "b" / "result.png"));
    // A different config in the same directory is a conflict.
    EXPECT_EQ(run("edit --image " + q(dir / "in.png") + " --graph " + q(dir / "graph.json") + " --ops " +
                  q(dir / "ops.json") + " --iters 31 --seed 2" + kNet + " --out " + q(dir / "a"))
                  .code,
              3);
}

TEST(Cli, MetricsSubcommand)
{
    test::TempDir dir;
    std::mt19937_64 rng(1);
    const Image img = test::random_image(rng, 16, 16);
    write_png(dir / "a.png", img);
    const CliRun r = run("metrics --before " + q(dir / "a.png") + " --after " + q(dir / "a.png") + " --roi 0.25,0.25,0.5,0.5 --out " +
                      q(dir / "m.json"));
    ASSERT_EQ(r.code, 0);
    const json m = json::parse(r.out);
    EXPECT_EQ(m["ssim_all"], 100.0);
    EXPECT_EQ(m["mae_roi"], 0.0);
    EXPECT_EQ(json::parse(read_text(dir / "m.json")), m);
    EXPECT_EQ(run("metrics --before " + q(dir / "a.png") + " --after " + q(dir / "a.png") + " --roi 1,2").code, 2);
}

TEST(Cli, PositionTrainAndEvaluate)
{
    test::TempDir dir;
    ASSERT_EQ(run("gen-synthetic --scenes 1 --seed 4 --position-examples 40 --out " + q(dir.path())).code, 0);
    const fs::path data = dir / "position_dataset.jsonl";
    ASSERT_TRUE(fs::exists(data));
    const CliRun t = run("train-position --dataset " + q(data) + " --out " + q(dir / "m.bin") + " --epochs 3");
    ASSERT_EQ(t.code, 0);
    EXPECT_TRUE(json::parse(t.out)["final_loss"].is_number());
    const CliRun e = run("eval-position --model " + q(dir / "m.bin") + " --dataset " + q(data));
    ASSERT_EQ(e.code, 0);
    const json ev = json::parse(e.out);
    EXPECT_EQ(ev["examples"], 40);
    EXPECT_EQ(ev["per_corner"].size(), 4u);
}
