// End-to-end runs of the command-line tool: gen, train, eval, sweep,
// features, cam, exit codes, and byte-identical reruns.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(GFF_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::size_t line_count(const fs::path& p) {
    std::ifstream is(p);
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line))
        if (!line.empty()) ++n;
    return n;
}

class CliRun : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("gff_cli_" + std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        config_ = dir_ / "toy.cfg";
        std::ofstream cfg(config_);
        cfg << "seed = 1\n"
            << "backbone.image_size = 16\n"
            << "backbone.patch_size = 8\n"
            << "backbone.embed_dim = 16\n"
            << "backbone.num_heads = 2\n"
            << "backbone.num_blocks = 2\n"
            << "dfgm.dim = 4\n"
            << "fuse.depth = 1\n"
            << "fuse.num_heads = 2\n"
            << "data.dir = " << (dir_ / "data").string() << "\n"
            << "data.image_size = 16\n"
            << "data.train_real = 8\n"
            << "data.train_fake = 8\n"
            << "data.val_real = 2\n"
            << "data.val_fake = 2\n"
            << "data.test_real = 4\n"
            << "data.test_fake = 4\n"
            << "stage1.lr = 1e-3\n"
            << "stage1.epochs = 1\n"
            << "stage1.batch_size = 4\n"
            << "stage2.lr = 1e-3\n"
            << "stage2.epochs = 1\n"
            << "stage2.batch_size = 4\n"
            << "eval.threads = 1\n"
            << "sweep.bottleneck_dims = 4,8\n"
            << "sweep.fuse_layers = 1,2\n";
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string cfg_flag() const { return "--config " + config_.string(); }

    fs::path dir_, config_;
};

}  // namespace

TEST_F(CliRun, FullPipeline) {
    // gen: four manifests, refusal without --force, byte-identical regen
    ASSERT_EQ(run_cli("gen " + cfg_flag()), 0);
    for (const char* split : {"train", "val", "test_seen", "test_unseen"})
        EXPECT_TRUE(fs::exists(dir_ / "data" / (std::string(split) + ".csv"))) << split;
    EXPECT_EQ(line_count(dir_ / "data" / "train.csv"), 17u);  // header + 16 rows
    EXPECT_TRUE(fs::exists(dir_ / "data" / "run.lock"));
    const std::string manifest_before = slurp(dir_ / "data" / "train.csv");
    EXPECT_NE(run_cli("gen " + cfg_flag()), 0);  // refuses without --force
    ASSERT_EQ(run_cli("gen " + cfg_flag() + " --force"), 0);
    EXPECT_EQ(slurp(dir_ / "data" / "train.csv"), manifest_before);

    // train: weights + log + lock
    const std::string out1 = (dir_ / "run1").string();
    ASSERT_EQ(run_cli("train " + cfg_flag() + " --out " + out1), 0);
    EXPECT_TRUE(fs::exists(fs::path(out1) / "weights.gffw"));
    EXPECT_TRUE(fs::exists(fs::path(out1) / "train_log.csv"));
    EXPECT_TRUE(fs::exists(fs::path(out1) / "run.lock"));

    // same config and seed: byte-identical weights
    const std::string out2 = (dir_ / "run2").string();
    ASSERT_EQ(run_cli("train " + cfg_flag() + " --out " + out2), 0);
    EXPECT_EQ(slurp(fs::path(out1) / "weights.gffw"), slurp(fs::path(out2) / "weights.gffw"));
    EXPECT_EQ(slurp(fs::path(out1) / "train_log.csv"),
              slurp(fs::path(out2) / "train_log.csv"));

    // eval: metrics.csv with per-family and mean rows for both test splits
    const std::string eval_out = (dir_ / "eval").string();
    ASSERT_EQ(run_cli("eval " + cfg_flag() + " --weights " + out1 + "/weights.gffw --out " +
                      eval_out),
              0);
    const std::string metrics = slurp(fs::path(eval_out) / "metrics.csv");
    EXPECT_NE(metrics.find("split,family,n,acc,ap"), std::string::npos);
    EXPECT_NE(metrics.find("test_seen,FAKE_A"), std::string::npos);
    EXPECT_NE(metrics.find("test_seen,mean"), std::string::npos);
    EXPECT_NE(metrics.find("test_unseen,FAKE_B"), std::string::npos);

    // perturb off equals clean bitwise; apply_probability 0 equals clean too
    const std::string eval_p0 = (dir_ / "eval_p0").string();
    ASSERT_EQ(run_cli("eval " + cfg_flag() + " --weights " + out1 +
                      "/weights.gffw --perturb off --out " + eval_p0),
              0);
    EXPECT_EQ(slurp(fs::path(eval_out) / "metrics.csv"),
              slurp(fs::path(eval_p0) / "metrics.csv"));

    // features: one csv per test split, row count = manifest rows
    const std::string feat_out = (dir_ / "features").string();
    ASSERT_EQ(run_cli("features " + cfg_flag() + " --weights " + out1 +
                      "/weights.gffw --out " + feat_out),
              0);
    EXPECT_EQ(line_count(fs::path(feat_out) / "features_test_seen.csv"), 9u);  // header + 8
    EXPECT_EQ(line_count(fs::path(feat_out) / "features_test_unseen.csv"), 9u);

    // cam: PGM heatmap alongside requested output dir
    const auto first_fake = dir_ / "data" / "images" / "test_seen_FAKE_A_0.ppm";
    ASSERT_TRUE(fs::exists(first_fake));
    const std::string cam_out = (dir_ / "cam").string();
    ASSERT_EQ(run_cli("cam " + cfg_flag() + " --weights " + out1 + "/weights.gffw --image " +
                      first_fake.string() + " --out " + cam_out),
              0);
    const fs::path heatmap = fs::path(cam_out) / "test_seen_FAKE_A_0.cam.pgm";
    ASSERT_TRUE(fs::exists(heatmap));
    const std::string pgm = slurp(heatmap);
    EXPECT_EQ(pgm.rfind("P5\n16 16\n255\n", 0), 0u);
}

TEST_F(CliRun, SweepEmitsOneRowPerGridCell) {
    ASSERT_EQ(run_cli("gen " + cfg_flag()), 0);
    const std::string out = (dir_ / "sweep").string();
    ASSERT_EQ(run_cli("sweep " + cfg_flag() + " --out " + out), 0);
    const fs::path csv = fs::path(out) / "sweep.csv";
    ASSERT_TRUE(fs::exists(csv));
    EXPECT_EQ(line_count(csv), 5u);  // header + 2x2 grid
    const std::string text = slurp(csv);
    EXPECT_NE(text.find("bottleneck_dim,fuse_layers,seen_acc,seen_ap,unseen_acc,unseen_ap"),
              std::string::npos);
}

TEST_F(CliRun, AblationNoneSkipsStageOne) {
    ASSERT_EQ(run_cli("gen " + cfg_flag()), 0);
    const std::string out = (dir_ / "probe").string();
    ASSERT_EQ(run_cli("train " + cfg_flag() + " --ablation none --out " + out), 0);
    std::ifstream log(fs::path(out) / "train_log.csv");
    std::string line;
    std::getline(log, line);  // header
    while (std::getline(log, line))
        if (!line.empty()) EXPECT_EQ(line.rfind("2,", 0), 0u) << line;  // stage 2 only
}

TEST_F(CliRun, ExitCodes) {
    // unknown config key -> 2
    const fs::path bad_cfg = dir_ / "bad.cfg";
    std::ofstream(bad_cfg) << "no.such.key = 1\n";
    EXPECT_EQ(run_cli("train --config " + bad_cfg.string()), 2);
    // missing dataset -> 3
    EXPECT_EQ(run_cli("train " + cfg_flag()), 3);  // gen never ran in this case
    // missing weights -> 3
    EXPECT_EQ(run_cli("eval " + cfg_flag() + " --weights " + (dir_ / "nope.gffw").string()), 3);
    // bad flag usage -> 2
    EXPECT_EQ(run_cli("eval --ablation bogus"), 2);
    // numeric abort -> 4: absurd learning rate rapidly saturates the head
    ASSERT_EQ(run_cli("gen " + cfg_flag()), 0);
    const fs::path nan_cfg = dir_ / "nan.cfg";
    {
        std::ifstream base(config_);
        std::ofstream out(nan_cfg);
        out << base.rdbuf();
        out << "stage2.lr = 1e30\nstage2.epochs = 3\n";
    }
    const int code = run_cli("train --config " + nan_cfg.string() + " --out " +
                             (dir_ / "nan_run").string());
    EXPECT_EQ(code, 4);
}
