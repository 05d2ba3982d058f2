#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "helpers.hpp"
#include "qzo/config.hpp"
#include "qzo/model.hpp"
#include "qzo/sparse.hpp"

using namespace qzo;
namespace fs = std::filesystem;

namespace {

struct Workspace {
    fs::path root;

    Workspace() {
        root = fs::temp_directory_path() /
               ("qzo_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(root);
        auto toy = testutil::quantized_mlp({8, 12, 12, 12, 2}, 64, 61);
        assign_blocks(toy.model, 4);
        checkpoint_save(toy.model, (root / "model.qzot").string());
        dataset_save_qds(toy.train, (root / "train.qds").string());
    }
    ~Workspace() { fs::remove_all(root); }

    std::string path(const char* name) const { return (root / name).string(); }
};

std::string read_file(const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string strip_wall_ms(const std::string& csv) {
    std::istringstream in(csv);
    std::string line, out;
    while (std::getline(in, line)) {
        out += line.substr(0, line.rfind(','));
        out += '\n';
    }
    return out;
}

RunConfig base_config(const Workspace& ws, const char* command, const char* out) {
    RunConfig cfg;
    cfg.command = command;
    cfg.model_path = ws.path("model.qzot");
    cfg.data_path = ws.path("train.qds");
    cfg.out_dir = ws.path(out);
    cfg.seed = 42;
    cfg.train.lr = 0.05;
    cfg.train.epochs = 1;
    cfg.train.batch_size = 16;
    cfg.train.queries = 12;
    return cfg;
}

}  // namespace

TEST_CASE("unknown config keys are rejected by name") {
    RunConfig cfg;
    CHECK_THROWS_WITH_AS(apply_config_key(cfg, "train.learnig_rate", "0.1"),
                         doctest::Contains("learnig_rate"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(apply_config_key(cfg, "nonsense", "1"),
                         doctest::Contains("nonsense"), std::invalid_argument);
    CHECK_THROWS_AS(apply_config_key(cfg, "train.lr", "abc"), std::invalid_argument);
    CHECK_THROWS_AS(apply_config_key(cfg, "perturb.mode", "sideways"),
                    std::invalid_argument);
}

TEST_CASE("config file parsing with sections and comments") {
    const fs::path p = fs::temp_directory_path() / "qzo_cfg_test.cfg";
    {
        std::ofstream f(p);
        f << "# comment\n[run]\nseed = 7\n\n[train]\nlr = 0.25  # trailing\n"
          << "epochs = 3\n\n[perturb]\nmode = layer-np\n";
    }
    RunConfig cfg;
    load_config_file(cfg, p.string());
    CHECK(cfg.seed == 7);
    CHECK(cfg.train.lr == doctest::Approx(0.25));
    CHECK(cfg.train.epochs == 3);
    CHECK(cfg.perturb.mode == PerturbMode::LayerNP);
    fs::remove(p);

    {
        std::ofstream f(p);
        f << "[train]\nlearnig_rate = 0.1\n";
    }
    RunConfig bad;
    CHECK_THROWS_WITH_AS(load_config_file(bad, p.string()),
                         doctest::Contains("learnig_rate"), std::invalid_argument);
    fs::remove(p);
}

TEST_CASE("validate names missing paths and rejects bad commands") {
    RunConfig cfg;
    cfg.command = "fly";
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("fly"),
                         std::invalid_argument);
    cfg.command = "train";
    cfg.model_path = "/nonexistent/model.qzot";
    cfg.data_path = "x";
    cfg.out_dir = "y";
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("/nonexistent/model.qzot"),
                         std::runtime_error);
}

TEST_CASE("train is deterministic: identical checkpoints and metrics") {
    Workspace ws;
    RunConfig a = base_config(ws, "train", "out_a");
    RunConfig b = base_config(ws, "train", "out_b");
    CHECK(cli_run(a) == 0);
    CHECK(cli_run(b) == 0);
    const std::string ca = read_file(ws.path("out_a/model_final.qzot"));
    const std::string cb = read_file(ws.path("out_b/model_final.qzot"));
    CHECK(!ca.empty());
    CHECK(ca == cb);
    const std::string ma = read_file(ws.path("out_a/metrics.csv"));
    const std::string mb = read_file(ws.path("out_b/metrics.csv"));
    CHECK(ma.rfind("iteration,epoch,loss,lr,forwards,mode,block,wall_ms\n", 0) == 0);
    CHECK(strip_wall_ms(ma) == strip_wall_ms(mb));

    // A different seed changes the outcome.
    RunConfig c = base_config(ws, "train", "out_c");
    c.seed = 43;
    CHECK(cli_run(c) == 0);
    CHECK(read_file(ws.path("out_c/model_final.qzot")) != ca);
}

TEST_CASE("train with gradient accumulation and selection completes") {
    Workspace ws;
    RunConfig cfg = base_config(ws, "train", "out_acc");
    cfg.train.grad_accum = 2;
    cfg.select_enabled = true;
    cfg.select_batch_size = 16;
    CHECK(cli_run(cfg) == 0);
    CHECK(fs::exists(ws.path("out_acc/selection.csv")));
    CHECK(fs::exists(ws.path("out_acc/metrics.csv")));
    CHECK(fs::exists(ws.path("out_acc/model_final.qzot")));
    // The trained model must be loadable and restricted to the chosen block.
    const QModel m = checkpoint_load(ws.path("out_acc/model_final.qzot"));
    int frozen = 0;
    for (const auto& l : m.layers) frozen += l.frozen ? 1 : 0;
    CHECK(frozen == 3);  // 4 blocks, 1 trainable
}

TEST_CASE("select-block, profile, grad-check, eval artifacts") {
    Workspace ws;
    RunConfig sel = base_config(ws, "select-block", "out_sel");
    CHECK(cli_run(sel) == 0);
    const std::string selection = read_file(ws.path("out_sel/selection.csv"));
    CHECK(selection.rfind("block,acc_before,acc_after,gain\n", 0) == 0);

    RunConfig prof = base_config(ws, "profile", "out_prof");
    prof.profile_n = 2;
    prof.profile_q = 6;
    CHECK(cli_run(prof) == 0);
    CHECK(read_file(ws.path("out_prof/profile.csv"))
              .rfind("method,memory_elems,memory_bytes,forward_evals,macs\n", 0) == 0);

    RunConfig gc = base_config(ws, "grad-check", "out_gc");
    gc.train.queries = 200;
    CHECK(cli_run(gc) == 0);
    const std::string gcsv = read_file(ws.path("out_gc/gradcheck.csv"));
    CHECK(gcsv.rfind("layer,mode,queries,cosine\n", 0) == 0);
    // One row per trainable layer.
    CHECK(std::count(gcsv.begin(), gcsv.end(), '\n') == 5);

    RunConfig ev = base_config(ws, "eval", "out_eval");
    CHECK(cli_run(ev) == 0);
    CHECK(read_file(ws.path("out_eval/eval.txt")).rfind("accuracy=", 0) == 0);
}
