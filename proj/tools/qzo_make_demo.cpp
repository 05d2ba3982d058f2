#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qzo/model.hpp"

namespace {

// Linearly separable 2-class task on [0,1]^dim. The labeling hyperplane is
// drawn from `task_seed` so train/test splits share the same task.
qzo::Dataset make_synthetic(int n, int dim, uint32_t task_seed, uint32_t sample_seed) {
    qzo::Dataset ds;
    ds.n = n;
    ds.ch = dim;
    ds.h = 1;
    ds.w = 1;
    ds.x.resize(static_cast<size_t>(n) * dim);
    ds.labels.resize(static_cast<size_t>(n));
    std::vector<float> hyper(static_cast<size_t>(dim));
    {
        std::mt19937 task_gen(task_seed);
        std::normal_distribution<float> nd(0.0f, 1.0f);
        for (auto& h : hyper) h = nd(task_gen);
    }
    std::mt19937 gen(sample_seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (int i = 0; i < n; ++i) {
        float dot = 0.0f;
        for (int j = 0; j < dim; ++j) {
            const float v = u(gen);
            ds.x[static_cast<size_t>(i) * dim + static_cast<size_t>(j)] = v;
            dot += hyper[static_cast<size_t>(j)] * (v - 0.5f);
        }
        ds.labels[static_cast<size_t>(i)] = dot > 0.0f ? 1 : 0;
    }
    return ds;
}

qzo::FpModel make_mlp(const std::vector<int>& widths, uint32_t seed) {
    qzo::FpModel fp;
    fp.in_ch = widths.front();
    fp.num_classes = widths.back();
    std::mt19937 gen(seed);
    for (size_t i = 0; i + 1 < widths.size(); ++i) {
        qzo::FpLayer l;
        l.kind = qzo::LayerKind::FullyConnected;
        l.act = i + 2 < widths.size() ? qzo::Activation::Relu : qzo::Activation::Identity;
        l.in_ch = widths[i];
        l.out_ch = widths[i + 1];
        std::normal_distribution<float> nd(0.0f, 1.0f / std::sqrt(static_cast<float>(l.in_ch)));
        l.weights.resize(static_cast<size_t>(l.out_ch) * l.in_ch);
        l.bias.assign(static_cast<size_t>(l.out_ch), 0.0f);
        for (auto& w : l.weights) w = nd(gen);
        fp.layers.push_back(l);
    }
    return fp;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Writes a demo checkpoint, synthetic datasets, and a config"};
    std::string out = "demo";
    unsigned long long seed = 7;
    app.add_option("--out", out, "output directory");
    app.add_option("--seed", seed, "generator seed");
    CLI11_PARSE(app, argc, argv);

    std::filesystem::create_directories(out);
    const int dim = 16;
    const qzo::Dataset train = make_synthetic(256, dim, static_cast<uint32_t>(seed), static_cast<uint32_t>(seed) + 100);
    const qzo::Dataset test = make_synthetic(64, dim, static_cast<uint32_t>(seed), static_cast<uint32_t>(seed) + 101);

    const qzo::FpModel fp = make_mlp({dim, 48, 24, 2}, static_cast<uint32_t>(seed) + 2);
    qzo::QModel model = qzo::ptq_calibrate(fp, train.x, train.n);
    qzo::assign_blocks(model, 3);

    qzo::checkpoint_save(model, out + "/model.qzot");
    qzo::dataset_save_qds(train, out + "/train.qds");
    qzo::dataset_save_qds(test, out + "/test.qds");

    const std::string abs = std::filesystem::absolute(out).string();
    std::ofstream cfg(out + "/config.cfg");
    cfg << "[run]\ncommand = train\n"
        << "model = " << abs << "/model.qzot\n"
        << "data = " << abs << "/train.qds\n"
        << "out = " << abs << "/out\n"
        << "seed = 42\n\n"
        << "[train]\nlr = 0.2\nepochs = 20\nbatch_size = 16\ngrad_accum = 1\n"
        << "queries = 60\n\n"
        << "[perturb]\nmode = adaptive\n\n"
        << "[select]\nenabled = false\nlr = 0.2\nbatch_size = 16\n";
    cfg.close();

    std::printf("wrote %s/{model.qzot,train.qds,test.qds,config.cfg}\n", out.c_str());
    return 0;
}
