#include "qzo/sparse.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace qzo {

std::string SelectionReport::to_csv() const {
    std::string out = "block,acc_before,acc_after,gain\n";
    char line[128];
    for (const auto& t : trials) {
        std::snprintf(line, sizeof(line), "%d,%.6f,%.6f,%.6f\n", t.block,
                      t.acc_before, t.acc_after, t.gain);
        out += line;
    }
    return out;
}

void set_trainable(QModel& model, int block) {
    if (block == -1) {
        for (auto& layer : model.layers) layer.frozen = false;
        return;
    }
    if (block < 0 || block >= model.num_blocks()) {
        throw std::invalid_argument("set_trainable: invalid block id " +
                                    std::to_string(block));
    }
    int64_t params = 0;
    for (size_t i = 0; i < model.layers.size(); ++i) {
        if (model.block_of[i] == block) params += model.layers[i].d_w();
    }
    if (params == 0) {
        throw std::invalid_argument("set_trainable: block " + std::to_string(block) +
                                    " has no trainable parameters");
    }
    for (size_t i = 0; i < model.layers.size(); ++i) {
        if (!model.layers[i].has_params()) continue;
        model.layers[i].frozen = model.block_of[i] != block;
    }
}

double eval_accuracy(const QModel& model, const Dataset& ds,
                     const std::vector<int>& indices) {
    if (indices.empty()) throw std::invalid_argument("eval_accuracy: empty index set");
    const Batch batch = make_batch(model, ds, indices);
    const ForwardResult fr = forward(model, batch);
    const int c = model.num_classes;
    int correct = 0;
    for (size_t s = 0; s < indices.size(); ++s) {
        int best = 0;
        for (int j = 1; j < c; ++j) {
            if (fr.logits[s * c + static_cast<size_t>(j)] > fr.logits[s * c + static_cast<size_t>(best)]) {
                best = j;
            }
        }
        if (best == batch.labels[s]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(indices.size());
}

void stratified_split(const Dataset& ds, double heldout_frac,
                      std::vector<int>& train_idx, std::vector<int>& heldout_idx) {
    if (!(heldout_frac > 0.0 && heldout_frac < 1.0)) {
        throw std::invalid_argument("stratified_split: fraction must be in (0, 1)");
    }
    train_idx.clear();
    heldout_idx.clear();
    std::map<int, std::vector<int>> by_label;
    for (int i = 0; i < ds.n; ++i) by_label[ds.labels[static_cast<size_t>(i)]].push_back(i);
    for (auto& [label, idx] : by_label) {
        size_t held = static_cast<size_t>(heldout_frac * static_cast<double>(idx.size()));
        if (held == 0 && idx.size() > 1) held = 1;
        // Every heldout_stride-th element goes to the held-out set so both
        // parts keep the dataset ordering.
        const size_t stride = held > 0 ? idx.size() / held : idx.size() + 1;
        size_t taken = 0;
        for (size_t j = 0; j < idx.size(); ++j) {
            if (taken < held && j % stride == stride - 1) {
                heldout_idx.push_back(idx[j]);
                ++taken;
            } else {
                train_idx.push_back(idx[j]);
            }
        }
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(heldout_idx.begin(), heldout_idx.end());
    if (train_idx.empty() || heldout_idx.empty()) {
        throw std::invalid_argument("stratified_split: degenerate split");
    }
}

SelectionReport select_block(const QModel& model, const Dataset& ds,
                             const std::vector<int>& train_idx,
                             const std::vector<int>& heldout_idx,
                             const SelectConfig& cfg) {
    if (train_idx.empty() || heldout_idx.empty()) {
        throw std::invalid_argument("select_block: empty subset");
    }
    cfg.perturb.check();
    const int k = model.num_blocks();
    if (k < 1) throw std::invalid_argument("select_block: model has no blocks");

    SelectionReport report;
    const double acc_before = eval_accuracy(model, ds, heldout_idx);
    report.forward_evals += static_cast<int64_t>(heldout_idx.size());

    for (int b = 0; b < k; ++b) {
        QModel trial = model;
        try {
            set_trainable(trial, b);
        } catch (const std::invalid_argument&) {
            continue;  // parameterless block
        }
        const int bs = std::min<int>(cfg.batch_size, static_cast<int>(train_idx.size()));
        int64_t step = 0;
        const int64_t steps_total =
            (static_cast<int64_t>(train_idx.size()) + bs - 1) / bs;
        for (size_t off = 0; off < train_idx.size(); off += static_cast<size_t>(bs)) {
            std::vector<int> idx(train_idx.begin() + static_cast<ptrdiff_t>(off),
                                 train_idx.begin() +
                                     static_cast<ptrdiff_t>(std::min(off + static_cast<size_t>(bs),
                                                                     train_idx.size())));
            const Batch batch = make_batch(trial, ds, idx);
            const double eta = cosine_lr(step, steps_total, cfg.lr);
            const StepReport sr =
                train_step(trial, batch, cfg.perturb, eta, batch.n(), step);
            report.forward_evals += sr.forward_evals;
            ++step;
        }
        BlockTrial t;
        t.block = b;
        t.acc_before = acc_before;
        t.acc_after = eval_accuracy(trial, ds, heldout_idx);
        report.forward_evals += static_cast<int64_t>(heldout_idx.size());
        t.gain = t.acc_after - t.acc_before;
        report.trials.push_back(t);
    }
    if (report.trials.empty()) {
        throw std::invalid_argument("select_block: no block with trainable parameters");
    }
    int best = 0;
    for (size_t i = 1; i < report.trials.size(); ++i) {
        if (report.trials[i].gain > report.trials[static_cast<size_t>(best)].gain) {
            best = static_cast<int>(i);
        }
    }
    report.chosen_block = report.trials[static_cast<size_t>(best)].block;
    return report;
}

}  // namespace qzo
