#pragma once

#include <string>
#include <vector>

#include "qzo/model.hpp"
#include "qzo/zo.hpp"

namespace qzo {

struct BlockTrial {
    int block = -1;
    double acc_before = 0.0;
    double acc_after = 0.0;
    double gain = 0.0;
};

struct SelectionReport {
    std::vector<BlockTrial> trials;
    int chosen_block = -1;
    int64_t forward_evals = 0;

    std::string to_csv() const;
};

struct SelectConfig {
    PerturbConfig perturb;
    double lr = 0.01;
    int batch_size = 8;
};

// Freezes every parameterized layer outside `block`; block -1 unfreezes all.
// Rejects blocks that contain no trainable parameters.
void set_trainable(QModel& model, int block);

// Top-1 accuracy over the given dataset indices.
double eval_accuracy(const QModel& model, const Dataset& ds,
                     const std::vector<int>& indices);

// Deterministic stratified split: ~`heldout_frac` of each label class goes to
// the held-out set, the rest to training. Order within each part follows the
// dataset order.
void stratified_split(const Dataset& ds, double heldout_frac,
                      std::vector<int>& train_idx, std::vector<int>& heldout_idx);

// One epoch of BP-free training for each block on a clone of `model`, scored
// by held-out accuracy gain. Argmax gain, ties to the lowest block index.
SelectionReport select_block(const QModel& model, const Dataset& ds,
                             const std::vector<int>& train_idx,
                             const std::vector<int>& heldout_idx,
                             const SelectConfig& cfg);

}  // namespace qzo
