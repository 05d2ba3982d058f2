#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qzo/optimizer.hpp"
#include "qzo/zo.hpp"

namespace qzo {

struct RunConfig {
    std::string command;   // train | select-block | profile | grad-check | eval
    std::string model_path;
    std::string data_path;
    std::string out_dir;
    uint32_t seed = 1;

    TrainConfig train;
    PerturbConfig perturb;

    bool select_enabled = false;
    double select_heldout_frac = 0.2;
    int select_batch_size = 8;
    double select_lr = 0.01;

    int profile_n = 1;
    int profile_q = 100;

    int gradcheck_batch_size = 8;

    void validate() const;  // throws with the offending key/path
};

// Flat key=value file with [section] headers; '#' starts a comment. Unknown
// keys are rejected by name.
void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value);
void load_config_file(RunConfig& cfg, const std::string& path);

PerturbMode parse_perturb_mode(const std::string& s);
const char* perturb_mode_name(PerturbMode m);

// Runs one command; returns the process exit status. All artifacts go under
// cfg.out_dir (created if missing).
int cli_run(const RunConfig& cfg);

}  // namespace qzo
