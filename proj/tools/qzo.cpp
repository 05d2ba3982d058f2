#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qzo/config.hpp"

int main(int argc, char** argv) {
    CLI::App app{"BP-free INT8 zeroth-order training engine"};

    std::string config_path, command, model_path, data_path, out_dir;
    unsigned long long seed = 0;
    std::vector<std::string> overrides;

    app.add_option("--config", config_path, "key=value config file");
    app.add_option("--command", command,
                   "train | select-block | profile | grad-check | eval");
    app.add_option("--model", model_path, "checkpoint path");
    app.add_option("--data", data_path, "dataset path (QDS1 or CSV)");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed, "nonzero 32-bit seed");
    app.add_option("--set", overrides, "config override, key=value")
        ->take_all();

    CLI11_PARSE(app, argc, argv);

    try {
        qzo::RunConfig cfg;
        if (!config_path.empty()) qzo::load_config_file(cfg, config_path);
        // Flags win over the config file.
        if (!command.empty()) cfg.command = command;
        if (!model_path.empty()) cfg.model_path = model_path;
        if (!data_path.empty()) cfg.data_path = data_path;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (seed != 0) {
            if (seed > 0xffffffffULL) throw std::invalid_argument("--seed out of range");
            cfg.seed = static_cast<uint32_t>(seed);
        }
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) {
                throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
            }
            qzo::apply_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }
        return qzo::cli_run(cfg);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
