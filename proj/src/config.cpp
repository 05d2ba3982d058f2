#include "qzo/config.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "qzo/oracle.hpp"
#include "qzo/prng.hpp"
#include "qzo/profiler.hpp"
#include "qzo/sparse.hpp"

namespace qzo {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

long long parse_int(const std::string& key, const std::string& value) {
    size_t pos = 0;
    long long v;
    try {
        v = std::stoll(value, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' has non-integer value '" +
                                    value + "'");
    }
    if (pos != value.size()) {
        throw std::invalid_argument("config: key '" + key + "' has non-integer value '" +
                                    value + "'");
    }
    return v;
}

double parse_float(const std::string& key, const std::string& value) {
    size_t pos = 0;
    double v;
    try {
        v = std::stod(value, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' has non-numeric value '" +
                                    value + "'");
    }
    if (pos != value.size()) {
        throw std::invalid_argument("config: key '" + key + "' has non-numeric value '" +
                                    value + "'");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw std::invalid_argument("config: key '" + key + "' has non-boolean value '" +
                                value + "'");
}

void shuffle_indices(std::vector<int>& idx, uint32_t seed) {
    XorShift32 gen(seed == 0 ? 1u : seed);
    for (size_t i = idx.size(); i > 1; --i) {
        const size_t j = gen.next() % i;
        std::swap(idx[i - 1], idx[j]);
    }
}

std::string modes_from_estimate(const QModel& model, const GradEstimate& est) {
    std::string s;
    for (size_t i = 0; i < model.layers.size(); ++i) {
        if (i) s += '+';
        if (est.modes[i] == static_cast<int>(LayerMode::WP)) s += "WP";
        else if (est.modes[i] == static_cast<int>(LayerMode::NP)) s += "NP";
        else s += model.layers[i].has_params() ? "frozen" : "pool";
    }
    return s;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
    if (!out.good()) throw std::runtime_error("write failed for " + path);
}

}  // namespace

PerturbMode parse_perturb_mode(const std::string& s) {
    if (s == "model-wp") return PerturbMode::ModelWP;
    if (s == "layer-wp") return PerturbMode::LayerWP;
    if (s == "layer-np") return PerturbMode::LayerNP;
    if (s == "adaptive") return PerturbMode::Adaptive;
    throw std::invalid_argument("config: unknown perturb.mode '" + s + "'");
}

const char* perturb_mode_name(PerturbMode m) {
    switch (m) {
        case PerturbMode::ModelWP: return "model-wp";
        case PerturbMode::LayerWP: return "layer-wp";
        case PerturbMode::LayerNP: return "layer-np";
        case PerturbMode::Adaptive: return "adaptive";
    }
    return "?";
}

void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "run.command") cfg.command = value;
    else if (key == "run.model") cfg.model_path = value;
    else if (key == "run.data") cfg.data_path = value;
    else if (key == "run.out") cfg.out_dir = value;
    else if (key == "run.seed") {
        const long long v = parse_int(key, value);
        if (v <= 0 || v > 0xffffffffLL) {
            throw std::invalid_argument("config: key 'run.seed' out of range");
        }
        cfg.seed = static_cast<uint32_t>(v);
    } else if (key == "train.lr") cfg.train.lr = parse_float(key, value);
    else if (key == "train.epochs") cfg.train.epochs = static_cast<int>(parse_int(key, value));
    else if (key == "train.batch_size") cfg.train.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "train.grad_accum") cfg.train.grad_accum = static_cast<int>(parse_int(key, value));
    else if (key == "train.queries") cfg.train.queries = static_cast<int>(parse_int(key, value));
    else if (key == "train.scope_block") cfg.train.scope_block = static_cast<int>(parse_int(key, value));
    else if (key == "perturb.mode") cfg.perturb.mode = parse_perturb_mode(value);
    else if (key == "perturb.mu") cfg.perturb.mu = static_cast<int>(parse_int(key, value));
    else if (key == "perturb.share_wp_across_batch")
        cfg.perturb.share_wp_across_batch = parse_bool(key, value);
    else if (key == "perturb.per_sample_np") cfg.perturb.per_sample_np = parse_bool(key, value);
    else if (key == "select.enabled") cfg.select_enabled = parse_bool(key, value);
    else if (key == "select.heldout_frac") cfg.select_heldout_frac = parse_float(key, value);
    else if (key == "select.batch_size") cfg.select_batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "select.lr") cfg.select_lr = parse_float(key, value);
    else if (key == "profile.n") cfg.profile_n = static_cast<int>(parse_int(key, value));
    else if (key == "profile.q") cfg.profile_q = static_cast<int>(parse_int(key, value));
    else if (key == "gradcheck.batch_size")
        cfg.gradcheck_batch_size = static_cast<int>(parse_int(key, value));
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw std::invalid_argument("config: malformed section at line " +
                                            std::to_string(lineno));
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config: missing '=' at line " +
                                        std::to_string(lineno));
        }
        std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!section.empty()) key = section + "." + key;
        apply_config_key(cfg, key, value);
    }
}

void RunConfig::validate() const {
    static const char* commands[] = {"train", "select-block", "profile", "grad-check",
                                     "eval"};
    if (std::find(std::begin(commands), std::end(commands), command) ==
        std::end(commands)) {
        throw std::invalid_argument("config: unknown command '" + command + "'");
    }
    if (seed == 0) throw std::invalid_argument("config: run.seed must be nonzero");
    if (model_path.empty()) throw std::invalid_argument("config: run.model is required");
    if (!std::filesystem::exists(model_path)) {
        throw std::runtime_error("config: model path '" + model_path + "' does not exist");
    }
    const bool needs_data = command != "profile";
    if (needs_data) {
        if (data_path.empty()) throw std::invalid_argument("config: run.data is required");
        if (!std::filesystem::exists(data_path)) {
            throw std::runtime_error("config: data path '" + data_path +
                                     "' does not exist");
        }
    }
    if (command != "eval" && out_dir.empty()) {
        throw std::invalid_argument("config: run.out is required for command '" +
                                    command + "'");
    }
    if (train.epochs < 1 || train.batch_size < 1 || train.grad_accum < 1 ||
        train.queries < 1) {
        throw std::invalid_argument("config: train.* values must be >= 1");
    }
}

namespace {

int run_train(const RunConfig& cfg) {
    QModel model = checkpoint_load(cfg.model_path);
    const Dataset ds = dataset_load(cfg.data_path);

    int block = cfg.train.scope_block;
    std::string selection_csv;
    if (cfg.select_enabled) {
        std::vector<int> tr, held;
        stratified_split(ds, cfg.select_heldout_frac, tr, held);
        SelectConfig scfg;
        scfg.perturb = cfg.perturb;
        scfg.perturb.base_seed = cfg.seed;
        scfg.perturb.queries = cfg.train.queries;
        scfg.lr = cfg.select_lr;
        scfg.batch_size = cfg.select_batch_size;
        const SelectionReport sel = select_block(model, ds, tr, held, scfg);
        selection_csv = sel.to_csv();
        block = sel.chosen_block;
    }
    if (block >= 0) set_trainable(model, block);

    PerturbConfig pcfg = cfg.perturb;
    pcfg.base_seed = cfg.seed;
    pcfg.queries = cfg.train.queries;
    pcfg.check();

    std::vector<int> order(static_cast<size_t>(ds.n));
    for (int i = 0; i < ds.n; ++i) order[static_cast<size_t>(i)] = i;

    const int bs = std::min(cfg.train.batch_size, ds.n);
    const int64_t micro_per_epoch = (ds.n + bs - 1) / bs;
    const int64_t updates_per_epoch =
        (micro_per_epoch + cfg.train.grad_accum - 1) / cfg.train.grad_accum;
    const int64_t updates_total = updates_per_epoch * cfg.train.epochs;

    std::string metrics = "iteration,epoch,loss,lr,forwards,mode,block,wall_ms\n";
    char line[256];
    int64_t micro = 0, update = 0;

    for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        std::vector<int> epoch_order = order;
        shuffle_indices(epoch_order, cfg.seed ^ (static_cast<uint32_t>(epoch) * 2654435761u));
        size_t off = 0;
        while (off < epoch_order.size()) {
            const double eta = cosine_lr(update, updates_total, cfg.train.lr);
            if (cfg.train.grad_accum == 1) {
                std::vector<int> idx(epoch_order.begin() + static_cast<ptrdiff_t>(off),
                                     epoch_order.begin() +
                                         static_cast<ptrdiff_t>(std::min(
                                             off + static_cast<size_t>(bs),
                                             epoch_order.size())));
                off += idx.size();
                const Batch batch = make_batch(model, ds, idx);
                const StepReport sr =
                    train_step(model, batch, pcfg, eta, batch.n(), micro);
                std::snprintf(line, sizeof(line), "%lld,%d,%.6f,%.6g,%lld,%s,%d,%.3f\n",
                              static_cast<long long>(micro), epoch, sr.clean_loss, eta,
                              static_cast<long long>(sr.forward_evals),
                              sr.modes_string().c_str(), block, sr.wall_ms);
                metrics += line;
                ++micro;
                ++update;
            } else {
                // Accumulate up to grad_accum micro-batch estimates, then one
                // update scaled by the combined sample count.
                GradEstimate acc;
                int n_total = 0, micro_count = 0;
                while (micro_count < cfg.train.grad_accum && off < epoch_order.size()) {
                    std::vector<int> idx(
                        epoch_order.begin() + static_cast<ptrdiff_t>(off),
                        epoch_order.begin() + static_cast<ptrdiff_t>(std::min(
                                                  off + static_cast<size_t>(bs),
                                                  epoch_order.size())));
                    off += idx.size();
                    const Batch batch = make_batch(model, ds, idx);
                    const auto t0 = std::chrono::steady_clock::now();
                    double clean = 0.0;
                    GradEstimate est =
                        estimate_step_grads(model, batch, pcfg, micro, &clean);
                    const double wall =
                        std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
                    if (micro_count == 0) {
                        acc = est;
                    } else {
                        for (size_t i = 0; i < est.layers.size(); ++i) {
                            for (size_t j = 0; j < est.layers[i].w.size(); ++j)
                                acc.layers[i].w[j] += est.layers[i].w[j];
                            for (size_t j = 0; j < est.layers[i].b.size(); ++j)
                                acc.layers[i].b[j] += est.layers[i].b[j];
                        }
                        acc.forward_evals += est.forward_evals;
                    }
                    n_total += batch.n();
                    std::snprintf(line, sizeof(line),
                                  "%lld,%d,%.6f,%.6g,%lld,%s,%d,%.3f\n",
                                  static_cast<long long>(micro), epoch, clean, eta,
                                  static_cast<long long>(est.forward_evals),
                                  modes_from_estimate(model, est).c_str(), block, wall);
                    metrics += line;
                    ++micro;
                    ++micro_count;
                }
                for (auto& lg : acc.layers) {
                    for (auto& v : lg.w) v /= micro_count;
                    for (auto& v : lg.b) v /= micro_count;
                }
                apply_step_update(model, acc, eta, n_total);
                ++update;
            }
        }
    }

    std::filesystem::create_directories(cfg.out_dir);
    write_file(cfg.out_dir + "/metrics.csv", metrics);
    if (!selection_csv.empty()) write_file(cfg.out_dir + "/selection.csv", selection_csv);
    checkpoint_save(model, cfg.out_dir + "/model_final.qzot");
    return 0;
}

int run_select(const RunConfig& cfg) {
    QModel model = checkpoint_load(cfg.model_path);
    const Dataset ds = dataset_load(cfg.data_path);
    std::vector<int> tr, held;
    stratified_split(ds, cfg.select_heldout_frac, tr, held);
    SelectConfig scfg;
    scfg.perturb = cfg.perturb;
    scfg.perturb.base_seed = cfg.seed;
    scfg.perturb.queries = cfg.train.queries;
    scfg.lr = cfg.select_lr;
    scfg.batch_size = cfg.select_batch_size;
    const SelectionReport sel = select_block(model, ds, tr, held, scfg);
    std::filesystem::create_directories(cfg.out_dir);
    write_file(cfg.out_dir + "/selection.csv", sel.to_csv());
    std::printf("chosen_block=%d\n", sel.chosen_block);
    return 0;
}

int run_profile(const RunConfig& cfg) {
    const QModel model = checkpoint_load(cfg.model_path);
    const ProfileReport report = profile_model(model, cfg.profile_n, cfg.profile_q);
    std::filesystem::create_directories(cfg.out_dir);
    write_file(cfg.out_dir + "/profile.csv", report.to_csv());
    std::fputs(report.to_table().c_str(), stdout);
    return 0;
}

int run_grad_check(const RunConfig& cfg) {
    QModel model = checkpoint_load(cfg.model_path);
    const Dataset ds = dataset_load(cfg.data_path);
    const int n = std::min(cfg.gradcheck_batch_size, ds.n);
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    const Batch batch = make_batch(model, ds, idx);

    const FpModel fp = dequantize_model(model);
    std::vector<float> fx(batch.inputs.data.size());
    for (size_t i = 0; i < fx.size(); ++i) {
        fx[i] = batch.inputs.scale * static_cast<float>(batch.inputs.data[i]);
    }
    const FpGrads bp = bp_grad_fp(fp, fx, n, batch.labels);

    PerturbConfig pcfg = cfg.perturb;
    pcfg.base_seed = cfg.seed;
    pcfg.queries = cfg.train.queries;
    const GradEstimate est = estimate_step_grads(model, batch, pcfg, 0);

    std::string csv = "layer,mode,queries,cosine\n";
    char line[128];
    for (size_t i = 0; i < model.layers.size(); ++i) {
        if (est.modes[i] < 0) continue;
        const LayerSpec& layer = model.layers[i];
        // BP gradients mapped into the quantized parameter domain.
        std::vector<double> ref;
        ref.reserve(bp.w[i].size() + bp.b[i].size());
        for (double g : bp.w[i]) ref.push_back(g * layer.s_w);
        for (double g : bp.b[i]) ref.push_back(g * static_cast<double>(layer.s_w) * layer.s_x);
        std::vector<double> zo;
        zo.reserve(ref.size());
        zo.insert(zo.end(), est.layers[i].w.begin(), est.layers[i].w.end());
        zo.insert(zo.end(), est.layers[i].b.begin(), est.layers[i].b.end());
        const double cs = cosine_similarity(zo, ref);
        const char* mode =
            est.modes[i] == static_cast<int>(LayerMode::NP) ? "NP" : "WP";
        std::snprintf(line, sizeof(line), "%zu,%s,%d,%.6f\n", i, mode,
                      est.layer_queries[i], cs);
        csv += line;
        std::fputs(line, stdout);
    }
    std::filesystem::create_directories(cfg.out_dir);
    write_file(cfg.out_dir + "/gradcheck.csv", csv);
    return 0;
}

int run_eval(const RunConfig& cfg) {
    const QModel model = checkpoint_load(cfg.model_path);
    const Dataset ds = dataset_load(cfg.data_path);
    std::vector<int> idx(static_cast<size_t>(ds.n));
    for (int i = 0; i < ds.n; ++i) idx[static_cast<size_t>(i)] = i;
    const double acc = eval_accuracy(model, ds, idx);
    std::printf("accuracy=%.6f\n", acc);
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        char buf[64];
        std::snprintf(buf, sizeof(buf), "accuracy=%.6f\n", acc);
        write_file(cfg.out_dir + "/eval.txt", buf);
    }
    return 0;
}

}  // namespace

int cli_run(const RunConfig& cfg) {
    cfg.validate();
    if (cfg.command == "train") return run_train(cfg);
    if (cfg.command == "select-block") return run_select(cfg);
    if (cfg.command == "profile") return run_profile(cfg);
    if (cfg.command == "grad-check") return run_grad_check(cfg);
    return run_eval(cfg);
}

}  // namespace qzo
