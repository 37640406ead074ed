#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "attnbasin/block_stats.hpp"
#include "attnbasin/dump_io.hpp"
#include "attnbasin/error.hpp"
#include "attnbasin/harness.hpp"
#include "attnbasin/layer_scope.hpp"
#include "attnbasin/profiler.hpp"
#include "attnbasin/reranker.hpp"
#include "attnbasin/rng.hpp"
#include "attnbasin/serialization.hpp"
#include "attnbasin/theory_lab.hpp"

namespace attnbasin::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// An input path that does not exist or holds nothing usable: exit 1.
class MissingInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Flag combination rejected after parsing: exit 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// JSON config files. Keys of the section named after the active subcommand
// (nested objects for nested subcommands) become option values; explicit
// flags on the command line take precedence.
class JsonConfig : public CLI::Config {
public:
    explicit JsonConfig(const CLI::App* root) : root_(root) {}

    std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json doc;
        try {
            input >> doc;
        } catch (const json::exception& e) {
            throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
        }
        if (!doc.is_object()) throw CLI::ConversionError("config must be a JSON object");

        std::vector<CLI::ConfigItem> items;
        std::vector<std::string> parents;
        const CLI::App* app = root_;
        const json* section = &doc;
        add_scalars(*section, parents, items);
        while (true) {
            const auto subs = app->get_subcommands();
            if (subs.empty()) break;
            app = subs.front();
            parents.push_back(app->get_name());
            auto it = section->find(app->get_name());
            if (it == section->end() || !it->is_object()) break;
            section = &*it;
            add_scalars(*section, parents, items);
        }
        return items;
    }

private:
    static void add_scalars(const json& obj, const std::vector<std::string>& parents,
                            std::vector<CLI::ConfigItem>& items) {
        for (const auto& [key, value] : obj.items()) {
            if (value.is_object()) continue;
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (value.is_array()) {
                for (const json& v : value) item.inputs.push_back(v.is_string() ? v.get<std::string>() : v.dump());
            } else {
                item.inputs.push_back(value.is_string() ? value.get<std::string>() : value.dump());
            }
            items.push_back(std::move(item));
        }
    }

    const CLI::App* root_;
};

template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> workers;
        for (std::size_t w = 0; w < jobs; ++w) {
            workers.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) error = std::current_exception();
                    }
                }
            });
        }
    }
    if (error) std::rethrow_exception(error);
}

std::vector<std::string> list_dumps(const std::vector<std::string>& inputs) {
    std::vector<std::string> files;
    for (const std::string& input : inputs) {
        const fs::path p(input);
        if (!fs::exists(p)) throw MissingInput("input not found: " + input);
        if (fs::is_directory(p)) {
            std::vector<std::string> found;
            for (const auto& entry : fs::directory_iterator(p)) {
                if (entry.is_regular_file() && entry.path().extension() == ".atnb") found.push_back(entry.path().string());
            }
            std::sort(found.begin(), found.end());
            if (found.empty()) throw MissingInput("no .atnb files in " + input);
            files.insert(files.end(), found.begin(), found.end());
        } else {
            files.push_back(p.string());
        }
    }
    return files;
}

std::vector<AttentionDump> load_dumps(const std::vector<std::string>& files, std::size_t jobs) {
    std::vector<AttentionDump> dumps(files.size());
    parallel_for(files.size(), jobs, [&](std::size_t i) {
        try {
            dumps[i] = load_dump(files[i]);
        } catch (const Error& e) {
            throw Error(files[i] + ": " + e.what());
        }
    });
    return dumps;
}

void write_atomic(const std::string& path, const std::string& content) {
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        if (!out) throw Error("cannot write " + tmp.string());
    }
    fs::rename(tmp, target);
}

void emit(const json& doc, const std::string& out_path, std::ostream& out) {
    const std::string text = doc.dump(2) + "\n";
    if (out_path.empty()) {
        out << text;
    } else {
        write_atomic(out_path, text);
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingInput("input not found: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string csv_series(const Eigen::VectorXd& values, const char* index_name) {
    std::ostringstream os;
    os << index_name << ",value\n";
    char buf[64];
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%ld,%.17g\n", static_cast<long>(i + 1), values(i));
        os << buf;
    }
    return os.str();
}

// Generator flags shared by simulate, theory sweep and permute.
struct GeneratorFlags {
    Eigen::Index k = 5;
    Eigen::Index layers = 4;
    double base = 0.0625;
    double beta = 0.125;
    double sigma = 0.0;
    std::vector<double> growth;
    std::size_t tokens_per_block = 8;
    std::size_t template_tokens = 4;
    std::size_t query_tokens = 4;
    double query_mass = 0.125;
    std::size_t heads = 1;
    std::string head_mode = "mean";
    std::string model_id = "synthetic-basin";

    void add_to(CLI::App* app, bool with_layout) {
        app->add_option("--k", k, "number of document blocks")->capture_default_str()->check(CLI::PositiveNumber);
        app->add_option("--layers", layers, "number of layers")->capture_default_str()->check(CLI::PositiveNumber);
        app->add_option("--base", base, "f(p) floor c")->capture_default_str();
        app->add_option("--beta", beta, "f(p) curvature")->capture_default_str();
        app->add_option("--sigma", sigma, "content noise scale")->capture_default_str();
        app->add_option("--growth", growth, "per-layer noise growth g(l), one value per layer")->delimiter(',');
        app->add_option("--query-mass", query_mass, "attention mass on the query span")->capture_default_str();
        if (with_layout) {
            app->add_option("--tokens-per-block", tokens_per_block)->capture_default_str();
            app->add_option("--template-tokens", template_tokens)->capture_default_str();
            app->add_option("--query-tokens", query_tokens)->capture_default_str();
            app->add_option("--heads", heads)->capture_default_str();
            app->add_option("--head-mode", head_mode)->capture_default_str()->check(CLI::IsMember({"mean", "per_head"}));
            app->add_option("--model-id", model_id)->capture_default_str();
        }
    }

    SyntheticBasinParams params(std::uint64_t seed) const {
        SyntheticBasinParams p;
        p.k = k;
        p.num_layers = layers;
        p.f_base = base;
        p.f_curvature = beta;
        p.noise_scale = sigma;
        p.layer_noise_growth = growth;
        p.tokens_per_block = tokens_per_block;
        p.template_tokens = template_tokens;
        p.query_tokens = query_tokens;
        p.query_mass = query_mass;
        p.num_heads = heads;
        p.head_mode = head_mode == "mean" ? HeadMode::mean : HeadMode::per_head;
        p.seed = seed;
        p.model_id = model_id;
        return p;
    }
};

json seed_json(const std::optional<std::uint64_t>& seed) { return seed ? json(*seed) : json(nullptr); }

// ---------------------------------------------------------------- validate

struct ValidateCmd {
    std::vector<std::string> inputs;
    double tolerance = 1e-3;
    std::string out;

    json config() const {
        return {{"subcommand", "validate"}, {"inputs", inputs}, {"tolerance", tolerance}, {"out", out}};
    }

    int run(std::size_t jobs, std::ostream& os) const {
        const auto files = list_dumps(inputs);
        std::vector<json> results(files.size());
        std::vector<bool> ok(files.size(), false);
        parallel_for(files.size(), jobs, [&](std::size_t i) {
            try {
                const ValidationReport r = validate_dump(load_dump(files[i]), tolerance);
                ok[i] = r.pass;
                results[i] = {{"path", files[i]}, {"pass", r.pass}, {"report", validation_to_json(r)}};
            } catch (const Error& e) {
                results[i] = {{"path", files[i]}, {"pass", false}, {"error", e.what()}};
            }
        });
        const bool all = std::all_of(ok.begin(), ok.end(), [](bool b) { return b; });
        emit({{"config", config()}, {"files", results}, {"pass", all}}, out, os);
        return all ? kOk : kFailure;
    }
};

// ---------------------------------------------------------------- profile

struct ProfileCmd {
    std::vector<std::string> inputs;
    Eigen::Index layer = 0;
    bool cross_layer = false;
    std::string aggregation = "token_mean";
    std::string rows = "all";
    std::size_t checkpoint = 50;
    double tau = 1e-4;
    std::size_t patience = 2;
    std::string out;

    json config() const {
        return {{"subcommand", "profile"},
                {"inputs", inputs},
                {"layer_selection", cross_layer ? json("cross-layer-mean") : json(layer)},
                {"aggregation", aggregation},
                {"rows", rows},
                {"checkpoint", checkpoint},
                {"tau", tau},
                {"patience", patience},
                {"out", out}};
    }

    int run(std::size_t jobs, std::ostream& os) const {
        const auto files = list_dumps(inputs);
        const BlockOptions block{parse_aggregation(aggregation),
                                 rows == "last" ? RowSelection::last_row : RowSelection::all_rows};
        const LayerSelection sel = cross_layer ? LayerSelection::all_layers() : LayerSelection::single(layer);

        std::vector<Eigen::VectorXd> scores(files.size());
        std::vector<std::string> model_ids(files.size());
        parallel_for(files.size(), jobs, [&](std::size_t i) {
            try {
                const AttentionDump dump = load_dump(files[i]);
                scores[i] = slot_scores(block_attention(dump, block), sel);
                model_ids[i] = dump.header.model_id;
            } catch (const Error& e) {
                throw Error(files[i] + ": " + e.what());
            }
        });

        ProfileConfig cfg;
        cfg.k = scores.front().size();
        cfg.layer_selection = sel;
        cfg.mode = block.mode;
        cfg.checkpoint_every = checkpoint;
        cfg.model_id = model_ids.front();
        ProfileAccumulator acc(cfg);
        for (std::size_t i = 0; i < scores.size(); ++i) {
            try {
                acc.accumulate(scores[i]);
            } catch (const Error& e) {
                throw Error(files[i] + ": " + e.what());
            }
        }
        const ConvergenceResult conv = check_convergence(acc, tau, patience);
        json doc = profile_to_json(finalize(acc));
        doc["convergence"] = {{"converged", conv.converged},
                              {"n_star", conv.n_star ? json(*conv.n_star) : json(nullptr)},
                              {"tau", tau},
                              {"patience", patience},
                              {"checkpoint_every", checkpoint}};
        doc["config"] = config();
        emit(doc, out, os);
        return kOk;
    }
};

// ---------------------------------------------------------------- basin

struct BasinCmd {
    std::string profile;
    std::string out;

    json config() const { return {{"subcommand", "basin"}, {"profile", profile}, {"out", out}}; }

    int run(std::ostream& os) const {
        const AttentionProfile p = profile_from_json(json::parse(read_file(profile)));
        const BasinReport b = detect_basin(p);
        emit({{"config", config()}, {"model_id", p.model_id}, {"scores", vector_to_json(p.scores)},
              {"basin", basin_to_json(b)}},
             out, os);
        return kOk;
    }
};

// ---------------------------------------------------------------- rerank

struct RerankCmd {
    std::string profile;
    std::string docs;
    std::string strategy = "attnrank";
    std::optional<std::uint64_t> seed;
    bool resample = false;
    std::string out;

    json config() const {
        return {{"subcommand", "rerank"}, {"profile", profile},   {"docs", docs}, {"strategy", strategy},
                {"seed", seed_json(seed)}, {"resample", resample}, {"out", out}};
    }

    int run(std::ostream& os) const {
        const Strategy s = parse_strategy(strategy);
        if (s == Strategy::attnrank && profile.empty()) throw UsageError("--strategy attnrank requires --profile");
        if (s == Strategy::random && !seed) throw UsageError("--strategy random requires --seed");

        std::istringstream doc_stream(read_file(docs));
        const std::vector<ScoredDoc> input = read_docs_jsonl(doc_stream);
        RerankOptions ro;
        ro.seed = seed;
        ro.resample_profile = resample;
        if (!profile.empty()) ro.profile = profile_from_json(json::parse(read_file(profile))).scores;
        const Ordering ord = rerank(input, s, ro);
        json doc = ordering_to_json(ord);
        if (resample && ro.profile && ro.profile->size() != static_cast<Eigen::Index>(input.size())) {
            doc["profile_resampled"] = true;
        }
        doc["config"] = config();
        emit(doc, out, os);
        return kOk;
    }
};

// ---------------------------------------------------------------- layers

struct LayersCmd {
    std::vector<std::string> inputs;
    std::string aggregation = "token_mean";
    std::string rows = "all";
    std::string out;

    json config() const {
        return {{"subcommand", "layers"}, {"inputs", inputs}, {"aggregation", aggregation}, {"rows", rows}, {"out", out}};
    }

    int run(std::size_t jobs, std::ostream& os) const {
        const auto files = list_dumps(inputs);
        const BlockOptions block{parse_aggregation(aggregation),
                                 rows == "last" ? RowSelection::last_row : RowSelection::all_rows};
        std::vector<BlockAttention> blocks(files.size());
        parallel_for(files.size(), jobs, [&](std::size_t i) {
            try {
                blocks[i] = block_attention(load_dump(files[i]), block);
            } catch (const Error& e) {
                throw Error(files[i] + ": " + e.what());
            }
        });
        const PositionStats stats = collect_position_stats(blocks);
        json doc = regime_to_json(variance_ratio(stats));
        doc["n_samples"] = stats.num_samples();
        doc["f_hat_per_layer"] = json::array();
        const Eigen::MatrixXd per_layer = estimate_positional_bias_per_layer(stats);
        for (Eigen::Index l = 0; l < per_layer.rows(); ++l) {
            doc["f_hat_per_layer"].push_back(vector_to_json(per_layer.row(l).transpose()));
        }
        doc["config"] = config();
        emit(doc, out, os);
        return kOk;
    }
};

// ---------------------------------------------------------------- theory

struct TheoryVerifyCmd {
    std::size_t trials = 1000;
    std::optional<std::uint64_t> seed;
    std::string family = "equal";
    std::size_t gradient_configs = 100;
    double step = 1e-5;
    Eigen::Index min_k = 3;
    Eigen::Index max_k = 8;
    double hidden_noise = 0.0;
    std::string out;

    json config() const {
        return {{"subcommand", "theory verify"}, {"trials", trials},
                {"seed", seed_json(seed)},        {"family", family},
                {"gradient_configs", gradient_configs}, {"step", step},
                {"min_k", min_k},                 {"max_k", max_k},
                {"hidden_noise", hidden_noise},   {"out", out}};
    }

    int run(std::ostream& os) const {
        if (!seed) throw UsageError("theory verify requires --seed");
        MonotonicityOptions mo;
        mo.trials = trials;
        mo.seed = *seed;
        mo.family = family == "equal" ? KappaFamily::equal
                    : family == "dominant" ? KappaFamily::dominant
                                           : KappaFamily::unconstrained;
        mo.min_k = min_k;
        mo.max_k = max_k;
        const MonotonicityReport mono = verify_monotonicity(mo);
        const GradientCheckReport grad = check_gradients(gradient_configs, *seed, step);
        const bool pass = mono.violations() == 0 && grad.max_relative_error <= 1e-5;
        json doc = {{"config", config()},
                    {"monotonicity", monotonicity_to_json(mono)},
                    {"gradient_check", gradient_check_to_json(grad)},
                    {"gradient_tolerance", 1e-5},
                    {"pass", pass}};
        if (hidden_noise > 0.0) {
            // Reported only; the hypotheses above assume a noiseless hidden state.
            mo.hidden_noise = hidden_noise;
            doc["noise_robustness"] = monotonicity_to_json(verify_monotonicity(mo));
        }
        emit(doc, out, os);
        return pass ? kOk : kFailure;
    }
};

struct TheorySweepCmd {
    GeneratorFlags gen;
    Eigen::Index target = 0;
    std::size_t trials = 500;
    std::optional<std::uint64_t> seed;
    std::string csv;
    std::string out;

    json config() const {
        json g = params_to_json(gen.params(seed.value_or(0)));
        g["seed"] = seed_json(seed);
        return {{"subcommand", "theory sweep"}, {"generator", g}, {"target", target},
                {"trials", trials},              {"csv", csv},   {"out", out}};
    }

    int run(std::ostream& os) const {
        if (gen.sigma > 0.0 && !seed) throw UsageError("theory sweep with --sigma > 0 requires --seed");
        const SyntheticBasinParams params = gen.params(seed.value_or(0));
        const TheoryModeld model = TheoryModeld::standard(params.k, params.num_layers);
        const Eigen::VectorXd curve = placement_sweep(model, params, target, trials);
        Eigen::Index best = 0;
        curve.maxCoeff(&best);
        if (!csv.empty()) write_atomic(csv, csv_series(curve, "slot"));
        emit({{"config", config()}, {"curve", vector_to_json(curve)}, {"argmax_slot", best + 1}}, out, os);
        return kOk;
    }
};

// ---------------------------------------------------------------- simulate

struct SimulateCmd {
    GeneratorFlags gen;
    std::size_t samples = 400;
    std::optional<std::uint64_t> seed;
    std::string permute = "random";
    std::string out_dir;
    std::string manifest;

    SimulateCmd() { gen.sigma = 0.01; }

    json config() const {
        json g = params_to_json(gen.params(seed.value_or(0)));
        return {{"subcommand", "simulate"}, {"generator", g},       {"samples", samples},
                {"permute", permute},        {"out", out_dir},       {"manifest", manifest}};
    }

    int run(std::size_t jobs, std::ostream& os) const {
        if (!seed) throw UsageError("simulate requires --seed");
        const SyntheticBasinParams params = gen.params(*seed);
        validate_params(params);
        std::vector<std::vector<std::size_t>> perms(samples);
        Rng perm_rng(Rng::derive(*seed, 0x5EEDULL << 32));
        for (auto& p : perms) {
            p.resize(static_cast<std::size_t>(params.k));
            for (std::size_t i = 0; i < p.size(); ++i) p[i] = i;
            if (permute == "random") perm_rng.shuffle(std::span<std::size_t>(p));
        }
        fs::create_directories(out_dir);
        std::vector<std::string> names(samples);
        parallel_for(samples, jobs, [&](std::size_t i) {
            const AttentionDump dump = make_synthetic_dump(params, i, perms[i]);
            names[i] = dump.header.sample_id + ".atnb";
            save_dump(dump, (fs::path(out_dir) / names[i]).string());
        });
        emit({{"config", config()}, {"files", names}, {"n_samples", samples}}, manifest, os);
        return kOk;
    }
};

// ---------------------------------------------------------------- permute

struct PermuteCmd {
    GeneratorFlags gen;
    std::vector<std::size_t> relevant = {0, 1};
    std::vector<std::string> dumps;
    std::size_t samples_per_permutation = 1;
    std::optional<std::uint64_t> seed;
    std::string rule = "max";
    std::string aggregation = "token_sum";
    std::string table;
    std::string csv;
    std::string out;

    PermuteCmd() { gen.k = 3; }

    json config() const {
        json g = params_to_json(gen.params(seed.value_or(0)));
        g["seed"] = seed_json(seed);
        return {{"subcommand", "permute"},
                {"generator", dumps.empty() ? g : json(nullptr)},
                {"dumps", dumps},
                {"relevant", relevant},
                {"samples_per_permutation", samples_per_permutation},
                {"rule", rule},
                {"aggregation", aggregation},
                {"table", table},
                {"csv", csv},
                {"out", out}};
    }

    int run(std::size_t jobs, std::ostream& os) const {
        PermutationOptions po;
        po.rule = parse_group_rule(rule);
        po.samples_per_permutation = samples_per_permutation;
        po.mode = parse_aggregation(aggregation);

        PermutationReport report;
        if (dumps.empty()) {
            if (gen.sigma > 0.0 && !seed) throw UsageError("permute with --sigma > 0 requires --seed");
            const SyntheticBasinParams params = gen.params(seed.value_or(0));
            std::vector<bool> labels(static_cast<std::size_t>(params.k), false);
            for (std::size_t r : relevant) {
                if (r >= labels.size()) throw UsageError("--relevant index out of range");
                labels[r] = true;
            }
            report = permutation_experiment(params, labels, TheoryModeld::standard(params.k, params.num_layers), po);
        } else {
            const auto loaded = load_dumps(list_dumps(dumps), jobs);
            const std::size_t k = loaded.front().header.num_docs();
            std::vector<bool> labels(k, false);
            for (std::size_t r : relevant) {
                if (r >= k) throw UsageError("--relevant index out of range");
                labels[r] = true;
            }
            const auto layers = static_cast<Eigen::Index>(loaded.front().header.num_layers);
            report = permutation_experiment(loaded, labels, TheoryModeld::standard(static_cast<Eigen::Index>(k), layers), po);
        }
        if (!table.empty()) write_atomic(table, permutation_table(report));
        if (!csv.empty()) {
            Eigen::VectorXd outcomes(static_cast<Eigen::Index>(report.trials.size()));
            for (std::size_t i = 0; i < report.trials.size(); ++i) outcomes(static_cast<Eigen::Index>(i)) = report.trials[i].outcome;
            write_atomic(csv, csv_series(outcomes, "permutation"));
        }
        json doc = permutation_report_to_json(report);
        doc["config"] = config();
        emit(doc, out, os);
        return kOk;
    }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"attnbasin: positional attention profiling, AttnRank reranking and basin theory checks", "attnbasin"};
    app.require_subcommand(1);
    app.fallthrough();
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.config_formatter(std::make_shared<JsonConfig>(&app));
    app.set_config("--config", "", "JSON config file; explicit flags win");

    std::size_t jobs = 1;
    app.add_option("--jobs", jobs, "worker threads for dump processing")
        ->envname("ATTNBASIN_JOBS")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);

    ValidateCmd validate;
    auto* validate_app = app.add_subcommand("validate", "check .atnb files for format and normalization");
    validate_app->add_option("inputs", validate.inputs, "dump files or directories")->required();
    validate_app->add_option("--tolerance", validate.tolerance)->capture_default_str();
    validate_app->add_option("--out", validate.out, "write the report here instead of stdout");

    ProfileCmd profile;
    auto* profile_app = app.add_subcommand("profile", "estimate the positional attention profile from dumps");
    profile_app->add_option("inputs", profile.inputs, "dump directory or files")->required();
    profile_app->add_option("--layer", profile.layer, "layer feeding the profile")->capture_default_str();
    profile_app->add_flag("--cross-layer", profile.cross_layer, "average over all layers instead");
    profile_app->add_option("--aggregation", profile.aggregation)
        ->capture_default_str()
        ->check(CLI::IsMember({"token_mean", "token_sum"}));
    profile_app->add_option("--rows", profile.rows)->capture_default_str()->check(CLI::IsMember({"all", "last"}));
    profile_app->add_option("--checkpoint", profile.checkpoint, "snapshot interval C")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    profile_app->add_option("--tau", profile.tau)->capture_default_str();
    profile_app->add_option("--patience", profile.patience)->capture_default_str();
    profile_app->add_option("--out", profile.out);

    BasinCmd basin;
    auto* basin_app = app.add_subcommand("basin", "report the attention-basin shape of a profile");
    basin_app->add_option("profile", basin.profile, "profile JSON")->required();
    basin_app->add_option("--out", basin.out);

    RerankCmd rerank_cmd;
    auto* rerank_app = app.add_subcommand("rerank", "order documents by a strategy");
    rerank_app->add_option("--profile", rerank_cmd.profile, "profile JSON (attnrank)");
    rerank_app->add_option("--docs", rerank_cmd.docs, "JSON-lines documents {id, score, text?}")->required();
    rerank_app->add_option("--strategy", rerank_cmd.strategy)
        ->capture_default_str()
        ->check(CLI::IsMember({"attnrank", "random", "descending", "ascending", "lim"}));
    rerank_app->add_option("--seed", rerank_cmd.seed, "seed (random strategy)");
    rerank_app->add_flag("--resample", rerank_cmd.resample,
                         "linearly resample the profile when its length differs from the document count");
    rerank_app->add_option("--out", rerank_cmd.out);

    LayersCmd layers;
    auto* layers_app = app.add_subcommand("layers", "positional vs content variance per layer");
    layers_app->add_option("inputs", layers.inputs, "dump directory or files")->required();
    layers_app->add_option("--aggregation", layers.aggregation)
        ->capture_default_str()
        ->check(CLI::IsMember({"token_mean", "token_sum"}));
    layers_app->add_option("--rows", layers.rows)->capture_default_str()->check(CLI::IsMember({"all", "last"}));
    layers_app->add_option("--out", layers.out);

    auto* theory_app = app.add_subcommand("theory", "numerical checks of the attention/probability model");
    theory_app->require_subcommand(1);
    TheoryVerifyCmd verify;
    auto* verify_app = theory_app->add_subcommand("verify", "monotonicity and gradient suites");
    verify_app->add_option("--trials", verify.trials)->capture_default_str()->check(CLI::PositiveNumber);
    verify_app->add_option("--seed", verify.seed);
    verify_app->add_option("--family", verify.family)
        ->capture_default_str()
        ->check(CLI::IsMember({"equal", "dominant", "unconstrained"}));
    verify_app->add_option("--gradient-configs", verify.gradient_configs)->capture_default_str();
    verify_app->add_option("--step", verify.step)->capture_default_str();
    verify_app->add_option("--min-k", verify.min_k)->capture_default_str();
    verify_app->add_option("--max-k", verify.max_k)->capture_default_str();
    verify_app->add_option("--hidden-noise", verify.hidden_noise, "report-only robustness run")->capture_default_str();
    verify_app->add_option("--out", verify.out);

    TheorySweepCmd sweep;
    auto* sweep_app = theory_app->add_subcommand("sweep", "expected answer probability per placement slot");
    sweep.gen.add_to(sweep_app, false);
    sweep_app->add_option("--target", sweep.target, "document whose answer is scored")->capture_default_str();
    sweep_app->add_option("--trials", sweep.trials)->capture_default_str()->check(CLI::PositiveNumber);
    sweep_app->add_option("--seed", sweep.seed);
    sweep_app->add_option("--csv", sweep.csv, "write slot,value rows");
    sweep_app->add_option("--out", sweep.out);

    SimulateCmd simulate;
    auto* simulate_app = app.add_subcommand("simulate", "write synthetic .atnb dumps with a controllable basin");
    simulate.gen.add_to(simulate_app, true);
    simulate_app->add_option("--samples", simulate.samples)->capture_default_str();
    simulate_app->add_option("--seed", simulate.seed);
    simulate_app->add_option("--permute", simulate.permute, "document order per sample")
        ->capture_default_str()
        ->check(CLI::IsMember({"identity", "random"}));
    simulate_app->add_option("--out", simulate.out_dir, "output directory")->required();
    simulate_app->add_option("--manifest", simulate.manifest, "write the run summary here instead of stdout");

    PermuteCmd permute;
    auto* permute_app = app.add_subcommand("permute", "exhaustive permutation study with the theory outcome proxy");
    permute.gen.add_to(permute_app, false);
    permute_app->add_option("--relevant", permute.relevant, "relevant document indices")->delimiter(',')->capture_default_str();
    permute_app->add_option("--dumps", permute.dumps, "dump directory covering every order (replaces the generator)");
    permute_app->add_option("--samples-per-permutation", permute.samples_per_permutation)->capture_default_str();
    permute_app->add_option("--seed", permute.seed);
    permute_app->add_option("--rule", permute.rule)->capture_default_str()->check(CLI::IsMember({"max", "sum"}));
    permute_app->add_option("--aggregation", permute.aggregation)
        ->capture_default_str()
        ->check(CLI::IsMember({"token_mean", "token_sum"}));
    permute_app->add_option("--table", permute.table, "write a plain-text table");
    permute_app->add_option("--csv", permute.csv, "write permutation,value rows");
    permute_app->add_option("--out", permute.out);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kUsage;
    }

    try {
        if (validate_app->parsed()) return validate.run(jobs, out);
        if (profile_app->parsed()) return profile.run(jobs, out);
        if (basin_app->parsed()) return basin.run(out);
        if (rerank_app->parsed()) return rerank_cmd.run(out);
        if (layers_app->parsed()) return layers.run(jobs, out);
        if (verify_app->parsed()) return verify.run(out);
        if (sweep_app->parsed()) return sweep.run(out);
        if (simulate_app->parsed()) return simulate.run(jobs, out);
        if (permute_app->parsed()) return permute.run(jobs, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kUsage;
    } catch (const MissingInput& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
    err << app.help();
    return kUsage;
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, std::cout, std::cerr);
}

}  // namespace attnbasin::cli
