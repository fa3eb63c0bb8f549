// dtot: confidence-gated, context-tree-guided detection runs, plus the
// dataset utilities around them (metrics, distillation records, devsets).
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dtot/context_tree.hpp"
#include "dtot/distill.hpp"
#include "dtot/engine.hpp"
#include "dtot/eval.hpp"
#include "dtot/fewshot.hpp"
#include "dtot/http_backend.hpp"
#include "dtot/scripted_backend.hpp"
#include "dtot/trace.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Exit code 2: configuration or usage problems. Exit code 1: runtime failures.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) throw UsageError(what + " path is required");
    if (!fs::exists(path)) throw UsageError(what + " file not found: " + path);
}

struct BackendOptions {
    std::string backend = "scripted";  // scripted | http
    std::string kind = "blackbox";     // blackbox | whitebox
    std::string scenario;
    std::string endpoint;
    std::string model;
    std::string auth_env = "DTOT_API_TOKEN";
    int timeout_ms = 30000;
    int max_in_flight = 4;
    bool verbose_http = false;
    std::string logprob_mode = "first-token";  // first-token | echo
};

struct EngineOptions {
    int max_steps = 2;
    int s_low = 0;
    int s_high = 90;
    double s_delta = 0.9;
    bool whitebox_raw = false;
    bool return_best = false;
    bool raw_relevance = false;
    std::string mode = "zeroshot";  // zeroshot | fs | fsr
    int demos_per_class = 3;
    std::string devset_path;
    std::string template_dir;
    int embed_dim = 16;
    std::string embed_endpoint;
    std::string embed_model;
};

void add_backend_options(CLI::App* cmd, BackendOptions& o) {
    cmd->add_option("--backend", o.backend, "Backend: scripted or http")
        ->check(CLI::IsMember({"scripted", "http"}))
        ->capture_default_str();
    cmd->add_option("--kind", o.kind, "Model access kind: blackbox or whitebox")
        ->check(CLI::IsMember({"blackbox", "whitebox"}))
        ->capture_default_str();
    cmd->add_option("--scenario", o.scenario, "Scenario file for the scripted backend");
    cmd->add_option("--endpoint", o.endpoint, "Base URL of the chat-completions endpoint");
    cmd->add_option("--model", o.model, "Model name sent to the endpoint");
    cmd->add_option("--auth-env", o.auth_env,
                    "Environment variable holding the API token")
        ->capture_default_str();
    cmd->add_option("--timeout-ms", o.timeout_ms, "Per-request timeout")
        ->capture_default_str();
    cmd->add_option("--max-in-flight", o.max_in_flight,
                    "Maximum concurrent requests to the endpoint")
        ->capture_default_str();
    cmd->add_flag("--trace", o.verbose_http,
                  "Log redacted endpoint requests and responses to stderr");
    cmd->add_option("--logprob-mode", o.logprob_mode,
                    "White-box logprob strategy: first-token or echo")
        ->check(CLI::IsMember({"first-token", "echo"}))
        ->capture_default_str();
}

void add_embedder_options(CLI::App* cmd, EngineOptions& o) {
    cmd->add_option("--embed-dim", o.embed_dim,
                    "Dimension of the seeded hash embedder")
        ->capture_default_str();
    cmd->add_option("--embed-endpoint", o.embed_endpoint,
                    "Base URL of an embeddings endpoint (overrides the hash embedder)");
    cmd->add_option("--embed-model", o.embed_model, "Embeddings model name");
}

void add_engine_options(CLI::App* cmd, EngineOptions& o,
                        const std::string& mode_flag = "--mode") {
    cmd->add_option("--max-steps", o.max_steps, "Maximum detection steps T")
        ->capture_default_str();
    cmd->add_option("--s-low", o.s_low, "Lower rating threshold")->capture_default_str();
    cmd->add_option("--s-high", o.s_high, "Upper rating threshold")->capture_default_str();
    cmd->add_option("--s-delta", o.s_delta, "Confidence threshold")->capture_default_str();
    cmd->add_flag("--whitebox-raw", o.whitebox_raw,
                  "Score white-box confidence as the raw sequence probability");
    cmd->add_flag("--return-best", o.return_best,
                  "On budget exhaustion return the highest-scoring step");
    cmd->add_flag("--raw-relevance", o.raw_relevance,
                  "Disable length normalization of white-box relevance scores");
    cmd->add_option(mode_flag, o.mode, "Prompting mode: zeroshot, fs, or fsr")
        ->check(CLI::IsMember({"zeroshot", "fs", "fsr"}))
        ->capture_default_str();
    cmd->add_option("--k", o.demos_per_class, "Demonstrations per class in few-shot modes")
        ->capture_default_str();
    cmd->add_option("--devset", o.devset_path, "Devset index file for few-shot modes");
    cmd->add_option("--template-dir", o.template_dir,
                    "Directory overriding the built-in prompt templates");
    add_embedder_options(cmd, o);
}

dtot::BackendKind parse_kind(const std::string& kind) {
    return kind == "whitebox" ? dtot::BackendKind::WhiteBox : dtot::BackendKind::BlackBox;
}

std::unique_ptr<dtot::Backend> make_backend(const BackendOptions& o) {
    if (o.backend == "scripted") {
        require_file(o.scenario, "scenario");
        return std::make_unique<dtot::ScriptedBackend>(
            dtot::ScriptedBackend::load_file(parse_kind(o.kind), o.scenario));
    }
    if (o.endpoint.empty()) throw UsageError("--endpoint is required for the http backend");
    dtot::HttpBackendConfig cfg;
    cfg.base_url = o.endpoint;
    cfg.model = o.model;
    cfg.auth_env = o.auth_env;
    cfg.kind = parse_kind(o.kind);
    cfg.timeout_ms = o.timeout_ms;
    cfg.max_in_flight = o.max_in_flight;
    cfg.verbose = o.verbose_http;
    cfg.logprob_mode = o.logprob_mode == "echo"
                           ? dtot::HttpBackendConfig::LogprobMode::Echo
                           : dtot::HttpBackendConfig::LogprobMode::FirstToken;
    return std::make_unique<dtot::HttpBackend>(std::move(cfg));
}

std::unique_ptr<dtot::Embedder> make_embedder(const EngineOptions& o, std::uint64_t seed) {
    if (!o.embed_endpoint.empty())
        return std::make_unique<dtot::HttpEmbedder>(o.embed_endpoint, o.embed_model);
    return std::make_unique<dtot::HashEmbedder>(static_cast<size_t>(o.embed_dim), seed);
}

dtot::DtotConfig make_engine_config(const EngineOptions& o) {
    dtot::DtotConfig cfg;
    cfg.max_steps = o.max_steps;
    cfg.confidence.s_low = o.s_low;
    cfg.confidence.s_high = o.s_high;
    cfg.confidence.s_delta = o.s_delta;
    cfg.confidence.whitebox_score =
        o.whitebox_raw ? dtot::ConfidenceConfig::WhiteBoxScore::RawSequence
                       : dtot::ConfidenceConfig::WhiteBoxScore::NormalizedVerbalizers;
    cfg.return_best = o.return_best;
    cfg.selector.length_normalized = !o.raw_relevance;
    cfg.mode = o.mode == "fs" ? dtot::PromptMode::FewShot
             : o.mode == "fsr" ? dtot::PromptMode::FewShotRationale
                               : dtot::PromptMode::ZeroShot;
    cfg.demos_per_class = o.demos_per_class;
    cfg.validate();
    return cfg;
}

dtot::PromptTemplates load_templates(const EngineOptions& o) {
    if (o.template_dir.empty()) return dtot::PromptTemplates::defaults();
    if (!fs::is_directory(o.template_dir))
        throw UsageError("template directory not found: " + o.template_dir);
    return dtot::PromptTemplates::from_directory(o.template_dir);
}

// Demonstration retrieval shared by detect/eval/distill. The devset and
// embedder outlive the returned provider.
struct FewShotContext {
    dtot::DevSet devset;
    std::unique_ptr<dtot::Embedder> embedder;
    dtot::DemoProvider provider;
};

std::unique_ptr<FewShotContext> make_demo_provider(const EngineOptions& o,
                                                   const dtot::DtotConfig& cfg,
                                                   std::uint64_t seed) {
    if (cfg.mode == dtot::PromptMode::ZeroShot) return nullptr;
    if (o.devset_path.empty())
        throw UsageError("--devset is required when --mode is fs or fsr");
    require_file(o.devset_path, "devset");
    auto ctx = std::make_unique<FewShotContext>();
    ctx->devset = dtot::load_devset_file(o.devset_path);
    ctx->embedder = make_embedder(o, seed);
    bool with_rationales = cfg.mode == dtot::PromptMode::FewShotRationale;
    auto* raw = ctx.get();
    int k = cfg.demos_per_class;
    ctx->provider = [raw, k, with_rationales](const std::string& statement) {
        return dtot::select_demonstrations(statement, raw->devset, *raw->embedder, k,
                                           with_rationales);
    };
    return ctx;
}

std::string file_hash_hex(const std::string& path) {
    return dtot::to_hex(dtot::fnv1a64(dtot::read_file(path)));
}

void write_manifest(const std::string& path, const std::string& command,
                    std::uint64_t seed, const std::string& tree_path,
                    const dtot::PromptTemplates& templates, ordered_json extra) {
    ordered_json m;
    m["command"] = command;
    m["seed"] = seed;
    m["tree_path"] = tree_path;
    m["tree_hash"] = file_hash_hex(tree_path);
    m["template_hash"] = dtot::to_hex(templates.content_hash());
    m["config"] = std::move(extra);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("cannot write manifest: " + path);
    out << m.dump(2) << "\n";
}

ordered_json config_json(const BackendOptions& b, const EngineOptions& e) {
    ordered_json j;
    j["backend"] = b.backend;
    j["kind"] = b.kind;
    if (!b.scenario.empty()) {
        j["scenario"] = b.scenario;
        j["scenario_hash"] = file_hash_hex(b.scenario);
    }
    if (!b.endpoint.empty()) {
        j["endpoint"] = b.endpoint;
        j["model"] = b.model;
    }
    j["max_steps"] = e.max_steps;
    j["s_low"] = e.s_low;
    j["s_high"] = e.s_high;
    j["s_delta"] = e.s_delta;
    j["mode"] = e.mode;
    j["k"] = e.demos_per_class;
    return j;
}

std::string format4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

struct DetectArgs {
    BackendOptions backend;
    EngineOptions engine;
    std::string text;
    std::string input_file;
    std::string tree_path;
    std::string statement_id = "cli";
    std::string trace_out;
    std::string manifest;
    std::uint64_t seed = 0;
    int parallelism = 1;
};

int run_detect(const DetectArgs& a) {
    if (a.text.empty() && a.input_file.empty())
        throw UsageError("detect needs --text or --in");
    require_file(a.tree_path, "tree");
    auto tree = dtot::ContextTree::load_file(a.tree_path);
    auto templates = load_templates(a.engine);
    auto cfg = make_engine_config(a.engine);
    auto backend = make_backend(a.backend);
    auto fewshot = make_demo_provider(a.engine, cfg, a.seed);
    dtot::DemoProvider provider = fewshot ? fewshot->provider : dtot::DemoProvider{};

    std::vector<dtot::Statement> statements;
    if (!a.text.empty()) {
        statements.push_back({a.statement_id, a.text});
    } else {
        require_file(a.input_file, "input");
        auto ds = dtot::load_dataset_file(a.input_file);
        for (const auto& e : ds.entries) statements.push_back({e.id, e.statement});
    }

    auto outcomes = dtot::detect_batch(statements, tree, *backend, templates, cfg,
                                       a.parallelism, provider);

    std::ofstream trace_file;
    if (!a.trace_out.empty()) {
        trace_file.open(a.trace_out, std::ios::binary);
        if (!trace_file) throw UsageError("cannot write trace file: " + a.trace_out);
    }
    size_t errors = 0;
    for (const auto& outcome : outcomes) {
        if (trace_file.is_open()) dtot::write_outcome_trace(trace_file, outcome);
        if (!outcome.result) {
            ++errors;
            std::cout << outcome.statement_id << "\terror\t" << outcome.error << "\n";
            continue;
        }
        const auto& r = *outcome.result;
        if (statements.size() == 1) {
            std::cout << "answer: " << dtot::to_string(r.answer) << "\n";
            std::cout << "confidence: " << format4(r.final_confidence) << "\n";
            std::cout << "rationale: " << r.rationale << "\n";
            std::cout << "steps:";
            for (const auto& step : r.trace) std::cout << " " << step.context_category;
            std::cout << "\n";
        } else {
            std::cout << r.statement_id << "\t" << dtot::to_string(r.answer) << "\t"
                      << format4(r.final_confidence) << "\t" << r.rationale << "\n";
        }
    }
    // Runs that leave an artifact behind get a manifest beside it.
    std::string manifest = a.manifest;
    if (manifest.empty() && !a.trace_out.empty()) manifest = a.trace_out + ".manifest.json";
    if (!manifest.empty())
        write_manifest(manifest, "detect", a.seed, a.tree_path, templates,
                       config_json(a.backend, a.engine));
    return errors == outcomes.size() && !outcomes.empty() ? 1 : 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    BackendOptions backend;
    EngineOptions engine;
    std::string input_file;
    std::string tree_path;
    std::string out_prefix = "eval";
    std::string train_out;
    std::uint64_t seed = 0;
    int parallelism = 1;
    std::optional<int> filter_level;
    std::optional<size_t> sample_train;
    std::optional<size_t> sample_test;
    bool rating_as_score = false;
    bool macro_f1 = false;
};

void write_csv(const dtot::LabeledDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("cannot write dataset file: " + path);
    auto quote = [](const std::string& s) {
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += "\"\"";
            else q += c;
        }
        return q + "\"";
    };
    out << "id,text,label,level\n";
    for (const auto& e : ds.entries) {
        out << e.id << "," << quote(e.statement) << "," << e.gold_label << ",";
        if (e.toxicity_level) out << *e.toxicity_level;
        out << "\n";
    }
}

int run_eval(const EvalArgs& a) {
    require_file(a.input_file, "dataset");
    require_file(a.tree_path, "tree");
    auto tree = dtot::ContextTree::load_file(a.tree_path);
    auto templates = load_templates(a.engine);
    auto cfg = make_engine_config(a.engine);
    auto backend = make_backend(a.backend);
    auto fewshot = make_demo_provider(a.engine, cfg, a.seed);
    dtot::DemoProvider provider = fewshot ? fewshot->provider : dtot::DemoProvider{};

    auto ds = dtot::load_dataset_file(a.input_file);
    if (a.filter_level) ds = dtot::filter_ambiguous(ds, *a.filter_level);
    if (ds.entries.empty()) {
        std::cerr << "dataset is empty after filtering\n";
        return 1;
    }
    if (a.sample_train || a.sample_test) {
        auto [train, test] =
            dtot::sample_split(ds, a.sample_train.value_or(0), a.sample_test.value_or(0),
                               a.seed);
        if (!a.train_out.empty()) write_csv(train, a.train_out);
        ds = std::move(test);
        if (ds.entries.empty()) throw UsageError("--sample-test selected 0 statements");
    }

    std::vector<dtot::Statement> statements;
    for (const auto& e : ds.entries) statements.push_back({e.id, e.statement});
    auto outcomes = dtot::detect_batch(statements, tree, *backend, templates, cfg,
                                       a.parallelism, provider);

    dtot::BackendKind kind = parse_kind(a.backend.kind);
    std::vector<dtot::Prediction> predictions;
    size_t n_errors = 0, n_unparsed = 0;
    for (size_t i = 0; i < outcomes.size(); ++i) {
        dtot::Prediction p;
        p.gold = ds.entries[i].gold_label;
        if (outcomes[i].result) {
            const auto& r = *outcomes[i].result;
            if (r.answer == dtot::Answer::Unparsed) {
                ++n_unparsed;
            } else {
                p.predicted = dtot::label_encoding(r.answer);
                p.score = dtot::score_of(r, kind, a.rating_as_score);
            }
        } else {
            ++n_errors;
        }
        predictions.push_back(p);
    }
    dtot::EvalReport report = dtot::metrics(predictions);

    ordered_json rj;
    rj["command"] = "eval";
    rj["seed"] = a.seed;
    rj["n"] = report.total;
    rj["n_errors"] = n_errors;
    rj["n_unparsed"] = n_unparsed;
    rj["accuracy"] = report.accuracy;
    rj["f1"] = report.f1;
    rj["macro_f1"] = report.macro_f1;
    if (report.auc_available)
        rj["auc"] = report.auc;
    else
        rj["auc"] = nullptr;
    rj["auc_available"] = report.auc_available;
    rj["counts"] = ordered_json{
        {"tp", report.tp}, {"fp", report.fp}, {"tn", report.tn}, {"fn", report.fn}};
    {
        std::ofstream out(a.out_prefix + ".report.json", std::ios::binary);
        if (!out) throw UsageError("cannot write report: " + a.out_prefix + ".report.json");
        out << rj.dump(2) << "\n";
    }
    std::string text_report;
    text_report += "statements: " + std::to_string(report.total) +
                   " (errors: " + std::to_string(n_errors) +
                   ", unparsed: " + std::to_string(n_unparsed) + ")\n";
    text_report += "accuracy: " + format4(report.accuracy) + "\n";
    text_report += "f1:       " + format4(report.f1) + "\n";
    if (a.macro_f1) text_report += "macro f1: " + format4(report.macro_f1) + "\n";
    text_report += "auc:      " +
                   (report.auc_available ? format4(report.auc) : std::string("n/a")) + "\n";
    text_report += "tp=" + std::to_string(report.tp) + " fp=" + std::to_string(report.fp) +
                   " tn=" + std::to_string(report.tn) + " fn=" + std::to_string(report.fn) +
                   "\n";
    {
        std::ofstream out(a.out_prefix + ".report.txt", std::ios::binary);
        out << text_report;
    }
    {
        std::ofstream out(a.out_prefix + ".trace.jsonl", std::ios::binary);
        for (const auto& outcome : outcomes) dtot::write_outcome_trace(out, outcome);
    }
    write_manifest(a.out_prefix + ".manifest.json", "eval", a.seed, a.tree_path, templates,
                   config_json(a.backend, a.engine));
    std::cout << text_report;
    return 0;
}

// ---------------------------------------------------------------------------
// distill
// ---------------------------------------------------------------------------

struct DistillArgs {
    BackendOptions backend;
    EngineOptions engine;
    std::string trace_file;
    std::string input_file;
    std::string labels_file;
    std::string mode = "with-labels";
    std::string tree_path;
    std::string out_file = "distill.jsonl";
    std::string manifest;
    std::uint64_t seed = 0;
    int parallelism = 1;
};

int run_distill(const DistillArgs& a) {
    require_file(a.tree_path, "tree");
    auto tree = dtot::ContextTree::load_file(a.tree_path);
    auto templates = load_templates(a.engine);

    std::vector<dtot::TeacherSample> samples;
    if (!a.trace_file.empty()) {
        require_file(a.trace_file, "trace");
        for (const auto& f : dtot::read_trace_finals_file(a.trace_file))
            samples.push_back({f.statement_id, f.statement, f.answer, f.rationale});
    } else if (!a.input_file.empty()) {
        require_file(a.input_file, "dataset");
        auto cfg = make_engine_config(a.engine);
        auto backend = make_backend(a.backend);
        auto fewshot = make_demo_provider(a.engine, cfg, a.seed);
        dtot::DemoProvider provider = fewshot ? fewshot->provider : dtot::DemoProvider{};
        auto ds = dtot::load_dataset_file(a.input_file);
        std::vector<dtot::Statement> statements;
        for (const auto& e : ds.entries) statements.push_back({e.id, e.statement});
        auto outcomes = dtot::detect_batch(statements, tree, *backend, templates, cfg,
                                           a.parallelism, provider);
        for (const auto& outcome : outcomes)
            if (outcome.result) samples.push_back(dtot::teacher_sample(*outcome.result));
    } else {
        throw UsageError("distill needs --trace-in (a prior run) or --in (a dataset to run)");
    }

    dtot::DistillMode mode = a.mode == "without-labels" ? dtot::DistillMode::WithoutLabels
                                                        : dtot::DistillMode::WithLabels;
    std::map<std::string, int> gold;
    if (mode == dtot::DistillMode::WithLabels) {
        if (a.labels_file.empty())
            throw UsageError("--labels is required with --mode with-labels");
        require_file(a.labels_file, "labels");
        for (const auto& e : dtot::load_dataset_file(a.labels_file).entries)
            gold[e.id] = e.gold_label;
    }

    auto build = dtot::build_records(samples, gold, mode, tree.root(), templates);
    {
        std::ofstream out(a.out_file, std::ios::binary);
        if (!out) throw UsageError("cannot write records file: " + a.out_file);
        dtot::export_jsonl(build.records, out);
    }
    std::string manifest = a.manifest.empty() ? a.out_file + ".manifest.json" : a.manifest;
    write_manifest(manifest, "distill", a.seed, a.tree_path, templates,
                   config_json(a.backend, a.engine));
    std::cout << "records: " << build.records.size() << "\n";
    if (build.skipped_unparsed > 0)
        std::cerr << "warning: skipped " << build.skipped_unparsed
                  << " detections with unparseable answers\n";
    std::cout << "mask-rate: " << format4(build.mask_rate()) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// devset build
// ---------------------------------------------------------------------------

struct DevsetArgs {
    EngineOptions engine;
    std::string input_file;
    std::string out_file = "devset.jsonl";
    std::string rationales_trace;
    std::uint64_t seed = 0;
    int min_per_class = 3;
};

int run_devset_build(const DevsetArgs& a) {
    require_file(a.input_file, "dataset");
    auto ds = dtot::load_dataset_file(a.input_file);

    // Rationales come from a prior run's trace; only answers that agree with
    // the gold label contribute one.
    std::map<std::string, std::string> rationales;
    if (!a.rationales_trace.empty()) {
        require_file(a.rationales_trace, "rationales trace");
        std::map<std::string, int> gold;
        for (const auto& e : ds.entries) gold[e.id] = e.gold_label;
        for (const auto& f : dtot::read_trace_finals_file(a.rationales_trace)) {
            if (f.answer == dtot::Answer::Unparsed) continue;
            auto it = gold.find(f.statement_id);
            if (it == gold.end()) continue;
            if (dtot::label_encoding(f.answer) == it->second && !f.rationale.empty())
                rationales[f.statement_id] = f.rationale;
        }
    }

    std::vector<dtot::DevSeed> seeds;
    for (const auto& e : ds.entries) {
        dtot::DevSeed s;
        s.id = e.id;
        s.statement = e.statement;
        s.label = e.gold_label == 1 ? dtot::DemoLabel::Toxic : dtot::DemoLabel::Benign;
        auto it = rationales.find(e.id);
        if (it != rationales.end()) s.rationale = it->second;
        seeds.push_back(std::move(s));
    }
    auto embedder = make_embedder(a.engine, a.seed);
    auto devset = dtot::build_devset(seeds, *embedder,
                                     static_cast<size_t>(std::max(a.min_per_class, 0)));
    std::ofstream out(a.out_file, std::ios::binary);
    if (!out) throw UsageError("cannot write devset file: " + a.out_file);
    dtot::save_devset(devset, out);
    std::cout << "entries: " << devset.entries.size() << " (dimension "
              << devset.dimension() << ", " << rationales.size() << " with rationales)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// tree validate
// ---------------------------------------------------------------------------

int run_tree_validate(const std::string& tree_path) {
    require_file(tree_path, "tree");
    auto tree = dtot::ContextTree::load_file(tree_path);
    std::cout << "ok: " << tree.node_count() << " nodes, depth " << tree.depth() << "\n";
    std::cout << "root: " << tree.root().category << " ("
              << tree.root().children.size() << " children)\n";
    for (const auto& child : tree.root().children)
        std::cout << "  - " << child.category << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Confidence-gated context-tree detection runs and their dataset tooling"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Config file; command-line flags take precedence");

    DetectArgs detect_args;
    auto* detect = app.add_subcommand("detect", "Run detection on a statement or dataset");
    detect->add_option("--text", detect_args.text, "Statement to classify");
    detect->add_option("--in", detect_args.input_file, "Dataset file (csv or jsonl)");
    detect->add_option("--tree", detect_args.tree_path, "Context tree file")->required();
    detect->add_option("--statement-id", detect_args.statement_id,
                       "Statement id used for scripted scenario lookup")
        ->capture_default_str();
    detect->add_option("--trace-out", detect_args.trace_out, "Write step trace JSONL here");
    detect->add_option("--manifest", detect_args.manifest, "Write a run manifest here");
    detect->add_option("--seed", detect_args.seed, "Seed for all randomness")
        ->capture_default_str();
    detect->add_option("--parallelism", detect_args.parallelism, "Concurrent detections")
        ->capture_default_str();
    add_backend_options(detect, detect_args.backend);
    add_engine_options(detect, detect_args.engine);

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Detect over a labeled dataset and report metrics");
    eval->add_option("--in", eval_args.input_file, "Labeled dataset (csv or jsonl)")
        ->required();
    eval->add_option("--tree", eval_args.tree_path, "Context tree file")->required();
    eval->add_option("--out-prefix", eval_args.out_prefix,
                     "Prefix for report/trace/manifest files")
        ->capture_default_str();
    eval->add_option("--train-out", eval_args.train_out,
                     "Write the sampled training split to this csv");
    eval->add_option("--seed", eval_args.seed, "Seed for all randomness")
        ->capture_default_str();
    eval->add_option("--parallelism", eval_args.parallelism, "Concurrent detections")
        ->capture_default_str();
    int filter_level = -1;
    eval->add_option("--filter-level", filter_level,
                     "Drop entries at this toxicity level before evaluating");
    size_t sample_train = 0, sample_test = 0;
    auto* st_opt = eval->add_option("--sample-train", sample_train,
                                    "Uniformly sample this many training statements");
    auto* se_opt = eval->add_option("--sample-test", sample_test,
                                    "Uniformly sample this many test statements");
    eval->add_flag("--rating-as-score", eval_args.rating_as_score,
                   "Use rating/100 as the ranking score for black-box runs");
    eval->add_flag("--macro-f1", eval_args.macro_f1,
                   "Also print macro-averaged F1 in the text report");
    add_backend_options(eval, eval_args.backend);
    add_engine_options(eval, eval_args.engine);

    DistillArgs distill_args;
    auto* distill = app.add_subcommand("distill", "Build fine-tuning records from detections");
    distill->add_option("--trace-in", distill_args.trace_file,
                        "Trace JSONL from a prior run");
    distill->add_option("--in", distill_args.input_file,
                        "Dataset to run live before building records");
    distill->add_option("--labels", distill_args.labels_file,
                        "Labeled dataset supplying gold labels");
    distill->add_option("--mode", distill_args.mode, "with-labels or without-labels")
        ->check(CLI::IsMember({"with-labels", "without-labels"}))
        ->capture_default_str();
    distill->add_option("--tree", distill_args.tree_path, "Context tree file")->required();
    distill->add_option("--out", distill_args.out_file, "Records file to write")
        ->capture_default_str();
    distill->add_option("--manifest", distill_args.manifest, "Write a run manifest here");
    distill->add_option("--seed", distill_args.seed, "Seed for all randomness")
        ->capture_default_str();
    distill->add_option("--parallelism", distill_args.parallelism, "Concurrent detections")
        ->capture_default_str();
    add_backend_options(distill, distill_args.backend);
    add_engine_options(distill, distill_args.engine, "--prompt-mode");

    DevsetArgs devset_args;
    auto* devset = app.add_subcommand("devset", "Development-set utilities");
    devset->require_subcommand(1);
    auto* devset_build = devset->add_subcommand("build", "Embed a dataset into a devset index");
    devset_build->add_option("--in", devset_args.input_file, "Labeled dataset")->required();
    devset_build->add_option("--out", devset_args.out_file, "Devset index file to write")
        ->capture_default_str();
    devset_build->add_option("--rationales", devset_args.rationales_trace,
                             "Trace JSONL used as the rationale store");
    devset_build->add_option("--seed", devset_args.seed, "Seed for the hash embedder")
        ->capture_default_str();
    devset_build->add_option("--k", devset_args.min_per_class,
                             "Required demonstrations per class")
        ->capture_default_str();
    add_embedder_options(devset_build, devset_args.engine);

    std::string validate_tree_path;
    auto* tree_cmd = app.add_subcommand("tree", "Context tree utilities");
    tree_cmd->require_subcommand(1);
    auto* tree_validate = tree_cmd->add_subcommand("validate", "Validate a context tree file");
    tree_validate->add_option("--tree", validate_tree_path, "Context tree file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*detect) return run_detect(detect_args);
        if (*eval) {
            if (filter_level >= 0) eval_args.filter_level = filter_level;
            if (*st_opt) eval_args.sample_train = sample_train;
            if (*se_opt) eval_args.sample_test = sample_test;
            return run_eval(eval_args);
        }
        if (*distill) return run_distill(distill_args);
        if (*devset_build) return run_devset_build(devset_args);
        if (*tree_validate) return run_tree_validate(validate_tree_path);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const dtot::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const dtot::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
