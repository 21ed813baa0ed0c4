#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "meval/corpus.hpp"
#include "meval/judge.hpp"
#include "meval/metrics.hpp"
#include "meval/pipeline.hpp"
#include "meval/temporal.hpp"

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitBackend = 2;

std::shared_ptr<meval::JudgeBackend> make_backend(
    const std::string& spec, const std::string& endpoint,
    const std::string& model, const meval::Dataset& dataset,
    std::uint64_t seed) {
    using meval::MockConfig;
    if (spec == "mock:echo-gt") {
        MockConfig c;
        c.mode = MockConfig::Mode::echo_gt;
        c.seed = seed;
        return meval::make_mock_backend(c, dataset);
    }
    if (spec.rfind("mock:constant=", 0) == 0) {
        MockConfig c;
        c.mode = MockConfig::Mode::constant;
        c.constant = std::stod(spec.substr(14));
        c.seed = seed;
        return meval::make_mock_backend(c, dataset);
    }
    if (spec.rfind("mock:noise=", 0) == 0) {
        MockConfig c;
        c.mode = MockConfig::Mode::seeded_noise;
        c.sigma = std::stod(spec.substr(11));
        c.seed = seed;
        return meval::make_mock_backend(c, dataset);
    }
    if (spec.rfind("scripted:", 0) == 0) {
        return meval::load_scripted_backend(spec.substr(9));
    }
    if (spec == "remote") {
        if (endpoint.empty()) {
            throw meval::Error("remote backend requires --endpoint");
        }
        meval::RemoteConfig c;
        c.endpoint = endpoint;
        c.model = model;
        return meval::make_remote_backend(c);
    }
    throw meval::Error("unknown backend '" + spec + "'");
}

int cmd_validate(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        std::cerr << "cannot read " << path << "\n";
        return kExitValidation;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    json root = json::parse(ss.str(), nullptr, false);
    if (root.is_discarded() || !root.contains("meetings")) {
        std::cerr << "malformed dataset file\n";
        return kExitValidation;
    }
    int ok = 0;
    int total = 0;
    for (const json& jm : root["meetings"]) {
        ++total;
        json wrapper = {{"meetings", json::array({jm})}};
        try {
            meval::parse_dataset(wrapper.dump());
            ++ok;
        } catch (const meval::Error& e) {
            std::cout << "violation: " << e.what() << "\n";
        }
    }
    std::cout << ok << "/" << total << " ok\n";
    return ok == total ? kExitOk : kExitValidation;
}

// CSV with a header row; returns the named column as doubles.
std::vector<double> csv_column(const std::string& path, const std::string& name) {
    std::ifstream in(path);
    if (!in) throw meval::Error("cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) throw meval::Error("empty CSV " + path);
    std::vector<std::string> header;
    {
        std::istringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) header.push_back(cell);
    }
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw meval::Error("no column '" + name + "' in " + path);
    const size_t col = it - header.begin();
    std::vector<double> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        size_t i = 0;
        while (std::getline(ls, cell, ',')) {
            if (i++ == col) out.push_back(std::stod(cell));
        }
    }
    return out;
}

struct MetricsArgs {
    std::string sub;
    std::string file;
    std::string ref;
    std::string hyp;
    std::string x;
    std::string y;
    std::string pred;
    int window = 0;
};

int cmd_metrics(const MetricsArgs& a) {
    if (a.sub == "icc") {
        const meval::Dataset d = meval::load_dataset(a.file);
        meval::AnnotationMatrix pooled;
        for (const meval::Meeting& m : d.meetings) {
            if (!m.annotations) continue;
            if (pooled.raters.empty()) pooled.raters = m.annotations->raters;
            if (pooled.raters.size() != m.annotations->raters.size()) {
                throw meval::Error("icc: meetings have differing rater counts");
            }
            for (const auto& row : m.annotations->ratings) {
                pooled.ratings.push_back(row);
            }
        }
        const meval::IccValue v = meval::icc_2k(pooled);
        std::cout << "icc(2,k) " << v.value
                  << (v.degenerate ? " (degenerate)" : "") << "\n";
        return kExitOk;
    }
    if (a.sub == "seg") {
        const meval::Dataset ref = meval::load_dataset(a.ref);
        const meval::Dataset hyp = meval::load_dataset(a.hyp);
        std::map<std::string, const meval::Meeting*> hyp_by_id;
        for (const meval::Meeting& m : hyp.meetings) {
            hyp_by_id[m.transcript.meeting_id] = &m;
        }
        double pk_sum = 0.0, wd_sum = 0.0;
        int n = 0;
        meval::SegMetricConfig cfg;
        cfg.window = a.window;
        for (const meval::Meeting& m : ref.meetings) {
            auto it = hyp_by_id.find(m.transcript.meeting_id);
            if (it == hyp_by_id.end() || !m.gt_segmentation ||
                !it->second->gt_segmentation) {
                continue;
            }
            pk_sum += meval::pk(*m.gt_segmentation, *it->second->gt_segmentation,
                                m.transcript.size(), cfg);
            wd_sum += meval::window_diff(*m.gt_segmentation,
                                         *it->second->gt_segmentation,
                                         m.transcript.size(), cfg);
            ++n;
        }
        if (n == 0) throw meval::Error("seg: no comparable meetings");
        std::cout << "pk " << pk_sum / n << "\nwd " << wd_sum / n << "\n";
        return kExitOk;
    }
    if (a.sub == "corr") {
        const auto x = csv_column(a.file, a.x);
        const auto y = csv_column(a.file, a.y);
        const meval::CorrValue s = meval::spearman(x, y);
        const meval::CorrValue k = meval::kendall(x, y);
        std::cout << "spearman " << s.value << (s.degenerate ? " (degenerate)" : "")
                  << "\nkendall " << k.value << (k.degenerate ? " (degenerate)" : "")
                  << "\n";
        return kExitOk;
    }
    if (a.sub == "obj") {
        // Predictions: JSON object mapping meeting_id to a label array.
        std::ifstream in(a.pred);
        if (!in) throw meval::Error("cannot read " + a.pred);
        json preds;
        in >> preds;
        const meval::Dataset d = meval::load_dataset(a.file);
        std::vector<meval::MatchResult> results;
        for (const meval::Meeting& m : d.meetings) {
            if (!m.objective_gt || !preds.contains(m.transcript.meeting_id)) {
                continue;
            }
            meval::ObjectiveSet set;
            set.cap = 19;  // metric input, not a classifier output
            for (const json& v : preds[m.transcript.meeting_id]) {
                set.labels.insert(v.get<int>());
            }
            set.validate();
            results.push_back(meval::match_objectives(set, *m.objective_gt));
        }
        if (results.empty()) throw meval::Error("obj: no comparable meetings");
        const meval::ObjectiveMetrics om = meval::objective_metrics(results);
        std::cout << "hamming_loss " << om.hamming_loss << "\nmicro_f1 "
                  << om.micro_f1 << "\n";
        return kExitOk;
    }
    throw meval::Error("unknown metrics subcommand '" + a.sub + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Temporal fine-grained meeting effectiveness evaluation toolkit"};
    app.require_subcommand(1);

    std::string dataset_path;
    auto* validate = app.add_subcommand("validate", "Check dataset invariants");
    validate->add_option("--dataset", dataset_path, "Dataset JSON file")
        ->required();

    auto* run = app.add_subcommand("run", "Run an evaluation and write reports");
    std::string mode = "gt-inputs";
    std::string backend_spec = "mock:echo-gt";
    std::string endpoint;
    std::string model;
    std::string objectives = "gt";
    std::string scoring = "dist";
    std::string pooling = "global";
    std::string out_dir = "out";
    std::string meeting_class;
    int window = 1;
    int samples = 5;
    int max_inflight = 1;
    std::uint64_t seed = 0;
    run->add_option("--dataset", dataset_path)->required();
    run->add_option("--mode", mode)
        ->check(CLI::IsMember({"gt-inputs", "pred-seg", "external"}));
    run->add_option("--backend", backend_spec,
                    "mock:echo-gt | mock:constant=C | mock:noise=S | "
                    "scripted:FILE | remote");
    run->add_option("--endpoint", endpoint, "Remote backend URL");
    run->add_option("--model", model, "Remote model name");
    run->add_option("--window", window, "Context segments per side");
    run->add_option("--objectives", objectives)
        ->check(CLI::IsMember({"gt", "pred", "none"}));
    run->add_option("--samples", samples, "Sample count for --scoring samples");
    run->add_option("--scoring", scoring)->check(CLI::IsMember({"dist", "samples"}));
    run->add_option("--pooling", pooling)
        ->check(CLI::IsMember({"global", "per-meeting"}));
    run->add_option("--seed", seed);
    run->add_option("--max-inflight", max_inflight);
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--class", meeting_class, "Restrict to one meeting class");

    auto* metrics = app.add_subcommand("metrics", "Compute individual metrics");
    metrics->require_subcommand(1);
    MetricsArgs margs;
    auto* seg = metrics->add_subcommand("seg", "Pk / WindowDiff");
    seg->add_option("--ref", margs.ref)->required();
    seg->add_option("--hyp", margs.hyp)->required();
    seg->add_option("--window", margs.window, "0 = auto");
    auto* corr = metrics->add_subcommand("corr", "Spearman / Kendall from CSV");
    corr->add_option("--file", margs.file)->required();
    corr->add_option("--x", margs.x)->required();
    corr->add_option("--y", margs.y)->required();
    auto* icc = metrics->add_subcommand("icc", "ICC(2,k) over dataset annotations");
    icc->add_option("--file", margs.file)->required();
    auto* obj = metrics->add_subcommand("obj", "Hamming loss / micro-F1");
    obj->add_option("--file", margs.file, "Dataset with objective_gt")->required();
    obj->add_option("--pred", margs.pred, "JSON {meeting_id: [labels]}")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) return cmd_validate(dataset_path);
        if (metrics->parsed()) {
            if (seg->parsed()) margs.sub = "seg";
            if (corr->parsed()) margs.sub = "corr";
            if (icc->parsed()) margs.sub = "icc";
            if (obj->parsed()) margs.sub = "obj";
            return cmd_metrics(margs);
        }

        const meval::Dataset dataset = meval::load_dataset(dataset_path);
        meval::RunConfig config;
        config.mode = mode == "gt-inputs"
                          ? meval::RunConfig::Mode::gt_inputs
                          : mode == "pred-seg"
                                ? meval::RunConfig::Mode::pred_segmentation
                                : meval::RunConfig::Mode::external_transcripts;
        config.objectives =
            objectives == "gt" ? meval::RunConfig::ObjectivesCondition::gt
            : objectives == "pred"
                ? meval::RunConfig::ObjectivesCondition::predicted
                : meval::RunConfig::ObjectivesCondition::none;
        config.window = window;
        config.policy.mode = scoring == "dist"
                                 ? meval::SamplingPolicy::Mode::distribution_weighted
                                 : meval::SamplingPolicy::Mode::sample_mean;
        config.policy.sample_count = samples;
        config.policy.seed = seed;
        config.pooling = pooling == "global"
                             ? meval::RunConfig::Pooling::global
                             : meval::RunConfig::Pooling::per_meeting_mean;
        config.seed = seed;
        config.max_inflight = max_inflight;
        config.out_dir = out_dir;

        auto backend = make_backend(backend_spec, endpoint, model, dataset, seed);
        meval::MetaEvalReport report;
        try {
            report = meeting_class.empty()
                         ? meval::run_evaluation(dataset, config, *backend)
                         : meval::subset_report(dataset, config, *backend,
                                                meeting_class);
        } catch (const meval::BackendError& e) {
            std::cerr << "backend failure: " << e.what() << "\n"
                      << "partial results persisted under " << out_dir
                      << "/records.jsonl\n";
            return kExitBackend;
        }
        const std::string report_path = meval::write_report(report, out_dir);
        std::cout << "report: " << report_path << "\n"
                  << "segments: " << out_dir << "/segments.csv\n";
        if (report.spearman_corr) {
            std::cout << "spearman " << report.spearman_corr->value
                      << (report.spearman_corr->degenerate ? " (degenerate)" : "")
                      << "\n";
        }
        if (report.kendall_corr) {
            std::cout << "kendall " << report.kendall_corr->value
                      << (report.kendall_corr->degenerate ? " (degenerate)" : "")
                      << "\n";
        }
        if (report.pk_mean) {
            std::cout << "pk " << *report.pk_mean << "\nwd " << *report.wd_mean
                      << "\n";
        }
        return kExitOk;
    } catch (const meval::BackendError& e) {
        std::cerr << "backend failure: " << e.what() << "\n";
        return kExitBackend;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}
