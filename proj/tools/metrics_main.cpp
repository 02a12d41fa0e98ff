#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "tfusion/config_io.hpp"
#include "tfusion/harness.hpp"
#include "tfusion/metrics.hpp"

using namespace tfusion;

int main(int argc, char** argv) {
    CLI::App app{"bootstrap metric evaluation"};
    app.require_subcommand(1);
    auto* eval = app.add_subcommand("eval", "AUROC/AUPRC with BCa confidence intervals");
    std::string scores_path, metric = "both";
    int64_t B = 10000;
    uint64_t seed = 0;
    double alpha = 0.05;
    bool grouped = false;
    eval->add_option("--scores", scores_path, "JSON Lines of {id, group, score, label}")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--B", B, "bootstrap replicates");
    eval->add_option("--seed", seed);
    eval->add_option("--alpha", alpha, "two-sided level (default 0.05)");
    eval->add_option("--metric", metric)->check(CLI::IsMember({"auroc", "auprc", "both"}));
    eval->add_flag("--grouped", grouped, "resample groups instead of examples");
    CLI11_PARSE(app, argc, argv);

    try {
        std::ifstream is(scores_path);
        if (!is) throw std::runtime_error("cannot open " + scores_path);
        ScoredSet s;
        std::string line;
        int64_t line_no = 0;
        bool any_group = false;
        while (std::getline(is, line)) {
            ++line_no;
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw std::runtime_error(scores_path + " line " + std::to_string(line_no) + ": " +
                                         e.what());
            }
            s.scores.push_back(j.at("score").get<double>());
            s.labels.push_back(j.at("label").get<int>());
            s.groups.push_back(j.value("group", ""));
            if (!s.groups.back().empty()) any_group = true;
        }
        if (!any_group || !grouped) s.groups.clear();

        BcaOptions opt;
        opt.n_bootstrap = B;
        opt.alpha = alpha;
        opt.seed = seed;
        nlohmann::json out = nlohmann::json::array();
        if (metric == "auroc" || metric == "both") {
            const MetricReport r =
                bca_interval(s, "auroc", [](const ScoredSet& x) { return auroc(x); }, opt);
            std::cerr << "auroc " << format_metric(r) << "\n";
            out.push_back(to_json(r));
        }
        if (metric == "auprc" || metric == "both") {
            const MetricReport r =
                bca_interval(s, "auprc", [](const ScoredSet& x) { return auprc(x); }, opt);
            std::cerr << "auprc " << format_metric(r) << "\n";
            out.push_back(to_json(r));
        }
        std::cout << (out.size() == 1 ? out[0].dump(2) : out.dump(2)) << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
