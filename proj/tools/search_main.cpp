#include <iostream>

#include "CLI11.hpp"
#include "tfusion/config_io.hpp"
#include "tfusion/trainer.hpp"

using namespace tfusion;

int main(int argc, char** argv) {
    CLI::App app{"randomized grid search with patient-level cross-validation"};
    std::string space_path, manifest_path, out_path;
    int64_t k = 5;
    app.add_option("--space", space_path, "search space JSON, optional network block")
        ->required()
        ->check(CLI::ExistingFile);
    app.add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
    app.add_option("--k", k, "cross-validation folds");
    app.add_option("--out", out_path, "results JSON, stdout when omitted");
    CLI11_PARSE(app, argc, argv);

    try {
        const nlohmann::json j = load_json_file(space_path);
        const SearchSpace space =
            j.contains("space") ? search_space_from_json(j.at("space")) : search_space_from_json(j);
        const BaselineConfig net =
            j.contains("network") ? network_from_json(j.at("network")) : BaselineConfig{};
        const Manifest m = load_manifest(manifest_path);

        const SearchResult result = random_grid_search_cv(space, m, net, k);

        nlohmann::json candidates = nlohmann::json::array();
        for (const CandidateResult& c : result.candidates)
            candidates.push_back(nlohmann::json{{"config", to_json(c.config)},
                                                {"fold_auprc", c.fold_auprc},
                                                {"fold_auroc", c.fold_auroc},
                                                {"mean_auprc", c.mean_auprc},
                                                {"mean_auroc", c.mean_auroc}});
        const nlohmann::json out{{"best_index", result.best_index},
                                 {"best_config", to_json(result.best())},
                                 {"candidates", candidates}};
        if (out_path.empty())
            std::cout << out.dump(2) << "\n";
        else
            save_json_file(out_path, out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
