#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "tfusion/config_io.hpp"
#include "tfusion/synthdata.hpp"

using namespace tfusion;

int main(int argc, char** argv) {
    CLI::App app{"synthetic multi-visit ultrasound cohorts"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("generate", "render a cohort and write its manifest");
    std::string gen_spec, gen_out, gen_prefix = "p";
    gen->add_option("--spec", gen_spec, "cohort spec JSON")->required()->check(CLI::ExistingFile);
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--prefix", gen_prefix, "patient id prefix");

    auto* split = app.add_subcommand("split", "patient-level train/test split");
    std::string split_manifest, split_train, split_test;
    double split_fraction = 0.7;
    uint64_t split_seed = 1;
    split->add_option("--manifest", split_manifest)->required()->check(CLI::ExistingFile);
    split->add_option("--fraction", split_fraction, "train fraction");
    split->add_option("--seed", split_seed);
    split->add_option("--out-train", split_train, "train manifest path")->required();
    split->add_option("--out-test", split_test, "test manifest path")->required();

    auto* kfold = app.add_subcommand("kfold", "patient-level cross-validation folds");
    std::string kfold_manifest, kfold_out;
    int64_t kfold_k = 5;
    uint64_t kfold_seed = 1;
    kfold->add_option("--manifest", kfold_manifest)->required()->check(CLI::ExistingFile);
    kfold->add_option("--k", kfold_k);
    kfold->add_option("--seed", kfold_seed);
    kfold->add_option("--out-dir", kfold_out, "writes fold{i}_{train,val}.jsonl")->required();

    auto* hist = app.add_subcommand("hist", "visit count histogram by label");
    std::string hist_manifest, hist_out;
    hist->add_option("--manifest", hist_manifest)->required()->check(CLI::ExistingFile);
    hist->add_option("--out", hist_out, "csv path, stdout when omitted");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const CohortSpec spec = cohort_from_json(load_json_file(gen_spec));
            const std::string path = generate_cohort(spec, gen_out, PipelineConfig{}, gen_prefix);
            std::cout << path << "\n";
        } else if (split->parsed()) {
            const Manifest m = load_manifest(split_manifest);
            auto [train, test] = split_by_patient(m, split_fraction, split_seed);
            save_manifest(train, split_train);
            save_manifest(test, split_test);
            std::cout << "train: " << train.patients().size() << " patients, " << train.sequences.size()
                      << " sequences\ntest: " << test.patients().size() << " patients, "
                      << test.sequences.size() << " sequences\n";
        } else if (kfold->parsed()) {
            const Manifest m = load_manifest(kfold_manifest);
            const auto folds = kfold_by_patient(m, kfold_k, kfold_seed);
            std::filesystem::create_directories(kfold_out);
            for (size_t f = 0; f < folds.size(); ++f) {
                const std::string stem = kfold_out + "/fold" + std::to_string(f);
                save_manifest(folds[f].first, stem + "_train.jsonl");
                save_manifest(folds[f].second, stem + "_val.jsonl");
            }
            std::cout << folds.size() << " folds under " << kfold_out << "\n";
        } else if (hist->parsed()) {
            const Manifest m = load_manifest(hist_manifest);
            std::string csv = "visit_count,n_negative,n_positive\n";
            for (const VisitHistogramRow& r : visit_histogram(m))
                csv += std::to_string(r.visit_count) + "," + std::to_string(r.n_negative) + "," +
                       std::to_string(r.n_positive) + "\n";
            if (hist_out.empty()) {
                std::cout << csv;
            } else {
                std::ofstream os(hist_out, std::ios::binary);
                if (!os) throw std::runtime_error("cannot open " + hist_out);
                os << csv;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
