#include <iostream>

#include "CLI11.hpp"
#include "tfusion/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"experiment orchestration: cohorts, training, comparison reports"};
    app.require_subcommand(1);
    auto* run = app.add_subcommand("run", "execute an experiment spec end to end");
    std::string spec_path;
    run->add_option("--spec", spec_path, "experiment JSON")->required()->check(CLI::ExistingFile);
    CLI11_PARSE(app, argc, argv);

    try {
        tfusion::run_harness(spec_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
