#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "tfusion/config_io.hpp"
#include "tfusion/dataset.hpp"
#include "tfusion/serialize.hpp"
#include "tfusion/trainer.hpp"

using namespace tfusion;

int main(int argc, char** argv) {
    CLI::App app{"fit a fusion network on a cohort manifest"};
    std::string config_path, manifest_path, out_path, log_path;
    bool expand = false;
    app.add_option("--config", config_path, "JSON with network and train blocks")
        ->required()
        ->check(CLI::ExistingFile);
    app.add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
    app.add_option("--out", out_path, "weights output (TFLW1)")->required();
    app.add_option("--log", log_path, "training log (JSON Lines)");
    app.add_flag("--expand-single-visits", expand, "train on every visit as its own example");
    CLI11_PARSE(app, argc, argv);

    try {
        const nlohmann::json cfg_json = load_json_file(config_path);
        const BaselineConfig net = cfg_json.contains("network")
                                       ? network_from_json(cfg_json.at("network"))
                                       : BaselineConfig{};
        const TrainConfig cfg =
            cfg_json.contains("train") ? train_from_json(cfg_json.at("train")) : TrainConfig{};

        Manifest m = load_manifest(manifest_path);
        if (expand) m = expand_single_visits(m);
        std::cerr << "loading " << m.sequences.size() << " sequences\n";
        const Dataset data = load_dataset(m);

        NetworkWeights w = init_network<float>(net, cfg.method);
        const TrainResult result = train(w, data, cfg);
        save_weights(out_path, w.params);

        if (!log_path.empty()) {
            std::ofstream os(log_path, std::ios::binary);
            if (!os) throw std::runtime_error("cannot open " + log_path);
            for (const TrainLogEntry& e : result.log)
                os << nlohmann::json{{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"seconds", e.seconds}}
                          .dump()
                   << "\n";
        }
        if (result.skipped_pretrained)
            std::cerr << "pretrained weights adapted without training\n";
        else
            for (const TrainLogEntry& e : result.log)
                std::cerr << "epoch " << e.epoch << " mean_loss " << e.mean_loss << " (" << e.seconds
                          << "s)\n";
        std::cout << out_path << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
