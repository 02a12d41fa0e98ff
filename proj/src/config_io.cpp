#include "tfusion/config_io.hpp"

#include <fstream>
#include <stdexcept>

namespace tfusion {

using nlohmann::json;

json to_json(const CohortSpec& s) {
    json dist = json::array();
    for (const auto& [count, prob] : s.visit_count_distribution)
        dist.push_back(json::array({count, prob}));
    return json{{"n_patients", s.n_patients},
                {"visit_count_distribution", dist},
                {"positive_rate", s.positive_rate},
                {"signal_strength", s.signal_strength},
                {"temporal_signal", s.temporal_signal},
                {"seed", s.seed}};
}

CohortSpec cohort_from_json(const json& j) {
    CohortSpec s;
    s.n_patients = j.at("n_patients").get<int64_t>();
    s.visit_count_distribution.clear();
    for (const auto& pair : j.at("visit_count_distribution"))
        s.visit_count_distribution.emplace_back(pair.at(0).get<int64_t>(), pair.at(1).get<double>());
    s.positive_rate = j.at("positive_rate").get<double>();
    s.signal_strength = j.at("signal_strength").get<double>();
    s.temporal_signal = j.at("temporal_signal").get<double>();
    s.seed = j.at("seed").get<uint64_t>();
    s.validate();
    return s;
}

json to_json(const PipelineConfig& p) {
    return json{{"crop_w", p.crop_w},
                {"crop_h", p.crop_h},
                {"clahe_tiles_x", p.clahe_tiles_x},
                {"clahe_tiles_y", p.clahe_tiles_y},
                {"clahe_clip", p.clahe_clip},
                {"out_size", p.out_size},
                {"order", p.order}};
}

PipelineConfig pipeline_from_json(const json& j) {
    PipelineConfig p;
    p.crop_w = j.at("crop_w").get<int64_t>();
    p.crop_h = j.at("crop_h").get<int64_t>();
    p.clahe_tiles_x = j.at("clahe_tiles_x").get<int64_t>();
    p.clahe_tiles_y = j.at("clahe_tiles_y").get<int64_t>();
    p.clahe_clip = j.at("clahe_clip").get<double>();
    p.out_size = j.at("out_size").get<int64_t>();
    p.order = j.at("order").get<std::vector<std::string>>();
    p.validate();
    return p;
}

json to_json(const BaselineConfig& c) {
    return json{{"input_size", c.input_size},
                {"conv_channels", c.conv_channels},
                {"kernel", c.kernel},
                {"padding", c.padding},
                {"branch_out", c.branch_out},
                {"head_hidden", c.head_hidden},
                {"lstm_hidden", c.lstm_hidden},
                {"tsm_fraction", c.tsm_fraction},
                {"init_seed", c.init_seed}};
}

BaselineConfig network_from_json(const json& j) {
    BaselineConfig c;
    c.input_size = j.value("input_size", c.input_size);
    if (j.contains("conv_channels")) c.conv_channels = j.at("conv_channels").get<std::vector<int64_t>>();
    c.kernel = j.value("kernel", c.kernel);
    c.padding = j.value("padding", c.padding);
    c.branch_out = j.value("branch_out", c.branch_out);
    c.head_hidden = j.value("head_hidden", c.head_hidden);
    c.lstm_hidden = j.value("lstm_hidden", c.lstm_hidden);
    c.tsm_fraction = j.value("tsm_fraction", c.tsm_fraction);
    c.init_seed = j.value("init_seed", c.init_seed);
    c.validate();
    return c;
}

json to_json(const TrainConfig& c) {
    return json{{"learning_rate", c.learning_rate},
                {"momentum", c.momentum},
                {"weight_decay", c.weight_decay},
                {"batch_size", c.batch_size},
                {"epochs", c.epochs},
                {"seed", c.seed},
                {"method", method_name(c.method)},
                {"pretrained_weights", c.pretrained_weights}};
}

TrainConfig train_from_json(const json& j) {
    TrainConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
    c.pretrained_weights = j.value("pretrained_weights", c.pretrained_weights);
    c.validate();
    return c;
}

json to_json(const SearchSpace& s) {
    return json{{"learning_rates", s.learning_rates},
                {"momentums", s.momentums},
                {"weight_decays", s.weight_decays},
                {"batch_sizes", s.batch_sizes},
                {"n_samples", s.n_samples},
                {"epochs", s.epochs},
                {"method", method_name(s.method)},
                {"seed", s.seed}};
}

SearchSpace search_space_from_json(const json& j) {
    SearchSpace s;
    if (j.contains("learning_rates")) s.learning_rates = j.at("learning_rates").get<std::vector<double>>();
    if (j.contains("momentums")) s.momentums = j.at("momentums").get<std::vector<double>>();
    if (j.contains("weight_decays")) s.weight_decays = j.at("weight_decays").get<std::vector<double>>();
    if (j.contains("batch_sizes")) s.batch_sizes = j.at("batch_sizes").get<std::vector<int64_t>>();
    s.n_samples = j.value("n_samples", s.n_samples);
    s.epochs = j.value("epochs", s.epochs);
    if (j.contains("method")) s.method = parse_method(j.at("method").get<std::string>());
    s.seed = j.value("seed", s.seed);
    s.validate();
    return s;
}

json to_json(const MetricReport& r) {
    return json{{"metric", r.metric},
                {"point", r.point},
                {"ci_low", r.ci_low},
                {"ci_high", r.ci_high},
                {"n_bootstrap", r.n_bootstrap},
                {"n_discarded", r.n_discarded},
                {"seed", r.seed},
                {"z0", r.z0},
                {"accel", r.accel},
                {"accel_degenerate", r.accel_degenerate}};
}

json load_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed json in " + path + ": " + e.what());
    }
    return j;
}

void save_json_file(const std::string& path, const json& j) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << j.dump(2) << "\n";
    if (!os) throw std::runtime_error("write failed for " + path);
}

json model_card(const BaselineConfig& net, const TrainConfig& train, uint64_t data_fingerprint,
                int64_t n_sequences) {
    return json{{"architecture", to_json(net)},
                {"training", to_json(train)},
                {"parameter_count", parameter_count(net, train.method)},
                {"train_data_fingerprint", data_fingerprint},
                {"train_sequences", n_sequences}};
}

}  // namespace tfusion
