#pragma once

#include <string>

#include "json.hpp"
#include "tfusion/harness.hpp"
#include "tfusion/image.hpp"
#include "tfusion/metrics.hpp"
#include "tfusion/network.hpp"
#include "tfusion/synthdata.hpp"
#include "tfusion/trainer.hpp"

namespace tfusion {

nlohmann::json to_json(const CohortSpec& s);
CohortSpec cohort_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PipelineConfig& p);
PipelineConfig pipeline_from_json(const nlohmann::json& j);

nlohmann::json to_json(const BaselineConfig& c);
BaselineConfig network_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SearchSpace& s);
SearchSpace search_space_from_json(const nlohmann::json& j);

nlohmann::json to_json(const MetricReport& r);

nlohmann::json load_json_file(const std::string& path);
void save_json_file(const std::string& path, const nlohmann::json& j);

// architecture, hyperparameters, parameter count, data fingerprint
nlohmann::json model_card(const BaselineConfig& net, const TrainConfig& train,
                          uint64_t data_fingerprint, int64_t n_sequences);

}  // namespace tfusion
