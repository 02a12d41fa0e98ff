#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tfusion/metrics.hpp"
#include "tfusion/network.hpp"
#include "tfusion/synthdata.hpp"

namespace tfusion {

struct LoadedSequence {
    std::string id;       // patient_side
    std::string patient;  // group id for patient-level resampling
    int label = 0;
    VisitSeq visits;  // preprocessed [1,S,S] view pairs, visit order
};

struct Dataset {
    std::vector<LoadedSequence> sequences;
    int64_t input_size = 0;

    size_t size() const { return sequences.size(); }
};

// Runs the manifest's preprocessing chain over every referenced image and
// converts to model input tensors sized by the pipeline's output.
Dataset load_dataset(const Manifest& m);

// positive-class probability per sequence, grouped by patient
ScoredSet score_dataset(const NetworkWeights& w, FusionMethod method, const Dataset& d);

}  // namespace tfusion
