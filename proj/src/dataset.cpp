#include "tfusion/dataset.hpp"

#include <unordered_map>

namespace tfusion {

Dataset load_dataset(const Manifest& m) {
    m.preprocess.validate();
    Dataset d;
    d.input_size = m.preprocess.out_size;

    // sequences may reference the same file more than once
    std::unordered_map<std::string, Tensor> cache;
    auto load_view = [&](const std::string& rel) {
        auto it = cache.find(rel);
        if (it != cache.end()) return it->second;
        const GrayImage img = read_pgm(m.dir + "/" + rel);
        Tensor t = to_model_input(apply_pipeline(img, m.preprocess), m.preprocess.out_size);
        cache.emplace(rel, t);
        return t;
    };

    for (const SeqRecord& s : m.sequences) {
        LoadedSequence seq;
        seq.id = s.id();
        seq.patient = s.patient_id;
        seq.label = s.label;
        for (const VisitRecord& v : s.visits)
            seq.visits.push_back(Visit{load_view(v.sagittal_path), load_view(v.transverse_path)});
        d.sequences.push_back(std::move(seq));
    }
    return d;
}

ScoredSet score_dataset(const NetworkWeights& w, FusionMethod method, const Dataset& d) {
    ScoredSet s;
    for (const LoadedSequence& seq : d.sequences) {
        s.scores.push_back(static_cast<double>(predict_proba(w, method, seq.visits)));
        s.labels.push_back(seq.label);
        s.groups.push_back(seq.patient);
    }
    return s;
}

}  // namespace tfusion
