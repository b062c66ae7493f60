#pragma once

#include <cmath>
#include <vector>

#include "attrirec/features.hpp"
#include "attrirec/model.hpp"
#include "attrirec/random.hpp"

namespace fixture {

// A tiny model with random parameters, a feature table where item 3 lacks
// text and item 1 lacks a visual feature, and a batch touching every head.
struct TinyModel {
    attrirec::ModelDims dims;
    attrirec::ModelParams params;
    attrirec::FeatureTable features;
    std::vector<attrirec::TrainingExample> batch;
};

inline attrirec::ModalityFeature random_unit(attrirec::Rng& rng, std::size_t dim) {
    attrirec::ModalityFeature f;
    f.vector.assign(dim, 0.0);
    double norm = 0.0;
    for (auto& x : f.vector) {
        x = rng.normal();
        norm += x * x;
    }
    for (auto& x : f.vector) {
        x /= std::sqrt(norm);
    }
    f.present = true;
    return f;
}

inline TinyModel tiny_model(std::uint64_t seed = 5) {
    attrirec::ModelDims dims{3, 4, 4, 6, 3, 3};
    attrirec::ModelParams params = attrirec::init_params(dims, seed);
    attrirec::Rng rng(seed);
    for (auto& v : params.values()) {
        v = rng.uniform(-0.5, 0.5);
    }
    attrirec::FeatureTable ft;
    for (std::size_t i = 0; i < dims.n_items; ++i) {
        attrirec::ModalityFeature t;
        t.vector.assign(dims.text_dim, 0.0);
        attrirec::ModalityFeature v;
        v.vector.assign(dims.visual_dim, 0.0);
        if (i != 3) {
            t = random_unit(rng, dims.text_dim);
        }
        if (i != 1) {
            v = random_unit(rng, dims.visual_dim);
        }
        std::vector<std::size_t> nz;
        for (std::size_t k = 0; k < dims.text_dim; ++k) {
            if (t.vector[k] != 0.0) {
                nz.push_back(k);
            }
        }
        ft.text.push_back(t);
        ft.visual.push_back(v);
        ft.text_nonzero.push_back(nz);
    }
    std::vector<attrirec::TrainingExample> batch;
    for (std::size_t e = 0; e < 6; ++e) {
        attrirec::TrainingExample ex;
        ex.user = e % 3;
        ex.item = e % 4;
        ex.label = static_cast<int>(e % 2);
        ex.rating = static_cast<int>(1 + e % 5);
        if (e % 3 != 0) {
            ex.truth_attrs = {e % 3};
        }
        ex.cross_domain = e % 2 == 0;
        ex.history = {{(e + 1) % 4, 1}, {(e + 2) % 4, -1}};
        batch.push_back(ex);
    }
    return {dims, std::move(params), std::move(ft), std::move(batch)};
}

} // namespace fixture
