#pragma once

#include <vector>

#include "idrestore/data.hpp"
#include "idrestore/degradation.hpp"
#include "idrestore/model.hpp"
#include "idrestore/training.hpp"

namespace idr::test {

inline ModelConfig small_model_config(int image_size = 32, std::uint64_t seed = 1) {
  ModelConfig cfg;
  cfg.image_size = image_size;
  cfg.denoiser.channels = 8;
  cfg.denoiser.blocks = 2;
  cfg.denoiser.attention_block = 1;
  cfg.seed = seed;
  return cfg;
}

inline DegradationRanges mild_degradation() {
  DegradationRanges r;
  r.sigma = {1.0, 2.0};
  r.scale = {2.0, 4.0};
  r.noise = {0.0, 5.0};
  r.quality = {60.0, 90.0};
  return r;
}

// Procedural faces with a fixed degradation per item; every other image of
// the same identity is a reference.
inline std::vector<TrainingItem> make_items(const RestorationModel& model, int identities, int per_identity,
                                            std::uint64_t seed, const DegradationRanges& ranges = mild_degradation()) {
  const auto corpus = generate_corpus(identities, per_identity, model.config().image_size, seed);
  std::vector<TrainingItem> items;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::vector<Image> refs;
    for (std::size_t j = 0; j < corpus.size(); ++j)
      if (j != i && corpus[j].identity_id == corpus[i].identity_id) refs.push_back(corpus[j].image);
    Rng rng(derive_seed(seed, i));
    const TrainingPair pair = make_training_pair(corpus[i].image, ranges, rng);
    items.push_back(prepare_training_item(corpus[i].image_id, pair.hq, pair.lq, refs, model));
  }
  return items;
}

}  // namespace idr::test
