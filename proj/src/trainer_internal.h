#pragma once

#include "svae/trainer.h"

namespace svae {

struct Trainer::Optimizers {
  torch::optim::Adam gen;
  torch::optim::Adam disc;

  Optimizers(std::vector<torch::Tensor> g, std::vector<torch::Tensor> d, const TrainConfig& t)
      : gen(std::move(g), torch::optim::AdamOptions(t.lr).betas({t.adam_beta1, t.adam_beta2})),
        disc(std::move(d), torch::optim::AdamOptions(t.lr).betas({t.adam_beta1, t.adam_beta2})) {}
};

}  // namespace svae
