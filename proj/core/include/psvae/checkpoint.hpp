#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <optional>
#include <string>

#include "psvae/model.hpp"

namespace psvae {

/// A checkpoint is a directory:
///   manifest.json  version, network spec, variant, iteration, RNG states
///   params.bin     all parameter and buffer arrays keyed by module path
///   opt_g.pt / opt_d.pt   optimizer state (when training state is saved)
struct CheckpointInfo {
  NetworkSpec spec;
  int64_t iteration = 0;
  std::string data_rng_state;  // serialized std::mt19937_64
  std::string config_hash;
  bool has_optimizers = false;
  bool baseline = false;
};

void save_named_tensors(const std::filesystem::path& path,
                        const torch::OrderedDict<std::string, torch::Tensor>& params,
                        const torch::OrderedDict<std::string, torch::Tensor>& buffers);
void load_named_tensors(const std::filesystem::path& path, torch::nn::Module& module);

void save_checkpoint(const std::filesystem::path& dir, ModelBundle bundle,
                     const CheckpointInfo& info,
                     torch::optim::Optimizer* opt_g = nullptr,
                     torch::optim::Optimizer* opt_d = nullptr);

CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir);

/// Rebuilds the bundle from the stored spec and loads its arrays.
ModelBundle load_checkpoint_model(const std::filesystem::path& dir);

void load_checkpoint_optimizers(const std::filesystem::path& dir,
                                torch::optim::Optimizer& opt_g,
                                torch::optim::Optimizer& opt_d);

}  // namespace psvae
