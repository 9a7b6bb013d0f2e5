#pragma once

#include <functional>

#include "rpn/checkpoint.hpp"

namespace rpn {

struct TrainConfig {
  PyramidConfig pyramid;
  uint64_t seed = 1;
  int batch = 8;
  int crop = 64;
  int steps_stage1 = 2000;
  int steps_stage2 = 500;
  int steps_stage3 = 1500;
  Real lr_stage1 = 1e-4;
  Real lr_stage2 = 1e-4;
  Real lr_stage3 = 3e-5;
  Real uncertainty_weight = 1.0;  // stage-2 coefficient on L_U
  Real guided_weight = 1.0;       // stage-3 coefficient on L_UG
  std::string corpus_dir;         // empty: synthetic corpus
  int synthetic_count = 60;
  int synthetic_size = 64;
  int test_split = 12;
  std::string out_dir;
  int log_every = 25;

  void validate() const;
};

TrainConfig train_config_from_kv(const std::map<std::string, std::string>& kv);
std::string train_config_to_text(const TrainConfig& cfg);

struct LossBreakdown {
  std::vector<double> distortion;  // D_l, mean squared error per level
  std::vector<double> rate;        // R_l, bits per level pixel
  double l_sca = 0;
  double l_u = 0;
  double l_ug = 0;
  double total = 0;
};

class Adam {
 public:
  Adam(Real beta1 = 0.9, Real beta2 = 0.999, Real eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}
  // Applies one update to every trainable parameter passing the filter.
  // Filtered-out parameters are untouched, moments included.
  void step(ParamStore& store, Real lr,
            const std::function<bool(const Parameter&)>& filter = nullptr);

 private:
  Real beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

// n reproducible images: smooth gradients, random rectangles, band-limited
// noise; pixel range [0,1].
std::vector<Image> make_synthetic_corpus(int n, int size, uint64_t seed);

// Loads every .png/.ppm in the directory (sorted); images smaller than the
// crop are skipped and reported. Empty result is a configuration error.
std::vector<Image> ingest_directory(const std::string& path, int crop,
                                    std::vector<std::string>* skipped_out);

struct Dataset {
  std::vector<Image> train;
  std::vector<Image> test;
};

// Differentiable forward pass over one batch at every level.
struct TrainForward {
  std::vector<Var> refs;       // level inputs as constants
  std::vector<Var> x_hats;     // reconstructions
  std::vector<Var> latents;    // noisy quantized latents / residual sums
  std::vector<Var> rate_bits;  // total bits per level (scalar Vars)
  std::vector<double> level_pixels;  // batch pixels per level
};

TrainForward forward_train(const std::vector<TensorR>& level_batches,
                           Model& model, MaskMode mask_mode, Rng& noise_rng,
                           Rng& mask_rng);

// Scalable rate-distortion objective: sum over levels of
// MSE(x_l, x_hat_l) + lambda_l * bits_l / level_pixels_l.
struct RdLoss {
  Var total;
  LossBreakdown breakdown;
};

RdLoss loss_rd(const TrainForward& fwd, const PyramidConfig& cfg);

class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg);

  // One optimizer update under the given stage's objective (1, 2 or 3).
  LossBreakdown step(int stage);
  void run_stage(int stage);
  void run();  // all three stages plus checkpoint

  Model& model() { return *model_; }
  const Dataset& data() const { return data_; }
  const TrainConfig& config() const { return cfg_; }
  int global_step() const { return global_step_; }
  const std::vector<LossBreakdown>& history() const { return history_; }

  // Draws the next deterministic batch, one tensor per level.
  std::vector<TensorR> sample_level_batch();

 private:
  TrainConfig cfg_;
  std::unique_ptr<Model> model_;
  Dataset data_;
  Adam opt_;
  Rng rng_data_;
  Rng rng_noise_;
  Rng rng_mask_;
  int global_step_ = 0;
  std::vector<LossBreakdown> history_;
};

}  // namespace rpn
