#pragma once

#include <memory>

#include "rpn/crcm.hpp"
#include "rpn/entropy.hpp"
#include "rpn/image.hpp"
#include "rpn/uncertainty.hpp"

namespace rpn {

struct PyramidConfig {
  ScalabilityMode mode = ScalabilityMode::kSpatial;
  int levels = 3;
  std::vector<int> channels;
  std::vector<Real> lambdas;
  int crcm_iterations = 2;
  Real mask_temperature = Real(2) / 3;
  int gca_reduction = 4;
  int st_warmup_steps = 500;

  // Spatial mode: 2^(L-1-l), i.e. 4-2-1 for three levels. Quality mode: 1.
  int spatial_factor(int level) const;
  // Inputs are padded so every level is a multiple of 16 after scaling.
  int pad_multiple() const { return 16 * spatial_factor(0); }
  void validate() const;

  static PyramidConfig spatial_default();
  static PyramidConfig quality_default();
};

struct Model {
  PyramidConfig cfg;
  uint64_t seed = 0;
  ParamStore params;
  std::vector<TransformParams> transforms;
  std::vector<CrcmParams> crcms;
  std::vector<FactorizedPrior> priors;
  std::vector<UncertaintyHeadParams> heads;
};

std::unique_ptr<Model> make_model(const PyramidConfig& cfg, uint64_t seed);

// Per-level coding byproducts of one image.
struct LevelCodingState {
  TensorR y;       // raw latent (encoder only)
  TensorR y_hat;   // quantized latent, identical on both sides
  TensorR y_bar;   // resolution field; empty at the base level
  TensorR r_hat;   // quantized residual; empty at the base level
  TensorR x_hat;   // unclamped reconstruction (1,3,H_l,W_l)
  double bits_estimate = 0;
  size_t segment_bytes = 0;
};

struct ScalableContainer {
  struct LevelInfo {
    uint16_t h = 0, w = 0;  // padded level image dims
    uint16_t channels = 0;
    uint32_t seg_len = 0;
  };
  uint8_t version = 1;
  ScalabilityMode mode = ScalabilityMode::kSpatial;
  uint16_t orig_h = 0, orig_w = 0;
  std::vector<LevelInfo> info;        // declared levels
  std::vector<std::string> segments;  // available levels (prefix of info)

  int declared_levels() const { return static_cast<int>(info.size()); }
  int available_levels() const { return static_cast<int>(segments.size()); }
};

// Header is strict (FormatError names the missing/invalid field); segments
// are read greedily so byte-truncated prefixes still parse, exposing only
// the fully present levels.
std::string serialize_container(const ScalableContainer& c);
ScalableContainer parse_container(std::string_view bytes);
ScalableContainer truncate_container(const ScalableContainer& c,
                                     int keep_levels);

// Level inputs from a padded image: spatial mode resamples by 4-2-1 style
// factors, quality mode replicates.
std::vector<Image> build_pyramid_inputs(const Image& padded,
                                        const PyramidConfig& cfg);
// Display dims of level l for an unpadded source.
std::pair<int, int> level_crop_dims(const PyramidConfig& cfg, int orig_h,
                                    int orig_w, int level);
// What the codec is asked to reproduce at each level, cropped to display
// dims; used as the metric reference.
std::vector<Image> level_references(const Image& orig,
                                    const PyramidConfig& cfg);

std::pair<std::string, LevelCodingState> compress_base(const Image& x0,
                                                       Model& model);
// y_hat_prev must be the decoded latent of level-1 so both sides compute
// the same resolution field.
std::pair<std::string, LevelCodingState> compress_enhance(
    const Image& xl, const TensorR& y_hat_prev, int level, Model& model);

struct EncodeResult {
  ScalableContainer container;
  std::vector<LevelCodingState> states;
};

EncodeResult encode_scalable(const Image& img, Model& model);

// Decoded latents for levels 0..up_to_level inclusive.
std::vector<TensorR> decode_latents(const ScalableContainer& c,
                                    int up_to_level, Model& model);
// Reconstruction at target_level, clamped and cropped to display dims.
Image decode_scalable(const ScalableContainer& c, int target_level,
                      Model& model);

}  // namespace rpn
