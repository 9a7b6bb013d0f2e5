#include "rpn/pyramid.hpp"

#include <cmath>
#include <cstring>

namespace rpn {

int PyramidConfig::spatial_factor(int level) const {
  check_config(level >= 0 && level < levels, "level out of range");
  if (mode == ScalabilityMode::kQuality) return 1;
  return 1 << (levels - 1 - level);
}

void PyramidConfig::validate() const {
  check_config(levels >= 1, "need at least one level");
  check_config(static_cast<int>(channels.size()) == levels,
               "channels must list one entry per level");
  check_config(static_cast<int>(lambdas.size()) == levels,
               "lambdas must list one entry per level");
  for (int c : channels)
    check_config(c >= 2 && c % 2 == 0, "channel counts must be even and >= 2");
  for (Real l : lambdas) check_config(l > 0, "lambdas must be positive");
  check_config(crcm_iterations >= 1, "crcm iterations must be >= 1");
  check_config(mask_temperature > 0, "mask temperature must be positive");
  check_config(levels <= 8, "more than 8 levels is not supported");
}

PyramidConfig PyramidConfig::spatial_default() {
  PyramidConfig c;
  c.mode = ScalabilityMode::kSpatial;
  c.levels = 3;
  c.channels = {16, 16, 16};
  c.lambdas = {0.0067, 0.013, 0.025};
  return c;
}

PyramidConfig PyramidConfig::quality_default() {
  PyramidConfig c;
  c.mode = ScalabilityMode::kQuality;
  c.levels = 4;
  c.channels = {16, 20, 24, 28};
  c.lambdas = {0.04, 0.02, 0.01, 0.005};
  return c;
}

std::unique_ptr<Model> make_model(const PyramidConfig& cfg, uint64_t seed) {
  cfg.validate();
  auto m = std::make_unique<Model>();
  m->cfg = cfg;
  m->seed = seed;
  Rng rng(seed);
  for (int l = 0; l < cfg.levels; ++l) {
    const std::string lvl = "level" + std::to_string(l);
    m->transforms.push_back(make_transform_params(
        m->params, lvl + ".transform", cfg.channels[static_cast<size_t>(l)],
        rng));
    m->priors.emplace_back(m->params, lvl + ".prior",
                           cfg.channels[static_cast<size_t>(l)], rng);
  }
  const int up_stages = cfg.mode == ScalabilityMode::kSpatial ? 3 : 4;
  for (int l = 0; l + 1 < cfg.levels; ++l) {
    const std::string pair = "pair" + std::to_string(l);
    m->crcms.push_back(make_crcm_params(
        m->params, pair + ".crcm", cfg.mode,
        cfg.channels[static_cast<size_t>(l)],
        cfg.channels[static_cast<size_t>(l) + 1], cfg.crcm_iterations,
        cfg.gca_reduction, cfg.mask_temperature, rng));
    m->heads.push_back(make_uncertainty_head(
        m->params, pair + ".uncertainty",
        cfg.channels[static_cast<size_t>(l) + 1], up_stages, rng));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Container

namespace {

void put_u16(std::string& s, uint16_t v) {
  s.push_back(static_cast<char>(v & 0xFF));
  s.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class FieldReader {
 public:
  explicit FieldReader(std::string_view bytes) : bytes_(bytes) {}

  uint8_t u8(const std::string& field) {
    need(1, field);
    return static_cast<uint8_t>(bytes_[pos_++]);
  }
  uint16_t u16(const std::string& field) {
    need(2, field);
    const uint16_t v = static_cast<uint16_t>(
        static_cast<uint8_t>(bytes_[pos_]) |
        (static_cast<uint8_t>(bytes_[pos_ + 1]) << 8));
    pos_ += 2;
    return v;
  }
  uint32_t u32(const std::string& field) {
    need(4, field);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<uint8_t>(bytes_[pos_ + i]))
           << (8 * i);
    pos_ += 4;
    return v;
  }
  bool take_segment(uint32_t len, std::string& out) {
    if (bytes_.size() - pos_ < len) return false;
    out.assign(bytes_.data() + pos_, len);
    pos_ += len;
    return true;
  }
  size_t pos() const { return pos_; }

 private:
  void need(size_t n, const std::string& field) {
    check_format(bytes_.size() - pos_ >= n,
                 "container truncated in field " + field);
  }
  std::string_view bytes_;
  size_t pos_ = 0;
};

}  // namespace

std::string serialize_container(const ScalableContainer& c) {
  check_config(c.available_levels() <= c.declared_levels(),
               "more segments than declared levels");
  for (int l = 0; l < c.available_levels(); ++l)
    check_config(c.segments[static_cast<size_t>(l)].size() ==
                     c.info[static_cast<size_t>(l)].seg_len,
                 "segment length disagrees with header");
  std::string s;
  s += "RPNS";
  s.push_back(static_cast<char>(c.version));
  s.push_back(c.mode == ScalabilityMode::kSpatial ? 0 : 1);
  s.push_back(static_cast<char>(c.declared_levels()));
  put_u16(s, c.orig_h);
  put_u16(s, c.orig_w);
  for (const auto& li : c.info) {
    put_u16(s, li.h);
    put_u16(s, li.w);
    put_u16(s, li.channels);
    put_u32(s, li.seg_len);
  }
  for (const auto& seg : c.segments) s += seg;
  return s;
}

ScalableContainer parse_container(std::string_view bytes) {
  FieldReader r(bytes);
  char magic[4];
  for (int i = 0; i < 4; ++i)
    magic[i] = static_cast<char>(r.u8("magic"));
  check_format(std::memcmp(magic, "RPNS", 4) == 0, "bad magic");
  ScalableContainer c;
  c.version = r.u8("version");
  check_format(c.version == 1, "unsupported version");
  const uint8_t mode = r.u8("mode");
  check_format(mode <= 1, "bad mode");
  c.mode = mode == 0 ? ScalabilityMode::kSpatial : ScalabilityMode::kQuality;
  const uint8_t levels = r.u8("levels");
  check_format(levels >= 1, "bad level count");
  c.orig_h = r.u16("orig_h");
  c.orig_w = r.u16("orig_w");
  check_format(c.orig_h > 0 && c.orig_w > 0, "bad original dims");
  for (int l = 0; l < levels; ++l) {
    const std::string suffix = " (level " + std::to_string(l) + ")";
    ScalableContainer::LevelInfo li;
    li.h = r.u16("level_h" + suffix);
    li.w = r.u16("level_w" + suffix);
    li.channels = r.u16("channels" + suffix);
    li.seg_len = r.u32("seg_len" + suffix);
    check_format(li.h > 0 && li.w > 0 && li.h % 16 == 0 && li.w % 16 == 0,
                 "bad level dims" + suffix);
    check_format(li.channels > 0, "bad channel count" + suffix);
    c.info.push_back(li);
  }
  // Segments are a greedy prefix: byte truncation only hides levels.
  for (int l = 0; l < levels; ++l) {
    std::string seg;
    if (!r.take_segment(c.info[static_cast<size_t>(l)].seg_len, seg)) break;
    c.segments.push_back(std::move(seg));
  }
  return c;
}

ScalableContainer truncate_container(const ScalableContainer& c,
                                     int keep_levels) {
  check_config(keep_levels >= 0 && keep_levels <= c.available_levels(),
               "cannot keep more levels than available");
  ScalableContainer out = c;
  out.segments.resize(static_cast<size_t>(keep_levels));
  return out;
}

// ---------------------------------------------------------------------------
// Pyramid inputs

std::vector<Image> build_pyramid_inputs(const Image& padded,
                                        const PyramidConfig& cfg) {
  check_config(padded.height % cfg.pad_multiple() == 0 &&
                   padded.width % cfg.pad_multiple() == 0,
               "pyramid input must be padded to the level multiple");
  std::vector<Image> out;
  for (int l = 0; l < cfg.levels; ++l) {
    const int f = cfg.spatial_factor(l);
    out.push_back(f == 1 ? padded
                         : resize_bicubic(padded, padded.height / f,
                                          padded.width / f));
  }
  return out;
}

std::pair<int, int> level_crop_dims(const PyramidConfig& cfg, int orig_h,
                                    int orig_w, int level) {
  const int f = cfg.spatial_factor(level);
  return {(orig_h + f - 1) / f, (orig_w + f - 1) / f};
}

std::vector<Image> level_references(const Image& orig,
                                    const PyramidConfig& cfg) {
  Image padded = pad_to_multiple(orig, cfg.pad_multiple());
  auto inputs = build_pyramid_inputs(padded, cfg);
  std::vector<Image> refs;
  for (int l = 0; l < cfg.levels; ++l) {
    auto [h, w] = level_crop_dims(cfg, orig.height, orig.width, l);
    refs.push_back(crop_top_left(inputs[static_cast<size_t>(l)], h, w));
  }
  return refs;
}

// ---------------------------------------------------------------------------
// Coding

namespace {

std::vector<CdfTable> prior_tables(const FactorizedPrior& prior) {
  std::vector<CdfTable> tables;
  for (int c = 0; c < prior.channels(); ++c)
    tables.push_back(prior.cdf_table(c));
  return tables;
}

}  // namespace

std::pair<std::string, LevelCodingState> compress_base(const Image& x0,
                                                       Model& model) {
  NoGradGuard ng;
  LevelCodingState st;
  Var x = constant(image_to_tensor(x0));
  st.y = analysis_transform(x, model.transforms[0])->value;
  st.y_hat = quantize(st.y, QuantizerMode::kEvalRound, nullptr);
  const auto tables = prior_tables(model.priors[0]);
  std::string seg = encode_tensor(st.y_hat, tables);
  st.segment_bytes = seg.size();
  st.bits_estimate = estimate_rate(st.y_hat, model.priors[0]);
  st.x_hat = synthesis_transform(constant(st.y_hat), model.transforms[0])->value;
  return {std::move(seg), std::move(st)};
}

std::pair<std::string, LevelCodingState> compress_enhance(
    const Image& xl, const TensorR& y_hat_prev, int level, Model& model) {
  check_config(level >= 1 && level < model.cfg.levels,
               "enhance level out of range");
  NoGradGuard ng;
  LevelCodingState st;
  MaskContext ctx{.mode = MaskMode::kInference};
  st.y_bar = crcm_forward(constant(y_hat_prev),
                          model.crcms[static_cast<size_t>(level) - 1], ctx)
                 ->value;
  Var x = constant(image_to_tensor(xl));
  st.y = analysis_transform(x, model.transforms[static_cast<size_t>(level)])
             ->value;
  check_shape(st.y.shape() == st.y_bar.shape(),
              "resolution field shape does not match the level latent; check "
              "the pyramid configuration");
  TensorR residual(st.y.shape());
  residual.arr() = st.y.arr() - st.y_bar.arr();
  st.r_hat = quantize(residual, QuantizerMode::kEvalRound, nullptr);
  const auto& prior = model.priors[static_cast<size_t>(level)];
  const auto tables = prior_tables(prior);
  std::string seg = encode_tensor(st.r_hat, tables);
  st.segment_bytes = seg.size();
  st.bits_estimate = estimate_rate(st.r_hat, prior);
  st.y_hat = TensorR(st.y.shape());
  st.y_hat.arr() = st.r_hat.arr() + st.y_bar.arr();
  st.x_hat = synthesis_transform(constant(st.y_hat),
                                 model.transforms[static_cast<size_t>(level)])
                 ->value;
  return {std::move(seg), std::move(st)};
}

EncodeResult encode_scalable(const Image& img, Model& model) {
  const PyramidConfig& cfg = model.cfg;
  check_config(img.height >= 1 && img.width >= 1, "empty image");
  Image padded = pad_to_multiple(img, cfg.pad_multiple());
  check_config(padded.height <= 0xFFFF && padded.width <= 0xFFFF,
               "image too large for the container header");
  auto inputs = build_pyramid_inputs(padded, cfg);

  EncodeResult out;
  out.container.mode = cfg.mode;
  out.container.orig_h = static_cast<uint16_t>(img.height);
  out.container.orig_w = static_cast<uint16_t>(img.width);
  for (int l = 0; l < cfg.levels; ++l) {
    auto [seg, st] =
        l == 0 ? compress_base(inputs[0], model)
               : compress_enhance(inputs[static_cast<size_t>(l)],
                                  out.states.back().y_hat, l, model);
    ScalableContainer::LevelInfo li;
    li.h = static_cast<uint16_t>(inputs[static_cast<size_t>(l)].height);
    li.w = static_cast<uint16_t>(inputs[static_cast<size_t>(l)].width);
    li.channels = static_cast<uint16_t>(cfg.channels[static_cast<size_t>(l)]);
    li.seg_len = static_cast<uint32_t>(seg.size());
    out.container.info.push_back(li);
    out.container.segments.push_back(std::move(seg));
    out.states.push_back(std::move(st));
  }
  return out;
}

std::vector<TensorR> decode_latents(const ScalableContainer& c,
                                    int up_to_level, Model& model) {
  const PyramidConfig& cfg = model.cfg;
  check_config(c.declared_levels() == cfg.levels &&
                   c.mode == cfg.mode,
               "container does not match the model configuration");
  check_config(up_to_level >= 0, "negative level");
  check_config(
      up_to_level < c.available_levels(),
      "insufficient layers: level " + std::to_string(up_to_level) +
          " requested but only " + std::to_string(c.available_levels()) +
          " segment(s) present");
  NoGradGuard ng;
  std::vector<TensorR> latents;
  for (int l = 0; l <= up_to_level; ++l) {
    const auto& li = c.info[static_cast<size_t>(l)];
    check_format(li.channels == cfg.channels[static_cast<size_t>(l)],
                 "container channels disagree with the model");
    const Shape latent_shape{1, static_cast<int>(li.channels), li.h / 16,
                             li.w / 16};
    const auto tables = prior_tables(model.priors[static_cast<size_t>(l)]);
    TensorR coded = decode_tensor(c.segments[static_cast<size_t>(l)],
                                  latent_shape, tables);
    if (l == 0) {
      latents.push_back(std::move(coded));
    } else {
      MaskContext ctx{.mode = MaskMode::kInference};
      TensorR y_bar =
          crcm_forward(constant(latents.back()),
                       model.crcms[static_cast<size_t>(l) - 1], ctx)
              ->value;
      check_shape(y_bar.shape() == coded.shape(),
                  "resolution field shape mismatch while decoding");
      TensorR y_hat(coded.shape());
      y_hat.arr() = coded.arr() + y_bar.arr();
      latents.push_back(std::move(y_hat));
    }
  }
  return latents;
}

Image decode_scalable(const ScalableContainer& c, int target_level,
                      Model& model) {
  auto latents = decode_latents(c, target_level, model);
  NoGradGuard ng;
  Var recon =
      synthesis_transform(constant(latents.back()),
                          model.transforms[static_cast<size_t>(target_level)]);
  Image full = tensor_to_image(recon->value, 0, /*clamp01=*/true);
  auto [h, w] = level_crop_dims(model.cfg, c.orig_h, c.orig_w, target_level);
  return crop_top_left(full, h, w);
}

}  // namespace rpn
