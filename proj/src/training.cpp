#include "rpn/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"

namespace rpn {

void TrainConfig::validate() const {
  pyramid.validate();
  check_config(batch >= 1, "batch must be positive");
  check_config(crop >= 16 && crop % 16 == 0, "crop must be a multiple of 16");
  check_config(crop % pyramid.pad_multiple() == 0,
               "crop must be a multiple of 16x the largest spatial factor");
  check_config(steps_stage1 > 0 && steps_stage2 > 0 && steps_stage3 > 0,
               "stage steps must be positive");
  check_config(lr_stage3 <= lr_stage1,
               "stage-3 learning rate must not exceed stage-1");
  check_config(test_split >= 0, "negative test split");
  check_config(corpus_dir.empty() ? synthetic_count > test_split : true,
               "synthetic corpus too small for the test split");
}

TrainConfig train_config_from_kv(
    const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  auto [pyr, seed] = pyramid_config_from_kv(kv);
  c.pyramid = pyr;
  c.seed = seed;
  auto get = [&kv](const std::string& k) -> const std::string* {
    auto it = kv.find(k);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto* v = get("batch")) c.batch = std::stoi(*v);
  if (auto* v = get("crop")) c.crop = std::stoi(*v);
  if (auto* v = get("steps_stage1")) c.steps_stage1 = std::stoi(*v);
  if (auto* v = get("steps_stage2")) c.steps_stage2 = std::stoi(*v);
  if (auto* v = get("steps_stage3")) c.steps_stage3 = std::stoi(*v);
  if (auto* v = get("lr_stage1")) c.lr_stage1 = std::stod(*v);
  if (auto* v = get("lr_stage2")) c.lr_stage2 = std::stod(*v);
  if (auto* v = get("lr_stage3")) c.lr_stage3 = std::stod(*v);
  if (auto* v = get("uncertainty_weight")) c.uncertainty_weight = std::stod(*v);
  if (auto* v = get("guided_weight")) c.guided_weight = std::stod(*v);
  if (auto* v = get("corpus_dir")) c.corpus_dir = *v;
  if (auto* v = get("synthetic_count")) c.synthetic_count = std::stoi(*v);
  if (auto* v = get("synthetic_size")) c.synthetic_size = std::stoi(*v);
  if (auto* v = get("test_split")) c.test_split = std::stoi(*v);
  if (auto* v = get("out_dir")) c.out_dir = *v;
  if (auto* v = get("log_every")) c.log_every = std::stoi(*v);
  c.validate();
  return c;
}

std::string train_config_to_text(const TrainConfig& c) {
  std::ostringstream os;
  os << pyramid_config_to_text(c.pyramid, c.seed);
  os << "batch = " << c.batch << "\ncrop = " << c.crop << "\n";
  os << "steps_stage1 = " << c.steps_stage1
     << "\nsteps_stage2 = " << c.steps_stage2
     << "\nsteps_stage3 = " << c.steps_stage3 << "\n";
  os << "lr_stage1 = " << c.lr_stage1 << "\nlr_stage2 = " << c.lr_stage2
     << "\nlr_stage3 = " << c.lr_stage3 << "\n";
  os << "uncertainty_weight = " << c.uncertainty_weight
     << "\nguided_weight = " << c.guided_weight << "\n";
  if (!c.corpus_dir.empty()) os << "corpus_dir = " << c.corpus_dir << "\n";
  os << "synthetic_count = " << c.synthetic_count
     << "\nsynthetic_size = " << c.synthetic_size << "\n";
  os << "test_split = " << c.test_split << "\n";
  if (!c.out_dir.empty()) os << "out_dir = " << c.out_dir << "\n";
  os << "log_every = " << c.log_every << "\n";
  return os.str();
}

void Adam::step(ParamStore& store, Real lr,
                const std::function<bool(const Parameter&)>& filter) {
  ++t_;
  const Real bc1 = 1 - std::pow(beta1_, static_cast<Real>(t_));
  const Real bc2 = 1 - std::pow(beta2_, static_cast<Real>(t_));
  for (const auto& p : store.items()) {
    if (!p->trainable) continue;
    if (filter && !filter(*p)) continue;
    if (p->adam_m.size() != p->value.size()) {
      p->adam_m = TensorR(p->value.shape());
      p->adam_v = TensorR(p->value.shape());
    }
    for (int64_t i = 0; i < p->value.size(); ++i) {
      const Real g = p->grad[i];
      p->adam_m[i] = beta1_ * p->adam_m[i] + (1 - beta1_) * g;
      p->adam_v[i] = beta2_ * p->adam_v[i] + (1 - beta2_) * g * g;
      const Real mhat = p->adam_m[i] / bc1;
      const Real vhat = p->adam_v[i] / bc2;
      p->value[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

std::vector<Image> make_synthetic_corpus(int n, int size, uint64_t seed) {
  check_config(size >= 16 && size % 16 == 0,
               "synthetic image size must be a multiple of 16");
  check_config(n >= 1, "corpus needs at least one image");
  std::vector<Image> out;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    Image img(size, size);
    // smooth gradient base
    for (int c = 0; c < 3; ++c) {
      const Real a = rng.uniform(0.15, 0.85);
      const Real bx = rng.uniform(-0.4, 0.4);
      const Real by = rng.uniform(-0.4, 0.4);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          img.at(c, y, x) = a + bx * x / (size - 1.0) + by * y / (size - 1.0);
    }
    // random rectangles
    const int rects = 2 + static_cast<int>(rng.index(5));
    for (int r = 0; r < rects; ++r) {
      const int x0 = static_cast<int>(rng.index(static_cast<uint64_t>(size)));
      const int y0 = static_cast<int>(rng.index(static_cast<uint64_t>(size)));
      const int w = 2 + static_cast<int>(rng.index(static_cast<uint64_t>(size / 2)));
      const int h = 2 + static_cast<int>(rng.index(static_cast<uint64_t>(size / 2)));
      const Real alpha = rng.uniform(0.35, 0.9);
      Real color[3];
      for (auto& cc : color) cc = rng.uniform();
      for (int y = y0; y < std::min(size, y0 + h); ++y)
        for (int x = x0; x < std::min(size, x0 + w); ++x)
          for (int c = 0; c < 3; ++c)
            img.at(c, y, x) = (1 - alpha) * img.at(c, y, x) + alpha * color[c];
    }
    // band-limited noise: coarse grid upsampled
    const int g = std::max(2, size / 8);
    Image coarse(g, g);
    for (auto& v : coarse.data) v = rng.normal() * 0.8;
    Image fine = resize_bicubic(coarse, size, size);
    for (size_t k = 0; k < img.data.size(); ++k)
      img.data[k] = std::clamp(img.data[k] + 0.06 * fine.data[k], 0.0, 1.0);
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<Image> ingest_directory(const std::string& path, int crop,
                                    std::vector<std::string>* skipped_out) {
  namespace fs = std::filesystem;
  check_config(fs::is_directory(path), "not a directory: " + path);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(path)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(ch));
    if (ext == ".png" || ext == ".ppm") files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  check_config(!files.empty(), "no images found in " + path);
  std::vector<Image> out;
  std::vector<std::string> skipped;
  for (const auto& f : files) {
    Image img = read_image(f);
    if (img.height < crop || img.width < crop) {
      std::cerr << "warning: skipping " << f << " (smaller than crop "
                << crop << ")\n";
      skipped.push_back(f);
      continue;
    }
    out.push_back(std::move(img));
  }
  if (skipped_out) *skipped_out = skipped;
  if (out.empty()) {
    std::string msg = "all images smaller than crop " + std::to_string(crop) +
                      "; skipped:";
    for (const auto& s : skipped) msg += " " + s;
    throw ConfigError(msg);
  }
  return out;
}

TrainForward forward_train(const std::vector<TensorR>& level_batches,
                           Model& model, MaskMode mask_mode, Rng& noise_rng,
                           Rng& mask_rng) {
  const PyramidConfig& cfg = model.cfg;
  check_config(static_cast<int>(level_batches.size()) == cfg.levels,
               "one batch tensor per level required");
  TrainForward out;
  MaskContext mask_ctx{.mode = mask_mode, .rng = &mask_rng};
  Var prev_latent;
  for (int l = 0; l < cfg.levels; ++l) {
    Var x = constant(level_batches[static_cast<size_t>(l)]);
    out.refs.push_back(x);
    Var y = analysis_transform(x, model.transforms[static_cast<size_t>(l)]);
    Var latent;
    if (l == 0) {
      latent = quantize_noise(y, noise_rng);
      out.rate_bits.push_back(model.priors[0].bits(latent));
      model.priors[0].update_bounds(latent->value);
    } else {
      Var y_bar = crcm_forward(prev_latent,
                               model.crcms[static_cast<size_t>(l) - 1],
                               mask_ctx);
      check_shape(y_bar->value.shape() == y->value.shape(),
                  "resolution field shape mismatch in training forward");
      Var residual = sub(y, y_bar);
      Var r_noisy = quantize_noise(residual, noise_rng);
      out.rate_bits.push_back(
          model.priors[static_cast<size_t>(l)].bits(r_noisy));
      model.priors[static_cast<size_t>(l)].update_bounds(r_noisy->value);
      latent = add(r_noisy, y_bar);
    }
    out.latents.push_back(latent);
    out.x_hats.push_back(
        synthesis_transform(latent, model.transforms[static_cast<size_t>(l)]));
    out.level_pixels.push_back(
        static_cast<double>(level_batches[static_cast<size_t>(l)].dim(0)) *
        level_batches[static_cast<size_t>(l)].dim(2) *
        level_batches[static_cast<size_t>(l)].dim(3));
    prev_latent = latent;
  }
  return out;
}

RdLoss loss_rd(const TrainForward& fwd, const PyramidConfig& cfg) {
  check_config(static_cast<int>(fwd.x_hats.size()) == cfg.levels,
               "loss_rd: level count mismatch");
  RdLoss out;
  out.total = constant_scalar(0);
  for (int l = 0; l < cfg.levels; ++l) {
    Var d = mse(fwd.x_hats[static_cast<size_t>(l)],
                fwd.refs[static_cast<size_t>(l)]);
    Var r_bpp = mul_scalar(fwd.rate_bits[static_cast<size_t>(l)],
                           1.0 / fwd.level_pixels[static_cast<size_t>(l)]);
    out.breakdown.distortion.push_back(d->value[0]);
    out.breakdown.rate.push_back(r_bpp->value[0]);
    out.total = add(
        out.total,
        add(d, mul_scalar(r_bpp, cfg.lambdas[static_cast<size_t>(l)])));
  }
  out.breakdown.l_sca = out.total->value[0];
  out.breakdown.total = out.breakdown.l_sca;
  return out;
}

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_(cfg),
      rng_data_(1),
      rng_noise_(2),
      rng_mask_(3) {
  cfg_.validate();
  model_ = make_model(cfg_.pyramid, cfg_.seed);
  Rng root(cfg_.seed);
  rng_data_ = root.fork(101);
  rng_noise_ = root.fork(102);
  rng_mask_ = root.fork(103);

  std::vector<Image> all;
  if (cfg_.corpus_dir.empty()) {
    all = make_synthetic_corpus(cfg_.synthetic_count, cfg_.synthetic_size,
                                cfg_.seed);
  } else {
    all = ingest_directory(cfg_.corpus_dir, cfg_.crop, nullptr);
  }
  const int test_n = std::min<int>(cfg_.test_split,
                                   static_cast<int>(all.size()) - 1);
  for (size_t i = 0; i < all.size(); ++i) {
    if (static_cast<int>(i) >= static_cast<int>(all.size()) - test_n)
      data_.test.push_back(std::move(all[i]));
    else
      data_.train.push_back(std::move(all[i]));
  }
  check_config(!data_.train.empty(), "empty training split");
}

std::vector<TensorR> Trainer::sample_level_batch() {
  std::vector<std::vector<Image>> per_level(
      static_cast<size_t>(cfg_.pyramid.levels));
  for (int b = 0; b < cfg_.batch; ++b) {
    const auto& src =
        data_.train[rng_data_.index(data_.train.size())];
    const int max_y = src.height - cfg_.crop;
    const int max_x = src.width - cfg_.crop;
    const int oy = max_y > 0 ? static_cast<int>(rng_data_.index(
                                   static_cast<uint64_t>(max_y) + 1))
                             : 0;
    const int ox = max_x > 0 ? static_cast<int>(rng_data_.index(
                                   static_cast<uint64_t>(max_x) + 1))
                             : 0;
    Image crop(cfg_.crop, cfg_.crop);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < cfg_.crop; ++y)
        for (int x = 0; x < cfg_.crop; ++x)
          crop.at(c, y, x) = src.at(c, oy + y, ox + x);
    auto inputs = build_pyramid_inputs(crop, cfg_.pyramid);
    for (int l = 0; l < cfg_.pyramid.levels; ++l)
      per_level[static_cast<size_t>(l)].push_back(
          std::move(inputs[static_cast<size_t>(l)]));
  }
  std::vector<TensorR> batches;
  for (const auto& imgs : per_level) {
    std::vector<const Image*> ptrs;
    for (const auto& im : imgs) ptrs.push_back(&im);
    batches.push_back(images_to_tensor(ptrs));
  }
  return batches;
}

LossBreakdown Trainer::step(int stage) {
  check_config(stage >= 1 && stage <= 3, "stage must be 1, 2 or 3");
  const PyramidConfig& pyr = cfg_.pyramid;
  model_->params.zero_grads();

  const MaskMode mask_mode = global_step_ < pyr.st_warmup_steps
                                 ? MaskMode::kSoft
                                 : MaskMode::kHardST;
  auto batches = sample_level_batch();
  TrainForward fwd =
      forward_train(batches, *model_, mask_mode, rng_noise_, rng_mask_);

  RdLoss rd = loss_rd(fwd, pyr);
  LossBreakdown lb = rd.breakdown;
  Var total = rd.total;

  if (stage == 2) {
    auto maps = reverse_pyramid_pass(fwd.latents, model_->heads);
    Var l_u = constant_scalar(0);
    for (size_t l = 0; l < maps.size(); ++l)
      l_u = add(l_u, loss_uncertainty(fwd.x_hats[l], fwd.refs[l], maps[l]));
    lb.l_u = l_u->value[0];
    total = add(total, mul_scalar(l_u, cfg_.uncertainty_weight));
  } else if (stage == 3) {
    // Heads are frozen: maps are computed outside the graph and the guided
    // loss only weights the distortion.
    std::vector<Var> frozen_latents;
    for (const auto& v : fwd.latents) frozen_latents.push_back(detach(v));
    std::vector<Var> maps;
    {
      NoGradGuard ng;
      maps = reverse_pyramid_pass(frozen_latents, model_->heads);
    }
    Var l_ug = constant_scalar(0);
    for (size_t l = 0; l < maps.size(); ++l)
      l_ug = add(l_ug, loss_uncertainty_guided(fwd.x_hats[l], fwd.refs[l],
                                               constant(maps[l]->value)));
    lb.l_ug = l_ug->value[0];
    total = add(total, mul_scalar(l_ug, cfg_.guided_weight));
  }

  lb.total = total->value[0];
  if (!std::isfinite(lb.total)) {
    std::ostringstream os;
    os << "non-finite loss at step " << global_step_ << " stage " << stage
       << ": l_sca=" << lb.l_sca << " l_u=" << lb.l_u << " l_ug=" << lb.l_ug
       << " D=[";
    for (double d : lb.distortion) os << d << " ";
    os << "] R=[";
    for (double r : lb.rate) os << r << " ";
    os << "]";
    throw TrainError(os.str());
  }

  backward(total);

  const Real lr = stage == 1 ? cfg_.lr_stage1
                             : (stage == 2 ? cfg_.lr_stage2 : cfg_.lr_stage3);
  if (stage == 3) {
    opt_.step(model_->params, lr, [](const Parameter& p) {
      return p.name.find(".uncertainty.") == std::string::npos;
    });
  } else {
    opt_.step(model_->params, lr);
  }
  ++global_step_;
  history_.push_back(lb);
  return lb;
}

void Trainer::run_stage(int stage) {
  const int steps = stage == 1 ? cfg_.steps_stage1
                               : (stage == 2 ? cfg_.steps_stage2
                                             : cfg_.steps_stage3);
  std::ofstream metrics;
  if (!cfg_.out_dir.empty()) {
    std::filesystem::create_directories(cfg_.out_dir);
    metrics.open(cfg_.out_dir + "/metrics.jsonl", std::ios::app);
  }
  for (int s = 0; s < steps; ++s) {
    LossBreakdown lb = step(stage);
    if (metrics.is_open() &&
        (s % cfg_.log_every == 0 || s + 1 == steps)) {
      nlohmann::json j{{"step", global_step_},
                       {"stage", stage},
                       {"D", lb.distortion},
                       {"R_bpp", lb.rate},
                       {"l_sca", lb.l_sca},
                       {"l_u", lb.l_u},
                       {"l_ug", lb.l_ug},
                       {"total", lb.total}};
      metrics << j.dump() << "\n";
    }
    if (s % cfg_.log_every == 0)
      std::cout << "stage " << stage << " step " << s << "/" << steps
                << " l_sca=" << lb.l_sca << " total=" << lb.total << std::endl;
  }
}

void Trainer::run() {
  for (int stage = 1; stage <= 3; ++stage) run_stage(stage);
  if (!cfg_.out_dir.empty()) {
    save_model(cfg_.out_dir + "/checkpoint", *model_);
    std::ofstream f(cfg_.out_dir + "/train_config.txt");
    f << train_config_to_text(cfg_);
  }
}

}  // namespace rpn
