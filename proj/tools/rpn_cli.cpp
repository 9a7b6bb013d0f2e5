#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "rpn/evaluate.hpp"
#include "rpn/training.hpp"

namespace {

using namespace rpn;

std::string read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check_format(f.good(), "cannot open: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  check_config(f.good(), "cannot write: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ScalabilityMode parse_mode(const std::string& s) {
  if (s == "spatial") return ScalabilityMode::kSpatial;
  if (s == "quality") return ScalabilityMode::kQuality;
  throw ConfigError("mode must be spatial or quality, got: " + s);
}

int run_train(const std::string& config_path, const std::string& mode,
              int levels, uint64_t seed, bool seed_set,
              const std::string& corpus, const std::string& out_dir) {
  std::map<std::string, std::string> kv;
  if (!config_path.empty()) kv = read_key_value_file(config_path);
  if (!mode.empty()) kv["mode"] = mode;
  if (levels > 0) kv["levels"] = std::to_string(levels);
  if (seed_set) kv["seed"] = std::to_string(seed);
  if (!corpus.empty()) kv["corpus_dir"] = corpus;
  if (!out_dir.empty()) kv["out_dir"] = out_dir;
  TrainConfig cfg = train_config_from_kv(kv);
  check_config(!cfg.out_dir.empty(), "train needs --out (or out_dir in config)");
  Trainer trainer(cfg);
  trainer.run();
  std::cout << "checkpoint written to " << cfg.out_dir << "/checkpoint\n";
  return 0;
}

int run_encode(const std::string& input, const std::string& model_dir,
               const std::string& mode, const std::string& out) {
  auto model = load_model(model_dir);
  if (!mode.empty())
    check_config(parse_mode(mode) == model->cfg.mode,
                 "requested mode disagrees with the checkpoint");
  Image img = read_image(input);
  EncodeResult enc = encode_scalable(img, *model);
  write_file_bytes(out, serialize_container(enc.container));
  double total_bytes = 0;
  for (const auto& s : enc.container.segments)
    total_bytes += static_cast<double>(s.size());
  std::cout << "encoded " << input << ": " << model->cfg.levels
            << " level(s), " << total_bytes << " segment bytes, "
            << 8.0 * total_bytes / (img.height * img.width) << " bpp\n";
  return 0;
}

int run_decode(const std::string& input, const std::string& model_dir,
               int level, const std::string& out) {
  auto model = load_model(model_dir);
  ScalableContainer c = parse_container(read_file_bytes(input));
  Image img = decode_scalable(c, level, *model);
  write_image(out, img);
  std::cout << "decoded level " << level << " -> " << out << " ("
            << img.width << "x" << img.height << ")\n";
  return 0;
}

int run_eval(const std::string& model_dir, const std::string& image_dir,
             const std::string& report_path, const std::string& csv_path) {
  auto model = load_model(model_dir);
  std::vector<std::string> skipped;
  auto images = ingest_directory(image_dir, 16, &skipped);
  namespace fs = std::filesystem;
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(image_dir)) {
    std::string ext = e.path().extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(ch));
    if (ext == ".png" || ext == ".ppm") names.push_back(e.path().string());
  }
  std::sort(names.begin(), names.end());
  std::vector<std::pair<std::string, Image>> pairs;
  size_t img_idx = 0;
  for (const auto& n : names) {
    if (std::find(skipped.begin(), skipped.end(), n) != skipped.end()) continue;
    pairs.emplace_back(n, std::move(images[img_idx++]));
  }
  EvalReport report = evaluate_codec(*model, pairs);
  if (!report_path.empty()) write_report(report_path, report);
  if (!csv_path.empty()) write_rd_csv(csv_path, report.curve);
  std::cout << "level  mean_bpp  mean_psnr  mean_ms_ssim\n";
  for (const auto& p : report.curve.points)
    std::cout << p.level << "  " << p.bpp << "  " << p.psnr << "  "
              << p.ms_ssim << "\n";
  return 0;
}

int run_bdrate(const std::string& anchor_csv, const std::string& test_csv,
               const std::string& metric) {
  RdCurve anchor = read_rd_csv(anchor_csv);
  RdCurve test = read_rd_csv(test_csv);
  BdMetric m;
  if (metric == "psnr")
    m = BdMetric::kPsnr;
  else if (metric == "msssim")
    m = BdMetric::kMsSsim;
  else
    throw ConfigError("metric must be psnr or msssim");
  std::cout << "BD-rate (" << metric << "): "
            << bd_rate(anchor, test, m) << "%\n";
  return 0;
}

int run_params(const std::string& model_dir, bool breakdown) {
  if (breakdown) {
    for (const auto& [group, n] : parameter_breakdown(model_dir))
      std::cout << group << "  " << n << "\n";
  }
  std::cout << "total  " << count_parameters(model_dir) << "\n";
  return 0;
}

int run_dump_uncertainty(const std::string& input,
                         const std::string& model_dir,
                         const std::string& out_prefix) {
  auto model = load_model(model_dir);
  check_config(model->cfg.levels >= 2,
               "uncertainty maps need at least two levels");
  Image img = read_image(input);
  EncodeResult enc = encode_scalable(img, *model);
  auto latents = decode_latents(enc.container, model->cfg.levels - 1, *model);
  NoGradGuard ng;
  std::vector<Var> latent_vars;
  for (const auto& t : latents) latent_vars.push_back(constant(t));
  auto maps = reverse_pyramid_pass(latent_vars, model->heads);
  for (size_t l = 0; l < maps.size(); ++l) {
    const TensorR& m = maps[l]->value;
    std::vector<Real> flat(m.data(), m.data() + m.size());
    const std::string path =
        out_prefix + "_level" + std::to_string(l) + ".png";
    write_gray(path, flat, m.dim(2), m.dim(3));
    std::cout << "wrote " << path << " (" << m.dim(3) << "x" << m.dim(2)
              << ")\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rpn: spatially and quality-scalable learned image codec"};
  app.require_subcommand(1);

  std::string config_path, mode, corpus, out_dir;
  int levels = 0;
  uint64_t seed = 0;
  bool seed_set = false;

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "key=value config file");
  train->add_option("--mode", mode, "spatial|quality");
  train->add_option("--levels", levels, "level count");
  train->add_option("--seed", seed, "rng seed")->each([&](const std::string&) {
    seed_set = true;
  });
  train->add_option("--corpus", corpus, "image directory (default: synthetic)");
  train->add_option("--out", out_dir, "output directory");

  std::string enc_input, enc_model, enc_mode, enc_out;
  auto* encode = app.add_subcommand("encode", "encode an image");
  encode->add_option("--input", enc_input, "input image")->required();
  encode->add_option("--model", enc_model, "checkpoint directory")->required();
  encode->add_option("--mode", enc_mode, "spatial|quality (must match model)");
  encode->add_option("--out", enc_out, "output container")->required();

  std::string dec_input, dec_model, dec_out;
  int dec_level = 0;
  auto* decode = app.add_subcommand("decode", "decode a container");
  decode->add_option("--in", dec_input, "input container")->required();
  decode->add_option("--model", dec_model, "checkpoint directory")->required();
  decode->add_option("--level", dec_level, "target level")->required();
  decode->add_option("--out", dec_out, "output image")->required();

  std::string eval_model, eval_images, eval_report, eval_csv;
  auto* eval = app.add_subcommand("eval", "rate-distortion evaluation");
  eval->add_option("--model", eval_model, "checkpoint directory")->required();
  eval->add_option("--images", eval_images, "image directory")->required();
  eval->add_option("--report", eval_report, "JSON-lines report path");
  eval->add_option("--csv", eval_csv, "R-D curve csv path");

  std::string bd_anchor, bd_test, bd_metric = "psnr";
  auto* bdrate = app.add_subcommand("bdrate", "BD-rate between two curves");
  bdrate->add_option("--anchor", bd_anchor, "anchor csv")->required();
  bdrate->add_option("--test", bd_test, "test csv")->required();
  bdrate->add_option("--metric", bd_metric, "psnr|msssim");

  std::string par_model;
  bool par_breakdown = false;
  auto* params = app.add_subcommand("params", "parameter count");
  params->add_option("--model", par_model, "checkpoint directory")->required();
  params->add_flag("--breakdown", par_breakdown, "per-module totals");

  std::string du_input, du_model, du_prefix;
  auto* dump = app.add_subcommand("dump-uncertainty",
                                  "write uncertainty maps as grayscale");
  dump->add_option("--input", du_input, "input image")->required();
  dump->add_option("--model", du_model, "checkpoint directory")->required();
  dump->add_option("--out-prefix", du_prefix, "output path prefix")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed())
      return run_train(config_path, mode, levels, seed, seed_set, corpus,
                       out_dir);
    if (encode->parsed()) return run_encode(enc_input, enc_model, enc_mode, enc_out);
    if (decode->parsed()) return run_decode(dec_input, dec_model, dec_level, dec_out);
    if (eval->parsed()) return run_eval(eval_model, eval_images, eval_report, eval_csv);
    if (bdrate->parsed()) return run_bdrate(bd_anchor, bd_test, bd_metric);
    if (params->parsed()) return run_params(par_model, par_breakdown);
    if (dump->parsed()) return run_dump_uncertainty(du_input, du_model, du_prefix);
  } catch (const rpn::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 2;
  } catch (const rpn::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
