#include "rpn/evaluate.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "rpn/checkpoint.hpp"

namespace rpn {

EvalReport evaluate_codec(
    Model& model, const std::vector<std::pair<std::string, Image>>& images) {
  check_config(!images.empty(), "no images to evaluate");
  const int levels = model.cfg.levels;
  EvalReport report;
  std::vector<double> sum_bpp(static_cast<size_t>(levels), 0);
  std::vector<double> sum_psnr(static_cast<size_t>(levels), 0);
  std::vector<double> sum_ssim(static_cast<size_t>(levels), 0);

  for (const auto& [name, img] : images) {
    const int min_dim = std::min(img.height, img.width);
    check_config(min_dim / model.cfg.spatial_factor(0) >= 11,
                 "image too small for base-level MS-SSIM: " + name);
    EncodeResult enc = encode_scalable(img, model);
    auto refs = level_references(img, model.cfg);
    double cum_bits = 0;
    for (int l = 0; l < levels; ++l) {
      cum_bits +=
          8.0 * static_cast<double>(enc.container.segments[static_cast<size_t>(l)]
                                        .size());
      // Reconstruct from the l+1-segment prefix; scalability is exercised on
      // every record, not just in tests.
      ScalableContainer prefix = truncate_container(enc.container, l + 1);
      Image recon = decode_scalable(prefix, l, model);
      EvalRecord rec;
      rec.image = name;
      rec.level = l;
      rec.bpp = cum_bits / (static_cast<double>(img.height) * img.width);
      rec.psnr = psnr(recon, refs[static_cast<size_t>(l)]);
      rec.ms_ssim = ms_ssim(recon, refs[static_cast<size_t>(l)]);
      rec.coded_bits =
          8.0 * static_cast<double>(enc.container.segments[static_cast<size_t>(l)]
                                        .size());
      rec.estimate_bits = enc.states[static_cast<size_t>(l)].bits_estimate;
      sum_bpp[static_cast<size_t>(l)] += rec.bpp;
      sum_psnr[static_cast<size_t>(l)] += rec.psnr;
      sum_ssim[static_cast<size_t>(l)] += rec.ms_ssim;
      report.records.push_back(std::move(rec));
    }
  }
  const double n = static_cast<double>(images.size());
  report.curve.label = "rpn";
  for (int l = 0; l < levels; ++l) {
    RdPoint p;
    p.level = l;
    p.bpp = sum_bpp[static_cast<size_t>(l)] / n;
    p.psnr = sum_psnr[static_cast<size_t>(l)] / n;
    p.ms_ssim = sum_ssim[static_cast<size_t>(l)] / n;
    report.curve.points.push_back(p);
  }
  return report;
}

namespace {

nlohmann::json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double null_or_inf(const nlohmann::json& j) {
  if (j.is_null()) return std::numeric_limits<double>::infinity();
  return j.get<double>();
}

}  // namespace

void write_report(const std::string& path, const EvalReport& report) {
  std::ofstream f(path);
  check_config(f.good(), "cannot write report: " + path);
  for (const auto& r : report.records) {
    nlohmann::json j{{"type", "record"},
                     {"image", r.image},
                     {"level", r.level},
                     {"bpp", r.bpp},
                     {"psnr", finite_or_null(r.psnr)},
                     {"ms_ssim", r.ms_ssim},
                     {"coded_bits", r.coded_bits},
                     {"estimate_bits", r.estimate_bits}};
    f << j.dump() << "\n";
  }
  for (const auto& p : report.curve.points) {
    nlohmann::json j{{"type", "summary"},
                     {"level", p.level},
                     {"bpp", p.bpp},
                     {"psnr", finite_or_null(p.psnr)},
                     {"ms_ssim", p.ms_ssim}};
    f << j.dump() << "\n";
  }
}

EvalReport parse_report(const std::string& path) {
  std::ifstream f(path);
  check_format(f.good(), "cannot open report: " + path);
  EvalReport report;
  report.curve.label = "rpn";
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("report line " + std::to_string(lineno) + ": " +
                        e.what());
    }
    const std::string type = j.value("type", "");
    if (type == "record") {
      EvalRecord r;
      r.image = j.at("image").get<std::string>();
      r.level = j.at("level").get<int>();
      r.bpp = j.at("bpp").get<double>();
      r.psnr = null_or_inf(j.at("psnr"));
      r.ms_ssim = j.at("ms_ssim").get<double>();
      r.coded_bits = j.at("coded_bits").get<double>();
      r.estimate_bits = j.at("estimate_bits").get<double>();
      report.records.push_back(std::move(r));
    } else if (type == "summary") {
      RdPoint p;
      p.level = j.at("level").get<int>();
      p.bpp = j.at("bpp").get<double>();
      p.psnr = null_or_inf(j.at("psnr"));
      p.ms_ssim = j.at("ms_ssim").get<double>();
      report.curve.points.push_back(p);
    } else {
      throw FormatError("report line " + std::to_string(lineno) +
                        ": unknown record type");
    }
  }
  return report;
}

void write_rd_csv(const std::string& path, const RdCurve& curve) {
  std::ofstream f(path);
  check_config(f.good(), "cannot write csv: " + path);
  f << "level,bpp,psnr,ms_ssim\n";
  for (const auto& p : curve.points)
    f << p.level << "," << p.bpp << "," << p.psnr << "," << p.ms_ssim << "\n";
}

RdCurve read_rd_csv(const std::string& path) {
  std::ifstream f(path);
  check_format(f.good(), "cannot open csv: " + path);
  RdCurve curve;
  curve.label = path;
  std::string line;
  check_format(static_cast<bool>(std::getline(f, line)), "empty csv");
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    RdPoint p;
    check_format(static_cast<bool>(std::getline(ss, cell, ',')), "csv: level");
    p.level = std::stoi(cell);
    check_format(static_cast<bool>(std::getline(ss, cell, ',')), "csv: bpp");
    p.bpp = std::stod(cell);
    check_format(static_cast<bool>(std::getline(ss, cell, ',')), "csv: psnr");
    p.psnr = std::stod(cell);
    check_format(static_cast<bool>(std::getline(ss, cell, ',')),
                 "csv: ms_ssim");
    p.ms_ssim = std::stod(cell);
    curve.points.push_back(p);
  }
  return curve;
}

int64_t count_parameters(const std::string& checkpoint_dir) {
  auto raw = read_params_raw(checkpoint_dir + "/params.bin");
  int64_t n = 0;
  for (const auto& [name, t] : raw) n += t.size();
  return n;
}

std::vector<std::pair<std::string, int64_t>> parameter_breakdown(
    const std::string& checkpoint_dir) {
  auto raw = read_params_raw(checkpoint_dir + "/params.bin");
  std::map<std::string, int64_t> groups;
  for (const auto& [name, t] : raw) {
    const size_t dot = name.find('.');
    groups[name.substr(0, dot)] += t.size();
  }
  return {groups.begin(), groups.end()};
}

}  // namespace rpn
