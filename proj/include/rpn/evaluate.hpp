#pragma once

#include "rpn/metrics.hpp"
#include "rpn/pyramid.hpp"

namespace rpn {

struct EvalRecord {
  std::string image;
  int level = 0;
  double bpp = 0;        // cumulative segment bytes * 8 / original pixels
  double psnr = 0;
  double ms_ssim = 0;
  double coded_bits = 0;     // this level's segment, real bytes
  double estimate_bits = 0;  // model estimate for the same tensor
};

struct EvalReport {
  std::vector<EvalRecord> records;
  RdCurve curve;  // per-level means over the image set
};

// Encodes and decodes every image at every level; rate comes from real
// container bytes, reconstructions from prefix-truncated containers.
EvalReport evaluate_codec(
    Model& model, const std::vector<std::pair<std::string, Image>>& images);

// Line-delimited JSON records plus per-level summaries.
void write_report(const std::string& path, const EvalReport& report);
EvalReport parse_report(const std::string& path);

void write_rd_csv(const std::string& path, const RdCurve& curve);
RdCurve read_rd_csv(const std::string& path);

int64_t count_parameters(const std::string& checkpoint_dir);
// Totals grouped by the name prefix before the first '.'.
std::vector<std::pair<std::string, int64_t>> parameter_breakdown(
    const std::string& checkpoint_dir);

}  // namespace rpn
