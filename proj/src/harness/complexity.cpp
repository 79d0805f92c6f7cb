#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>

#include "faceqa/harness.hpp"

namespace faceqa {

std::uint64_t conv_macs(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t out_h,
                        std::size_t out_w) {
  return std::uint64_t{c_out} * c_in * kernel * kernel * out_h * out_w;
}

std::uint64_t affine_macs(std::size_t in, std::size_t out, std::size_t sites) {
  return std::uint64_t{in} * out * sites;
}

std::uint64_t attention_macs(std::size_t n, std::size_t m, std::size_t d) { return 2 * std::uint64_t{n} * m * d; }

ComplexityReport count_params_macs(const ModelProfile& p) {
  p.validate();
  ComplexityReport r;
  auto add = [&](std::string name, std::uint64_t params, std::uint64_t macs) {
    r.layers.push_back({std::move(name), params, macs});
    r.params += params;
    r.macs += macs;
  };
  constexpr std::uint64_t views = 3;
  const auto sizes = p.stage_sizes();
  const std::size_t k = p.backbone.kernel, d_o = p.d_out, d_l = p.d_latent;
  const std::size_t n_stages = p.backbone.stages();
  const std::size_t grid = sizes.back() * sizes.back();

  std::size_t c_in = 3;
  for (std::size_t i = 0; i < n_stages; ++i) {
    const std::size_t c = p.backbone.channels[i];
    add("encoder.backbone.stage" + std::to_string(i), std::uint64_t{c} * c_in * k * k + c,
        views * conv_macs(c_in, c, k, sizes[i], sizes[i]));
    c_in = c;
  }
  // Stages are pooled to the deepest grid before their 1x1 projection.
  for (std::size_t i = 0; i < n_stages; ++i) {
    const std::size_t c = p.backbone.channels[i];
    add("encoder.scale_proj." + std::to_string(i), std::uint64_t{c} * d_o + d_o, views * affine_macs(c, d_o, grid));
  }
  add("encoder.fuse", std::uint64_t{n_stages} * d_o * d_o + d_o, views * affine_macs(n_stages * d_o, d_o, grid));
  add("encoder.lrp", std::uint64_t{d_o} * d_l, affine_macs(d_o, d_l, views));
  add("encoder.view_attention", 0, attention_macs(views, views, d_l));
  add("encoder.hrp", std::uint64_t{d_l} * d_o, affine_macs(d_l, d_o, views));

  const std::size_t t = p.num_tasks, w = p.decoder_width, hid = p.head_hidden;
  add("decoder.tokens", std::uint64_t{t} * w, 0);
  for (std::size_t pass = 0; pass < p.decoder_passes; ++pass) {
    add("decoder.pass" + std::to_string(pass), 0, attention_macs(t, t, w) + attention_macs(t, grid, w));
  }
  add("decoder.heads", std::uint64_t{t} * (std::uint64_t{w} * hid + hid + std::uint64_t{hid} * hid + hid + hid + 1),
      t * (affine_macs(w, hid, 1) + affine_macs(hid, hid, 1) + affine_macs(hid, 1, 1)));
  return r;
}

std::string format_table_row(const std::string& name, const Correlations& c, const ComplexityReport& r) {
  auto cell = [](const std::optional<double>& v, int digits) {
    if (!v) return std::string("--");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, *v);
    return std::string(buf);
  };
  std::string row = name;
  for (std::size_t d = 0; d < kNumDimensions; ++d) row += " & " + cell(c.srcc[d], 4) + " & " + cell(c.plcc[d], 4);
  row += " & " + cell(static_cast<double>(r.params) / 1e6, 2);
  row += " & " + cell(static_cast<double>(r.macs) / 1e9, 2);
  row += " & " + cell(r.latency_ms, 2);
  return row + " \\\\";
}

LatencyReport measure_latency(const QualityAssessor& model, const std::vector<ImageRecord>& images,
                              const ViewOptions& views, std::size_t warmup, std::size_t timed) {
  if (images.empty()) throw DataError("latency measurement needs at least one image");
  if (timed == 0) throw ConfigError("latency measurement needs at least one timed run");
  using clock = std::chrono::steady_clock;
  LatencyReport out;
  for (std::size_t i = 0; i < warmup + timed; ++i) {
    const auto t0 = clock::now();
    model.predict(build_views(images[i % images.size()], views));
    const auto t1 = clock::now();
    if (i < warmup) {
      ++out.warmup;
    } else {
      out.timings_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  }
  out.mean_ms = std::accumulate(out.timings_ms.begin(), out.timings_ms.end(), 0.0) /
                static_cast<double>(out.timings_ms.size());
  out.min_ms = *std::min_element(out.timings_ms.begin(), out.timings_ms.end());
  out.max_ms = *std::max_element(out.timings_ms.begin(), out.timings_ms.end());
  return out;
}

}  // namespace faceqa
