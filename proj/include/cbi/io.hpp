#pragma once

#include <filesystem>
#include <iosfwd>

#include "cbi/analysis.hpp"
#include "cbi/calibration.hpp"

namespace cbi {

// Model container: a line-based text manifest plus one little-endian fp32
// weight blob.
//
//   cbimodel 1
//   input <channels> <height> <width>
//   blob <relative filename>
//   conv <name> in=<c> out=<c> kernel=<kh>x<kw> stride=<s> pad=<p>
//        [dims=<h>x<w>] [relu] [from=<name>] woff=<bytes> boff=<bytes>
//   act <name> [from=<name>]
//   pool <name> size=<s> stride=<s> [dims=<h>x<w>] [from=<name>]
//   add <name> from=<a>,<b>[,...]
//   concat <name> from=<a>,<b>[,...]
//
// dims pins the output resolution explicitly (crop / ceil-mode pooling);
// weight offsets are byte offsets into the blob and must be non-overlapping
// and in range. '#' starts a comment.
NetworkSpec load_model(const std::filesystem::path& manifest);
void save_model(const NetworkSpec& spec, const std::filesystem::path& manifest,
                const std::string& blob_name);

// Frame container: a directory with an ordering manifest `sequence.txt`
// (one basename per line, each exactly once) and per-frame files. `.raw`
// frames are planar little-endian fp32 with a `<c> <h> <w>` sidecar `.hdr`;
// 8-bit binary PGM (P5) / PPM (P6) are accepted and normalized by /255.
std::vector<Tensor3> load_frame_sequence(const std::filesystem::path& dir);
void save_frame_sequence(const std::vector<Tensor3>& frames,
                         const std::filesystem::path& dir);

Tensor3 load_raw_frame(const std::filesystem::path& raw_path);
void save_raw_frame(const Tensor3& frame, const std::filesystem::path& raw_path);
Tensor3 load_pnm(const std::filesystem::path& path);

// Deterministic synthetic sequences: a seeded static background with solid
// moving rectangles (velocity in px/frame, bouncing at the borders) and
// optional per-pixel Gaussian noise regenerated each frame. When given,
// `object_corners` receives each frame's object top-left corners.
struct SyntheticConfig {
  int height = 128;
  int width = 128;
  int channels = 3;
  int n_frames = 20;
  int n_objects = 2;
  int object_size = 8;
  int velocity_y = 1;
  int velocity_x = 1;
  float noise_std = 0.0f;
  std::uint32_t seed = 1;
};

std::vector<Tensor3> gen_synthetic(const SyntheticConfig& cfg,
                                   std::vector<std::vector<PixelIndex>>* object_corners = nullptr);

// Bundled topologies with seeded random weights.
NetworkSpec make_seg7_spec(std::uint32_t seed);                  // 7-layer scene-labeling bench
NetworkSpec make_small_spec(std::uint32_t seed, int in_channels, // 4-layer desk-scale net
                            int height, int width);
void fill_random_weights(NetworkSpec& spec, std::uint32_t seed);

// CSV emitters. Formatting is fixed so identical inputs give identical bytes.
void write_stats_csv(std::ostream& os, const RunStats& run);
void write_tradeoff_csv(std::ostream& os, const std::vector<TradeoffRow>& curve);
void write_calib_trace_csv(std::ostream& os, const std::vector<CalibTracePoint>& trace);
void write_mem_report_csv(std::ostream& os, const NetworkSpec& spec);
void write_op_report_csv(std::ostream& os, const OpReport& report);

std::vector<float> load_tau_file(const std::filesystem::path& path);
void save_tau_file(const std::vector<float>& taus, const std::filesystem::path& path);

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace cbi
