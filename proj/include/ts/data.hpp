#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ts/common.hpp"
#include "ts/rng.hpp"

namespace ts {

inline constexpr int kPatchSize = 64;
inline constexpr double kSynthNoiseSigma = 0.05;

struct Image {
  int h = 0, w = 0;
  std::vector<float> pix;  // row-major, [0,1]

  float at(int y, int x) const { return pix[static_cast<size_t>(y) * w + x]; }
  float& at(int y, int x) { return pix[static_cast<size_t>(y) * w + x]; }
};

// One aligned cross-modality image pair.
struct AlignedImagePair {
  int id = -1;
  std::string name;
  Image a, b;
};

// Affine misalignment applied to patch_b during augmentation. Each transform
// is independently included.
struct AffineParams {
  bool has_rotation = false, has_translation = false, has_scale = false;
  double rotation_deg = 0.0;   // [-12, 12]
  double tx = 0.0, ty = 0.0;   // [-5, 5] pixels
  double scale = 1.0;          // [0.8, 0.99]

  static AffineParams sample(Rng& rng);
  bool is_identity() const { return !has_rotation && !has_translation && !has_scale; }
};

struct PatchPair {
  std::vector<float> a, b;  // 64*64 each
  int label = 0;            // 1 = same cell of same pair, 0 = different images
  // provenance
  int image_a_id = -1, image_b_id = -1;
  int cell_ax = -1, cell_ay = -1;  // cell coords in 64px units
  int cell_bx = -1, cell_by = -1;
  AffineParams aug;
  int group_id = -1;  // augmentation group (4 pairs per group)
};

enum class ModalityTransform { Invert, Edge, BlurGamma };
ModalityTransform transform_from_name(const std::string& s);
const char* transform_name(ModalityTransform t);

// --- synthetic two-modality generator ---
Image synth_texture(int size, Rng& rng);
Image apply_modality_transform(const Image& a, ModalityTransform t);
std::vector<AlignedImagePair> synth_dataset(int n_images, int size, ModalityTransform t,
                                            uint64_t seed, double noise_sigma = kSynthNoiseSigma);

// --- patch extraction and pairing ---
struct GridCell {
  int cx = 0, cy = 0;  // cell coords
  std::vector<float> patch;
};

// Non-overlapping 64x64 cells; partial border cells are discarded.
std::vector<GridCell> grid_patches(const Image& img);

// One positive per grid cell plus an equal count of negatives drawn from
// different images. Requires >= 2 image pairs.
std::vector<PatchPair> make_pairs(const std::vector<AlignedImagePair>& images, Rng& rng);

// Resample patch_b from its parent image under the given affine params
// (bilinear, reflect padding off the border). Identity params reproduce the
// source patch.
std::vector<float> apply_affine_to_patch_b(const PatchPair& pair, const Image& parent_b,
                                           const AffineParams& params);

// Original + 3 affine-augmented copies; the transform resamples patch_b from
// its parent image (reflect padding off the border) so the pair is misaligned
// while the label is unchanged.
std::vector<PatchPair> augment_pair(const PatchPair& pair, const Image& parent_b, Rng& rng);

// Keeps one uniformly chosen pair per group of 4 (evaluation splits).
std::vector<PatchPair> finalize_eval_split(const std::vector<PatchPair>& augmented, Rng& rng);

// --- splits ---
enum class Split { Train, Test, Val };
const char* split_name(Split s);
Split split_from_name(const std::string& s);

struct SplitSpec {
  double train = 0.70, test = 0.20, val = 0.10;
};

struct Dataset {
  std::vector<PatchPair> train, test, val;
  std::vector<int> train_ids, test_ids, val_ids;  // source image ids per split

  const std::vector<PatchPair>& split(Split s) const {
    switch (s) {
      case Split::Train: return train;
      case Split::Test: return test;
      default: return val;
    }
  }
};

// Full pipeline: split by source image, pair within each split, augment
// (train keeps all 4, test/val keep one of four). Deterministic per seed.
Dataset build_dataset(const std::vector<AlignedImagePair>& images, uint64_t seed,
                      const SplitSpec& spec = {});

// --- normalization ---
struct ModalityStats {
  float mean_a = 0, std_a = 1, mean_b = 0, std_b = 1;
};

// Computed on the training split only, one (mean, std) per modality.
ModalityStats compute_stats(const std::vector<PatchPair>& train_pairs);
void normalize(std::vector<PatchPair>& pairs, const ModalityStats& stats);

// --- serialization ---
// Binary pair cache: magic "TSPM", version u16, then records of
// label u8 + 2 x 64 x 64 float32, little-endian.
void write_pair_cache(const std::string& path, const std::vector<PatchPair>& pairs);
std::vector<PatchPair> read_pair_cache(const std::string& path);

void write_splits_tsv(const std::string& path, const Dataset& ds,
                      const std::vector<AlignedImagePair>& images);

// --- image ingestion (PGM/PPM/PNG, RGB converted to luminance) ---
Image read_image_file(const std::string& path);
void write_pgm(const std::string& path, const Image& img);
void write_png_gray(const std::string& path, const Image& img);

// Directory layout: <root>/<pair-id>/a.png (or .pgm), <root>/<pair-id>/b.png.
std::vector<AlignedImagePair> load_image_pairs(const std::string& root);

}  // namespace ts
