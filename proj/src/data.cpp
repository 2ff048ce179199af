#include "ts/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <png.h>

namespace fs = std::filesystem;

namespace ts {

ModalityTransform transform_from_name(const std::string& s) {
  if (s == "invert") return ModalityTransform::Invert;
  if (s == "edge") return ModalityTransform::Edge;
  if (s == "blur+gamma" || s == "blurgamma") return ModalityTransform::BlurGamma;
  throw ConfigError("unknown modality transform '" + s + "' (invert|edge|blur+gamma)");
}

const char* transform_name(ModalityTransform t) {
  switch (t) {
    case ModalityTransform::Invert: return "invert";
    case ModalityTransform::Edge: return "edge";
    default: return "blur+gamma";
  }
}

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    default: return "val";
  }
}

Split split_from_name(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  if (s == "val") return Split::Val;
  throw ConfigError("unknown split '" + s + "' (train|test|val)");
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

Image synth_texture(int size, Rng& rng) {
  Image img;
  img.h = img.w = size;
  img.pix.assign(static_cast<size_t>(size) * size, 0.0f);
  // two linear gradients in random directions
  for (int g = 0; g < 2; ++g) {
    double phi = rng.uniform(0, 2 * M_PI);
    double amp = rng.uniform(0.2, 1.0);
    double cx = std::cos(phi) / size, cy = std::sin(phi) / size;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        img.at(y, x) += static_cast<float>(amp * (x * cx + y * cy));
  }
  // mixed Gaussian blobs
  int blobs = 24 + static_cast<int>(rng.index(17));
  for (int bl = 0; bl < blobs; ++bl) {
    double mx = rng.uniform(0, size), my = rng.uniform(0, size);
    double sigma = rng.uniform(size * 0.02, size * 0.12);
    double amp = rng.uniform(-1.0, 1.0);
    double inv2s2 = 1.0 / (2 * sigma * sigma);
    int r = static_cast<int>(3 * sigma) + 1;
    int y0 = std::max(0, static_cast<int>(my) - r), y1 = std::min(size - 1, static_cast<int>(my) + r);
    int x0 = std::max(0, static_cast<int>(mx) - r), x1 = std::min(size - 1, static_cast<int>(mx) + r);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        double d2 = (x - mx) * (x - mx) + (y - my) * (y - my);
        img.at(y, x) += static_cast<float>(amp * std::exp(-d2 * inv2s2));
      }
  }
  // min-max normalize to [0,1]
  auto [mn, mx] = std::minmax_element(img.pix.begin(), img.pix.end());
  float lo = *mn, hi = *mx;
  if (hi - lo < 1e-9f) {
    std::fill(img.pix.begin(), img.pix.end(), 0.5f);
  } else {
    for (float& v : img.pix) v = (v - lo) / (hi - lo);
  }
  return img;
}

static Image sobel_magnitude(const Image& a) {
  Image out;
  out.h = a.h;
  out.w = a.w;
  out.pix.assign(a.pix.size(), 0.0f);
  auto clampi = [](int v, int hi) { return std::min(std::max(v, 0), hi); };
  float maxv = 0.0f;
  for (int y = 0; y < a.h; ++y) {
    for (int x = 0; x < a.w; ++x) {
      auto px = [&](int dy, int dx) {
        return a.at(clampi(y + dy, a.h - 1), clampi(x + dx, a.w - 1));
      };
      float gx = -px(-1, -1) - 2 * px(0, -1) - px(1, -1) + px(-1, 1) + 2 * px(0, 1) + px(1, 1);
      float gy = -px(-1, -1) - 2 * px(-1, 0) - px(-1, 1) + px(1, -1) + 2 * px(1, 0) + px(1, 1);
      float m = std::sqrt(gx * gx + gy * gy);
      out.at(y, x) = m;
      maxv = std::max(maxv, m);
    }
  }
  if (maxv > 0)
    for (float& v : out.pix) v /= maxv;
  return out;
}

static Image gaussian_blur(const Image& a, double sigma) {
  int r = static_cast<int>(std::ceil(3 * sigma));
  std::vector<float> kernel(2 * r + 1);
  float ksum = 0;
  for (int i = -r; i <= r; ++i) {
    kernel[i + r] = static_cast<float>(std::exp(-i * i / (2 * sigma * sigma)));
    ksum += kernel[i + r];
  }
  for (float& k : kernel) k /= ksum;
  auto clampi = [](int v, int hi) { return std::min(std::max(v, 0), hi); };
  Image tmp = a, out = a;
  for (int y = 0; y < a.h; ++y)
    for (int x = 0; x < a.w; ++x) {
      float acc = 0;
      for (int i = -r; i <= r; ++i) acc += kernel[i + r] * a.at(y, clampi(x + i, a.w - 1));
      tmp.at(y, x) = acc;
    }
  for (int y = 0; y < a.h; ++y)
    for (int x = 0; x < a.w; ++x) {
      float acc = 0;
      for (int i = -r; i <= r; ++i) acc += kernel[i + r] * tmp.at(clampi(y + i, a.h - 1), x);
      out.at(y, x) = acc;
    }
  return out;
}

Image apply_modality_transform(const Image& a, ModalityTransform t) {
  switch (t) {
    case ModalityTransform::Invert: {
      Image out = a;
      for (float& v : out.pix) v = 1.0f - v;
      return out;
    }
    case ModalityTransform::Edge:
      return sobel_magnitude(a);
    case ModalityTransform::BlurGamma: {
      Image out = gaussian_blur(a, 1.5);
      for (float& v : out.pix) v = std::pow(std::max(v, 0.0f), 0.6f);
      return out;
    }
  }
  throw ConfigError("unhandled modality transform");
}

std::vector<AlignedImagePair> synth_dataset(int n_images, int size, ModalityTransform t,
                                            uint64_t seed, double noise_sigma) {
  if (size < kPatchSize)
    throw ConfigError("synthetic image size must be >= " + std::to_string(kPatchSize));
  if (n_images < 2) throw ConfigError("synthetic dataset needs at least 2 images");
  Rng master(seed);
  std::vector<AlignedImagePair> out;
  out.reserve(n_images);
  for (int i = 0; i < n_images; ++i) {
    Rng rng = master.split(static_cast<uint64_t>(i));
    AlignedImagePair p;
    p.id = i;
    p.name = "synth-" + std::to_string(i);
    p.a = synth_texture(size, rng);
    p.b = apply_modality_transform(p.a, t);
    for (float& v : p.b.pix) {
      v += static_cast<float>(rng.normal() * noise_sigma);
      v = std::min(1.0f, std::max(0.0f, v));
    }
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Patch extraction and pairing
// ---------------------------------------------------------------------------

std::vector<GridCell> grid_patches(const Image& img) {
  std::vector<GridCell> cells;
  if (img.h < kPatchSize || img.w < kPatchSize) {
    std::fprintf(stderr, "warning: image %dx%d smaller than one %d-pixel cell, skipping\n",
                 img.h, img.w, kPatchSize);
    return cells;
  }
  int ny = img.h / kPatchSize, nx = img.w / kPatchSize;
  for (int cy = 0; cy < ny; ++cy) {
    for (int cx = 0; cx < nx; ++cx) {
      GridCell c;
      c.cx = cx;
      c.cy = cy;
      c.patch.resize(static_cast<size_t>(kPatchSize) * kPatchSize);
      for (int y = 0; y < kPatchSize; ++y)
        std::copy_n(&img.pix[static_cast<size_t>(cy * kPatchSize + y) * img.w + cx * kPatchSize],
                    kPatchSize, &c.patch[static_cast<size_t>(y) * kPatchSize]);
      cells.push_back(std::move(c));
    }
  }
  return cells;
}

std::vector<PatchPair> make_pairs(const std::vector<AlignedImagePair>& images, Rng& rng) {
  if (images.size() < 2)
    throw DimensionError("make_pairs requires >= 2 image pairs (negatives need a different image)");
  std::vector<std::vector<GridCell>> cells_a(images.size()), cells_b(images.size());
  for (size_t i = 0; i < images.size(); ++i) {
    cells_a[i] = grid_patches(images[i].a);
    cells_b[i] = grid_patches(images[i].b);
  }
  std::vector<PatchPair> out;
  for (size_t i = 0; i < images.size(); ++i) {
    Rng img_rng = rng.split(static_cast<uint64_t>(images[i].id));
    for (size_t c = 0; c < cells_a[i].size(); ++c) {
      PatchPair pos;
      pos.a = cells_a[i][c].patch;
      pos.b = cells_b[i][c].patch;
      pos.label = 1;
      pos.image_a_id = pos.image_b_id = images[i].id;
      pos.cell_ax = pos.cell_bx = cells_a[i][c].cx;
      pos.cell_ay = pos.cell_by = cells_a[i][c].cy;
      out.push_back(std::move(pos));

      // negative reuses patch_a; patch_b from a uniformly chosen other image
      size_t j = img_rng.index(images.size() - 1);
      if (j >= i) ++j;
      if (cells_b[j].empty()) continue;
      size_t dc = img_rng.index(cells_b[j].size());
      PatchPair neg;
      neg.a = cells_a[i][c].patch;
      neg.b = cells_b[j][dc].patch;
      neg.label = 0;
      neg.image_a_id = images[i].id;
      neg.image_b_id = images[j].id;
      neg.cell_ax = cells_a[i][c].cx;
      neg.cell_ay = cells_a[i][c].cy;
      neg.cell_bx = cells_b[j][dc].cx;
      neg.cell_by = cells_b[j][dc].cy;
      out.push_back(std::move(neg));
    }
  }
  return out;
}

AffineParams AffineParams::sample(Rng& rng) {
  AffineParams p;
  // independent inclusion of each transform; resample if none got picked so
  // the augmented copy is never a plain duplicate
  do {
    p.has_rotation = rng.uniform() < 0.5;
    p.has_translation = rng.uniform() < 0.5;
    p.has_scale = rng.uniform() < 0.5;
  } while (!p.has_rotation && !p.has_translation && !p.has_scale);
  if (p.has_rotation) p.rotation_deg = rng.uniform(-12.0, 12.0);
  if (p.has_translation) {
    p.tx = rng.uniform(-5.0, 5.0);
    p.ty = rng.uniform(-5.0, 5.0);
  }
  if (p.has_scale) p.scale = rng.uniform(0.8, 0.99);
  return p;
}

static float sample_reflect_bilinear(const Image& img, double y, double x) {
  auto reflect = [](double v, int n) {
    // reflect into [0, n-1]
    double period = 2.0 * (n - 1);
    if (n == 1) return 0.0;
    v = std::fmod(std::fabs(v), period);
    return v > n - 1 ? period - v : v;
  };
  y = reflect(y, img.h);
  x = reflect(x, img.w);
  int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
  int y1 = std::min(y0 + 1, img.h - 1), x1 = std::min(x0 + 1, img.w - 1);
  double fy = y - y0, fx = x - x0;
  return static_cast<float>((1 - fy) * ((1 - fx) * img.at(y0, x0) + fx * img.at(y0, x1)) +
                            fy * ((1 - fx) * img.at(y1, x0) + fx * img.at(y1, x1)));
}

// Resample patch_b from the parent image with the affine transform applied
// about the patch center. Coordinates outside the parent reflect.
static std::vector<float> resample_patch_b(const PatchPair& pair, const Image& parent_b,
                                           const AffineParams& p) {
  std::vector<float> out(static_cast<size_t>(kPatchSize) * kPatchSize);
  double theta = p.has_rotation ? p.rotation_deg * M_PI / 180.0 : 0.0;
  double s = p.has_scale ? p.scale : 1.0;
  double tx = p.has_translation ? p.tx : 0.0;
  double ty = p.has_translation ? p.ty : 0.0;
  double c = (kPatchSize - 1) / 2.0;
  double ox = pair.cell_bx * kPatchSize, oy = pair.cell_by * kPatchSize;
  double ct = std::cos(theta), st = std::sin(theta);
  for (int v = 0; v < kPatchSize; ++v) {
    for (int u = 0; u < kPatchSize; ++u) {
      double du = u - c, dv = v - c;
      double sx = (ct * du - st * dv) / s + c + tx;
      double sy = (st * du + ct * dv) / s + c + ty;
      out[static_cast<size_t>(v) * kPatchSize + u] =
          sample_reflect_bilinear(parent_b, oy + sy, ox + sx);
    }
  }
  return out;
}

std::vector<float> apply_affine_to_patch_b(const PatchPair& pair, const Image& parent_b,
                                           const AffineParams& params) {
  return resample_patch_b(pair, parent_b, params);
}

std::vector<PatchPair> augment_pair(const PatchPair& pair, const Image& parent_b, Rng& rng) {
  std::vector<PatchPair> out;
  out.reserve(4);
  out.push_back(pair);
  for (int k = 0; k < 3; ++k) {
    PatchPair aug = pair;
    aug.aug = AffineParams::sample(rng);
    aug.b = resample_patch_b(pair, parent_b, aug.aug);
    out.push_back(std::move(aug));
  }
  return out;
}

std::vector<PatchPair> finalize_eval_split(const std::vector<PatchPair>& augmented, Rng& rng) {
  if (augmented.size() % 4 != 0)
    throw DimensionError("finalize_eval_split expects groups of 4, got " +
                         std::to_string(augmented.size()) + " pairs");
  std::vector<PatchPair> out;
  out.reserve(augmented.size() / 4);
  for (size_t g = 0; g < augmented.size(); g += 4)
    out.push_back(augmented[g + rng.index(4)]);
  return out;
}

Dataset build_dataset(const std::vector<AlignedImagePair>& images, uint64_t seed,
                      const SplitSpec& spec) {
  Rng master(seed);
  // split unit is the source image pair
  std::vector<size_t> order(images.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng = master.split(0x5e117);
  split_rng.shuffle(order);
  size_t n = images.size();
  if (n < 6)
    throw DimensionError("build_dataset needs >= 6 image pairs (2 per split for "
                         "cross-image negatives), got " + std::to_string(n));
  size_t n_train = static_cast<size_t>(n * spec.train);
  size_t n_test = static_cast<size_t>(n * spec.test);
  // every split needs >= 2 images so negatives can cross image boundaries;
  // top up small splits from the training share
  if (n_test < 2) n_test = 2;
  while (n - n_train - n_test < 2) --n_train;
  Dataset ds;
  std::vector<std::vector<const AlignedImagePair*>> groups(3);
  for (size_t k = 0; k < n; ++k) {
    const AlignedImagePair& img = images[order[k]];
    int s = k < n_train ? 0 : (k < n_train + n_test ? 1 : 2);
    groups[s].push_back(&img);
    (s == 0 ? ds.train_ids : s == 1 ? ds.test_ids : ds.val_ids).push_back(img.id);
  }
  for (int s = 0; s < 3; ++s) {
    std::vector<AlignedImagePair> subset;
    for (auto* p : groups[s]) subset.push_back(*p);  // copies; desk-scale data
    Rng pair_rng = master.split(0x9a1 + s);
    std::vector<PatchPair> base = make_pairs(subset, pair_rng);
    // augment x4, per-source-image rng streams
    std::vector<PatchPair> augmented;
    augmented.reserve(base.size() * 4);
    int group_id = 0;
    for (const PatchPair& pp : base) {
      Rng aug_rng = master.split(0xa6000000ULL + static_cast<uint64_t>(s) * 1000003 +
                                 static_cast<uint64_t>(group_id));
      const AlignedImagePair* parent = nullptr;
      for (auto* ip : groups[s])
        if (ip->id == pp.image_b_id) { parent = ip; break; }
      auto four = augment_pair(pp, parent->b, aug_rng);
      for (auto& q : four) {
        q.group_id = group_id;
        augmented.push_back(std::move(q));
      }
      ++group_id;
    }
    Rng keep_rng = master.split(0xeea1 + s);
    std::vector<PatchPair>& dst = s == 0 ? ds.train : s == 1 ? ds.test : ds.val;
    dst = s == 0 ? std::move(augmented) : finalize_eval_split(augmented, keep_rng);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

ModalityStats compute_stats(const std::vector<PatchPair>& train_pairs) {
  double sum_a = 0, sum_b = 0, sq_a = 0, sq_b = 0;
  size_t n = 0;
  for (const auto& p : train_pairs) {
    for (float v : p.a) { sum_a += v; sq_a += static_cast<double>(v) * v; }
    for (float v : p.b) { sum_b += v; sq_b += static_cast<double>(v) * v; }
    n += p.a.size();
  }
  if (n == 0) throw DimensionError("compute_stats on empty training split");
  ModalityStats st;
  double ma = sum_a / n, mb = sum_b / n;
  st.mean_a = static_cast<float>(ma);
  st.mean_b = static_cast<float>(mb);
  st.std_a = static_cast<float>(std::max(std::sqrt(std::max(sq_a / n - ma * ma, 0.0)), 1e-6));
  st.std_b = static_cast<float>(std::max(std::sqrt(std::max(sq_b / n - mb * mb, 0.0)), 1e-6));
  return st;
}

void normalize(std::vector<PatchPair>& pairs, const ModalityStats& st) {
  for (auto& p : pairs) {
    for (float& v : p.a) v = (v - st.mean_a) / st.std_a;
    for (float& v : p.b) v = (v - st.mean_b) / st.std_b;
  }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

static constexpr char kCacheMagic[4] = {'T', 'S', 'P', 'M'};
static constexpr uint16_t kCacheVersion = 1;

void write_pair_cache(const std::string& path, const std::vector<PatchPair>& pairs) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IntegrityError("cannot open '" + path + "' for writing");
  f.write(kCacheMagic, 4);
  f.write(reinterpret_cast<const char*>(&kCacheVersion), 2);
  for (const auto& p : pairs) {
    uint8_t label = static_cast<uint8_t>(p.label);
    f.write(reinterpret_cast<const char*>(&label), 1);
    f.write(reinterpret_cast<const char*>(p.a.data()), p.a.size() * sizeof(float));
    f.write(reinterpret_cast<const char*>(p.b.data()), p.b.size() * sizeof(float));
  }
  if (!f) throw IntegrityError("write failed for '" + path + "'");
}

std::vector<PatchPair> read_pair_cache(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IntegrityError("cannot open pair cache '" + path + "'");
  char magic[4];
  uint16_t version = 0;
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&version), 2);
  if (!f || std::memcmp(magic, kCacheMagic, 4) != 0)
    throw IntegrityError("'" + path + "' is not a TSPM pair cache (bad magic at offset 0)");
  if (version != kCacheVersion)
    throw IntegrityError("unsupported TSPM version " + std::to_string(version));
  const size_t patch = static_cast<size_t>(kPatchSize) * kPatchSize;
  const size_t rec = 1 + 2 * patch * sizeof(float);
  std::vector<PatchPair> out;
  for (;;) {
    uint8_t label;
    f.read(reinterpret_cast<char*>(&label), 1);
    if (f.eof()) break;
    PatchPair p;
    p.label = label;
    p.a.resize(patch);
    p.b.resize(patch);
    f.read(reinterpret_cast<char*>(p.a.data()), patch * sizeof(float));
    f.read(reinterpret_cast<char*>(p.b.data()), patch * sizeof(float));
    if (!f)
      throw IntegrityError("truncated TSPM record at offset " +
                           std::to_string(6 + out.size() * rec));
    out.push_back(std::move(p));
  }
  return out;
}

void write_splits_tsv(const std::string& path, const Dataset& ds,
                      const std::vector<AlignedImagePair>& images) {
  std::ofstream f(path);
  if (!f) throw IntegrityError("cannot open '" + path + "' for writing");
  auto name_of = [&](int id) -> const std::string& {
    for (const auto& img : images)
      if (img.id == id) return img.name;
    throw IntegrityError("unknown image id in split manifest");
  };
  f << "pair_id\tsplit\n";
  for (int id : ds.train_ids) f << name_of(id) << "\ttrain\n";
  for (int id : ds.test_ids) f << name_of(id) << "\ttest\n";
  for (int id : ds.val_ids) f << name_of(id) << "\tval\n";
}

// ---------------------------------------------------------------------------
// Image files
// ---------------------------------------------------------------------------

static Image read_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IngestionError("cannot open image '" + path + "'");
  std::string magic;
  f >> magic;
  if (magic != "P5" && magic != "P2" && magic != "P6")
    throw IngestionError("'" + path + "': unsupported PNM magic '" + magic + "'");
  auto next_int = [&]() {
    int v;
    f >> std::ws;
    while (f.peek() == '#') f.ignore(1 << 20, '\n'), f >> std::ws;
    f >> v;
    return v;
  };
  int w = next_int(), h = next_int(), maxv = next_int();
  if (w <= 0 || h <= 0 || maxv <= 0 || maxv > 255)
    throw IngestionError("'" + path + "': bad PNM header");
  Image img;
  img.w = w;
  img.h = h;
  img.pix.resize(static_cast<size_t>(w) * h);
  int channels = magic == "P6" ? 3 : 1;
  if (magic == "P2") {
    for (auto& v : img.pix) v = static_cast<float>(next_int()) / maxv;
  } else {
    f.ignore(1);  // single whitespace after maxval
    std::vector<uint8_t> raw(static_cast<size_t>(w) * h * channels);
    f.read(reinterpret_cast<char*>(raw.data()), raw.size());
    if (!f) throw IngestionError("'" + path + "': truncated PNM data");
    for (size_t i = 0; i < img.pix.size(); ++i) {
      if (channels == 1) {
        img.pix[i] = raw[i] / static_cast<float>(maxv);
      } else {
        img.pix[i] = (0.299f * raw[3 * i] + 0.587f * raw[3 * i + 1] + 0.114f * raw[3 * i + 2]) /
                     static_cast<float>(maxv);
      }
    }
  }
  return img;
}

static Image read_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IngestionError("cannot open image '" + path + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (fp) std::fclose(fp);
    throw IngestionError("libpng init failed for '" + path + "'");
  }
  Image img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IngestionError("'" + path + "': malformed PNG");
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_uint_32 w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  // normalize everything to 8-bit RGB or gray
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IngestionError("'" + path + "': unsupported PNG channel count " +
                         std::to_string(channels));
  }
  std::vector<uint8_t> row(static_cast<size_t>(w) * channels);
  img.w = static_cast<int>(w);
  img.h = static_cast<int>(h);
  img.pix.resize(static_cast<size_t>(w) * h);
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < w; ++x) {
      float v = channels == 1 ? row[x] / 255.0f
                              : (0.299f * row[3 * x] + 0.587f * row[3 * x + 1] +
                                 0.114f * row[3 * x + 2]) / 255.0f;
      img.pix[static_cast<size_t>(y) * w + x] = v;
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

Image read_image_file(const std::string& path) {
  auto ext = fs::path(path).extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(c));
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return read_pnm(path);
  throw IngestionError("unsupported image extension '" + ext + "' for '" + path + "'");
}

void write_pgm(const std::string& path, const Image& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IngestionError("cannot open '" + path + "' for writing");
  f << "P5\n" << img.w << " " << img.h << "\n255\n";
  for (float v : img.pix) {
    uint8_t b = static_cast<uint8_t>(std::lround(std::min(1.0f, std::max(0.0f, v)) * 255));
    f.write(reinterpret_cast<const char*>(&b), 1);
  }
}

void write_png_gray(const std::string& path, const Image& img) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IngestionError("cannot open '" + path + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IngestionError("libpng write failed for '" + path + "'");
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, img.w, img.h, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<uint8_t> row(img.w);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x)
      row[x] = static_cast<uint8_t>(
          std::lround(std::min(1.0f, std::max(0.0f, img.at(y, x))) * 255));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

std::vector<AlignedImagePair> load_image_pairs(const std::string& root) {
  if (!fs::is_directory(root)) throw IngestionError("dataset directory '" + root + "' not found");
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  std::vector<AlignedImagePair> out;
  int id = 0;
  for (const auto& name : names) {
    auto find_file = [&](const char* stem) -> std::string {
      for (const char* ext : {".png", ".pgm", ".ppm", ".pnm"}) {
        fs::path p = fs::path(root) / name / (stem + std::string(ext));
        if (fs::exists(p)) return p.string();
      }
      throw IngestionError("pair '" + name + "' is missing modality file " + stem);
    };
    AlignedImagePair p;
    p.id = id++;
    p.name = name;
    p.a = read_image_file(find_file("a"));
    p.b = read_image_file(find_file("b"));
    if (p.a.h != p.b.h || p.a.w != p.b.w)
      throw IngestionError("pair '" + name + "': modality extents differ");
    out.push_back(std::move(p));
  }
  if (out.empty()) throw IngestionError("no image pairs found under '" + root + "'");
  return out;
}

}  // namespace ts
