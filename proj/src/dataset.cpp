#include "ricnn/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <set>

#include "ricnn/rng.hpp"

namespace ricnn {

namespace {

// gzread handles plain files too, so one reader covers both encodings
std::vector<uint8_t> read_all(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open " + path);
  std::vector<uint8_t> out;
  uint8_t buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof buf)) > 0)
    out.insert(out.end(), buf, buf + n);
  const bool bad = n < 0;
  gzclose(f);
  if (bad) throw IoError("decompression failed for " + path);
  return out;
}

uint32_t be32(const uint8_t* p) {
  return (uint32_t{p[0]} << 24) | (uint32_t{p[1]} << 16) |
         (uint32_t{p[2]} << 8) | uint32_t{p[3]};
}

void put_be32(FILE* f, uint32_t v) {
  uint8_t b[4] = {static_cast<uint8_t>(v >> 24), static_cast<uint8_t>(v >> 16),
                  static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v)};
  if (std::fwrite(b, 1, 4, f) != 4) throw IoError("short write");
}

}  // namespace

void DatasetBundle::validate() const {
  const Shape4 s = images.shape();
  if (s.c != 1)
    throw InvalidArgument("bundle images must be single-channel, got " +
                          s.str());
  if (static_cast<int64_t>(labels.size()) != s.n)
    throw InvalidArgument("bundle has " + std::to_string(s.n) + " images but " +
                          std::to_string(labels.size()) + " labels");
  for (int lb : labels)
    if (lb < 0 || lb > 9)
      throw InvalidArgument("label " + std::to_string(lb) + " out of 0..9");
  for (int64_t i = 0; i < images.size(); ++i) {
    const float v = images.data()[i];
    if (!(v >= 0.0f && v <= 1.0f))
      throw InvalidArgument("pixel value " + std::to_string(v) +
                            " outside [0,1]");
  }
}

DatasetBundle load_idx(const std::string& images_path,
                       const std::string& labels_path) {
  const std::vector<uint8_t> ib = read_all(images_path);
  if (ib.size() < 16) throw IoError("truncated IDX image file " + images_path);
  if (be32(ib.data()) != 2051)
    throw IoError("bad image magic " + std::to_string(be32(ib.data())) +
                  " in " + images_path + " (want 2051)");
  const int64_t n = be32(ib.data() + 4);
  const int64_t h = be32(ib.data() + 8);
  const int64_t w = be32(ib.data() + 12);
  if (n < 1 || h < 1 || w < 1)
    throw IoError("degenerate IDX dimensions in " + images_path);
  if (static_cast<int64_t>(ib.size()) != 16 + n * h * w)
    throw IoError("truncated IDX image payload in " + images_path);

  const std::vector<uint8_t> lb = read_all(labels_path);
  if (lb.size() < 8) throw IoError("truncated IDX label file " + labels_path);
  if (be32(lb.data()) != 2049)
    throw IoError("bad label magic " + std::to_string(be32(lb.data())) +
                  " in " + labels_path + " (want 2049)");
  const int64_t ln = be32(lb.data() + 4);
  if (static_cast<int64_t>(lb.size()) != 8 + ln)
    throw IoError("truncated IDX label payload in " + labels_path);
  if (ln != n)
    throw IoError("image/label count mismatch: " + std::to_string(n) + " vs " +
                  std::to_string(ln));

  DatasetBundle out;
  out.images = Tensor<float>({n, 1, h, w});
  constexpr float kInv = 1.0f / 255.0f;
  const uint8_t* px = ib.data() + 16;
  for (int64_t i = 0; i < n * h * w; ++i)
    out.images.data()[i] = kInv * static_cast<float>(px[i]);
  out.labels.assign(lb.begin() + 8, lb.end());
  for (int v : out.labels)
    if (v > 9) throw IoError("label " + std::to_string(v) + " out of 0..9");
  out.note = images_path;
  return out;
}

void write_idx_images(const std::string& path, int64_t n, int64_t h, int64_t w,
                      const std::vector<uint8_t>& pixels) {
  if (static_cast<int64_t>(pixels.size()) != n * h * w)
    throw InvalidArgument("pixel payload does not match dimensions");
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot write " + path);
  try {
    put_be32(f, 2051);
    put_be32(f, static_cast<uint32_t>(n));
    put_be32(f, static_cast<uint32_t>(h));
    put_be32(f, static_cast<uint32_t>(w));
    if (std::fwrite(pixels.data(), 1, pixels.size(), f) != pixels.size())
      throw IoError("short write to " + path);
  } catch (...) {
    std::fclose(f);
    throw;
  }
  std::fclose(f);
}

void write_idx_labels(const std::string& path,
                      const std::vector<uint8_t>& labels) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot write " + path);
  try {
    put_be32(f, 2049);
    put_be32(f, static_cast<uint32_t>(labels.size()));
    if (std::fwrite(labels.data(), 1, labels.size(), f) != labels.size())
      throw IoError("short write to " + path);
  } catch (...) {
    std::fclose(f);
    throw;
  }
  std::fclose(f);
}

namespace {

DatasetBundle gather(const DatasetBundle& b, const int64_t* idx, int64_t n,
                     const std::string& split) {
  const Shape4 s = b.images.shape();
  DatasetBundle out;
  out.images = Tensor<float>({n, 1, s.h, s.w});
  out.labels.resize(static_cast<size_t>(n));
  out.split = split;
  out.note = b.note;
  const int64_t plane = s.h * s.w;
  for (int64_t i = 0; i < n; ++i) {
    std::memcpy(out.images.data() + i * plane, b.images.data() + idx[i] * plane,
                sizeof(float) * static_cast<size_t>(plane));
    out.labels[static_cast<size_t>(i)] = b.labels[static_cast<size_t>(idx[i])];
  }
  return out;
}

}  // namespace

std::pair<DatasetBundle, DatasetBundle> split_train_val(const DatasetBundle& b,
                                                        int64_t val_count,
                                                        uint64_t seed) {
  const int64_t n = b.size();
  if (val_count < 1 || val_count >= n)
    throw InvalidArgument("validation count " + std::to_string(val_count) +
                          " must be in 1.." + std::to_string(n - 1));
  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(idx.begin(), idx.end());
  return {gather(b, idx.data(), n - val_count, "train"),
          gather(b, idx.data() + (n - val_count), val_count, "val")};
}

DatasetBundle take(const DatasetBundle& b, int64_t n) {
  if (n < 1 || n > b.size())
    throw InvalidArgument("take " + std::to_string(n) + " of " +
                          std::to_string(b.size()));
  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  return gather(b, idx.data(), n, b.split);
}

std::vector<DatasetBundle> build_mnist_rot(const DatasetBundle& test,
                                           const std::vector<double>& angles) {
  std::set<double> seen;
  for (double a : angles) {
    if (!(a >= 0.0 && a < 360.0))
      throw InvalidArgument("rotation angle " + std::to_string(a) +
                            " outside [0,360)");
    if (!seen.insert(a).second)
      throw InvalidArgument("duplicate rotation angle " + std::to_string(a));
  }
  std::vector<DatasetBundle> out;
  out.reserve(angles.size());
  for (double a : angles) {
    DatasetBundle r;
    r.images = rotate_image(test.images, a);
    r.labels = test.labels;
    r.split = test.split;
    r.note = test.note + " rot" + std::to_string(a);
    out.push_back(std::move(r));
  }
  return out;
}

DatasetBundle synth_fixtures(const std::string& kind, uint64_t seed) {
  Rng rng(seed);
  DatasetBundle out;
  out.split = "synth";
  out.note = kind;
  if (kind == "oriented-bars") {
    // four orientation classes of the same bar; 90-degree rotations are
    // exact pixel permutations of class 0, so a calibrated stack must give
    // all four identical features. Variants differ by thickness/length,
    // never orientation.
    const int64_t kVariants = 8;
    out.images = Tensor<float>({4 * kVariants, 1, 28, 28}, 0.0f);
    out.labels.assign(static_cast<size_t>(4 * kVariants), 0);
    for (int64_t v = 0; v < kVariants; ++v) {
      const int thick = 2 + static_cast<int>(v % 3);
      const int len = 12 + 2 * static_cast<int>(v % 4);
      const float shade = 0.6f + 0.05f * static_cast<float>(v);
      Tensor<float> base({1, 1, 28, 28}, 0.0f);
      const int r0 = 14 - thick / 2, c0 = 14 - len / 2;
      for (int r = r0; r < r0 + thick; ++r)
        for (int c = c0; c < c0 + len; ++c) base.at(0, 0, r, c) = shade;
      for (int k = 0; k < 4; ++k) {
        Tensor<float> img = rot90(base, k);
        const int64_t i = k * kVariants + v;
        std::memcpy(out.images.data() + i * 28 * 28, img.data(),
                    sizeof(float) * 28 * 28);
        out.labels[static_cast<size_t>(i)] = k;
      }
    }
    return out;
  }
  if (kind == "two-class-linear") {
    // separable by mean intensity alone
    const int64_t n = 200;
    out.images = Tensor<float>({n, 1, 28, 28});
    for (int64_t i = 0; i < n; ++i) {
      const int lb = static_cast<int>(rng.below(2));
      const double lo = lb ? 0.55 : 0.0, hi = lb ? 1.0 : 0.45;
      for (int64_t p = 0; p < 28 * 28; ++p)
        out.images.data()[i * 28 * 28 + p] =
            static_cast<float>(rng.uniform(lo, hi));
      out.labels.push_back(lb);
    }
    return out;
  }
  if (kind == "random-noise") {
    const int64_t n = 1000;
    out.images = Tensor<float>({n, 1, 28, 28});
    for (int64_t i = 0; i < n * 28 * 28; ++i)
      out.images.data()[i] = static_cast<float>(rng.uniform());
    for (int64_t i = 0; i < n; ++i)
      out.labels.push_back(static_cast<int>(rng.below(10)));
    return out;
  }
  throw InvalidArgument("unknown fixture kind '" + kind + "'");
}

}  // namespace ricnn
