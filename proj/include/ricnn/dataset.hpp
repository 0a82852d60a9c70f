#pragma once
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ricnn/polar.hpp"

namespace ricnn {

struct DatasetBundle {
  Tensor<float> images;     // (n,1,h,w), values in [0,1]
  std::vector<int> labels;  // 0..9
  std::string split;
  std::string note;

  int64_t size() const { return images.shape().n; }
  void validate() const;
};

// IDX pair, plain or gzip (sniffed from the bytes). Pixels scaled by 1/255.
DatasetBundle load_idx(const std::string& images_path,
                       const std::string& labels_path);

// Plain (uncompressed) IDX writers for fixtures.
void write_idx_images(const std::string& path, int64_t n, int64_t h, int64_t w,
                      const std::vector<uint8_t>& pixels);
void write_idx_labels(const std::string& path,
                      const std::vector<uint8_t>& labels);

// Seeded disjoint split; the two halves together are the original multiset.
std::pair<DatasetBundle, DatasetBundle> split_train_val(const DatasetBundle& b,
                                                        int64_t val_count,
                                                        uint64_t seed);

// First n examples (the train-size cap).
DatasetBundle take(const DatasetBundle& b, int64_t n);

// One rotated copy of the bundle per angle, labels carried over.
std::vector<DatasetBundle> build_mnist_rot(const DatasetBundle& test,
                                           const std::vector<double>& angles);

// kind: oriented-bars | two-class-linear | random-noise
DatasetBundle synth_fixtures(const std::string& kind, uint64_t seed);

}  // namespace ricnn
