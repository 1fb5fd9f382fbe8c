#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advlab/linalg.hpp"

namespace advlab {

struct Dataset {
  std::vector<Vec> inputs;  // values in [0, 1] for IDX data
  std::vector<int> labels;
  int classes = 0;
  std::string source;
  std::uint64_t seed = 0;

  std::size_t size() const { return inputs.size(); }
  Eigen::Index dims() const { return inputs.empty() ? 0 : inputs.front().size(); }
  /// Throws unless lengths, dimensions and label ranges are consistent.
  void validate() const;
  /// First n samples (or all when n >= size()).
  Dataset head(std::size_t n) const;
};

/// Images and labels as a pair of IDX files; pixels are scaled by 1/255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
/// Images only; labels are left empty.
std::vector<Vec> load_idx_images(const std::string& path);
std::vector<int> load_idx_labels(const std::string& path);

/// Writes inputs as rows x cols unsigned bytes (value * 255, rounded).
void write_idx(const Dataset& data, const std::string& images_path,
               const std::string& labels_path, std::uint32_t rows, std::uint32_t cols);

enum class SynthKind { blobs, two_class_gaussian };

/// Class-balanced synthetic data, deterministic in the seed. Blob centers are
/// drawn uniformly in [0.2, 0.8]^dims with noise std 0.05; the two-class
/// variant puts centers at 0.5 +- 3 sigma along the first axis.
Dataset synth_dataset(SynthKind kind, std::size_t n, Eigen::Index dims, int classes,
                      std::uint64_t seed);

/// Parses `idx:<images>,<labels>` or `synth:<kind>,n=..,dims=..,classes=..,seed=..`.
Dataset dataset_from_uri(const std::string& uri);

}  // namespace advlab
