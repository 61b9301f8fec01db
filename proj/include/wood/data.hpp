#pragma once

// Datasets, IDX/CSV ingestion, synthetic generators and splitting.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "wood/model.hpp"

namespace wood {

enum class DataRole { InD, OOD };

/// Immutable feature matrix plus, for in-distribution data only, class
/// labels. OOD datasets have no label accessor at all.
template <DataRole R>
class Dataset {
 public:
  Dataset(Matrix features, std::string provenance)
    requires(R == DataRole::OOD);
  Dataset(Matrix features, std::vector<std::size_t> labels, std::string provenance)
    requires(R == DataRole::InD);

  static constexpr DataRole role = R;

  std::size_t size() const { return static_cast<std::size_t>(features_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(features_.cols()); }
  const Matrix& features() const { return features_; }
  const std::string& provenance() const { return provenance_; }

  const std::vector<std::size_t>& labels() const
    requires(R == DataRole::InD)
  {
    return labels_;
  }
  /// 1 + largest label.
  std::size_t num_classes() const
    requires(R == DataRole::InD);

  /// Rows at the given indices, in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;

 private:
  Matrix features_;
  std::vector<std::size_t> labels_;
  std::string provenance_;
};

using InDDataset = Dataset<DataRole::InD>;
using OodDataset = Dataset<DataRole::OOD>;

/// Drops labels: an in-distribution set reused as OOD data.
OodDataset as_ood(const InDDataset& ds);

// IDX (optionally gzip-compressed, detected by magic bytes).
InDDataset load_idx_pair(const std::filesystem::path& images, const std::filesystem::path& labels);
OodDataset load_idx_images(const std::filesystem::path& images);
/// Raw u8 IDX writers (uncompressed).
void write_idx_images(const std::filesystem::path& path, std::uint32_t count, std::uint32_t rows,
                      std::uint32_t cols, std::span<const std::uint8_t> pixels);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

// CSV: header x0..x{d-1}, plus a trailing `label` column for InD data.
void write_csv(const std::filesystem::path& path, const InDDataset& ds);
void write_csv(const std::filesystem::path& path, const OodDataset& ds);
InDDataset read_ind_csv(const std::filesystem::path& path);
/// Reads features; a label column, if present, is discarded.
OodDataset read_ood_csv(const std::filesystem::path& path);

enum class SyntheticKind { GaussianBlobs, Ring, ShiftedBlob };

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::GaussianBlobs;
  std::size_t k = 3;
  std::size_t n_per_class = 200;
  std::size_t dim = 2;
  double separation = 4.0;
  double noise = 0.5;
  std::uint64_t seed = 7;

  void validate() const;
};

/// Unit directions of the K class centres; they sum to zero so the blob
/// centroid is the origin.
std::vector<Vector> class_directions(std::size_t k, std::size_t dim);

InDDataset synth_ind(const SyntheticSpec& spec);
OodDataset synth_ood(const SyntheticSpec& spec);
std::variant<InDDataset, OodDataset> synth(const SyntheticSpec& spec);

template <DataRole R>
struct Split {
  Dataset<R> train;
  Dataset<R> calibration;
  Dataset<R> test;
};

/// Disjoint, exhaustive, seeded split; stratified by label for InD data.
template <DataRole R>
Split<R> split(const Dataset<R>& ds, std::array<double, 3> fractions, std::uint64_t seed);

}  // namespace wood
