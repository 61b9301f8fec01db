#include "wood/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "wood/error.hpp"

namespace wood {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

void require_finite(const Matrix& features) {
  if (!features.allFinite()) throw InputError("dataset features contain NaN or Inf");
}

// Whole-file read through zlib, which passes uncompressed input through
// unchanged.
std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path) {
  gzFile file = gzopen(path.c_str(), "rb");
  if (file == nullptr) throw InputError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes;
  std::array<std::uint8_t, 1 << 16> chunk{};
  for (;;) {
    const int got = gzread(file, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (got < 0) {
      const std::size_t at = bytes.size();
      gzclose(file);
      throw FormatError("corrupt compressed stream in " + path.string(), at);
    }
    if (got == 0) break;
    bytes.insert(bytes.end(), chunk.begin(), chunk.begin() + got);
  }
  gzclose(file);
  return bytes;
}

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset,
                        const std::string& what) {
  if (offset + 4 > bytes.size()) throw FormatError("truncated header (" + what + ")", bytes.size());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                              static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), 4);
}

struct IdxImages {
  std::size_t count = 0;
  std::size_t pixels_per_image = 0;
  Matrix features;
};

IdxImages parse_idx_images(const std::filesystem::path& path) {
  const auto bytes = read_maybe_gzip(path);
  const std::uint32_t magic = read_be32(bytes, 0, "magic");
  if (magic != kIdxImagesMagic) {
    throw FormatError("bad magic " + std::to_string(magic) + " for an IDX image file " +
                      path.string(), 0);
  }
  IdxImages out;
  out.count = read_be32(bytes, 4, "count");
  const std::size_t rows = read_be32(bytes, 8, "rows");
  const std::size_t cols = read_be32(bytes, 12, "cols");
  out.pixels_per_image = rows * cols;
  constexpr std::size_t header = 16;
  const std::size_t needed = header + out.count * out.pixels_per_image;
  if (bytes.size() < needed) {
    throw FormatError("image data truncated: need " + std::to_string(needed) + " bytes", bytes.size());
  }
  out.features.resize(static_cast<Eigen::Index>(out.count),
                      static_cast<Eigen::Index>(out.pixels_per_image));
  for (std::size_t i = 0; i < out.count * out.pixels_per_image; ++i) {
    out.features.data()[i] = static_cast<double>(bytes[header + i]) / 255.0;
  }
  return out;
}

std::string format_double(double x) {
  std::array<char, 40> buf{};
  const int n = std::snprintf(buf.data(), buf.size(), "%.17g", x);
  return std::string(buf.data(), static_cast<std::size_t>(n));
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  CsvTable table;
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line)) throw FormatError("empty CSV file " + path.string(), 0);
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.header.push_back(cell);
  }
  offset += line.size() + 1;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      offset += 1;
      continue;
    }
    std::vector<double> row;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(p, comma, value);
      if (ec != std::errc{} || ptr != comma) {
        throw FormatError("bad number in " + path.string(),
                          offset + static_cast<std::size_t>(p - line.data()));
      }
      row.push_back(value);
      p = comma + 1;
    }
    if (row.size() != table.header.size()) {
      throw FormatError("row has " + std::to_string(row.size()) + " cells, header has " +
                        std::to_string(table.header.size()), offset);
    }
    table.rows.push_back(std::move(row));
    offset += line.size() + 1;
  }
  return table;
}

Matrix table_features(const CsvTable& table, std::size_t dim) {
  Matrix features(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = table.rows[r][c];
    }
  }
  return features;
}

void write_csv_impl(const std::filesystem::path& path, const Matrix& features,
                    const std::vector<std::size_t>* labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  for (Eigen::Index c = 0; c < features.cols(); ++c) {
    if (c > 0) out << ',';
    out << 'x' << c;
  }
  if (labels != nullptr) out << ",label";
  out << '\n';
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    for (Eigen::Index c = 0; c < features.cols(); ++c) {
      if (c > 0) out << ',';
      out << format_double(features(r, c));
    }
    if (labels != nullptr) out << ',' << (*labels)[static_cast<std::size_t>(r)];
    out << '\n';
  }
}

std::string describe(const SyntheticSpec& spec) {
  static constexpr const char* names[] = {"blobs", "ring", "shifted"};
  std::ostringstream os;
  os << "synthetic:" << names[static_cast<int>(spec.kind)] << " k=" << spec.k
     << " n=" << spec.n_per_class << " dim=" << spec.dim << " sep=" << spec.separation
     << " noise=" << spec.noise << " seed=" << spec.seed;
  return os.str();
}

// Counts per part by largest remainder; ties go to the earlier part.
std::array<std::size_t, 3> allocate(std::size_t n, const std::array<double, 3>& fractions) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t p = 0; p < 3; ++p) {
    const double exact = fractions[p] * static_cast<double>(n);
    counts[p] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[p] = exact - static_cast<double>(counts[p]);
    assigned += counts[p];
  }
  while (assigned < n) {
    std::size_t best = 0;
    for (std::size_t p = 1; p < 3; ++p) {
      if (remainder[p] > remainder[best]) best = p;
    }
    ++counts[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  return counts;
}

}  // namespace

template <DataRole R>
Dataset<R>::Dataset(Matrix features, std::string provenance)
  requires(R == DataRole::OOD)
    : features_(std::move(features)), provenance_(std::move(provenance)) {
  require_finite(features_);
}

template <DataRole R>
Dataset<R>::Dataset(Matrix features, std::vector<std::size_t> labels, std::string provenance)
  requires(R == DataRole::InD)
    : features_(std::move(features)), labels_(std::move(labels)), provenance_(std::move(provenance)) {
  require_finite(features_);
  if (labels_.size() != size()) {
    throw DimensionError(std::to_string(labels_.size()) + " labels for " +
                         std::to_string(size()) + " samples");
  }
}

template <DataRole R>
std::size_t Dataset<R>::num_classes() const
  requires(R == DataRole::InD)
{
  if (labels_.empty()) return 0;
  return *std::max_element(labels_.begin(), labels_.end()) + 1;
}

template <DataRole R>
Dataset<R> Dataset<R>::subset(std::span<const std::size_t> indices) const {
  Matrix rows(static_cast<Eigen::Index>(indices.size()), features_.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw IndexError("row " + std::to_string(indices[i]) + " out of range");
    rows.row(static_cast<Eigen::Index>(i)) = features_.row(static_cast<Eigen::Index>(indices[i]));
  }
  if constexpr (R == DataRole::InD) {
    std::vector<std::size_t> labels(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) labels[i] = labels_[indices[i]];
    return Dataset(std::move(rows), std::move(labels), provenance_);
  } else {
    return Dataset(std::move(rows), provenance_);
  }
}

template class Dataset<DataRole::InD>;
template class Dataset<DataRole::OOD>;

OodDataset as_ood(const InDDataset& ds) { return OodDataset(ds.features(), ds.provenance()); }

InDDataset load_idx_pair(const std::filesystem::path& images, const std::filesystem::path& labels) {
  IdxImages img = parse_idx_images(images);

  const auto bytes = read_maybe_gzip(labels);
  const std::uint32_t magic = read_be32(bytes, 0, "magic");
  if (magic != kIdxLabelsMagic) {
    throw FormatError("bad magic " + std::to_string(magic) + " for an IDX label file " +
                      labels.string(), 0);
  }
  const std::size_t count = read_be32(bytes, 4, "count");
  if (count != img.count) {
    throw FormatError("label count " + std::to_string(count) + " does not match image count " +
                      std::to_string(img.count), 4);
  }
  constexpr std::size_t header = 8;
  if (bytes.size() < header + count) {
    throw FormatError("label data truncated", bytes.size());
  }
  std::vector<std::size_t> y(count);
  for (std::size_t i = 0; i < count; ++i) y[i] = bytes[header + i];
  return InDDataset(std::move(img.features), std::move(y), "idx:" + images.string());
}

OodDataset load_idx_images(const std::filesystem::path& images) {
  IdxImages img = parse_idx_images(images);
  return OodDataset(std::move(img.features), "idx:" + images.string());
}

void write_idx_images(const std::filesystem::path& path, std::uint32_t count, std::uint32_t rows,
                      std::uint32_t cols, std::span<const std::uint8_t> pixels) {
  if (pixels.size() != std::size_t{count} * rows * cols) {
    throw DimensionError("pixel buffer does not match count x rows x cols");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  put_be32(out, kIdxImagesMagic);
  put_be32(out, count);
  put_be32(out, rows);
  put_be32(out, cols);
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  put_be32(out, kIdxLabelsMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

void write_csv(const std::filesystem::path& path, const InDDataset& ds) {
  write_csv_impl(path, ds.features(), &ds.labels());
}

void write_csv(const std::filesystem::path& path, const OodDataset& ds) {
  write_csv_impl(path, ds.features(), nullptr);
}

InDDataset read_ind_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv_table(path);
  if (table.header.empty() || table.header.back() != "label") {
    throw FormatError("in-distribution CSV needs a trailing label column: " + path.string(), 0);
  }
  const std::size_t dim = table.header.size() - 1;
  std::vector<std::size_t> labels;
  labels.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    const double y = row.back();
    if (y < 0.0 || y != std::floor(y)) throw FormatError("label is not a class index", 0);
    labels.push_back(static_cast<std::size_t>(y));
  }
  return InDDataset(table_features(table, dim), std::move(labels), "csv:" + path.string());
}

OodDataset read_ood_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv_table(path);
  std::size_t dim = table.header.size();
  if (dim > 0 && table.header.back() == "label") --dim;
  return OodDataset(table_features(table, dim), "csv:" + path.string());
}

void SyntheticSpec::validate() const {
  if (k < 2) throw ConfigError("synthetic data needs K >= 2");
  if (n_per_class == 0) throw ConfigError("synthetic data needs n >= 1");
  if (dim == 0) throw ConfigError("synthetic data needs dim >= 1");
  if (!(separation > 0.0) || !std::isfinite(separation)) throw ConfigError("separation must be > 0");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("noise must be >= 0");
  if (kind == SyntheticKind::GaussianBlobs && dim == 1 && k > 2) {
    throw ConfigError("more than two blobs need dim >= 2");
  }
}

std::vector<Vector> class_directions(std::size_t k, std::size_t dim) {
  std::vector<Vector> dirs(k, Vector::Zero(static_cast<Eigen::Index>(dim)));
  if (dim + 1 >= k) {
    // Regular simplex: centred one-hot vertices expressed in an orthonormal
    // basis of the sum-zero hyperplane.
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t b = 1; b < k; ++b) {
        const double norm = std::sqrt(static_cast<double>(b * (b + 1)));
        double coord = 0.0;
        if (c < b) coord = 1.0 / norm;
        if (c == b) coord = -static_cast<double>(b) / norm;
        dirs[c][static_cast<Eigen::Index>(b - 1)] = coord;
      }
      dirs[c].normalize();
    }
  } else {
    for (std::size_t c = 0; c < k; ++c) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(k);
      dirs[c][0] = std::cos(angle);
      dirs[c][1] = std::sin(angle);
    }
  }
  return dirs;
}

InDDataset synth_ind(const SyntheticSpec& spec) {
  spec.validate();
  if (spec.kind != SyntheticKind::GaussianBlobs) {
    throw ConfigError("only Gaussian blobs are labeled in-distribution data");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto dirs = class_directions(spec.k, spec.dim);
  const auto n = static_cast<Eigen::Index>(spec.k * spec.n_per_class);
  Matrix x(n, static_cast<Eigen::Index>(spec.dim));
  std::vector<std::size_t> y(static_cast<std::size_t>(n));
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < spec.k; ++c) {
    for (std::size_t s = 0; s < spec.n_per_class; ++s, ++row) {
      for (Eigen::Index d = 0; d < x.cols(); ++d) {
        x(row, d) = spec.separation * dirs[c][d] + spec.noise * gauss(rng);
      }
      y[static_cast<std::size_t>(row)] = c;
    }
  }
  return InDDataset(std::move(x), std::move(y), describe(spec));
}

OodDataset synth_ood(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> turn(0.0, 2.0 * std::numbers::pi);
  const auto n = static_cast<Eigen::Index>(spec.n_per_class);
  const auto dim = static_cast<Eigen::Index>(spec.dim);
  Matrix x(n, dim);

  switch (spec.kind) {
    case SyntheticKind::Ring:
      for (Eigen::Index r = 0; r < n; ++r) {
        const double angle = turn(rng);
        const double radius = spec.separation + spec.noise * gauss(rng);
        if (dim == 1) {
          x(r, 0) = (angle < std::numbers::pi ? 1.0 : -1.0) * radius;
          continue;
        }
        x(r, 0) = radius * std::cos(angle);
        x(r, 1) = radius * std::sin(angle);
        for (Eigen::Index d = 2; d < dim; ++d) x(r, d) = spec.noise * gauss(rng);
      }
      break;
    case SyntheticKind::ShiftedBlob:
      for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index d = 0; d < dim; ++d) {
          x(r, d) = (d == 0 ? 3.0 * spec.separation : 0.0) + spec.noise * gauss(rng);
        }
      }
      break;
    case SyntheticKind::GaussianBlobs:
      throw ConfigError("Gaussian blobs are in-distribution data; use synth_ind");
  }
  return OodDataset(std::move(x), describe(spec));
}

std::variant<InDDataset, OodDataset> synth(const SyntheticSpec& spec) {
  if (spec.kind == SyntheticKind::GaussianBlobs) return synth_ind(spec);
  return synth_ood(spec);
}

template <DataRole R>
Split<R> split(const Dataset<R>& ds, std::array<double, 3> fractions, std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> groups;
  if constexpr (R == DataRole::InD) {
    groups.resize(ds.num_classes());
    for (std::size_t i = 0; i < ds.size(); ++i) groups[ds.labels()[i]].push_back(i);
  } else {
    groups.emplace_back(ds.size());
    std::iota(groups[0].begin(), groups[0].end(), std::size_t{0});
  }

  std::array<std::vector<std::size_t>, 3> parts;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& members = groups[g];
    if (members.empty()) continue;
    if (R == DataRole::InD && members.size() < 3) {
      throw ConfigError("class " + std::to_string(g) + " has " + std::to_string(members.size()) +
                        " samples, too few to stratify into 3 parts");
    }
    std::shuffle(members.begin(), members.end(), rng);
    const auto counts = allocate(members.size(), fractions);
    std::size_t pos = 0;
    for (std::size_t p = 0; p < 3; ++p) {
      parts[p].insert(parts[p].end(), members.begin() + static_cast<std::ptrdiff_t>(pos),
                      members.begin() + static_cast<std::ptrdiff_t>(pos + counts[p]));
      pos += counts[p];
    }
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return Split<R>{ds.subset(parts[0]), ds.subset(parts[1]), ds.subset(parts[2])};
}

template Split<DataRole::InD> split(const InDDataset&, std::array<double, 3>, std::uint64_t);
template Split<DataRole::OOD> split(const OodDataset&, std::array<double, 3>, std::uint64_t);

}  // namespace wood
