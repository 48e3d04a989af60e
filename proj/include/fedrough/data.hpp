#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "fedrough/errors.hpp"
#include "fedrough/model.hpp"
#include "fedrough/rng.hpp"

namespace fedrough {

struct Dataset {
  Matrix features;  // n x p
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols; }

  void validate() const {
    require(size() >= 1, "dataset: must contain at least one row");
    require(features.rows == size(), "dataset: feature rows != label count");
    for (int y : labels)
      require(y >= 0 && static_cast<std::size_t>(y) < num_classes, "dataset: label out of range");
  }

  /// Rows gathered into a batch, in the order given.
  Batch gather(std::span<const std::size_t> rows) const {
    Batch b;
    b.features = Matrix(rows.size(), dim());
    b.labels.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto src = features.row(rows[r]);
      std::copy(src.begin(), src.end(), b.features.row(r).begin());
      b.labels.push_back(labels[rows[r]]);
    }
    return b;
  }

  Batch as_batch() const { return Batch{features, labels}; }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> c(num_classes, 0);
    for (int y : labels) ++c[static_cast<std::size_t>(y)];
    return c;
  }
};

struct ClientShard {
  std::size_t client_id = 0;
  std::vector<std::size_t> indices;

  std::size_t n_k() const noexcept { return indices.size(); }
};

struct PartitionSpec {
  std::size_t K = 1;
  double alpha = 0.1;
  std::uint64_t seed = 0;
};

inline std::vector<std::size_t> class_histogram(const Dataset& ds, const ClientShard& shard) {
  std::vector<std::size_t> h(ds.num_classes, 0);
  for (std::size_t i : shard.indices) ++h[static_cast<std::size_t>(ds.labels[i])];
  return h;
}

/// Rounds fractional shares of `total` to integer counts that sum to `total`
/// (largest remainder; ties go to the lower index).
inline std::vector<std::size_t> largest_remainder(const std::vector<double>& shares, std::size_t total) {
  const std::size_t k = shares.size();
  std::vector<std::size_t> counts(k);
  std::vector<double> rem(k);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double exact = shares[i] * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    rem[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  // floor() of a share slightly above its true value can overshoot by a unit.
  while (assigned > total) {
    auto it = std::max_element(counts.begin(), counts.end());
    --*it;
    --assigned;
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; assigned < total; i = (i + 1) % k) {
    ++counts[order[i]];
    ++assigned;
  }
  return counts;
}

/// Label-skew partition: for each class, client shares ~ Dir(alpha * 1_K),
/// rounded by largest remainder, then filled from a seeded shuffle of that
/// class's rows. Empty shards take one row from the current largest shard.
inline std::vector<ClientShard> dirichlet_partition(const Dataset& ds, const PartitionSpec& spec) {
  ds.validate();
  require(spec.K >= 1, "partition: K must be >= 1");
  require(spec.alpha > 0.0, "partition: alpha must be positive");
  if (spec.K > ds.size())
    throw ContractError("partition: K=" + std::to_string(spec.K) + " exceeds dataset size " +
                        std::to_string(ds.size()));

  std::vector<ClientShard> shards(spec.K);
  for (std::size_t k = 0; k < spec.K; ++k) shards[k].client_id = k;

  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

  Rng rng(derive_seed(spec.seed, Stream::partition));
  for (auto& rows : by_class) {
    if (rows.empty()) continue;
    rng.shuffle(rows.begin(), rows.end());
    std::vector<double> shares(spec.K);
    double sum = 0.0;
    do {
      sum = 0.0;
      for (double& s : shares) {
        s = rng.gamma(spec.alpha);
        sum += s;
      }
    } while (!(sum > 0.0) || !std::isfinite(sum));
    for (double& s : shares) s /= sum;
    const auto counts = largest_remainder(shares, rows.size());
    std::size_t pos = 0;
    for (std::size_t k = 0; k < spec.K; ++k)
      for (std::size_t c = 0; c < counts[k]; ++c) shards[k].indices.push_back(rows[pos++]);
  }

  for (auto& shard : shards) {
    if (!shard.indices.empty()) continue;
    auto donor = std::max_element(shards.begin(), shards.end(),
                                  [](const ClientShard& a, const ClientShard& b) { return a.n_k() < b.n_k(); });
    shard.indices.push_back(donor->indices.back());
    donor->indices.pop_back();
  }
  for (auto& shard : shards) std::sort(shard.indices.begin(), shard.indices.end());
  return shards;
}

/// Shard rows split into ceil(n_k / B) batches after a seeded shuffle.
inline std::vector<std::vector<std::size_t>> batch_indices(const ClientShard& shard, std::size_t B,
                                                           std::uint64_t epoch_seed) {
  require(B >= 1, "batches: B must be >= 1");
  std::vector<std::size_t> order = shard.indices;
  Rng rng(epoch_seed);
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += B) {
    const std::size_t stop = std::min(order.size(), start + B);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return out;
}

inline std::vector<Batch> batches(const ClientShard& shard, const Dataset& ds, std::size_t B, std::uint64_t epoch_seed) {
  std::vector<Batch> out;
  for (const auto& rows : batch_indices(shard, B, epoch_seed)) out.push_back(ds.gather(rows));
  return out;
}

/// Gaussian class clusters: class c has mean 3 * (e_c - 1/C) / |e_c - 1/C| on
/// the first C coordinates (a regular simplex of radius 3) and isotropic noise
/// of standard deviation `noise`. Labels cycle 0..C-1 so classes are balanced.
inline Dataset make_synthetic(std::size_t num_classes, std::size_t dim, std::size_t n, std::uint64_t seed,
                              double noise = 1.0) {
  require(num_classes >= 2, "make_synthetic: need at least 2 classes");
  require(dim >= num_classes, "make_synthetic: dim must be >= num_classes");
  require(n >= 1, "make_synthetic: n must be positive");
  require(noise >= 0.0, "make_synthetic: noise must be non-negative");
  const double C = static_cast<double>(num_classes);
  const double vertex_norm = std::sqrt((C - 1.0) / C);
  Dataset ds;
  ds.num_classes = num_classes;
  ds.features = Matrix(n, dim);
  ds.labels.resize(n);
  Rng rng(seed);
  for (std::size_t r = 0; r < n; ++r) {
    const auto c = r % num_classes;
    ds.labels[r] = static_cast<int>(c);
    auto row = ds.features.row(r);
    for (std::size_t j = 0; j < dim; ++j) {
      double mean = 0.0;
      if (j < num_classes) mean = 3.0 * ((j == c ? 1.0 : 0.0) - 1.0 / C) / vertex_norm;
      row[j] = mean + noise * rng.normal();
    }
  }
  return ds;
}

/// Seeded subset of `count` rows (all rows if count >= n), in ascending row order.
inline Dataset subset(const Dataset& ds, std::size_t count, std::uint64_t seed) {
  if (count >= ds.size()) return ds;
  std::vector<std::size_t> rows(ds.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(rows.begin(), rows.end());
  rows.resize(count);
  std::sort(rows.begin(), rows.end());
  const Batch b = ds.gather(rows);
  return Dataset{b.features, b.labels, ds.num_classes};
}

// ---------------------------------------------------------------------------
// IDX files (MNIST): big-endian u32 magic, u32 dims, then unsigned bytes.

class IdxError : public std::runtime_error {
 public:
  enum class Kind { open_failed, bad_magic, truncated, count_mismatch, bad_label };
  IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::open_failed, "cannot open IDX file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t off, const std::filesystem::path& path) {
  if (buf.size() < off + 4) throw IdxError(IdxError::Kind::truncated, "truncated IDX header in " + path.string());
  return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) | (std::uint32_t{buf[off + 2]} << 8) |
         std::uint32_t{buf[off + 3]};
}

inline void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

}  // namespace detail

struct IdxHeader {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
};

/// Reads only the header (magic and dimensions).
inline IdxHeader read_idx_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::open_failed, "cannot open IDX file " + path.string());
  std::vector<unsigned char> head(16);
  in.read(reinterpret_cast<char*>(head.data()), 16);
  head.resize(static_cast<std::size_t>(in.gcount()));
  IdxHeader h;
  h.magic = detail::read_be32(head, 0, path);
  const std::size_t ndims = h.magic & 0xFF;
  for (std::size_t i = 0; i < ndims && i < 3; ++i) h.dims.push_back(detail::read_be32(head, 4 + 4 * i, path));
  return h;
}

/// Image file -> count x (rows*cols) matrix with pixels scaled to [0, 1].
inline Matrix load_idx_images(const std::filesystem::path& path) {
  const auto buf = detail::read_file(path);
  const std::uint32_t magic = detail::read_be32(buf, 0, path);
  if (magic != kIdxImageMagic)
    throw IdxError(IdxError::Kind::bad_magic, "bad IDX image magic in " + path.string());
  const std::size_t count = detail::read_be32(buf, 4, path);
  const std::size_t rows = detail::read_be32(buf, 8, path);
  const std::size_t cols = detail::read_be32(buf, 12, path);
  const std::size_t pixels = rows * cols;
  if (buf.size() < 16 + count * pixels)
    throw IdxError(IdxError::Kind::truncated, "truncated IDX image data in " + path.string());
  Matrix m(count, pixels);
  for (std::size_t i = 0; i < count * pixels; ++i) m.data[i] = static_cast<double>(buf[16 + i]) / 255.0;
  return m;
}

inline std::vector<int> load_idx_labels(const std::filesystem::path& path) {
  const auto buf = detail::read_file(path);
  const std::uint32_t magic = detail::read_be32(buf, 0, path);
  if (magic != kIdxLabelMagic)
    throw IdxError(IdxError::Kind::bad_magic, "bad IDX label magic in " + path.string());
  const std::size_t count = detail::read_be32(buf, 4, path);
  if (buf.size() < 8 + count) throw IdxError(IdxError::Kind::truncated, "truncated IDX label data in " + path.string());
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (buf[8 + i] > 9) throw IdxError(IdxError::Kind::bad_label, "IDX label outside 0-9 in " + path.string());
    labels[i] = buf[8 + i];
  }
  return labels;
}

/// Images + labels as a 10-class dataset.
inline Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels) {
  Dataset ds;
  ds.features = load_idx_images(images);
  ds.labels = load_idx_labels(labels);
  ds.num_classes = 10;
  if (ds.features.rows != ds.labels.size())
    throw IdxError(IdxError::Kind::count_mismatch, "image count " + std::to_string(ds.features.rows) +
                                                       " != label count " + std::to_string(ds.labels.size()));
  return ds;
}

/// Writes pixels in [0,1] back as bytes (round(255 * v)).
inline void write_idx_images(const std::filesystem::path& path, const Matrix& m, std::uint32_t rows, std::uint32_t cols) {
  require(static_cast<std::size_t>(rows) * cols == m.cols, "write_idx_images: rows*cols != feature width");
  std::ofstream out(path, std::ios::binary);
  detail::put_be32(out, kIdxImageMagic);
  detail::put_be32(out, static_cast<std::uint32_t>(m.rows));
  detail::put_be32(out, rows);
  detail::put_be32(out, cols);
  for (double v : m.data) out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
}

inline void write_idx_labels(const std::filesystem::path& path, const std::vector<int>& labels) {
  std::ofstream out(path, std::ios::binary);
  detail::put_be32(out, kIdxLabelMagic);
  detail::put_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int y : labels) out.put(static_cast<char>(y));
}

}  // namespace fedrough
