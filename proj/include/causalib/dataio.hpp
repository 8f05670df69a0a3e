#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include <zlib.h>

#include "causalib/errors.hpp"
#include "causalib/rng.hpp"
#include "causalib/tensor.hpp"

namespace causalib {

// Dataset ingestion: IDX image/label files (MNIST, FashionMNIST) and
// CIFAR-10 binary batches. Pixels are scaled by 1/255 into [0,1] and never
// re-centered, so attack budgets and [0,1] clipping share the pixel scale.
// Gzip-compressed inputs are decompressed transparently.

struct LabeledDataset {
  Tensor images;            // (N, D), values in [0,1]
  std::vector<int> labels;  // length N, values in [0, class_count)
  int class_count = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return images.shape[1]; }

  void validate() const {
    if (labels.empty()) throw FormatError("dataset: empty (N must be > 0)");
    if (images.shape.size() != 2 || images.shape[0] != labels.size())
      throw ConsistencyError("dataset: image/label count mismatch");
    for (int y : labels)
      if (y < 0 || y >= class_count)
        throw ConsistencyError("dataset: label " + std::to_string(y) + " outside [0," +
                               std::to_string(class_count) + ")");
    for (double v : images.data)
      if (!(v >= 0.0 && v <= 1.0))
        throw NumericError("dataset: pixel outside [0,1]");
  }
};

using Bytes = std::vector<std::uint8_t>;

inline Bytes read_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open " + path);
  std::fseek(f, 0, SEEK_END);
  long n = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  Bytes buf(static_cast<std::size_t>(n));
  std::size_t got = n > 0 ? std::fread(buf.data(), 1, buf.size(), f) : 0;
  std::fclose(f);
  if (got != buf.size()) throw IoError("short read on " + path);
  return buf;
}

inline bool is_gzip(const Bytes& b) { return b.size() >= 2 && b[0] == 0x1f && b[1] == 0x8b; }

inline Bytes gunzip(const Bytes& in) {
  z_stream zs;
  std::memset(&zs, 0, sizeof(zs));
  if (inflateInit2(&zs, 15 + 16) != Z_OK) throw IoError("inflateInit2 failed");
  Bytes out;
  out.resize(std::max<std::size_t>(in.size() * 4, 1 << 16));
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  std::size_t written = 0;
  int rc;
  do {
    if (written == out.size()) out.resize(out.size() * 2);
    zs.next_out = out.data() + written;
    zs.avail_out = static_cast<uInt>(out.size() - written);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw FormatError("gzip: corrupt stream (zlib rc " + std::to_string(rc) + ")");
    }
    written = out.size() - zs.avail_out;
  } while (rc != Z_STREAM_END);
  inflateEnd(&zs);
  out.resize(written);
  return out;
}

inline Bytes maybe_gunzip(Bytes b) { return is_gzip(b) ? gunzip(b) : std::move(b); }

namespace detail {
inline std::uint32_t be32(const Bytes& b, std::size_t off) {
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}
inline void put_be32(Bytes& b, std::uint32_t v) {
  b.push_back(std::uint8_t(v >> 24));
  b.push_back(std::uint8_t(v >> 16));
  b.push_back(std::uint8_t(v >> 8));
  b.push_back(std::uint8_t(v));
}
inline int infer_class_count(const std::vector<int>& labels) {
  int c = 0;
  for (int y : labels) c = std::max(c, y + 1);
  return c;
}
}  // namespace detail

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Parse an IDX image file + IDX label file pair (gzip accepted).
inline LabeledDataset parse_idx(const Bytes& image_bytes_in, const Bytes& label_bytes_in) {
  Bytes ib = maybe_gunzip(image_bytes_in);
  Bytes lb = maybe_gunzip(label_bytes_in);
  if (ib.size() < 16) throw LengthError("idx images: header truncated");
  if (lb.size() < 8) throw LengthError("idx labels: header truncated");

  std::uint32_t im = detail::be32(ib, 0);
  if (im != kIdxImageMagic)
    throw FormatError("idx images: expected magic 0x00000803, found 0x" + [&] {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%08x", im);
      return std::string(buf);
    }());
  std::uint32_t lm = detail::be32(lb, 0);
  if (lm != kIdxLabelMagic)
    throw FormatError("idx labels: expected magic 0x00000801, found 0x" + [&] {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%08x", lm);
      return std::string(buf);
    }());

  std::size_t n = detail::be32(ib, 4);
  std::size_t rows = detail::be32(ib, 8);
  std::size_t cols = detail::be32(ib, 12);
  std::size_t nl = detail::be32(lb, 4);
  if (n != nl)
    throw ConsistencyError("idx: image count " + std::to_string(n) + " != label count " +
                           std::to_string(nl));
  if (n == 0) throw FormatError("idx: empty dataset (N must be > 0)");

  const std::size_t d = rows * cols;
  if (ib.size() < 16 + n * d) throw LengthError("idx images: payload truncated");
  if (lb.size() < 8 + n) throw LengthError("idx labels: payload truncated");

  LabeledDataset ds;
  ds.images = Tensor::zeros({n, d});
  for (std::size_t i = 0; i < n * d; ++i) ds.images.data[i] = ib[16 + i] / 255.0;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = lb[8 + i];
  ds.class_count = detail::infer_class_count(ds.labels);
  ds.validate();
  return ds;
}

/// Re-serialize to IDX bytes. Pixels are recovered as round(p*255); exact for
/// anything produced by parse_idx since k/255 -> k survives the round trip.
inline std::pair<Bytes, Bytes> serialize_idx(const LabeledDataset& ds, std::size_t rows,
                                             std::size_t cols) {
  if (rows * cols != ds.dim()) throw ContractError("serialize_idx: rows*cols != image dim");
  Bytes ib, lb;
  detail::put_be32(ib, kIdxImageMagic);
  detail::put_be32(ib, static_cast<std::uint32_t>(ds.size()));
  detail::put_be32(ib, static_cast<std::uint32_t>(rows));
  detail::put_be32(ib, static_cast<std::uint32_t>(cols));
  for (double v : ds.images.data) ib.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
  detail::put_be32(lb, kIdxLabelMagic);
  detail::put_be32(lb, static_cast<std::uint32_t>(ds.size()));
  for (int y : ds.labels) lb.push_back(static_cast<std::uint8_t>(y));
  return {std::move(ib), std::move(lb)};
}

constexpr std::size_t kCifarRecord = 3073;  // 1 label byte + 3072 channel-major pixel bytes

/// Parse one or more concatenated CIFAR-10 binary batches (gzip accepted).
/// The 3072 pixel bytes per record stay in channel-major order (R plane,
/// G plane, B plane), flattened into one row of 3072 features.
inline LabeledDataset parse_cifar10(const Bytes& batch_bytes_in) {
  Bytes b = maybe_gunzip(batch_bytes_in);
  if (b.empty() || b.size() % kCifarRecord != 0)
    throw FormatError("cifar10: length " + std::to_string(b.size()) +
                      " is not a positive multiple of 3073");
  const std::size_t n = b.size() / kCifarRecord;
  LabeledDataset ds;
  ds.images = Tensor::zeros({n, kCifarRecord - 1});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = b.data() + i * kCifarRecord;
    ds.labels[i] = rec[0];
    double* row = ds.images.data.data() + i * (kCifarRecord - 1);
    for (std::size_t j = 0; j < kCifarRecord - 1; ++j) row[j] = rec[1 + j] / 255.0;
  }
  ds.class_count = detail::infer_class_count(ds.labels);
  ds.validate();
  return ds;
}

/// Seeded epoch ordering: one permutation of 0..N-1 drawn by Fisher-Yates
/// over MT19937-64, fully determined by the seed.
struct BatchPlan {
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;
  std::vector<std::size_t> order;
};

inline BatchPlan make_plan(std::uint64_t seed, std::size_t n, std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("make_plan: batch_size must be positive");
  if (batch_size > n) throw ContractError("make_plan: batch_size exceeds dataset size");
  Rng rng(seed);
  return BatchPlan{seed, batch_size, random_permutation(n, rng)};
}

struct Batch {
  Tensor images;  // (B, D)
  std::vector<int> labels;
};

inline Batch gather(const LabeledDataset& ds, const std::vector<std::size_t>& order,
                    std::size_t begin, std::size_t count) {
  const std::size_t d = ds.dim();
  Batch b;
  b.images = Tensor::zeros({count, d});
  b.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t src = order[begin + i];
    std::memcpy(b.images.data.data() + i * d, ds.images.data.data() + src * d,
                d * sizeof(double));
    b.labels[i] = ds.labels[src];
  }
  return b;
}

/// Lazy batch sequence over a plan. Concatenating the batch indices
/// reproduces plan.order; a final short batch is emitted if N % B != 0.
class BatchSequence {
 public:
  BatchSequence(const LabeledDataset& ds, BatchPlan plan)
      : ds_(&ds), plan_(std::move(plan)) {
    if (plan_.batch_size == 0) throw ContractError("make_batches: batch_size must be positive");
  }

  std::size_t size() const {
    return (plan_.order.size() + plan_.batch_size - 1) / plan_.batch_size;
  }

  Batch operator[](std::size_t i) const {
    std::size_t begin = i * plan_.batch_size;
    std::size_t count = std::min(plan_.batch_size, plan_.order.size() - begin);
    return gather(*ds_, plan_.order, begin, count);
  }

  const BatchPlan& plan() const { return plan_; }

 private:
  const LabeledDataset* ds_;
  BatchPlan plan_;
};

inline BatchSequence make_batches(const LabeledDataset& ds, BatchPlan plan) {
  return BatchSequence(ds, std::move(plan));
}

/// Deterministic prefix subset (used for desk-scale runs; 0 keeps everything).
inline LabeledDataset take_prefix(const LabeledDataset& ds, std::size_t limit) {
  if (limit == 0 || limit >= ds.size()) return ds;
  LabeledDataset out;
  const std::size_t d = ds.dim();
  out.images = Tensor::zeros({limit, d});
  std::memcpy(out.images.data.data(), ds.images.data.data(), limit * d * sizeof(double));
  out.labels.assign(ds.labels.begin(), ds.labels.begin() + static_cast<long>(limit));
  out.class_count = ds.class_count;
  return out;
}

inline LabeledDataset load_idx_dataset(const std::string& images_path,
                                       const std::string& labels_path) {
  return parse_idx(read_file(images_path), read_file(labels_path));
}

}  // namespace causalib
