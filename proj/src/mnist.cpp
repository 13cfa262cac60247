#include "randlr/mnist.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include <zlib.h>

#include "randlr/error.hpp"

namespace randlr {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::filesystem::path resolve(const std::filesystem::path& dir, const std::string& stem) {
  const auto plain = dir / stem;
  if (std::filesystem::exists(plain)) return plain;
  const auto gz = dir / (stem + ".gz");
  if (std::filesystem::exists(gz)) return gz;
  throw IoError("MNIST file " + plain.string() + "[.gz] not found");
}

}  // namespace

IdxArray parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw ParseError("IDX buffer shorter than its magic number");
  IdxArray out;
  out.magic = read_be32(bytes, 0);
  if ((out.magic >> 16) != 0) throw ParseError("IDX magic must start with two zero bytes");
  const std::uint32_t type = (out.magic >> 8) & 0xff;
  const std::uint32_t ndims = out.magic & 0xff;
  if (type != 0x08) throw ParseError("unsupported IDX element type (only unsigned byte)");
  if (ndims == 0) throw ParseError("IDX array without dimensions");
  const std::size_t header = 4 + 4 * std::size_t{ndims};
  if (bytes.size() < header) throw ParseError("IDX header truncated");
  std::size_t count = 1;
  for (std::uint32_t d = 0; d < ndims; ++d) {
    out.dims.push_back(read_be32(bytes, 4 + 4 * d));
    count *= out.dims.back();
  }
  if (bytes.size() - header < count) {
    throw ParseError("IDX payload truncated: expected " + std::to_string(count) + " bytes, found " +
                     std::to_string(bytes.size() - header));
  }
  out.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header),
                  bytes.begin() + static_cast<std::ptrdiff_t>(header + count));
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  gzFile file = gzopen(path.string().c_str(), "rb");
  if (!file) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes;
  std::uint8_t chunk[1 << 16];
  int got;
  while ((got = gzread(file, chunk, sizeof chunk)) > 0) bytes.insert(bytes.end(), chunk, chunk + got);
  int err = Z_OK;
  const char* msg = gzerror(file, &err);
  gzclose(file);
  if (got < 0 || (err != Z_OK && err != Z_STREAM_END)) {
    throw IoError("read error in " + path.string() + ": " + (msg ? msg : "unknown"));
  }
  return bytes;
}

Dataset read_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img_bytes = read_file_bytes(images);
  const auto lbl_bytes = read_file_bytes(labels);
  const IdxArray img = parse_idx(img_bytes);
  const IdxArray lbl = parse_idx(lbl_bytes);
  if (img.magic != kIdxImagesMagic) throw ParseError(images.string() + ": not an IDX image file (magic)");
  if (lbl.magic != kIdxLabelsMagic) throw ParseError(labels.string() + ": not an IDX label file (magic)");
  if (img.dims.size() != 3) throw ParseError(images.string() + ": image array must have 3 dimensions");
  if (lbl.dims.size() != 1) throw ParseError(labels.string() + ": label array must have 1 dimension");
  if (img.dims[0] != lbl.dims[0]) {
    throw ParseError("image/label count mismatch: " + std::to_string(img.dims[0]) + " vs " +
                     std::to_string(lbl.dims[0]));
  }
  const Index n = img.dims[0];
  const Index pixels = Index{img.dims[1]} * img.dims[2];
  Dataset data;
  data.features.resize(static_cast<Eigen::Index>(pixels), static_cast<Eigen::Index>(n));
  for (Index i = 0; i < n; ++i) {
    for (Index p = 0; p < pixels; ++p) {
      data.features(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(i)) = img.data[i * pixels + p] / 255.0;
    }
  }
  data.labels = lbl.data;
  return data;
}

std::vector<Index> stratified_subset(std::span<const std::uint8_t> labels, Index count, std::uint64_t seed) {
  if (count > labels.size()) {
    throw OutOfRangeError("requested " + std::to_string(count) + " samples but only " +
                          std::to_string(labels.size()) + " are available");
  }
  std::map<std::uint8_t, std::vector<Index>> by_class;
  for (Index i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  // Largest-remainder allocation; ties go to the smaller class label.
  struct Share {
    std::uint8_t label;
    Index quota;
    double remainder;
  };
  std::vector<Share> shares;
  Index assigned = 0;
  for (const auto& [label, members] : by_class) {
    const double exact = static_cast<double>(count) * members.size() / labels.size();
    const Index quota = static_cast<Index>(exact);
    shares.push_back({label, quota, exact - quota});
    assigned += quota;
  }
  std::vector<Share*> order;
  for (auto& s : shares) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(), [](const Share* a, const Share* b) { return a->remainder > b->remainder; });
  for (Index k = 0; assigned < count; ++k, ++assigned) order[k % order.size()]->quota++;

  Rng rng(seed, 0x5eb5e7);
  std::vector<Index> picked;
  for (auto& s : shares) {
    auto members = by_class[s.label];
    rng.shuffle(members.begin(), members.end());
    picked.insert(picked.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(s.quota));
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

namespace {

Dataset take(const Dataset& src, const std::vector<Index>& idx) {
  Dataset out;
  out.features.resize(src.features.rows(), static_cast<Eigen::Index>(idx.size()));
  out.labels.resize(idx.size());
  for (Index k = 0; k < idx.size(); ++k) {
    out.features.col(static_cast<Eigen::Index>(k)) = src.features.col(static_cast<Eigen::Index>(idx[k]));
    out.labels[k] = src.labels[idx[k]];
  }
  return out;
}

}  // namespace

MnistSplit load_mnist_split(const std::filesystem::path& dir, Index n_train, Index n_test, std::uint64_t seed) {
  if (n_train == 0) throw InvalidArgument("n_train must be positive");
  const Dataset train_all =
      read_idx_dataset(resolve(dir, "train-images-idx3-ubyte"), resolve(dir, "train-labels-idx1-ubyte"));
  const Dataset test_all =
      read_idx_dataset(resolve(dir, "t10k-images-idx3-ubyte"), resolve(dir, "t10k-labels-idx1-ubyte"));
  if (n_train > train_all.size() || n_test > test_all.size()) {
    throw OutOfRangeError("requested " + std::to_string(n_train) + "/" + std::to_string(n_test) +
                          " train/test images but the files hold " + std::to_string(train_all.size()) + "/" +
                          std::to_string(test_all.size()));
  }
  MnistSplit split;
  split.train = take(train_all, stratified_subset(train_all.labels, n_train, seed));
  split.test = take(test_all, stratified_subset(test_all.labels, n_test, seed + 1));
  return split;
}

PerceptronClassifier load_mnist_subset(const std::filesystem::path& dir, Index n_train, Index n_test,
                                       std::uint64_t seed) {
  auto split = load_mnist_split(dir, n_train, n_test, seed);
  return PerceptronClassifier::mnist_model(std::move(split.train), std::move(split.test));
}

}  // namespace randlr
