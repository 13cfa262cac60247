#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "randlr/objectives.hpp"

namespace randlr {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Unsigned-byte IDX array: big-endian header (magic, then one u32 per
/// dimension) followed by the row-major payload.
struct IdxArray {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;
};

/// Parses an in-memory IDX buffer. Only the unsigned-byte element type (0x08)
/// is accepted. Throws ParseError on a bad magic number or truncated payload.
IdxArray parse_idx(std::span<const std::uint8_t> bytes);

/// Reads a whole file; gzip-compressed files are inflated transparently.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Pairs an images file (N x rows x cols) with a labels file (N); pixel values
/// are scaled to [0, 1]. Throws ParseError on count mismatches.
Dataset read_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels);

struct MnistSplit {
  Dataset train;
  Dataset test;
};

/// Loads `n_train` training and `n_test` test images from an MNIST directory
/// holding the standard train-*/t10k-* files (optionally .gz). The subset is
/// stratified by class and deterministic given the seed.
MnistSplit load_mnist_split(const std::filesystem::path& dir, Index n_train, Index n_test, std::uint64_t seed);

/// The perceptron objective over a stratified MNIST subset.
PerceptronClassifier load_mnist_subset(const std::filesystem::path& dir, Index n_train, Index n_test,
                                       std::uint64_t seed);

/// Picks `count` indices from `labels`, allocating to classes in proportion to
/// their frequency (largest remainder) and shuffling within each class.
/// Result is sorted ascending.
std::vector<Index> stratified_subset(std::span<const std::uint8_t> labels, Index count, std::uint64_t seed);

}  // namespace randlr
