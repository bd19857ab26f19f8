#pragma once

// Dataset ingestion and the synthetic paired corpus used for desk-scale
// training and analysis runs.

#include <string>
#include <vector>

#include "msfs/image.hpp"

namespace msfs {

struct ImagePair {
  std::string name;
  Image blurry;
  Image sharp;
};

struct PairedDataset {
  std::vector<ImagePair> pairs;

  bool empty() const { return pairs.empty(); }
  std::size_t size() const { return pairs.size(); }
};

// Pairs files by sorted filename. Every file must have a partner with the
// same name in the other directory, decode successfully, and have spatial
// extents divisible by 4; violations raise IngestError naming the file.
PairedDataset ingest_pairs(const std::string& blurry_dir, const std::string& sharp_dir);

// n procedurally generated sharp images (gradients, rectangles, edges)
// paired with Gaussian-blurred counterparts (sigma drawn from [1,3]).
// Deterministic under seed. `size` must be divisible by 4.
PairedDataset synth_corpus(int n, int size, unsigned seed);

// Writes <dir>/blurry/NNN.ppm and <dir>/sharp/NNN.ppm.
void write_corpus(const PairedDataset& ds, const std::string& dir);

}  // namespace msfs
