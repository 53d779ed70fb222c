#pragma once

#include <vector>

#include "sskd/data.hpp"

namespace sskd::data {

// Procedural 10-class shape dataset used when no CIFAR files are available.
// Classes come in five visually related pairs (disk/ring, square/frame,
// triangle/diamond, plus/cross, stripes/checker) whose colour families are
// shared within a pair, so a trained teacher carries between-class structure.
inline constexpr int kSyntheticClasses = 10;
inline const std::vector<double> kSyntheticMean = {0.4950, 0.4944, 0.4932};
inline const std::vector<double> kSyntheticStd = {0.2109, 0.2112, 0.2090};

// Item i has label i % 10 and is rendered from its own seed stream, so any
// prefix of a larger split is identical to the smaller split.
Dataset generate_synthetic(const DatasetSpec& spec, Split split);

}  // namespace sskd::data
