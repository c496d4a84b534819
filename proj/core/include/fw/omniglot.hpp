#pragma once

#include <cstdint>
#include <string>

#include "fw/episodes.hpp"

namespace fw {

struct OmniglotOptions {
  std::size_t resize = 28;         // output side length
  bool augment_rotations = true;   // each 90-degree turn of a training class
                                   // becomes its own class
  std::uint64_t split_seed = 0;    // class shuffle before dealing splits
  std::size_t train_classes = 1200;
  std::size_t val_classes = 0;     // dealt after train, before test
  // every remaining character class lands in the test split
};

struct OmniglotData {
  Dataset data;
  ClassSplit split;  // indices into data, not into raw character folders
};

// Loads a handwritten-character corpus laid out as
// <root>/<alphabet>/<character>/<image>.png with exactly 20 images per
// character (an extra directory level above the alphabets is tolerated).
// Images decode to grayscale in [0,1] and are box-filtered down to
// resize x resize. Character classes are shuffled by split_seed and dealt
// into train/val/test; training classes are then rotation-augmented when
// enabled. Malformed layouts, unreadable images, and wrong image counts
// throw IngestError naming the offending path.
OmniglotData load_omniglot(const std::string& root, const OmniglotOptions& opt);

}  // namespace fw
