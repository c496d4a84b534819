#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fw/model.hpp"
#include "fw/random.hpp"
#include "fw/tensor.hpp"

namespace fw {

// In-memory few-shot dataset: examples grouped by class. Two backings share
// one interface: synthetic data holds materialized tensors; image data holds
// compact float pixels plus a rotation tag per class, and builds the tensor
// on demand (a quarter-turn rotation of one base class is its own class).
class Dataset {
 public:
  Dataset() = default;

  static Dataset from_tensors(Shape input_shape,
                              std::vector<std::vector<Tensor>> classes,
                              std::vector<std::string> names);

  // Image backing. base_images[c][e] is a row-major h*w grayscale image in
  // [0,1]; classes are (base class, quarter turns) pairs.
  static Dataset from_images(std::size_t h, std::size_t w,
                             std::vector<std::vector<std::vector<float>>> base_images,
                             std::vector<std::pair<std::size_t, int>> classes,
                             std::vector<std::string> names);

  std::size_t num_classes() const { return names_.size(); }
  std::size_t examples_in(std::size_t c) const;
  const std::string& class_name(std::size_t c) const;
  const Shape& input_shape() const { return input_shape_; }

  // Materializes one example as a tensor (image backing: [1,h,w], rotated).
  Tensor example(std::size_t c, std::size_t e) const;

 private:
  Shape input_shape_;
  std::vector<std::string> names_;
  // tensor backing
  std::vector<std::vector<Tensor>> tensors_;
  // image backing
  bool image_backed_ = false;
  std::size_t img_h_ = 0, img_w_ = 0;
  std::vector<std::vector<std::vector<float>>> base_images_;
  std::vector<std::pair<std::size_t, int>> image_classes_;
};

// Disjoint class-id partitions of one dataset.
struct ClassSplit {
  std::vector<std::size_t> train, val, test;
};

// Shuffles [0, n_classes) with the given seed and deals the first counts
// into train / val / test.
ClassSplit split_classes(std::size_t n_classes, std::size_t n_train, std::size_t n_val,
                         std::size_t n_test, std::uint64_t seed);

// One few-shot task instance. Local labels 0..n_way-1 are a fresh random
// permutation of the chosen classes each time, so a label carries no
// information across episodes.
struct Episode {
  std::vector<LabeledExample> description;  // n_way * k_shot, class-major
  std::vector<LabeledExample> queries;      // n_way * n_query, class-major
  std::vector<std::size_t> class_map;       // local label -> dataset class id
};

// Draws n_way distinct classes from `classes`, assigns local labels by a
// random permutation, and for each class draws k_shot + n_query distinct
// examples (description and queries never overlap).
Episode sample_episode(const Dataset& data, const std::vector<std::size_t>& classes,
                       int n_way, int k_shot, int n_query, RandomStream& rs);

// Prototypes are scaled standard-basis vectors (mutually orthogonal), one
// per class; examples add isotropic Gaussian noise. With scale >> sigma a
// single stored example identifies its class almost perfectly.
Dataset make_orthogonal_prototypes(std::size_t n_classes, std::size_t dim,
                                   std::size_t per_class, double sigma, double scale,
                                   std::uint64_t seed);

// Prototypes are random unit vectors re-drawn until every pair is at least
// `separation` apart; examples add isotropic Gaussian noise of width sigma.
// Smaller separations and larger sigmas make classes genuinely confusable.
Dataset make_cluster_prototypes(std::size_t n_classes, std::size_t dim,
                                std::size_t per_class, double separation, double sigma,
                                std::uint64_t seed);

// Serialized vector dataset ("FWDS1"): little-endian u32 class count, u32
// dimension, u32 examples per class, then all examples as f64, class-major.
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace fw
