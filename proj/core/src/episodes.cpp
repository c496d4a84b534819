#include "fw/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace fw {

namespace {

std::vector<float> rotate90(const std::vector<float>& img, std::size_t n) {
  // one quarter turn of a square image
  std::vector<float> out(img.size());
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) out[x * n + (n - 1 - y)] = img[y * n + x];
  return out;
}

}  // namespace

Dataset Dataset::from_tensors(Shape input_shape, std::vector<std::vector<Tensor>> classes,
                              std::vector<std::string> names) {
  if (classes.size() != names.size()) {
    throw ContractError("dataset: class list and name list sizes differ");
  }
  for (std::size_t c = 0; c < classes.size(); ++c) {
    for (const auto& t : classes[c]) {
      if (!t.defined() || t.shape() != input_shape) {
        throw ContractError("dataset: example in class " + std::to_string(c) +
                            " does not match input shape " + shape_str(input_shape));
      }
    }
  }
  Dataset d;
  d.input_shape_ = std::move(input_shape);
  d.tensors_ = std::move(classes);
  d.names_ = std::move(names);
  return d;
}

Dataset Dataset::from_images(std::size_t h, std::size_t w,
                             std::vector<std::vector<std::vector<float>>> base_images,
                             std::vector<std::pair<std::size_t, int>> classes,
                             std::vector<std::string> names) {
  if (classes.size() != names.size()) {
    throw ContractError("dataset: class list and name list sizes differ");
  }
  if (h != w) {
    // quarter-turn augmentation assumes square images
    throw ContractError("dataset: image backing requires square images, got " +
                        std::to_string(h) + "x" + std::to_string(w));
  }
  for (const auto& cls : base_images) {
    for (const auto& img : cls) {
      if (img.size() != h * w) {
        throw ContractError("dataset: image size does not match " + std::to_string(h) + "x" +
                            std::to_string(w));
      }
    }
  }
  for (const auto& [base, rot] : classes) {
    if (base >= base_images.size() || rot < 0 || rot > 3) {
      throw ContractError("dataset: class refers to missing base image set");
    }
  }
  Dataset d;
  d.input_shape_ = Shape{1, h, w};
  d.image_backed_ = true;
  d.img_h_ = h;
  d.img_w_ = w;
  d.base_images_ = std::move(base_images);
  d.image_classes_ = std::move(classes);
  d.names_ = std::move(names);
  return d;
}

std::size_t Dataset::examples_in(std::size_t c) const {
  if (c >= num_classes()) {
    throw IndexError("dataset: class " + std::to_string(c) + " out of range");
  }
  return image_backed_ ? base_images_[image_classes_[c].first].size() : tensors_[c].size();
}

const std::string& Dataset::class_name(std::size_t c) const {
  if (c >= num_classes()) {
    throw IndexError("dataset: class " + std::to_string(c) + " out of range");
  }
  return names_[c];
}

Tensor Dataset::example(std::size_t c, std::size_t e) const {
  if (c >= num_classes()) {
    throw IndexError("dataset: class " + std::to_string(c) + " out of range");
  }
  if (e >= examples_in(c)) {
    throw IndexError("dataset: example " + std::to_string(e) + " out of range for class " +
                     std::to_string(c));
  }
  if (!image_backed_) return tensors_[c][e];
  const auto& [base, rot] = image_classes_[c];
  std::vector<float> img = base_images_[base][e];
  for (int r = 0; r < rot; ++r) img = rotate90(img, img_h_);
  Tensor t(Shape{1, img_h_, img_w_});
  for (std::size_t i = 0; i < img.size(); ++i) t[i] = static_cast<double>(img[i]);
  return t;
}

ClassSplit split_classes(std::size_t n_classes, std::size_t n_train, std::size_t n_val,
                         std::size_t n_test, std::uint64_t seed) {
  if (n_train + n_val + n_test > n_classes) {
    throw SamplingError("split: " + std::to_string(n_train + n_val + n_test) +
                        " classes requested but the dataset has " +
                        std::to_string(n_classes));
  }
  std::vector<std::size_t> ids(n_classes);
  for (std::size_t i = 0; i < n_classes; ++i) ids[i] = i;
  RandomStream rs(derive_seed(seed, "class_split"));
  rs.shuffle(ids);
  ClassSplit s;
  s.train.assign(ids.begin(), ids.begin() + n_train);
  s.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  s.test.assign(ids.begin() + n_train + n_val, ids.begin() + n_train + n_val + n_test);
  return s;
}

Episode sample_episode(const Dataset& data, const std::vector<std::size_t>& classes,
                       int n_way, int k_shot, int n_query, RandomStream& rs) {
  if (n_way < 2 || k_shot < 1 || n_query < 0) {
    throw ContractError("sample_episode: need n_way >= 2, k_shot >= 1, n_query >= 0");
  }
  const auto nway = static_cast<std::size_t>(n_way);
  const auto need = static_cast<std::size_t>(k_shot) + static_cast<std::size_t>(n_query);
  if (classes.size() < nway) {
    throw SamplingError("sample_episode: " + std::to_string(n_way) +
                        "-way episode from a split of only " +
                        std::to_string(classes.size()) + " classes");
  }

  // Draw order is fixed: first the classes (a partial shuffle, which also
  // fixes the label permutation), then for each local label in turn the
  // example indices. Anything else would silently change downstream draws.
  std::vector<std::size_t> pool(classes);
  for (std::size_t i = 0; i < nway; ++i) {
    std::size_t j = i + rs.index(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(nway);

  Episode ep;
  ep.class_map = pool;
  ep.description.reserve(nway * static_cast<std::size_t>(k_shot));
  ep.queries.reserve(nway * static_cast<std::size_t>(n_query));
  for (std::size_t l = 0; l < nway; ++l) {
    const std::size_t cls = pool[l];
    const std::size_t avail = data.examples_in(cls);
    if (avail < need) {
      throw SamplingError("sample_episode: class " + data.class_name(cls) + " has " +
                          std::to_string(avail) + " examples, episode needs " +
                          std::to_string(need));
    }
    std::vector<std::size_t> idx(avail);
    for (std::size_t i = 0; i < avail; ++i) idx[i] = i;
    for (std::size_t i = 0; i < need; ++i) {
      std::size_t j = i + rs.index(avail - i);
      std::swap(idx[i], idx[j]);
    }
    for (int s = 0; s < k_shot; ++s) {
      ep.description.emplace_back(data.example(cls, idx[static_cast<std::size_t>(s)]),
                                  static_cast<int>(l));
    }
    for (int q = 0; q < n_query; ++q) {
      ep.queries.emplace_back(
          data.example(cls, idx[static_cast<std::size_t>(k_shot + q)]),
          static_cast<int>(l));
    }
  }
  return ep;
}

Dataset make_orthogonal_prototypes(std::size_t n_classes, std::size_t dim,
                                   std::size_t per_class, double sigma, double scale,
                                   std::uint64_t seed) {
  if (n_classes == 0 || per_class == 0) {
    throw ContractError("orthogonal prototypes: empty dataset requested");
  }
  if (n_classes > dim) {
    throw ContractError("orthogonal prototypes: " + std::to_string(n_classes) +
                        " classes need dimension >= " + std::to_string(n_classes) +
                        ", got " + std::to_string(dim));
  }
  if (sigma < 0.0 || scale <= 0.0) {
    throw ContractError("orthogonal prototypes: need sigma >= 0 and scale > 0");
  }
  RandomStream rs(derive_seed(seed, "synth_orthogonal"));
  std::vector<std::vector<Tensor>> classes(n_classes);
  std::vector<std::string> names(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    names[c] = "proto_" + std::to_string(c);
    classes[c].reserve(per_class);
    for (std::size_t e = 0; e < per_class; ++e) {
      Tensor t(Shape{dim});
      for (std::size_t j = 0; j < dim; ++j) t[j] = sigma > 0.0 ? rs.normal(0.0, sigma) : 0.0;
      t[c] += scale;
      classes[c].push_back(std::move(t));
    }
  }
  return Dataset::from_tensors(Shape{dim}, std::move(classes), std::move(names));
}

Dataset make_cluster_prototypes(std::size_t n_classes, std::size_t dim,
                                std::size_t per_class, double separation, double sigma,
                                std::uint64_t seed) {
  if (n_classes == 0 || per_class == 0 || dim == 0) {
    throw ContractError("cluster prototypes: empty dataset requested");
  }
  if (separation <= 0.0 || sigma < 0.0) {
    throw ContractError("cluster prototypes: need separation > 0 and sigma >= 0");
  }
  RandomStream rs(derive_seed(seed, "synth_cluster"));
  std::vector<std::vector<double>> means;
  means.reserve(n_classes);
  const std::size_t max_tries = 10000;
  for (std::size_t c = 0; c < n_classes; ++c) {
    bool placed = false;
    for (std::size_t t = 0; t < max_tries && !placed; ++t) {
      std::vector<double> m(dim);
      double n2 = 0.0;
      for (auto& v : m) {
        v = rs.normal();
        n2 += v * v;
      }
      if (n2 == 0.0) continue;
      const double inv = 1.0 / std::sqrt(n2);
      for (auto& v : m) v *= inv;
      placed = true;
      for (const auto& prev : means) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < dim; ++j) d2 += (m[j] - prev[j]) * (m[j] - prev[j]);
        if (d2 < separation * separation) {
          placed = false;
          break;
        }
      }
      if (placed) means.push_back(std::move(m));
    }
    if (!placed) {
      throw SamplingError("cluster prototypes: could not place " + std::to_string(n_classes) +
                          " centers at separation " + std::to_string(separation) +
                          " in dimension " + std::to_string(dim));
    }
  }
  std::vector<std::vector<Tensor>> classes(n_classes);
  std::vector<std::string> names(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    names[c] = "cluster_" + std::to_string(c);
    classes[c].reserve(per_class);
    for (std::size_t e = 0; e < per_class; ++e) {
      Tensor t(Shape{dim});
      for (std::size_t j = 0; j < dim; ++j)
        t[j] = means[c][j] + (sigma > 0.0 ? rs.normal(0.0, sigma) : 0.0);
      classes[c].push_back(std::move(t));
    }
  }
  return Dataset::from_tensors(Shape{dim}, std::move(classes), std::move(names));
}

namespace {

constexpr char kDatasetMagic[5] = {'F', 'W', 'D', 'S', '1'};

void write_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_dataset(const Dataset& data, const std::string& path) {
  if (data.input_shape().size() != 1) {
    throw ContractError("save_dataset: only rank-1 vector datasets serialize, input is " +
                        shape_str(data.input_shape()));
  }
  const std::size_t n = data.num_classes();
  if (n == 0) throw ContractError("save_dataset: empty dataset");
  const std::size_t per = data.examples_in(0);
  for (std::size_t c = 0; c < n; ++c) {
    if (data.examples_in(c) != per) {
      throw ContractError("save_dataset: class " + std::to_string(c) +
                          " breaks the uniform examples-per-class layout");
    }
  }
  const std::size_t dim = data.input_shape()[0];
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("save_dataset: cannot open " + path);
  f.write(kDatasetMagic, sizeof kDatasetMagic);
  write_u32(f, static_cast<std::uint32_t>(n));
  write_u32(f, static_cast<std::uint32_t>(dim));
  write_u32(f, static_cast<std::uint32_t>(per));
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t e = 0; e < per; ++e) {
      Tensor t = data.example(c, e);
      f.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(sizeof(double) * dim));
    }
  }
  if (!f) throw IoError("save_dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_dataset: cannot open " + path);
  char magic[5];
  f.read(magic, 5);
  if (!f || std::memcmp(magic, kDatasetMagic, 5) != 0) {
    throw IntegrityError("load_dataset: " + path + " is not a serialized vector dataset");
  }
  const std::uint32_t n = read_u32(f);
  const std::uint32_t dim = read_u32(f);
  const std::uint32_t per = read_u32(f);
  if (!f || n == 0 || dim == 0 || per == 0 ||
      static_cast<std::uint64_t>(n) * dim * per > (1ull << 31)) {
    throw IntegrityError("load_dataset: implausible header in " + path);
  }
  std::vector<std::vector<Tensor>> classes(n);
  std::vector<std::string> names(n);
  for (std::uint32_t c = 0; c < n; ++c) {
    names[c] = "class_" + std::to_string(c);
    classes[c].reserve(per);
    for (std::uint32_t e = 0; e < per; ++e) {
      Tensor t(Shape{dim});
      f.read(reinterpret_cast<char*>(t.data()),
             static_cast<std::streamsize>(sizeof(double) * dim));
      if (!f) throw IntegrityError("load_dataset: " + path + " is truncated");
      classes[c].push_back(std::move(t));
    }
  }
  return Dataset::from_tensors(Shape{dim}, std::move(classes), std::move(names));
}

}  // namespace fw
