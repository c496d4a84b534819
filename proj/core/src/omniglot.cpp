#include "fw/omniglot.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <vector>

namespace fw {

namespace fs = std::filesystem;

namespace {

std::vector<float> decode_png_gray(const std::string& path, std::size_t& h, std::size_t& w) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IngestError("omniglot: cannot read image " + path + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw IngestError("omniglot: failed to decode " + path + ": " + msg);
  }
  h = image.height;
  w = image.width;
  std::vector<float> out(h * w);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(buf[i]) / 255.0f;
  return out;
}

// Box-filter downscale: every output pixel averages its (fractional) source
// footprint, so the result is independent of traversal order and platform.
std::vector<float> resize_area(const std::vector<float>& src, std::size_t hs, std::size_t ws,
                               std::size_t n) {
  if (hs == n && ws == n) return src;
  std::vector<float> dst(n * n);
  const double sy = static_cast<double>(hs) / static_cast<double>(n);
  const double sx = static_cast<double>(ws) / static_cast<double>(n);
  for (std::size_t oy = 0; oy < n; ++oy) {
    const double y0 = oy * sy, y1 = y0 + sy;
    const auto iy0 = static_cast<std::size_t>(y0);
    const auto iy1 = std::min(hs, static_cast<std::size_t>(std::ceil(y1)));
    for (std::size_t ox = 0; ox < n; ++ox) {
      const double x0 = ox * sx, x1 = x0 + sx;
      const auto ix0 = static_cast<std::size_t>(x0);
      const auto ix1 = std::min(ws, static_cast<std::size_t>(std::ceil(x1)));
      double acc = 0.0;
      for (std::size_t iy = iy0; iy < iy1; ++iy) {
        const double wy = std::min(y1, static_cast<double>(iy + 1)) -
                          std::max(y0, static_cast<double>(iy));
        if (wy <= 0.0) continue;
        for (std::size_t ix = ix0; ix < ix1; ++ix) {
          const double wx = std::min(x1, static_cast<double>(ix + 1)) -
                            std::max(x0, static_cast<double>(ix));
          if (wx <= 0.0) continue;
          acc += static_cast<double>(src[iy * ws + ix]) * wy * wx;
        }
      }
      dst[oy * n + ox] = static_cast<float>(acc / (sy * sx));
    }
  }
  return dst;
}

struct CharacterDir {
  std::string name;              // path relative to the corpus root
  std::vector<std::string> pngs; // sorted absolute file paths
};

// Finds every directory that directly holds PNG files. Handles both the
// plain <root>/<alphabet>/<character> layout and corpora that keep the
// alphabets inside one more container directory. Dotfiles are ignored;
// any other stray file inside a character directory is an error.
void scan_characters(const fs::path& root, const fs::path& dir,
                     std::vector<CharacterDir>& out) {
  std::vector<fs::path> subdirs;
  std::vector<std::string> pngs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string base = entry.path().filename().string();
    if (!base.empty() && base[0] == '.') continue;
    if (entry.is_directory()) {
      subdirs.push_back(entry.path());
    } else if (entry.is_regular_file()) {
      std::string ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      if (ext == ".png") {
        pngs.push_back(entry.path().string());
      } else if (dir != root) {
        throw IngestError("omniglot: unexpected file " + entry.path().string());
      }
    }
  }
  if (!pngs.empty()) {
    if (!subdirs.empty()) {
      throw IngestError("omniglot: " + dir.string() + " mixes images and subdirectories");
    }
    std::sort(pngs.begin(), pngs.end());
    out.push_back({fs::relative(dir, root).generic_string(), std::move(pngs)});
    return;
  }
  std::sort(subdirs.begin(), subdirs.end());
  for (const auto& sd : subdirs) scan_characters(root, sd, out);
}

}  // namespace

OmniglotData load_omniglot(const std::string& root, const OmniglotOptions& opt) {
  if (opt.resize == 0) throw ContractError("omniglot: resize must be positive");
  fs::path rootp(root);
  std::error_code ec;
  if (!fs::is_directory(rootp, ec)) {
    throw IngestError("omniglot: root is not a directory: " + root);
  }

  std::vector<CharacterDir> chars;
  scan_characters(rootp, rootp, chars);
  if (chars.empty()) {
    throw IngestError("omniglot: no character directories with images under " + root);
  }
  std::sort(chars.begin(), chars.end(),
            [](const CharacterDir& a, const CharacterDir& b) { return a.name < b.name; });
  for (const auto& c : chars) {
    if (c.pngs.size() != 20) {
      throw IngestError("omniglot: " + c.name + " has " + std::to_string(c.pngs.size()) +
                        " images, expected 20");
    }
  }

  const std::size_t total = chars.size();
  if (opt.train_classes + opt.val_classes >= total) {
    throw SamplingError("omniglot: " + std::to_string(opt.train_classes) + "+" +
                        std::to_string(opt.val_classes) +
                        " train/val classes leave no test classes out of " +
                        std::to_string(total));
  }

  // Decode everything once; rotated variants are materialized per sample.
  std::vector<std::vector<std::vector<float>>> images(total);
  for (std::size_t c = 0; c < total; ++c) {
    images[c].reserve(20);
    for (const auto& p : chars[c].pngs) {
      std::size_t h = 0, w = 0;
      std::vector<float> img = decode_png_gray(p, h, w);
      images[c].push_back(resize_area(img, h, w, opt.resize));
    }
  }

  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  RandomStream rs(derive_seed(opt.split_seed, "omniglot_split"));
  rs.shuffle(order);

  std::vector<std::pair<std::size_t, int>> classes;
  std::vector<std::string> names;
  ClassSplit split;
  static const char* rot_suffix[4] = {"", "+rot90", "+rot180", "+rot270"};
  const int train_rots = opt.augment_rotations ? 4 : 1;
  for (std::size_t i = 0; i < opt.train_classes; ++i) {
    const std::size_t base = order[i];
    for (int r = 0; r < train_rots; ++r) {
      split.train.push_back(classes.size());
      classes.emplace_back(base, r);
      names.push_back(chars[base].name + rot_suffix[r]);
    }
  }
  for (std::size_t i = opt.train_classes; i < opt.train_classes + opt.val_classes; ++i) {
    const std::size_t base = order[i];
    split.val.push_back(classes.size());
    classes.emplace_back(base, 0);
    names.push_back(chars[base].name);
  }
  for (std::size_t i = opt.train_classes + opt.val_classes; i < total; ++i) {
    const std::size_t base = order[i];
    split.test.push_back(classes.size());
    classes.emplace_back(base, 0);
    names.push_back(chars[base].name);
  }

  OmniglotData out;
  out.data = Dataset::from_images(opt.resize, opt.resize, std::move(images),
                                  std::move(classes), std::move(names));
  out.split = std::move(split);
  return out;
}

}  // namespace fw
