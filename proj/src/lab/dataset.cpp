#include "advlab/lab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <sstream>

#include "advlab/error.hpp"

namespace advlab {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                        const std::string& path) {
  if (offset + 4 > buf.size()) throw Error(Errc::format, path + ": truncated header");
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                         static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(bytes, 4);
}

std::uint32_t check_magic(const std::vector<unsigned char>& buf, std::uint32_t expected,
                          const std::string& path) {
  const std::uint32_t magic = read_be32(buf, 0, path);
  if (magic != expected) {
    std::ostringstream os;
    os << path << ": bad magic 0x" << std::hex << magic;
    throw Error(Errc::format, os.str());
  }
  return magic;
}

}  // namespace

void Dataset::validate() const {
  if (inputs.size() != labels.size())
    throw Error(Errc::dimension, "dataset inputs and labels differ in length");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].size() != inputs.front().size())
      throw Error(Errc::dimension, "dataset samples differ in dimension");
    if (labels[i] < 0 || labels[i] >= classes) {
      std::ostringstream os;
      os << "label " << labels[i] << " of sample " << i << " outside [0, " << classes << ")";
      throw Error(Errc::dimension, os.str());
    }
  }
}

Dataset Dataset::head(std::size_t n) const {
  Dataset out = *this;
  if (n < size()) {
    out.inputs.resize(n);
    out.labels.resize(n);
  }
  return out;
}

std::vector<Vec> load_idx_images(const std::string& path) {
  const auto buf = read_file(path);
  check_magic(buf, kImageMagic, path);
  const std::size_t count = read_be32(buf, 4, path);
  const std::size_t rows = read_be32(buf, 8, path);
  const std::size_t cols = read_be32(buf, 12, path);
  const std::size_t dim = rows * cols;
  if (buf.size() < 16 + count * dim) throw Error(Errc::format, path + ": truncated payload");
  std::vector<Vec> images(count, Vec(static_cast<Eigen::Index>(dim)));
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < dim; ++j)
      images[i](static_cast<Eigen::Index>(j)) = buf[16 + i * dim + j] / 255.0;
  return images;
}

std::vector<int> load_idx_labels(const std::string& path) {
  const auto buf = read_file(path);
  check_magic(buf, kLabelMagic, path);
  const std::size_t count = read_be32(buf, 4, path);
  if (buf.size() < 8 + count) throw Error(Errc::format, path + ": truncated payload");
  return {buf.begin() + 8, buf.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  Dataset d;
  d.inputs = load_idx_images(images_path);
  d.labels = load_idx_labels(labels_path);
  if (d.inputs.size() != d.labels.size()) {
    std::ostringstream os;
    os << "image count " << d.inputs.size() << " does not match label count " << d.labels.size();
    throw Error(Errc::format, os.str());
  }
  d.classes = d.labels.empty() ? 0 : *std::max_element(d.labels.begin(), d.labels.end()) + 1;
  d.source = "idx:" + images_path;
  d.validate();
  return d;
}

void write_idx(const Dataset& data, const std::string& images_path,
               const std::string& labels_path, std::uint32_t rows, std::uint32_t cols) {
  data.validate();
  if (data.size() && data.dims() != static_cast<Eigen::Index>(rows) * cols)
    throw Error(Errc::dimension, "rows x cols does not match the sample dimension");
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw Error(Errc::io, "cannot write IDX files");
  put_be32(img, kImageMagic);
  put_be32(img, static_cast<std::uint32_t>(data.size()));
  put_be32(img, rows);
  put_be32(img, cols);
  for (const Vec& v : data.inputs)
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      const double b = std::clamp(std::round(v(j) * 255.0), 0.0, 255.0);
      img.put(static_cast<char>(static_cast<unsigned char>(b)));
    }
  put_be32(lab, kLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (int l : data.labels) lab.put(static_cast<char>(static_cast<unsigned char>(l)));
  if (!img || !lab) throw Error(Errc::io, "failed writing IDX files");
}

Dataset synth_dataset(SynthKind kind, std::size_t n, Eigen::Index dims, int classes,
                      std::uint64_t seed) {
  if (classes < 2 || n < static_cast<std::size_t>(classes) || dims < 1)
    throw Error(Errc::config, "synthetic dataset needs n >= classes >= 2 and dims >= 1");
  if (kind == SynthKind::two_class_gaussian && classes != 2)
    throw Error(Errc::config, "two-class-gaussian data has exactly 2 classes");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.2, 0.8);
  std::normal_distribution<double> normal(0.0, 1.0);

  double sigma = 0.05;
  std::vector<Vec> centers(static_cast<std::size_t>(classes), Vec::Constant(dims, 0.5));
  if (kind == SynthKind::blobs) {
    for (Vec& c : centers)
      for (Eigen::Index j = 0; j < dims; ++j) c(j) = uni(rng);
  } else {
    sigma = 0.1;
    centers[0](0) = 0.5 - 3 * sigma;
    centers[1](0) = 0.5 + 3 * sigma;
  }

  Dataset d;
  d.classes = classes;
  d.seed = seed;
  d.source = kind == SynthKind::blobs ? "synth:blobs" : "synth:two-class-gaussian";
  d.inputs.reserve(n);
  d.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % static_cast<std::size_t>(classes));
    Vec x = centers[static_cast<std::size_t>(cls)];
    for (Eigen::Index j = 0; j < dims; ++j) x(j) += sigma * normal(rng);
    d.inputs.push_back(std::move(x));
    d.labels.push_back(cls);
  }
  return d;
}

Dataset dataset_from_uri(const std::string& uri) {
  const auto colon = uri.find(':');
  if (colon == std::string::npos) throw Error(Errc::config, "dataset must be idx:... or synth:...");
  const std::string scheme = uri.substr(0, colon);
  std::vector<std::string> parts;
  std::stringstream ss(uri.substr(colon + 1));
  for (std::string item; std::getline(ss, item, ',');) parts.push_back(item);

  if (scheme == "idx") {
    if (parts.size() != 2) throw Error(Errc::config, "idx dataset needs <images>,<labels>");
    return load_idx(parts[0], parts[1]);
  }
  if (scheme != "synth" || parts.empty())
    throw Error(Errc::config, "unknown dataset scheme: " + scheme);

  SynthKind kind;
  if (parts[0] == "blobs")
    kind = SynthKind::blobs;
  else if (parts[0] == "two-class-gaussian")
    kind = SynthKind::two_class_gaussian;
  else
    throw Error(Errc::config, "unknown synthetic kind: " + parts[0]);

  std::map<std::string, std::string> kv{{"n", "2000"}, {"dims", "64"}, {"classes", "10"},
                                        {"seed", "0"}};
  if (kind == SynthKind::two_class_gaussian) kv["classes"] = "2";
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const auto eq = parts[i].find('=');
    const std::string key = parts[i].substr(0, eq);
    if (eq == std::string::npos || !kv.count(key))
      throw Error(Errc::config, "bad synthetic dataset option: " + parts[i]);
    kv[key] = parts[i].substr(eq + 1);
  }
  try {
    return synth_dataset(kind, std::stoull(kv["n"]), std::stol(kv["dims"]),
                         std::stoi(kv["classes"]), std::stoull(kv["seed"]));
  } catch (const std::logic_error&) {
    throw Error(Errc::config, "non-numeric synthetic dataset option in " + uri);
  }
}

}  // namespace advlab
