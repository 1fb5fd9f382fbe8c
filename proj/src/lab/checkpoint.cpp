#include "advlab/lab/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "advlab/lab/csv.hpp"

namespace advlab {

namespace {

constexpr const char* kMagic = "advlab-checkpoint";

template <class T>
T read_value(std::istream& in, const char* what) {
  T v{};
  if (!(in >> v)) throw Error(Errc::format, std::string("checkpoint: cannot read ") + what);
  return v;
}

void expect_token(std::istream& in, const std::string& token) {
  const auto got = read_value<std::string>(in, token.c_str());
  if (got != token) throw Error(Errc::format, "checkpoint: expected '" + token + "', got '" + got + "'");
}

double read_double(std::istream& in) {
  const auto text = read_value<std::string>(in, "parameter");
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::logic_error&) {
    throw Error(Errc::format, "checkpoint: bad number '" + text + "'");
  }
}

}  // namespace

void save_checkpoint(const ReluNetwork& net, std::ostream& out) {
  const NetworkSpec& spec = net.spec();
  out << kMagic << ' ' << kCheckpointVersion << '\n';
  out << "dims";
  for (auto d : spec.layer_dims) out << ' ' << d;
  out << "\nskip";
  for (std::size_t k = 0; k + 1 < spec.num_layers(); ++k) out << ' ' << (spec.has_skip(k) ? 1 : 0);
  out << "\nseed " << spec.seed << '\n';
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    const Mat& w = net.weights()[k];
    out << "W " << k << ' ' << w.rows() << ' ' << w.cols() << '\n';
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) out << (j ? " " : "") << format_double(w(i, j));
      out << '\n';
    }
    const Vec& b = net.biases()[k];
    out << "b " << k << ' ' << b.size() << '\n';
    for (Eigen::Index i = 0; i < b.size(); ++i) out << (i ? " " : "") << format_double(b(i));
    out << '\n';
  }
}

void save_checkpoint(const ReluNetwork& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path);
  save_checkpoint(net, out);
  if (!out) throw Error(Errc::io, "failed writing " + path);
}

ReluNetwork load_checkpoint(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw Error(Errc::version, "checkpoint: empty file");
  std::istringstream hs(header);
  std::string magic;
  int version = 0;
  if (!(hs >> magic >> version) || magic != kMagic)
    throw Error(Errc::version, "checkpoint: unrecognized header '" + header + "'");
  if (version != kCheckpointVersion) {
    std::ostringstream os;
    os << "checkpoint: version " << version << " not supported (expected " << kCheckpointVersion << ")";
    throw Error(Errc::version, os.str());
  }

  auto read_line = [&](const std::string& key) {
    std::string line;
    if (!std::getline(in, line)) throw Error(Errc::format, "checkpoint: missing " + key);
    std::istringstream ls(line);
    expect_token(ls, key);
    std::vector<long long> values;
    for (long long v; ls >> v;) values.push_back(v);
    if (!ls.eof()) throw Error(Errc::format, "checkpoint: malformed " + key + " line");
    return values;
  };

  NetworkSpec spec;
  for (long long d : read_line("dims")) spec.layer_dims.push_back(static_cast<Eigen::Index>(d));
  for (long long s : read_line("skip")) spec.skip.push_back(s != 0);
  const auto seed = read_line("seed");
  if (seed.size() != 1) throw Error(Errc::format, "checkpoint: malformed seed line");
  spec.seed = static_cast<std::uint64_t>(seed[0]);
  spec.validate();

  std::vector<Mat> weights;
  std::vector<Vec> biases;
  for (std::size_t k = 0; k < spec.num_layers(); ++k) {
    const Eigen::Index rows = spec.layer_dims[k + 1], cols = spec.layer_dims[k];
    expect_token(in, "W");
    if (read_value<std::size_t>(in, "layer index") != k ||
        read_value<Eigen::Index>(in, "rows") != rows || read_value<Eigen::Index>(in, "cols") != cols)
      throw Error(Errc::dimension, "checkpoint: weight shape does not match the embedded spec");
    Mat w(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = read_double(in);
    expect_token(in, "b");
    if (read_value<std::size_t>(in, "layer index") != k ||
        read_value<Eigen::Index>(in, "size") != rows)
      throw Error(Errc::dimension, "checkpoint: bias shape does not match the embedded spec");
    Vec b(rows);
    for (Eigen::Index i = 0; i < rows; ++i) b(i) = read_double(in);
    weights.push_back(std::move(w));
    biases.push_back(std::move(b));
  }
  return ReluNetwork(std::move(spec), std::move(weights), std::move(biases));
}

ReluNetwork load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path);
  return load_checkpoint(in);
}

ReluNetwork checkpoint_roundtrip(const ReluNetwork& net, const std::string& path) {
  save_checkpoint(net, path);
  return load_checkpoint(path);
}

}  // namespace advlab
