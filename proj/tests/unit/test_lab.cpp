#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "advlab/lab/checkpoint.hpp"
#include "advlab/lab/config.hpp"
#include "advlab/lab/csv.hpp"
#include "advlab/lab/dataset.hpp"
#include "advlab/lab/experiments.hpp"

using namespace advlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "advlab_unit";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> be32(std::uint32_t v) {
  return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
}

std::vector<unsigned char> concat(std::initializer_list<std::vector<unsigned char>> parts) {
  std::vector<unsigned char> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return Errc::io;
}

ExperimentConfig tiny(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  c.dataset = "synth:blobs,n=120,dims=8,classes=3,seed=2";
  c.eval_dataset = "synth:blobs,n=30,dims=8,classes=3,seed=2";
  c.samples = 6;
  c.width = 12;
  c.epochs = 5;
  c.batch_size = 16;
  c.learning_rate = 0.05;
  c.attack_steps = 30;
  c.bins = 2;
  c.out = scratch("out").string();
  return c;
}

}  // namespace

TEST_CASE("IDX images and labels") {
  const fs::path img = scratch("img.idx"), lab = scratch("lab.idx");
  std::vector<unsigned char> pixels(16);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<unsigned char>(i * 17);
  write_bytes(img, concat({be32(0x803), be32(4), be32(2), be32(2), pixels}));
  write_bytes(lab, concat({be32(0x801), be32(4), {0, 1, 2, 1}}));
  const Dataset d = load_idx(img.string(), lab.string());
  CHECK(d.size() == 4);
  CHECK(d.dims() == 4);
  CHECK(d.inputs[3](3) == 1.0);
  CHECK(d.inputs[0](0) == 0.0);
  CHECK(d.labels == std::vector<int>{0, 1, 2, 1});
  CHECK(d.classes == 3);

  write_idx(d, scratch("img2.idx").string(), scratch("lab2.idx").string(), 2, 2);
  const Dataset back = load_idx(scratch("img2.idx").string(), scratch("lab2.idx").string());
  CHECK(back.labels == d.labels);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(back.inputs[i] == d.inputs[i]);
}

TEST_CASE("IDX format violations") {
  const fs::path bad = scratch("bad.idx");
  write_bytes(bad, concat({be32(0), be32(1), be32(1), be32(1), {0}}));
  CHECK(code_of([&] { load_idx_images(bad.string()); }) == Errc::format);

  write_bytes(bad, concat({be32(0x803), be32(2), be32(2), be32(2), {0, 1, 2}}));
  CHECK(code_of([&] { load_idx_images(bad.string()); }) == Errc::format);

  write_bytes(scratch("l1.idx"), concat({be32(0x801), be32(3), {0, 1, 2}}));
  write_bytes(scratch("i1.idx"), concat({be32(0x803), be32(2), be32(1), be32(1), {0, 9}}));
  CHECK(code_of([&] { load_idx(scratch("i1.idx").string(), scratch("l1.idx").string()); }) ==
        Errc::format);
  CHECK(code_of([&] { load_idx_images(scratch("missing.idx").string()); }) == Errc::io);
}

TEST_CASE("synthetic data is deterministic and balanced") {
  const Dataset a = synth_dataset(SynthKind::blobs, 50, 6, 5, 9);
  const Dataset b = synth_dataset(SynthKind::blobs, 50, 6, 5, 9);
  CHECK(a.labels == b.labels);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.inputs[i] == b.inputs[i]);
  CHECK(synth_dataset(SynthKind::blobs, 50, 6, 5, 10).inputs[0] != a.inputs[0]);

  const Dataset small = synth_dataset(SynthKind::two_class_gaussian, 4, 2, 2, 1);
  CHECK(std::count(small.labels.begin(), small.labels.end(), 0) == 2);
  CHECK(std::count(small.labels.begin(), small.labels.end(), 1) == 2);
  CHECK_NOTHROW(a.validate());
}

TEST_CASE("dataset URIs") {
  const Dataset d = dataset_from_uri("synth:blobs,n=20,dims=3,classes=4,seed=1");
  CHECK(d.size() == 20);
  CHECK(d.dims() == 3);
  CHECK(d.classes == 4);
  CHECK(d.head(5).size() == 5);
  CHECK_THROWS_AS(dataset_from_uri("csv:foo"), Error);
  CHECK_THROWS_AS(dataset_from_uri("synth:blobs,n=x"), Error);
}

TEST_CASE("checkpoints round-trip exactly") {
  const ReluNetwork fresh(resmlp_spec(5, 7, 3, 2, 4));
  const ReluNetwork back = checkpoint_roundtrip(fresh, scratch("fresh.ckpt").string());
  CHECK(back.spec().layer_dims == fresh.spec().layer_dims);
  CHECK(back.spec().skip == fresh.spec().skip);
  for (std::size_t k = 0; k < fresh.num_layers(); ++k) {
    CHECK(back.weights()[k] == fresh.weights()[k]);
    CHECK(back.biases()[k] == fresh.biases()[k]);
  }

  const Dataset data = synth_dataset(SynthKind::blobs, 60, 5, 2, 1);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  const ReluNetwork trained = sgd_train(fresh, data, cfg).net;
  const ReluNetwork tb = checkpoint_roundtrip(trained, scratch("trained.ckpt").string());
  for (std::size_t k = 0; k < trained.num_layers(); ++k) {
    CHECK(tb.weights()[k] == trained.weights()[k]);
    CHECK(tb.biases()[k] == trained.biases()[k]);
  }
}

TEST_CASE("corrupted checkpoints are rejected") {
  std::stringstream ss;
  save_checkpoint(ReluNetwork(mlp_spec(3, 4, 2, 2, 1)), ss);
  std::string text = ss.str();

  std::istringstream wrong_version("advlab-checkpoint 99\n" + text.substr(text.find('\n') + 1));
  CHECK(code_of([&] { load_checkpoint(wrong_version); }) == Errc::version);
  std::istringstream garbage("not a checkpoint\n");
  CHECK(code_of([&] { load_checkpoint(garbage); }) == Errc::version);
  std::istringstream cut(text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(cut), Error);
}

TEST_CASE("config parsing") {
  const auto kv = parse_key_values("# comment\nseed = 3\nnetworks = mlp1, resmlp3 # two\n\n");
  const ExperimentConfig c = ExperimentConfig::from_map(kv);
  CHECK(c.seed == 3);
  CHECK(c.networks == std::vector<std::string>{"mlp1", "resmlp3"});

  CHECK(code_of([] { ExperimentConfig::from_map(parse_key_values("colour = red")); }) ==
        Errc::config);
  CHECK(code_of([] { parse_key_values("seed = 1\nseed = 2"); }) == Errc::config);
  CHECK(code_of([] { parse_key_values("seed"); }) == Errc::config);
  CHECK(code_of([] { ExperimentConfig::from_map(parse_key_values("trim = 0")); }) == Errc::config);
  CHECK(code_of([] { ExperimentConfig::from_map(parse_key_values("attack_rule = l3")); }) ==
        Errc::config);
  CHECK(parse_experiment_kind("effect-fit") == ExperimentKind::effect_fit);
  CHECK(to_string(GradientRule::sign_linf) == "linf");
}

TEST_CASE("CSV output") {
  CsvTable t{{"name", "n", "x"}, {}};
  t.add_row({std::string("a"), std::int64_t{3}, 0.1});
  CHECK(to_csv(t) == "name,n,x\na,3,0.10000000000000001\n");
  CHECK(t.number(0, "x") == 0.1);
  CHECK_THROWS_AS(t.column("y"), Error);
  CHECK_THROWS_AS(t.add_row({1.0}), Error);
  CHECK(format_double(1.0 / 3) == "0.33333333333333331");
}

TEST_CASE("zoo names") {
  CHECK(make_network("mlp3", 4, 8, 2, 1).num_layers() == 3);
  CHECK(make_network("resmlp4", 4, 8, 2, 1).spec().has_skip(1));
  CHECK_THROWS_AS(make_network("cnn2", 4, 8, 2, 1), Error);
}

TEST_CASE("experiment tables have the documented columns") {
  const std::vector<std::pair<ExperimentKind, std::vector<std::string>>> expect{
      {ExperimentKind::growth, {"sample_id", "t", "t_over_m_success", "delta_norm", "grad_norm", "rule"}},
      {ExperimentKind::kappa_table, {"network", "baseline", "kappa", "n_samples"}},
      {ExperimentKind::effect_fit, {"network", "kappa", "kappa_prime"}},
      {ExperimentKind::impact_vs_a, {"sample_id", "H_z", "Hz_gx2", "A_hat", "abs_phi_star", "delta_gw_norm"}},
      {ExperimentKind::cosine_vs_a, {"bin", "a_hat_mid", "mean_cosine", "n"}},
      {ExperimentKind::oscillation, {"sample_id", "delta_ori", "delta_adv"}},
  };
  for (const auto& [kind, header] : expect) {
    const ExperimentOutput out = run_experiment(tiny(kind));
    REQUIRE(out.tables.size() == 1);
    CHECK(out.tables[0].second.header == header);
    CHECK_FALSE(out.tables[0].second.rows.empty());
  }
}

TEST_CASE("experiments are deterministic") {
  const ExperimentOutput a = run_experiment(tiny(ExperimentKind::impact_vs_a));
  const ExperimentOutput b = run_experiment(tiny(ExperimentKind::impact_vs_a));
  CHECK(to_csv(a.tables[0].second) == to_csv(b.tables[0].second));
  const ExperimentOutput w = run_and_write(tiny(ExperimentKind::growth));
  CHECK(fs::exists(fs::path(tiny(ExperimentKind::growth).out) / w.tables[0].first));
}

TEST_CASE("raw growth is monotone per sample") {
  const CsvTable t = run_experiment(tiny(ExperimentKind::growth)).tables[0].second;
  for (std::size_t r = 1; r < t.rows.size(); ++r)
    if (t.number(r, "sample_id") == t.number(r - 1, "sample_id"))
      CHECK(t.number(r, "delta_norm") >= t.number(r - 1, "delta_norm"));
}

TEST_CASE("oscillation without a perturbation is identical per row") {
  const ExperimentConfig c = tiny(ExperimentKind::oscillation);
  const Dataset train = dataset_from_uri(c.dataset), eval = dataset_from_uri(c.eval_dataset);
  const ReluNetwork net = prepare_network(c, "mlp2", train, 0);
  const CsvTable t = oscillation_table(net, eval, c, true);
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    CHECK(t.number(r, "delta_ori") == t.number(r, "delta_adv"));
}

TEST_CASE("experiment errors name the experiment") {
  ExperimentConfig c = tiny(ExperimentKind::growth);
  c.dataset = "idx:/nonexistent/a,/nonexistent/b";
  try {
    run_experiment(c);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("growth") != std::string::npos);
    CHECK(e.code() == Errc::io);
  }
}
