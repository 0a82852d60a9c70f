#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "ricnn/checkpoint.hpp"
#include "ricnn/results.hpp"

using namespace ricnn;
namespace fs = std::filesystem;

namespace {

struct TmpDir {
  fs::path path;
  TmpDir() {
    std::string tmpl =
        (fs::temp_directory_path() / "ricnn-ckpt-XXXXXX").string();
    REQUIRE(mkdtemp(tmpl.data()) != nullptr);
    path = tmpl;
  }
  ~TmpDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <class T>
Network<T> desk_net(Calibrator cal, uint64_t seed) {
  Network<T> net(make_graph("desk", cal, 1), {1, 1, 28, 28});
  net.init_params(seed);
  return net;
}

}  // namespace

TEST_CASE("sha256 matches the published vectors") {
  CHECK(sha256_bytes("", 0) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_bytes("abc", 3) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  TmpDir tmp;
  spit(tmp.file("v"), "abc");
  CHECK(sha256_file(tmp.file("v")) == sha256_bytes("abc", 3));
  CHECK_THROWS_AS(sha256_file(tmp.file("missing")), IoError);
}

TEST_CASE("checkpoints round-trip bit for bit") {
  TmpDir tmp;
  auto roundtrip = [&](auto tag, const std::string& stem_name,
                       Calibrator cal) {
    using T = decltype(tag);
    Network<T> net = desk_net<T>(cal, 42);
    CheckpointMeta meta;
    meta.arch = "desk";
    meta.cal = cal;
    meta.seed = 42;
    const std::string stem = tmp.file(stem_name);
    save_checkpoint(stem, net, meta);

    CheckpointMeta got;
    Network<T> back = load_checkpoint<T>(stem, &got);
    auto a = net.params();
    auto b = back.params();
    REQUIRE(a.size() == b.size());
    for (size_t g = 0; g < a.size(); ++g) {
      REQUIRE(a[g].name == b[g].name);
      REQUIRE(*a[g].w == *b[g].w);
    }
    CHECK(got.arch == "desk");
    CHECK(got.cal == cal);
    CHECK(got.seed == 42);
    CHECK(got.in_h == 28);
    CHECK(got.precision == (sizeof(T) == 4 ? "f32" : "f64"));
    CHECK(got.bin_sha256 == sha256_file(stem + ".bin"));
    CHECK(read_checkpoint_meta(stem).bin_sha256 == got.bin_sha256);
  };
  roundtrip(float{}, "f32", Calibrator::Gd);
  roundtrip(double{}, "f64", Calibrator::St);
}

TEST_CASE("saving the same weights twice gives the same bytes") {
  TmpDir tmp;
  Network<float> net = desk_net<float>(Calibrator::Sb, 5);
  CheckpointMeta meta;
  meta.arch = "desk";
  meta.cal = Calibrator::Sb;
  meta.seed = 5;
  save_checkpoint(tmp.file("a"), net, meta);
  save_checkpoint(tmp.file("b"), net, meta);
  CHECK(slurp(tmp.file("a.bin")) == slurp(tmp.file("b.bin")));
  CHECK(slurp(tmp.file("a.json")) == slurp(tmp.file("b.json")));
}

TEST_CASE("loading rejects the wrong precision") {
  TmpDir tmp;
  Network<float> net = desk_net<float>(Calibrator::None, 1);
  CheckpointMeta meta;
  meta.arch = "desk";
  save_checkpoint(tmp.file("m"), net, meta);
  CHECK_THROWS_AS(load_checkpoint<double>(tmp.file("m")), IoError);
  CHECK_NOTHROW(load_checkpoint<float>(tmp.file("m")));
}

TEST_CASE("tampered checkpoints are detected") {
  TmpDir tmp;
  Network<float> net = desk_net<float>(Calibrator::Lbp, 9);
  CheckpointMeta meta;
  meta.arch = "desk";
  meta.cal = Calibrator::Lbp;
  const std::string stem = tmp.file("t");
  save_checkpoint(stem, net, meta);

  SUBCASE("flipped weight byte fails the hash check") {
    std::string bin = slurp(stem + ".bin");
    bin[bin.size() / 2] = static_cast<char>(bin[bin.size() / 2] ^ 0x40);
    spit(stem + ".bin", bin);
    CHECK_THROWS_AS(load_checkpoint<float>(stem), IoError);
  }
  SUBCASE("truncated weights fail") {
    std::string bin = slurp(stem + ".bin");
    spit(stem + ".bin", bin.substr(0, bin.size() - 8));
    CHECK_THROWS_AS(load_checkpoint<float>(stem), IoError);
  }
  SUBCASE("foreign manifest format is rejected") {
    spit(stem + ".json", "{\"format\":\"weights\",\"version\":1}\n");
    CHECK_THROWS_AS(read_checkpoint_meta(stem), IoError);
  }
  SUBCASE("unparseable manifest is rejected") {
    spit(stem + ".json", "{\"format\": ");
    CHECK_THROWS_AS(read_checkpoint_meta(stem), IoError);
  }
  SUBCASE("missing manifest is rejected") {
    fs::remove(stem + ".json");
    CHECK_THROWS_AS(load_checkpoint<float>(stem), IoError);
  }
}

TEST_CASE("epoch log CSV round-trips") {
  TmpDir tmp;
  std::vector<EpochRow> rows = {
      {0, 1e-4, 2.302585092994046, 0.1, 1.25},
      {10, 8e-5, 0.5, 0.8125, 0.5},
      {25, 6.400000000000001e-05, 0.015625, 0.99609375, 2.0},
  };
  const std::string path = tmp.file("epochs.csv");
  write_epoch_log(path, rows);

  const std::string text = slurp(path);
  CHECK(text.rfind("epoch,lr,train_loss,train_acc,seconds\n", 0) == 0);

  auto back = read_epoch_log(path);
  REQUIRE(back.size() == rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].epoch == rows[i].epoch);
    CHECK(back[i].lr == rows[i].lr);  // shortest form parses back exactly
    CHECK(back[i].train_loss == rows[i].train_loss);
    CHECK(back[i].train_acc == rows[i].train_acc);
    CHECK(back[i].seconds == rows[i].seconds);  // 3 decimals, all exact here
  }

  SUBCASE("bad header") {
    spit(path, "epoch,lr,loss,acc,seconds\n0,1,1,1,1\n");
    CHECK_THROWS_AS(read_epoch_log(path), IoError);
  }
  SUBCASE("short row") {
    spit(path, "epoch,lr,train_loss,train_acc,seconds\n0,1,1,1\n");
    CHECK_THROWS_AS(read_epoch_log(path), IoError);
  }
  SUBCASE("garbage cell") {
    spit(path, "epoch,lr,train_loss,train_acc,seconds\n0,fast,1,1,1\n");
    CHECK_THROWS_AS(read_epoch_log(path), IoError);
  }
  SUBCASE("trailing junk in a cell") {
    spit(path, "epoch,lr,train_loss,train_acc,seconds\n0,1,1,1,1x\n");
    CHECK_THROWS_AS(read_epoch_log(path), IoError);
  }
  SUBCASE("unwritable path") {
    CHECK_THROWS_AS(write_epoch_log(tmp.file("no/such/dir.csv"), rows),
                    IoError);
  }
}

TEST_CASE("sweep CSV keeps six-decimal accuracies and strict angle order") {
  TmpDir tmp;
  std::vector<SweepRecord> recs;
  for (int i = 0; i < 36; ++i)
    recs.push_back({10.0 * i, 10000, static_cast<double>(i) / 36.0});
  const std::string path = tmp.file("sweep.csv");
  write_sweep_csv(path, recs);

  const std::string text = slurp(path);
  std::vector<std::string> lines;
  {
    std::istringstream ss(text);
    std::string ln;
    while (std::getline(ss, ln)) lines.push_back(ln);
  }
  REQUIRE(lines.size() == 37);
  CHECK(lines[0] == "angle_deg,n_samples,accuracy");
  CHECK(lines[1] == "0,10000,0.000000");
  CHECK(lines[19] == "180,10000,0.500000");
  // every accuracy cell carries exactly six decimals
  for (size_t i = 1; i < lines.size(); ++i) {
    const auto dot = lines[i].rfind('.');
    REQUIRE(dot != std::string::npos);
    CHECK(lines[i].size() - dot - 1 == 6);
  }

  auto back = read_sweep_csv(path);
  REQUIRE(back.size() == recs.size());
  for (size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].angle_deg == recs[i].angle_deg);
    CHECK(back[i].n_samples == recs[i].n_samples);
    CHECK(std::abs(back[i].accuracy - recs[i].accuracy) <= 5e-7);
  }

  SUBCASE("non-increasing angles are rejected") {
    CHECK_THROWS_AS(write_sweep_csv(tmp.file("x.csv"),
                                    {{0, 10, 0.5}, {0, 10, 0.5}}),
                    InvalidArgument);
    CHECK_THROWS_AS(write_sweep_csv(tmp.file("x.csv"),
                                    {{90, 10, 0.5}, {45, 10, 0.5}}),
                    InvalidArgument);
  }
  SUBCASE("accuracy outside [0,1] is rejected") {
    CHECK_THROWS_AS(write_sweep_csv(tmp.file("x.csv"), {{0, 10, 1.5}}),
                    InvalidArgument);
    CHECK_THROWS_AS(write_sweep_csv(tmp.file("x.csv"), {{0, 10, -0.5}}),
                    InvalidArgument);
  }
  SUBCASE("bad header is rejected on read") {
    spit(path, "angle,n,acc\n0,10,0.5\n");
    CHECK_THROWS_AS(read_sweep_csv(path), IoError);
  }
}

TEST_CASE("sidecars and run manifests record the run context") {
  TmpDir tmp;
  ResultContext ctx;
  ctx.command = "sweep";
  ctx.cfg.cal = Calibrator::St;
  ctx.cfg.seed = 77;
  ctx.cfg.precision = "f32";
  ctx.model_path = "model";
  ctx.checkpoint_sha256 = sha256_bytes("abc", 3);
  ctx.wall_seconds = 12.5;
  ctx.artifacts = {"sweep.csv"};

  const std::string path = tmp.file("sweep.csv");
  write_sweep_csv(path, {{0.0, 10, 0.5}}, &ctx);
  REQUIRE(fs::exists(path + ".json"));
  nlohmann::json j = nlohmann::json::parse(slurp(path + ".json"));
  CHECK(j.at("command") == "sweep");
  CHECK(j.at("seed") == 77);
  CHECK(j.at("calibrator") == "st");
  CHECK(j.at("checkpoint_sha256") == ctx.checkpoint_sha256);
  CHECK(j.at("config").at("precision") == "f32");

  write_run_manifest(tmp.file("run.json"), ctx);
  nlohmann::json m = nlohmann::json::parse(slurp(tmp.file("run.json")));
  CHECK(m.at("command") == "sweep");
  CHECK(m.at("artifacts").at(0) == "sweep.csv");
}

TEST_CASE("fixed and shortest formatting behave") {
  CHECK(format_fixed(0.5, 6) == "0.500000");
  CHECK(format_fixed(1.0, 3) == "1.000");
  CHECK(format_fixed(2.0 / 3.0, 6) == "0.666667");
  CHECK(format_double(0.0001) == "1e-04");
  CHECK(format_double(64e-6) == "6.4e-05");
  CHECK(format_double(1.0) == "1");
}
