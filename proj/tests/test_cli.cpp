// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "voxcycle/cli.hpp"
#include "voxcycle/synthetic.hpp"

namespace vc = voxcycle;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = vc::cli::run(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("voxcycle_cli_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::size_t count_files(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.is_regular_file();
  return n;
}

void write_toy_domains(const TempDir& d, std::size_t n, std::size_t size) {
  auto [a, b] = vc::toy_domains(n, n, size, 4);
  fs::create_directories(d / "A");
  fs::create_directories(d / "B");
  for (std::size_t i = 0; i < n; ++i) {
    vc::save_volume(d / ("A/" + a[i].source + ".nii.gz"), a[i]);
    vc::save_volume(d / ("B/" + b[i].source + ".nii.gz"), b[i]);
  }
}

}  // namespace

TEST(CliTest, ReceptiveFieldPresets) {
  const auto d = run({"rf", "--preset", "discriminator"});
  EXPECT_EQ(d.code, 0);
  EXPECT_NE(d.out.find("receptive field: 46"), std::string::npos);
  EXPECT_NE(d.err.find("51"), std::string::npos);
  const auto c = run({"rf", "--preset", "patchgan70"});
  EXPECT_NE(c.out.find("receptive field: 70"), std::string::npos);
  EXPECT_TRUE(c.err.empty());
  EXPECT_NE(run({"rf", "--layers", "3:1,3:1"}).out.find("receptive field: 5"), std::string::npos);
  EXPECT_EQ(run({"rf", "--preset", "nope"}).code, 2);
  EXPECT_EQ(run({"rf", "--layers", "3-1"}).code, 2);
}

TEST(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"translate", "--in", "x"}).code, 2);
  EXPECT_EQ(run({"translate", "--checkpoint", "c", "--in", "x", "--out", "y", "--direction", "up"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(CliTest, GradcheckPasses) {
  const auto r = run({"gradcheck", "--seed", "3"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("generator"), std::string::npos);
  EXPECT_NE(r.out.find(" ok"), std::string::npos);
  EXPECT_EQ(run({"gradcheck", "--tolerance", "1e-30"}).code, 3);
}

TEST(CliTest, TrainDryRunPrintsPlan) {
  const auto r = run({"train", "--dry-run", "--epochs", "3"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("epochs = 3"), std::string::npos);
  EXPECT_NE(r.out.find("# generator"), std::string::npos);
  EXPECT_NE(r.out.find("# discriminator"), std::string::npos);
  EXPECT_NE(r.out.find("[1x120x180x152]"), std::string::npos);
  EXPECT_NE(r.out.find("four-network training estimate"), std::string::npos);
  EXPECT_EQ(run({"train", "--dry-run", "--epochs", "0"}).code, 2);
}

TEST(CliTest, TrainTranslateAndResume) {
  TempDir d("train");
  write_toy_domains(d, 2, 16);
  {
    std::ofstream cfg(d / "run.cfg");
    cfg << "epochs = 2\ngenerator_divisor = 8\ndiscriminator_divisor = 8\npool_size = 2\n"
        << "data_a = " << (d / "A") << "\ndata_b = " << (d / "B") << "\ncheckpoint_dir = " << (d / "ck")
        << "\ncheckpoint_every = 1\nlog = " << (d / "metrics.log") << "\n";
  }
  auto r = run({"train", "--config", d / "run.cfg", "--seed", "5", "--deterministic"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(d / "ck/final.vxcg"));
  EXPECT_TRUE(fs::exists(d / "ck/epoch_0001.vxcg"));
  std::ifstream log(d / "metrics.log");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) lines += line.rfind("step=", 0) == 0;
  EXPECT_EQ(lines, 4);

  r = run({"translate", "--checkpoint", d / "ck/final.vxcg", "--in", d / "A", "--out", d / "fakeB", "--direction",
           "a2b"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_files(d.path / "fakeB"), 2u);
  const auto one = vc::load_volume(d / "fakeB/toy_a_0.nii.gz");
  EXPECT_EQ(one.data.shape(), (vc::Shape{1, 16, 16, 16}));

  // Resuming with a different trajectory-shaping setting is refused.
  r = run({"train", "--config", d / "run.cfg", "--seed", "6", "--resume", d / "ck/epoch_0001.vxcg"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("fingerprint"), std::string::npos) << r.err;
  r = run({"train", "--config", d / "run.cfg", "--seed", "5", "--deterministic", "--resume", d / "ck/epoch_0001.vxcg"});
  EXPECT_EQ(r.code, 0) << r.err;

  fs::create_directories(d / "empty");
  std::ofstream(d / "bad.cfg") << "data_a = " << (d / "A") << "\ndata_b = " << (d / "empty") << "\n";
  EXPECT_EQ(run({"train", "--config", d / "bad.cfg"}).code, 2);
  EXPECT_EQ(run({"train", "--config", d / "missing.cfg"}).code, 2);
}

TEST(CliTest, NumericFailureExitsThree) {
  TempDir d("nan");
  write_toy_domains(d, 1, 16);
  std::ofstream(d / "run.cfg") << "epochs = 3\ngenerator_divisor = 8\ndiscriminator_divisor = 8\nlr = 1e30\n"
                               << "data_a = " << (d / "A") << "\ndata_b = " << (d / "B") << "\ncheckpoint_dir = "
                               << (d / "ck") << "\n";
  const auto r = run({"train", "--config", d / "run.cfg"});
  EXPECT_EQ(r.code, 3) << r.out << r.err;
  EXPECT_NE(r.err.find("non-finite"), std::string::npos);
}

TEST(CliTest, AugmentWritesOriginalPlusRotations) {
  TempDir d("aug");
  fs::create_directories(d / "in");
  for (int i = 0; i < 3; ++i) {
    auto v = vc::toy_domain_a(8, std::uint64_t(i));
    vc::save_volume(d / ("in/s" + std::to_string(i) + ".nii"), v);
  }
  const auto r = run({"augment", "--in", d / "in", "--out", d / "out", "--n", "10", "--seed", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_files(d.path / "out"), 33u);
  EXPECT_TRUE(fs::exists(d / "out/s1_rot10.nii"));
  EXPECT_EQ(vc::load_volume(d / "out/s2.nii").data, vc::load_volume(d / "in/s2.nii").data);
  // Same stream as augment_dataset.
  std::vector<vc::Volume> inputs;
  for (int i = 0; i < 3; ++i) inputs.push_back(vc::load_volume(d / ("in/s" + std::to_string(i) + ".nii")));
  const auto direct = vc::augment_dataset(inputs, 10, 2);
  EXPECT_EQ(vc::load_volume(d / "out/s1_rot04.nii").data, direct[11 + 4].data);
}

TEST(CliTest, PreprocessCropsAndNormalizes) {
  TempDir d("pre");
  vc::Volume v;
  v.data = vc::Tensor<float>({1, 14, 12, 10});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 500.0f);
  for (auto& x : v.data.data()) x = u(rng);
  vc::save_volume(d / "raw.nii.gz", v);
  const auto r = run({"preprocess", "--in", d / "raw.nii.gz", "--out", d / "prep.nii.gz", "--grid", "8", "8", "8"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto p = vc::load_volume(d / "prep.nii.gz");
  EXPECT_EQ(p.data.shape(), (vc::Shape{1, 8, 8, 8}));
  const auto want = vc::normalize_intensity(vc::crop(v, {8, 8, 8}));
  EXPECT_EQ(p.data, want.data);
  EXPECT_EQ(run({"preprocess", "--in", d / "raw.nii.gz", "--out", d / "x.nii", "--grid", "20", "8", "8"}).code, 1);

  const auto i = run({"inspect", "--in", d / "prep.nii.gz"});
  EXPECT_EQ(i.code, 0);
  EXPECT_NE(i.out.find("dim: 3 [8, 8, 8]"), std::string::npos) << i.out;
  EXPECT_NE(i.out.find("norm lo="), std::string::npos);
}
