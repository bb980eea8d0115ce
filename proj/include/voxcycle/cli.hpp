// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "voxcycle/augment/rotation.hpp"
#include "voxcycle/gradcheck.hpp"
#include "voxcycle/io/nifti.hpp"
#include "voxcycle/nn/layer_spec.hpp"
#include "voxcycle/train/evaluate.hpp"
#include "voxcycle/train/trainer.hpp"

namespace voxcycle::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

namespace fs = std::filesystem;

// Classic 70^3 PatchGAN: three stride-2 and two stride-1 4^3 convs.
inline NetworkSpec classic_patchgan() { return custom_conv_stack({{4, 2}, {4, 2}, {4, 2}, {4, 1}, {4, 1}}); }

inline std::string human_bytes(std::uint64_t b) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(1);
  if (b >= (1ull << 30)) o << double(b) / double(1ull << 30) << " GiB";
  else o << double(b) / double(1ull << 20) << " MiB";
  return o.str();
}

inline Shape tensor_shape(const Extent3& e) { return {1, e[2], e[1], e[0]}; }

// Input files: a single NIfTI path, or every NIfTI file of a directory.
inline std::vector<fs::path> input_files(const fs::path& in) {
  if (fs::is_directory(in)) {
    auto files = list_volumes(in);
    if (files.empty()) raise<ConfigError>("no .nii/.nii.gz files in '", in.string(), "'");
    return files;
  }
  if (!fs::exists(in)) raise<ConfigError>("input '", in.string(), "' does not exist");
  return {in};
}

// Output path for `src`: `out` itself for a single file, else out/<name>.
inline fs::path output_for(const fs::path& src, const fs::path& out, bool many, const std::string& suffix = {}) {
  if (!many && !fs::is_directory(out)) return out;
  fs::create_directories(out);
  return out / (nifti_stem(src) + suffix + (has_gzip_suffix(src) ? ".nii.gz" : ".nii"));
}

inline void print_network_plan(std::ostream& out, const NetworkSpec& spec, const Shape& input, std::size_t scalar_bytes) {
  out << layer_table(spec);
  out << "parameters: " << parameter_count(spec) << "\n";
  out << "shape trace for input " << shape_string(input) << ":\n";
  for (const auto& ls : shape_trace(spec, input)) out << "  row " << ls.row << " -> " << shape_string(ls.output) << "\n";
  out << "training memory estimate: " << human_bytes(training_memory_estimate(spec, input, scalar_bytes)) << "\n\n";
}

struct TrainOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<double> lambda_cycle;
  std::optional<int> pool_size;
  bool deterministic = false;
  bool dry_run = false;
  std::string resume;
  bool force = false;
};

inline int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  TrainConfig cfg = o.config.empty() ? TrainConfig{} : load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.epochs) cfg.epochs = *o.epochs;
  if (o.lr) cfg.lr = *o.lr;
  if (o.lambda_cycle) cfg.lambda_cycle = *o.lambda_cycle;
  if (o.pool_size) cfg.pool_size = *o.pool_size;
  if (o.deterministic) cfg.deterministic = true;
  if (cfg.deterministic) set_num_threads(1);
  const std::size_t bytes = cfg.precision == "float64" ? 8 : 4;

  if (o.dry_run) {
    cfg.validate(false);
    Shape input = tensor_shape(kWorkingGrid);
    if (!cfg.data_a.empty() && fs::is_directory(cfg.data_a)) {
      const auto files = list_volumes(cfg.data_a);
      if (!files.empty()) input = load_volume(files.front()).data.shape();
    }
    out << cfg.to_text() << "\n";
    const auto g = build_generator(cfg.generator_divisor), d = build_discriminator(cfg.discriminator_divisor);
    print_network_plan(out, g, input, bytes);
    print_network_plan(out, d, input, bytes);
    const auto total = 2 * training_memory_estimate(g, input, bytes) + 2 * training_memory_estimate(d, input, bytes);
    out << "four-network training estimate: " << human_bytes(total) << "\n";
    out << "threads: " << num_threads() << "\n";
    return kExitOk;
  }

  if (cfg.checkpoint_dir.empty()) cfg.checkpoint_dir = "checkpoints";
  auto trainer = Trainer<float>::from_directories(cfg);
  if (!o.resume.empty()) trainer.restore(load_checkpoint(o.resume), o.force);
  out << "training " << trainer.items(0) << " A / " << trainer.items(1) << " B items, " << trainer.steps_per_epoch()
      << " steps per epoch, epochs " << trainer.completed_epochs() + 1 << ".." << cfg.epochs << "\n";
  std::ofstream log;
  if (!cfg.log.empty()) {
    log.open(cfg.log, std::ios::app);
    if (!log) raise<ConfigError>("cannot open log file '", cfg.log, "'");
  }
  trainer.train(&out, [&](const StepMetrics& m) {
    if (log) log << format_metrics(m) << '\n' << std::flush;
  });
  out << "final checkpoint: " << (fs::path(cfg.checkpoint_dir) / "final.vxcg").string() << "\n";
  (void)err;
  return kExitOk;
}

inline Direction parse_direction(const std::string& s) {
  if (s == "a2b") return Direction::a2b;
  if (s == "b2a") return Direction::b2a;
  raise<ConfigError>("direction must be a2b or b2a, got '", s, "'");
}

inline int cmd_translate(const std::string& checkpoint, const std::string& in, const std::string& out_path,
                         const std::string& direction, std::ostream& out) {
  const auto dir = parse_direction(direction);
  const auto ck = load_checkpoint(checkpoint);
  const auto files = input_files(in);
  for (const auto& f : files) {
    const auto result = translate(ck, load_volume(f), dir);
    const auto dst = output_for(f, out_path, files.size() > 1 || fs::is_directory(in));
    save_volume(dst, result);
    out << f.string() << " -> " << dst.string() << "\n";
  }
  return kExitOk;
}

inline int cmd_augment(const std::string& in, const std::string& out_dir, int rotations, std::uint64_t seed,
                       double sigma, std::ostream& out) {
  const auto files = input_files(in);
  fs::create_directories(out_dir);
  std::size_t written = 0;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto copies = augment_volume(load_volume(files[i]), rotations, derive_seed(seed, {i}), sigma);
    for (std::size_t k = 0; k < copies.size(); ++k) {
      const auto dst = output_for(files[i], out_dir, true, k == 0 ? "" : rotation_suffix(int(k)));
      save_volume(dst, copies[k]);
      ++written;
    }
  }
  out << "wrote " << written << " volumes to " << out_dir << "\n";
  return kExitOk;
}

inline int cmd_preprocess(const std::string& in, const std::string& out_path, const std::vector<std::size_t>& grid,
                          const std::vector<std::size_t>& offset, double percentile, std::ostream& out) {
  if (grid.size() != 3) raise<ConfigError>("--grid takes three sizes x y z");
  if (!offset.empty() && offset.size() != 3) raise<ConfigError>("--offset takes three offsets x y z");
  const Extent3 target{grid[0], grid[1], grid[2]};
  std::optional<Extent3> off;
  if (!offset.empty()) off = Extent3{offset[0], offset[1], offset[2]};
  const auto files = input_files(in);
  for (const auto& f : files) {
    const auto v = normalize_intensity(crop(load_volume(f), target, off), percentile);
    const auto dst = output_for(f, out_path, files.size() > 1 || fs::is_directory(in));
    std::ostringstream descrip;
    descrip << "norm lo=" << v.norm->lo << " hi=" << v.norm->hi;
    auto bytes = write_nifti(v, descrip.str());
    if (has_gzip_suffix(dst)) bytes = gzip(bytes);
    write_file_bytes(dst, bytes);
    out << f.string() << " -> " << dst.string() << " (" << descrip.str() << ")\n";
  }
  return kExitOk;
}

inline int cmd_inspect(const std::string& in, double percentile, std::ostream& out) {
  for (const auto& f : input_files(in)) {
    const auto bytes = read_file_bytes(f);
    const auto [h, v] = read_nifti(bytes);
    out << f.string() << "\n";
    out << "  dim: " << h.dim[0] << " [" << h.dim[1] << ", " << h.dim[2] << ", " << h.dim[3] << "]\n";
    out << "  datatype: " << h.datatype << " (bitpix " << h.bitpix << ")" << (h.big_endian ? " big-endian" : "") << "\n";
    out << "  pixdim: " << h.pixdim[1] << " " << h.pixdim[2] << " " << h.pixdim[3] << " (qfac " << h.pixdim[0] << ")\n";
    out << "  scl: slope " << h.scl_slope << " inter " << h.scl_inter << "\n";
    out << "  magic: " << std::string(h.magic.data(), 3) << "  descrip: " << h.descrip << "\n";
    double lo = v.data[0], hi = v.data[0], sum = 0;
    std::size_t nonzero = 0;
    for (float x : v.data.data()) {
      lo = std::min(lo, double(x));
      hi = std::max(hi, double(x));
      sum += x;
      nonzero += x != 0.0f;
    }
    out << "  min " << lo << " max " << hi << " mean " << sum / double(v.data.size()) << " nonzero " << nonzero << "\n";
    if (nonzero > 0) out << "  p" << percentile << " of nonzero: " << nonzero_percentile(v.data, percentile) << "\n";
  }
  return kExitOk;
}

inline int cmd_rf(const std::string& preset, const std::string& layers, std::ostream& out, std::ostream& err) {
  NetworkSpec spec;
  if (!layers.empty()) spec = custom_conv_stack(parse_layer_list(layers));
  else if (preset == "discriminator") spec = build_discriminator();
  else if (preset == "patchgan70") spec = classic_patchgan();
  else raise<ConfigError>("unknown preset '", preset, "' (discriminator, patchgan70) and no --layers given");
  const auto rep = receptive_field_report(spec);
  out << "receptive field: " << rep.recurrence << "\n";
  if (rep.discrepancy()) {
    err << "warning: the published patch size for this preset is " << *rep.stated << "; the recurrence over its "
        << "layers gives " << rep.recurrence << "\n";
  }
  return kExitOk;
}

inline int cmd_gradcheck(std::uint64_t seed, double tolerance, std::ostream& out) {
  double worst = 0;
  for (const auto& c : default_gradcheck_cases()) {
    const auto r = gradcheck_network(c, seed);
    worst = std::max(worst, r.max_relative_error);
    out << std::left << std::setw(28) << r.name << " max rel err " << std::scientific << std::setprecision(3)
        << r.max_relative_error << std::defaultfloat << " over " << r.entries << " entries"
        << (r.skipped ? " (" + std::to_string(r.skipped) + " at kinks skipped)" : std::string())
        << (r.max_relative_error < tolerance ? "" : "  FAIL") << "\n";
  }
  out << "worst " << std::scientific << worst << std::defaultfloat << (worst < tolerance ? " ok" : " FAILED") << "\n";
  return worst < tolerance ? kExitOk : kExitNumeric;
}

// Runs the tool on argv-style arguments (program name excluded).
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"voxcycle: volumetric CycleGAN training and translation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  TrainOptions train;
  auto* t = app.add_subcommand("train", "train the four networks from a config file");
  t->add_option("--config", train.config, "key = value config file");
  t->add_option("--seed", train.seed);
  t->add_option("--epochs", train.epochs);
  t->add_option("--lr", train.lr, "base learning rate");
  t->add_option("--lambda-cycle", train.lambda_cycle);
  t->add_option("--pool-size", train.pool_size);
  t->add_flag("--deterministic", train.deterministic, "single worker thread");
  t->add_flag("--dry-run", train.dry_run, "print architecture, shapes and memory estimates, then exit");
  t->add_option("--resume", train.resume, "checkpoint to continue from");
  t->add_flag("--force", train.force, "resume even if the config fingerprint differs");

  std::string checkpoint, in, out_path, direction = "a2b";
  auto* tr = app.add_subcommand("translate", "apply a trained generator to volumes");
  tr->add_option("--checkpoint", checkpoint)->required();
  tr->add_option("--in", in, "volume or directory")->required();
  tr->add_option("--out", out_path, "file or directory")->required();
  tr->add_option("--direction", direction)->check(CLI::IsMember({"a2b", "b2a"}));

  int rotations = kRotationsPerVolume;
  std::uint64_t seed = 0;
  double sigma = kRotationSigmaDegrees;
  auto* au = app.add_subcommand("augment", "write each volume plus rotated copies");
  au->add_option("--in", in)->required();
  au->add_option("--out", out_path)->required();
  au->add_option("--n", rotations, "rotated copies per volume")->check(CLI::NonNegativeNumber);
  au->add_option("--seed", seed);
  au->add_option("--sigma", sigma, "rotation angle standard deviation in degrees")->check(CLI::NonNegativeNumber);

  std::vector<std::size_t> grid{kWorkingGrid[0], kWorkingGrid[1], kWorkingGrid[2]}, offset;
  double percentile = kDefaultPercentile;
  auto* pp = app.add_subcommand("preprocess", "crop to the working grid and normalize intensities");
  pp->add_option("--in", in)->required();
  pp->add_option("--out", out_path)->required();
  pp->add_option("--grid", grid, "target size x y z")->expected(3);
  pp->add_option("--offset", offset, "crop offset x y z (default centered)")->expected(3);
  pp->add_option("--percentile", percentile)->check(CLI::Range(0.0, 100.0));

  auto* in_cmd = app.add_subcommand("inspect", "print NIfTI header fields and intensity statistics");
  in_cmd->add_option("--in", in)->required();
  in_cmd->add_option("--percentile", percentile)->check(CLI::Range(0.0, 100.0));

  std::string preset = "discriminator", layers;
  auto* rf = app.add_subcommand("rf", "receptive field of a conv stack");
  rf->add_option("--preset", preset, "discriminator or patchgan70");
  rf->add_option("--layers", layers, "custom list kernel:stride,...");

  double tolerance = 1e-4;
  auto* gc = app.add_subcommand("gradcheck", "double-precision finite-difference checks of every layer kind");
  gc->add_option("--seed", seed);
  gc->add_option("--tolerance", tolerance);

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*t) return cmd_train(train, out, err);
    if (*tr) return cmd_translate(checkpoint, in, out_path, direction, out);
    if (*au) return cmd_augment(in, out_path, rotations, seed, sigma, out);
    if (*pp) return cmd_preprocess(in, out_path, grid, offset, percentile, out);
    if (*in_cmd) return cmd_inspect(in, percentile, out);
    if (*rf) return cmd_rf(preset, layers, out, err);
    if (*gc) return cmd_gradcheck(seed, tolerance, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace voxcycle::cli
