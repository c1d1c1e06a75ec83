#include "a2clpt/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include "a2clpt/checkpoint.hpp"
#include "a2clpt/data.hpp"
#include "a2clpt/evaluator.hpp"
#include "a2clpt/localizer.hpp"
#include "a2clpt/trainer.hpp"

namespace a2clpt {
namespace fs = std::filesystem;

namespace {

/// Raised for runtime failures detected by the driver itself (exit code 1).
struct CommandError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void add_synth_flags(CLI::App* app, SynthConfig& c) {
  app->add_option("--num-classes", c.num_classes, "Number of activity classes")->check(CLI::PositiveNumber);
  app->add_option("--feature-dim", c.feature_dim, "Feature dimension D")->check(CLI::PositiveNumber);
  app->add_option("--num-videos", c.num_videos, "Number of videos")->check(CLI::NonNegativeNumber);
  app->add_option("--min-length", c.min_length, "Minimum video length (>= 3)");
  app->add_option("--max-length", c.max_length, "Maximum video length");
  app->add_option("--min-segments", c.min_segments, "Minimum activity instances per video");
  app->add_option("--max-segments", c.max_segments, "Maximum activity instances per video");
  app->add_option("--noise-sigma", c.noise_sigma, "Per-coordinate Gaussian noise")->check(CLI::NonNegativeNumber);
  app->add_option("--background-direction", c.background_direction,
                  "Background steps carry a shared background prototype (true/false)");
}

void add_train_flags(CLI::App* app, TrainConfig& c, std::string& variant) {
  app->add_option("--variant", variant, "Ablation variant")
      ->check(CLI::IsMember({"atcl", "atcl_plus", "aclpt", "a2clpt"}));
  app->add_option("--alpha", c.alpha, "Weight of the A2CL-PT term");
  app->add_option("--gamma", c.gamma, "Weight of the new-triplet loss");
  app->add_option("--beta-min", c.beta_min, "Lower bound of the per-video tempering beta");
  app->add_option("--beta-max", c.beta_max, "Upper bound of the per-video tempering beta");
  app->add_option("--eval-beta", c.eval_beta, "Fixed beta for loss evaluation");
  app->add_option("--m1", c.m1, "ATCL angular margin (radians)");
  app->add_option("--m2", c.m2, "New-triplet angular margin (radians)");
  app->add_option("--s", c.s, "Top-k pooling ratio, k = ceil(l / s)");
  app->add_option("--s-a", c.model.erase_ratio, "Erasing ratio, k_a = floor(l / s_a)");
  app->add_option("--omega", c.model.omega, "Weight of adversarial T-CAMs in the fusion");
  app->add_option("--embed-dim", c.model.embed_dim, "Embedding width E")->check(CLI::PositiveNumber);
  app->add_option("--kernel-size", c.model.kernel_size, "Temporal kernel size of the T-CAM heads");
  app->add_option("--batch-size", c.batch_size, "Videos per minibatch")->check(CLI::PositiveNumber);
  app->add_option("--adam-lr", c.adam_lr, "Adam learning rate");
  app->add_option("--weight-decay", c.weight_decay, "Decoupled weight decay");
  app->add_option("--center-lr-rgb", c.center_lr_rgb, "Center SGD learning rate, RGB stream");
  app->add_option("--center-lr-flow", c.center_lr_flow, "Center SGD learning rate, flow stream");
  app->add_option("--iterations", c.iterations, "Training iterations")->check(CLI::NonNegativeNumber);
  app->add_option("--checkpoint-every", c.checkpoint_every, "Write <out>.iter<N> every N iterations");
  app->add_option("--scale-nt-by-gamma", c.scale_nt_by_gamma, "Weight the NT center term by gamma (true/false)");
}

void add_common(CLI::App* app, std::uint64_t& seed, int& threads) {
  app->configurable();
  app->add_option("--seed", seed, "Random seed")->envname("A2CLPT_SEED");
  app->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

/// The resolved configuration is stored next to the main output; it can be fed back with --config.
void echo_config(const CLI::App* sub, const fs::path& output) {
  fs::path echo = output;
  echo += ".config.txt";
  write_text(echo, "[" + sub->get_name() + "]\n" + sub->config_to_str(true, false));
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, x);
  return buf;
}

TrainConfig resolved(const TrainConfig& base, const std::string& variant, std::uint64_t seed, int threads) {
  TrainConfig c = apply_variant(base, *parse_variant(variant));
  c.seed = seed;
  c.threads = threads;
  return c;
}

std::vector<Detection> infer_all(const Dataset& ds, const Checkpoint& ckpt, const LocalizeConfig& lc,
                                 std::ostream* log) {
  std::vector<Detection> all;
  for (const auto& v : ds.samples) {
    auto dets = localize(v, ckpt.params, ckpt.model, lc);
    if (log) *log << v.id << ": " << dets.size() << " detections\n";
    all.insert(all.end(), dets.begin(), dets.end());
  }
  return all;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"A2CL-PT weakly-supervised temporal activity localization", "a2clpt"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_config("--config", "", "INI file; options go in a [subcommand] section");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.fallthrough();

  std::uint64_t seed = 0;
  int threads = 1;

  // synth
  SynthConfig synth_cfg;
  std::string synth_out;
  bool force = false;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic two-stream dataset");
  add_common(synth, seed, threads);
  add_synth_flags(synth, synth_cfg);
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_flag("--force", force, "Overwrite an existing dataset directory");

  // train
  TrainConfig train_cfg;
  std::string variant = "a2clpt";
  std::string data_path, ckpt_out, log_path;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset manifest");
  add_common(train_cmd, seed, threads);
  add_train_flags(train_cmd, train_cfg, variant);
  train_cmd->add_option("--data", data_path, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", ckpt_out, "Checkpoint path")->required();
  train_cmd->add_option("--log", log_path, "Training log path (default <out>.log)");

  // infer
  std::string infer_data, infer_ckpt, infer_out;
  LocalizeConfig loc_cfg;
  auto* infer = app.add_subcommand("infer", "Localize activities with a trained checkpoint");
  add_common(infer, seed, threads);
  infer->add_option("--data", infer_data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  infer->add_option("--checkpoint", infer_ckpt, "Checkpoint path")->required()->check(CLI::ExistingFile);
  infer->add_option("--out", infer_out, "Detections output path")->required();
  infer->add_option("--s", loc_cfg.s, "Top-k pooling ratio for class scores");
  infer->add_option("--min-length", loc_cfg.min_length, "Minimum segment length")->check(CLI::Range(1, 1 << 20));

  // eval
  std::string eval_dets, eval_data, eval_out, grid_spec = "0.1:0.1:0.9";
  auto* eval = app.add_subcommand("eval", "Score detections with mAP over IoU thresholds");
  add_common(eval, seed, threads);
  eval->add_option("--detections", eval_dets, "Detections file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eval_data, "Dataset manifest with ground truth")->required()->check(CLI::ExistingFile);
  eval->add_option("--grid", grid_spec, "IoU thresholds lo:step:hi");
  eval->add_option("--out", eval_out, "Report output path");

  // gradcheck
  GradcheckOptions gc;
  gc.train.model.erase_ratio = 3.0;
  gc.train.model.kernel_size = 3;
  gc.train.s = 2.0;
  std::string gc_variant = "a2clpt";
  double tolerance = 1e-4;
  std::string gc_out;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  add_common(gradcheck_cmd, seed, threads);
  add_train_flags(gradcheck_cmd, gc.train, gc_variant);
  gradcheck_cmd->add_option("--tolerance", tolerance, "Maximum accepted relative error");
  gradcheck_cmd->add_option("--instances", gc.instances, "Random instances")->check(CLI::PositiveNumber);
  gradcheck_cmd->add_option("--eps", gc.eps, "Central-difference step");
  gradcheck_cmd->add_option("--feature-dim", gc.feature_dim, "D")->check(CLI::PositiveNumber);
  gradcheck_cmd->add_option("--length", gc.length, "Video length")->check(CLI::PositiveNumber);
  gradcheck_cmd->add_option("--num-classes", gc.num_classes, "Classes")->check(CLI::Range(2, 1000));
  gradcheck_cmd->add_option("--batch", gc.batch, "Videos per instance")->check(CLI::PositiveNumber);
  gradcheck_cmd->add_option("--out", gc_out, "Also write the report to this path");

  // ablate
  TrainConfig ablate_cfg;
  SynthConfig ablate_synth;
  std::string ablate_data, ablate_out, ablate_grid = "0.1:0.1:0.9";
  std::string ablate_variant_unused = "a2clpt";
  int seeds = 3;
  auto* ablate = app.add_subcommand("ablate", "Train and score the four ablation variants");
  add_common(ablate, seed, threads);
  add_train_flags(ablate, ablate_cfg, ablate_variant_unused);
  add_synth_flags(ablate, ablate_synth);
  ablate->add_option("--data", ablate_data, "Dataset manifest (default: synthetic from --synth-seed)");
  ablate->add_option("--synth-seed", ablate_synth.seed, "Seed of the synthetic benchmark");
  ablate->add_option("--seeds", seeds, "Training seeds per variant")->check(CLI::PositiveNumber);
  ablate->add_option("--grid", ablate_grid, "IoU thresholds lo:step:hi");
  ablate->add_option("--out", ablate_out, "Report output path");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    if (!app.get_subcommands().empty()) out << app.get_subcommands().front()->help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*synth) {
      synth_cfg.seed = seed;
      const fs::path dir = synth_out;
      if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
        throw CommandError("output directory " + dir.string() + " exists; pass --force to overwrite");
      }
      if (force && fs::exists(dir)) {
        for (const auto& entry : fs::directory_iterator(dir)) {
          const auto name = entry.path().filename().string();
          if (name == kManifestName || entry.path().extension() == ".bin") fs::remove(entry.path());
        }
      }
      const Dataset ds = synth_generate(synth_cfg);
      const fs::path manifest = write_dataset(ds, dir);
      echo_config(synth, dir);
      out << manifest.string() << "\n";
      return kExitOk;
    }

    if (*train_cmd) {
      const TrainConfig cfg = resolved(train_cfg, variant, seed, threads);
      const Dataset ds = load_dataset(data_path);
      const fs::path ckpt_path = ckpt_out;
      const TrainResult result = train(ds, cfg, [&](int it, const Checkpoint& state) {
        fs::path p = ckpt_path;
        p += ".iter" + std::to_string(it);
        save_checkpoint(p, state);
      });
      save_checkpoint(ckpt_path, result.state);
      fs::path log_file = log_path.empty() ? fs::path(ckpt_path.string() + ".log") : fs::path(log_path);
      std::ofstream log(log_file, std::ios::binary | std::ios::trunc);
      if (!log) throw IoError("cannot write " + log_file.string());
      write_train_log(log, result.log);
      echo_config(train_cmd, ckpt_path);
      if (!result.log.records.empty()) {
        out << "iterations " << result.log.records.size() << " first loss "
            << fmt("%.6f", result.log.records.front().loss.total) << " last loss "
            << fmt("%.6f", result.log.records.back().loss.total) << "\n";
      }
      out << ckpt_path.string() << "\n";
      return kExitOk;
    }

    if (*infer) {
      const Dataset ds = load_dataset(infer_data);
      const Checkpoint ckpt = load_checkpoint(infer_ckpt);
      if (ckpt.model.feature_dim != ds.feature_dim || ckpt.model.num_classes != ds.num_classes) {
        throw CommandError("checkpoint shape (D=" + std::to_string(ckpt.model.feature_dim) + ", C=" +
                           std::to_string(ckpt.model.num_classes) + ") does not match the dataset");
      }
      const auto dets = infer_all(ds, ckpt, loc_cfg, &err);
      std::ofstream f(infer_out, std::ios::binary | std::ios::trunc);
      if (!f) throw IoError("cannot write " + infer_out);
      write_detections(f, dets, ds.num_classes);
      f.close();
      echo_config(infer, infer_out);
      out << dets.size() << " detections written to " << infer_out << "\n";
      return kExitOk;
    }

    if (*eval) {
      const std::vector<double> grid = parse_grid(grid_spec);
      const Dataset ds = load_dataset(eval_data);
      const DetectionFile dets = read_detections(eval_dets);
      if (dets.num_classes != ds.num_classes) {
        throw CommandError("detections have C=" + std::to_string(dets.num_classes) + " but the dataset has C=" +
                           std::to_string(ds.num_classes));
      }
      const EvalReport report = map_over_thresholds(dets.detections, ground_truth_of(ds), grid, ds.num_classes);
      write_eval_report(out, report);
      if (!eval_out.empty()) {
        std::ofstream f(eval_out, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write " + eval_out);
        write_eval_report(f, report);
        f.close();
        echo_config(eval, eval_out);
      }
      return kExitOk;
    }

    if (*gradcheck_cmd) {
      gc.seed = seed;
      gc.train = apply_variant(gc.train, *parse_variant(gc_variant));
      const GradcheckReport report = gradcheck(gc);
      print_gradcheck_report(out, report, tolerance);
      if (!gc_out.empty()) {
        std::ofstream f(gc_out, std::ios::binary | std::ios::trunc);
        print_gradcheck_report(f, report, tolerance);
        f.close();
        echo_config(gradcheck_cmd, gc_out);
      }
      return report.passed(tolerance) ? kExitOk : kExitFailure;
    }

    if (*ablate) {
      const std::vector<double> grid = parse_grid(ablate_grid);
      const Dataset ds = ablate_data.empty() ? synth_generate(ablate_synth) : load_dataset(ablate_data);
      const auto gts = ground_truth_of(ds);
      const std::vector<Variant> variants = {Variant::atcl, Variant::atcl_plus, Variant::aclpt, Variant::a2clpt};
      std::map<Variant, std::vector<EvalReport>> reports;
      for (Variant v : variants) {
        for (int k = 0; k < seeds; ++k) {
          TrainConfig cfg = resolved(ablate_cfg, variant_name(v), seed + static_cast<std::uint64_t>(k), threads);
          const TrainResult tr = train(ds, cfg);
          LocalizeConfig lc;
          lc.s = cfg.s;
          const auto dets = infer_all(ds, tr.state, lc, nullptr);
          reports[v].push_back(map_over_thresholds(dets, gts, grid, ds.num_classes));
          err << variant_name(v) << " seed " << cfg.seed << ": avg mAP "
              << fmt("%.4f", reports[v].back().average_map) << "\n";
        }
      }
      std::ostringstream table;
      table << "variant     avg_mAP   ";
      for (double t : grid) table << fmt(" @%.2f ", t);
      table << "\n";
      std::ostringstream csv;
      csv << "# variant,seed,threshold,mAP\n";
      for (Variant v : variants) {
        const auto& rs = reports[v];
        double avg = 0.0;
        std::vector<double> per(grid.size(), 0.0);
        for (std::size_t k = 0; k < rs.size(); ++k) {
          avg += rs[k].average_map / static_cast<double>(rs.size());
          for (std::size_t t = 0; t < grid.size(); ++t) {
            per[t] += rs[k].map[t] / static_cast<double>(rs.size());
            csv << variant_name(v) << ',' << (seed + k) << ',' << fmt("%.3f", grid[t]) << ','
                << fmt("%.6f", rs[k].map[t]) << '\n';
          }
          csv << variant_name(v) << ',' << (seed + k) << ",avg," << fmt("%.6f", rs[k].average_map) << '\n';
        }
        char name[16];
        std::snprintf(name, sizeof(name), "%-10s", variant_name(v));
        table << name << fmt("%9.4f ", avg);
        for (double p : per) table << fmt("%7.4f", p);
        table << "\n";
      }
      out << table.str() << csv.str();
      if (!ablate_out.empty()) {
        write_text(ablate_out, table.str() + csv.str());
        echo_config(ablate, ablate_out);
      }
      return kExitOk;
    }
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace a2clpt
