#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "munet/config.hpp"
#include "munet/metrics.hpp"
#include "munet/model.hpp"
#include "munet/stitch.hpp"
#include "munet/synthetic.hpp"
#include "munet/train.hpp"

namespace fs = std::filesystem;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw munet::DataError("cannot create " + path);
  out << text;
}

munet::ModelConfig model_from_config(const munet::KvConfig& cfg) {
  munet::ModelConfig mc;
  mc.levels = static_cast<int>(cfg.get_int("model.levels", 3));
  mc.classes = static_cast<int>(cfg.get_int("model.classes", 6));
  mc.base_channels = static_cast<int>(cfg.get_int("model.base_channels", 24));
  mc.max_depth = static_cast<int>(cfg.get_int("model.max_depth", 4));
  mc.input_window = static_cast<int>(cfg.get_int("model.window", 256));
  mc.validate();
  return mc;
}

munet::LossConfig loss_from_config(const munet::KvConfig& cfg) {
  munet::LossConfig loss;
  loss.alpha = cfg.get_list("loss.alpha", {});
  loss.beta = cfg.get_list("loss.beta", {});
  loss.epsilon = cfg.get_double("loss.epsilon", 1e-5);
  loss.classic_factor2 = cfg.get_bool("loss.classic_factor2", false);
  return loss;
}

munet::TrainOptions train_options_from_config(const munet::KvConfig& cfg) {
  munet::TrainOptions t;
  t.epochs = static_cast<int>(cfg.get_int("train.epochs", 50));
  t.lr = cfg.get_double("train.lr", 1e-4);
  t.batch = static_cast<int>(cfg.get_int("train.batch", 8));
  t.val_fraction = cfg.get_double("train.val_fraction", 0.1);
  t.patch_stride = static_cast<int>(cfg.get_int("patch.stride", 256));
  t.patch_jitter = static_cast<int>(cfg.get_int("patch.jitter", 0));
  t.augment = cfg.get_bool("augment.enabled", true);
  t.augment_spec.rot90 = cfg.get_bool("augment.rot90", true);
  t.augment_spec.flip_h = cfg.get_bool("augment.flip_h", true);
  t.augment_spec.flip_v = cfg.get_bool("augment.flip_v", true);
  t.augment_spec.max_shear = cfg.get_double("augment.max_shear", 0.08);
  t.augment_spec.max_intensity_shift =
      cfg.get_double("augment.max_intensity_shift", 0.05);
  t.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  return t;
}

// Re-serialize every effective value so config.echo is complete even when
// the user supplied only a few keys.
void record_effective(munet::KvConfig& cfg, const munet::ModelConfig& mc,
                      const munet::TrainOptions& t) {
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  cfg.set("model.levels", std::to_string(mc.levels));
  cfg.set("model.classes", std::to_string(mc.classes));
  cfg.set("model.base_channels", std::to_string(mc.base_channels));
  cfg.set("model.max_depth", std::to_string(mc.max_depth));
  cfg.set("model.window", std::to_string(mc.input_window));
  cfg.set("train.epochs", std::to_string(t.epochs));
  cfg.set("train.lr", num(t.lr));
  cfg.set("train.batch", std::to_string(t.batch));
  cfg.set("train.val_fraction", num(t.val_fraction));
  cfg.set("patch.stride", std::to_string(t.patch_stride));
  cfg.set("patch.jitter", std::to_string(t.patch_jitter));
  cfg.set("augment.enabled", t.augment ? "1" : "0");
  cfg.set("augment.rot90", t.augment_spec.rot90 ? "1" : "0");
  cfg.set("augment.flip_h", t.augment_spec.flip_h ? "1" : "0");
  cfg.set("augment.flip_v", t.augment_spec.flip_v ? "1" : "0");
  cfg.set("augment.max_shear", num(t.augment_spec.max_shear));
  cfg.set("augment.max_intensity_shift", num(t.augment_spec.max_intensity_shift));
  cfg.set("seed", std::to_string(t.seed));
}

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  char buf[64];
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    if (i) s += ',';
    s += buf;
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nested multiresolution segmentation for grayscale mosaics"};
  app.require_subcommand(1);

  // --- synth -------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate a synthetic texture dataset");
  struct {
    std::string out;
    int count = 20;
    int size = 512;
    int cell = 96;
    double labeled_fraction = 0.7;
    double noise = 0.02;
    std::uint64_t seed = 1;
    std::uint64_t index_offset = 0;
  } sy;
  synth->add_option("--out", sy.out, "output dataset directory")->required();
  synth->add_option("--count", sy.count, "number of images");
  synth->add_option("--size", sy.size, "image width and height");
  synth->add_option("--cell", sy.cell, "texture region lattice pitch");
  synth->add_option("--labeled-fraction", sy.labeled_fraction,
                    "probability a pixel keeps its label");
  synth->add_option("--noise", sy.noise, "additive noise amplitude");
  synth->add_option("--seed", sy.seed, "generator seed");
  synth->add_option("--index-offset", sy.index_offset,
                    "first image index (distinct offsets give disjoint images)");
  synth->callback([&]() {
    munet::SynthSpec spec;
    spec.width = spec.height = sy.size;
    spec.cell = sy.cell;
    spec.labeled_fraction = sy.labeled_fraction;
    spec.noise = sy.noise;
    spec.validate();
    std::string dir = munet::resolve_run_dir(sy.out, "dataset");
    munet::ClassTable table = munet::ClassTable::default_six();
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "labels");
    std::vector<munet::ManifestEntry> entries;
    std::vector<std::uint64_t> counts(table.num_classes(), 0);
    std::uint64_t voided = 0, total = 0;
    for (int i = 0; i < sy.count; ++i) {
      auto s = munet::generate_synthetic(spec, sy.seed, sy.index_offset + i);
      char img_rel[64], lab_rel[64];
      std::snprintf(img_rel, sizeof img_rel, "images/img_%04d.png", i);
      std::snprintf(lab_rel, sizeof lab_rel, "labels/lab_%04d.png", i);
      munet::write_mosaic_png16((fs::path(dir) / img_rel).string(), s.image);
      munet::write_label_png((fs::path(dir) / lab_rel).string(), s.labels, table);
      entries.push_back({img_rel, lab_rel});
      munet::count_class_pixels(s.labels, table.num_classes(), counts);
      voided += munet::count_unlabeled(s.labels);
      total += s.labels.lab.size();
    }
    table.save((fs::path(dir) / "classes.txt").string());
    munet::write_manifest((fs::path(dir) / "manifest.txt").string(), entries);
    std::uint64_t labeled = total - voided;
    std::printf("wrote %d images (%dx%d) to %s\n", sy.count, spec.width, spec.height,
                dir.c_str());
    std::printf("labeled pixels: %llu of %llu (%.1f%%)\n",
                static_cast<unsigned long long>(labeled),
                static_cast<unsigned long long>(total), 100.0 * labeled / total);
    for (int k = 0; k < table.num_classes(); ++k)
      std::printf("  class %d %-12s %6.2f%%\n", k, table.names[k].c_str(),
                  labeled ? 100.0 * counts[k] / labeled : 0.0);
  });

  // --- train ---------------------------------------------------------------
  auto* train = app.add_subcommand("train", "train a model on a manifest dataset");
  struct {
    std::string manifest, out = "run", config;
    std::uint64_t seed = 1;
    int levels = 3, base_channels = 24, classes = 6, max_depth = 4, window = 256;
    std::string beta;
    double epsilon = 1e-5;
    bool classic_factor2 = false;
    int epochs = 50, batch = 8, stride = 256, jitter = 0;
    double lr = 1e-4, val_fraction = 0.1;
    bool no_augment = false;
  } tr;
  train->add_option("--manifest", tr.manifest, "dataset manifest")->required();
  train->add_option("--out", tr.out, "run output directory");
  train->add_option("--config", tr.config, "key=value config file");
  train->add_option("--seed", tr.seed, "training seed");
  train->add_option("--m-levels", tr.levels, "resolution levels M");
  train->add_option("--base-channels", tr.base_channels, "filters at full resolution");
  train->add_option("--classes", tr.classes, "class count K");
  train->add_option("--max-depth", tr.max_depth, "encoder depth of level 0");
  train->add_option("--window", tr.window, "training window size");
  train->add_option("--beta", tr.beta, "comma-separated level weights");
  train->add_option("--epsilon", tr.epsilon, "dice stabilizer");
  train->add_flag("--classic-factor2", tr.classic_factor2,
                  "use the doubled-numerator dice form");
  train->add_option("--epochs", tr.epochs, "training epochs");
  train->add_option("--lr", tr.lr, "Adam learning rate");
  train->add_option("--batch", tr.batch, "patches per optimizer step");
  train->add_option("--val-fraction", tr.val_fraction, "held-out image fraction");
  train->add_option("--stride", tr.stride, "patch grid stride");
  train->add_option("--jitter", tr.jitter, "max patch grid jitter");
  train->add_flag("--no-augment", tr.no_augment, "disable augmentation");
  train->callback([&]() {
    munet::KvConfig cfg = tr.config.empty() ? munet::KvConfig{}
                                            : munet::KvConfig::load(tr.config);
    auto passed = [&](const std::string& f) { return train->count(f) > 0; };
    if (passed("--seed")) cfg.set("seed", std::to_string(tr.seed));
    if (passed("--m-levels")) cfg.set("model.levels", std::to_string(tr.levels));
    if (passed("--base-channels"))
      cfg.set("model.base_channels", std::to_string(tr.base_channels));
    if (passed("--classes")) cfg.set("model.classes", std::to_string(tr.classes));
    if (passed("--max-depth")) cfg.set("model.max_depth", std::to_string(tr.max_depth));
    if (passed("--window")) cfg.set("model.window", std::to_string(tr.window));
    if (passed("--beta")) cfg.set("loss.beta", tr.beta);
    if (passed("--epsilon")) cfg.set("loss.epsilon", std::to_string(tr.epsilon));
    if (passed("--classic-factor2")) cfg.set("loss.classic_factor2", "1");
    if (passed("--epochs")) cfg.set("train.epochs", std::to_string(tr.epochs));
    if (passed("--lr")) cfg.set("train.lr", std::to_string(tr.lr));
    if (passed("--batch")) cfg.set("train.batch", std::to_string(tr.batch));
    if (passed("--val-fraction"))
      cfg.set("train.val_fraction", std::to_string(tr.val_fraction));
    if (passed("--stride")) cfg.set("patch.stride", std::to_string(tr.stride));
    if (passed("--jitter")) cfg.set("patch.jitter", std::to_string(tr.jitter));
    if (passed("--no-augment")) cfg.set("augment.enabled", "0");

    munet::ModelConfig mc = model_from_config(cfg);
    munet::LossConfig loss = loss_from_config(cfg);
    munet::TrainOptions topt = train_options_from_config(cfg);
    topt.out_dir = munet::resolve_run_dir(tr.out, "run");

    auto entries = munet::read_manifest(tr.manifest);
    auto data = munet::load_dataset(entries);
    std::printf("loaded %zu images from %s\n", data.size(), tr.manifest.c_str());

    munet::MUNet<float> model(mc);
    std::printf("model: M=%d K=%d base=%d window=%d (%zu parameters)\n", mc.levels,
                mc.classes, mc.base_channels, mc.input_window,
                model.parameter_count());

    munet::TrainResult res = munet::train_model(model, data, topt, loss);

    record_effective(cfg, mc, topt);
    cfg.set("data.manifest", fs::absolute(tr.manifest).string());
    cfg.set("loss.alpha", join_doubles(res.alpha));
    cfg.set("loss.beta", join_doubles(loss.beta.empty()
                                          ? munet::LossConfig::default_beta(mc.levels)
                                          : loss.beta));
    char eps[64];
    std::snprintf(eps, sizeof eps, "%.17g", loss.epsilon);
    cfg.set("loss.epsilon", eps);
    cfg.set("loss.classic_factor2", loss.classic_factor2 ? "1" : "0");
    write_text((fs::path(topt.out_dir) / "config.echo").string(), cfg.echo());

    fs::path classes_src = fs::path(tr.manifest).parent_path() / "classes.txt";
    if (fs::exists(classes_src))
      fs::copy_file(classes_src, fs::path(topt.out_dir) / "classes.txt",
                    fs::copy_options::overwrite_existing);

    std::printf("final loss %.6f", res.epoch_loss.back());
    if (res.best_val_dice >= 0.0)
      std::printf(", best val dice %.4f (epoch %d)", res.best_val_dice, res.best_epoch);
    std::printf("\ncheckpoints: %s, %s\n", res.best_checkpoint.c_str(),
                res.last_checkpoint.c_str());
  });

  // --- eval ----------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  struct {
    std::string manifest, checkpoint, out, stub;
    double overlap = 0.75;
  } ev;
  eval->add_option("--manifest", ev.manifest, "dataset manifest")->required();
  eval->add_option("--checkpoint", ev.checkpoint, "model checkpoint");
  eval->add_option("--overlap", ev.overlap, "sliding-window overlap fraction");
  eval->add_option("--out", ev.out, "directory for metrics files");
  eval->add_option("--stub", ev.stub, "test hook: 'oracle' scores ground truth")
      ->check(CLI::IsMember({"oracle"}));
  eval->callback([&]() {
    auto entries = munet::read_manifest(ev.manifest);
    auto data = munet::load_dataset(entries);
    munet::MetricsReport rep;
    munet::ConfusionMatrix cm;
    if (ev.stub == "oracle") {
      int k_classes = 6;
      fs::path classes_src = fs::path(ev.manifest).parent_path() / "classes.txt";
      if (fs::exists(classes_src))
        k_classes = munet::ClassTable::load(classes_src.string()).num_classes();
      cm = munet::ConfusionMatrix(k_classes);
      for (const auto& s : data) {
        munet::LabelMap pred = s.labels;
        for (auto& v : pred.lab)
          if (v == munet::kUnlabeled) v = 0;
        cm.add(s.labels, pred);
      }
      rep = munet::compute_metrics(cm);
    } else {
      if (ev.checkpoint.empty())
        throw munet::ConfigError("eval: --checkpoint is required without --stub");
      munet::MUNet<float> model = munet::load_model<float>(ev.checkpoint);
      rep = munet::evaluate_model(model, data, ev.overlap, &cm, true);
    }
    std::string table = munet::format_report(rep, nullptr);
    std::printf("%s", table.c_str());
    if (!ev.out.empty()) {
      std::string dir = munet::resolve_run_dir(ev.out, "eval");
      fs::create_directories(dir);
      write_text((fs::path(dir) / "metrics.txt").string(), table);
      write_text((fs::path(dir) / "metrics.kv").string(),
                 munet::report_key_values(rep));
    }
  });

  // --- predict ---------------------------------------------------------------
  auto* predict = app.add_subcommand("predict", "segment one image");
  struct {
    std::string image, checkpoint, out = "predict", classes, stub;
    double overlap = 0.75;
    bool probs = false;
  } pr;
  predict->add_option("--image", pr.image, "input mosaic (PNG or TIFF)")->required();
  predict->add_option("--checkpoint", pr.checkpoint, "model checkpoint");
  predict->add_option("--overlap", pr.overlap, "sliding-window overlap fraction");
  predict->add_option("--out", pr.out, "output directory");
  predict->add_option("--classes", pr.classes, "class table for the overlay palette");
  predict->add_flag("--probs", pr.probs, "also write per-class probability maps");
  predict->add_option("--stub", pr.stub,
                      "test hook: 'constant' predicts fixed probabilities")
      ->check(CLI::IsMember({"constant"}));
  predict->callback([&]() {
    munet::Mosaic img = munet::read_mosaic(pr.image);
    munet::ClassTable table = pr.classes.empty()
                                  ? munet::ClassTable::default_six()
                                  : munet::ClassTable::load(pr.classes);
    munet::ProbabilityMap prob;
    if (pr.stub == "constant") {
      int k = table.num_classes();
      std::vector<double> p(k);
      double denom = k * (k + 1) / 2.0;
      for (int i = 0; i < k; ++i) p[i] = (i + 1) / denom;
      prob = munet::ProbabilityMap::constant(img.width, img.height, p);
    } else {
      if (pr.checkpoint.empty())
        throw munet::ConfigError("predict: --checkpoint is required without --stub");
      munet::MUNet<float> model = munet::load_model<float>(pr.checkpoint);
      if (model.cfg.classes != table.num_classes() && !pr.classes.empty())
        throw munet::ConfigError("predict: class table size does not match model");
      if (model.cfg.classes != table.num_classes())
        table = munet::ClassTable::generic(model.cfg.classes);
      prob = munet::predict_mosaic(model, img, pr.overlap);
    }
    munet::LabelMap labels = munet::argmax_labels(prob);
    std::string dir = munet::resolve_run_dir(pr.out, "predict");
    fs::create_directories(dir);
    std::string overlay = (fs::path(dir) / "labels.png").string();
    munet::write_label_png(overlay, labels, table);
    std::printf("wrote %s\n", overlay.c_str());
    if (pr.probs) {
      for (int k = 0; k < prob.channels; ++k) {
        char name[64];
        std::snprintf(name, sizeof name, "probs_c%d.png", k);
        munet::write_probability_png16((fs::path(dir) / name).string(), prob, k);
      }
      std::printf("wrote %d probability maps to %s\n", prob.channels, dir.c_str());
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const munet::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const munet::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 0;
}
