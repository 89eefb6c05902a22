#include "ddunet/app/commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>

#include "ddunet/app/checkpoint.hpp"
#include "ddunet/app/gradcheck_suite.hpp"
#include "ddunet/app/pipeline.hpp"
#include "ddunet/data/nifti.hpp"
#include "ddunet/data/phantom.hpp"
#include "ddunet/engine/error.hpp"
#include "ddunet/engine/tensor_ops.hpp"

namespace ddunet::app {
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config file '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create '" + dir.string() + "': " + ec.message());
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%6.2f", 100.0 * v);
  return buf;
}

struct LoadedModel {
  RunConfig config;
  network::ParamSet<float> params;
};

LoadedModel load_model(const fs::path& path) {
  Checkpoint ckpt = load_checkpoint(path);
  LoadedModel m{resolve_config({parse_settings(ckpt.config_text, path.string() + " (embedded config)")}),
                std::move(ckpt.params)};
  const auto& arch = m.config.arch;
  if (arch.in_channels != data::kNumModalities || arch.num_classes != objectives::kNumClasses) {
    throw DataError("incompatible checkpoint '" + path.string() + "': in_channels=" +
                    std::to_string(arch.in_channels) + ", num_classes=" + std::to_string(arch.num_classes) +
                    " but the data provides 4 modalities and 4 classes");
  }
  const auto shapes = network::parameter_shapes(arch);
  bool match = shapes.size() == m.params.size();
  for (const auto& [name, shape] : shapes) {
    const auto it = m.params.find(name);
    match = match && it != m.params.end() && it->second.shape() == shape;
  }
  if (!match) {
    throw DataError("incompatible checkpoint '" + path.string() + "': parameters do not match its architecture");
  }
  return m;
}

void print_summary(std::ostream& out, const std::string& label, std::size_t subjects, double loss,
                   const objectives::ScoreSummary& s) {
  out << "split: " << label << "  subjects: " << subjects << "  loss: " << loss << "\n";
  out << "            Dice (%)              Sensitivity (%)       Specificity (%)\n";
  out << "        WT     TC     ET       WT     TC     ET       WT     TC     ET\n";
  out << "    ";
  for (const auto& r : s.regions) out << pct(r.dice) << " ";
  out << "  ";
  for (const auto& r : s.regions) out << pct(r.sensitivity) << " ";
  out << "  ";
  for (const auto& r : s.regions) out << pct(r.specificity) << " ";
  out << "\n  per-class Dice (%): ";
  for (std::size_t c = 0; c < s.class_dice.size(); ++c) out << "c" << c << " " << pct(s.class_dice[c]) << "  ";
  out << "\n";
}

std::array<std::size_t, 3> predict_crop(const RunConfig& config) {
  std::array<std::size_t, 3> c = config.crop;
  if (config.dataset.empty()) {
    for (auto& e : c) e = std::min(e, config.phantom_size);
  }
  return c;
}

}  // namespace

RunConfig load_run_config(const ConfigSources& sources) {
  std::vector<std::vector<Setting>> layers;
  if (!sources.config_path.empty()) {
    layers.push_back(parse_settings(read_file(sources.config_path), sources.config_path));
  }
  layers.push_back(environment_settings());
  std::vector<Setting> cli;
  for (const std::string& a : sources.assignments) cli.push_back(parse_assignment(a));
  if (sources.out_dir) cli.emplace_back("out_dir", *sources.out_dir);
  if (sources.seed) cli.emplace_back("seed", std::to_string(*sources.seed));
  layers.push_back(std::move(cli));
  return resolve_config(layers);
}

int cmd_synth(std::uint64_t seed, std::size_t size, std::size_t count, const fs::path& out_dir, std::ostream& out) {
  if (count == 0) throw UsageError("synth: --count must be >= 1");
  make_dir(out_dir);
  for (std::size_t i = 0; i < count; ++i) {
    const data::Subject s = data::phantom_subject(seed, size, i);
    data::save_subject(s, out_dir);
    out << "wrote " << (out_dir / s.id).string() << "\n";
  }
  return kExitOk;
}

int cmd_train(const RunConfig& config, std::ostream& out) {
  const TrainOutcome r = train(config, out);
  out << "finished " << r.steps << " steps; checkpoints: " << r.best.string() << ", " << r.last.string() << "\n";
  return kExitOk;
}

int cmd_evaluate(const fs::path& checkpoint, const std::string& dataset, const std::string& split,
                 const fs::path& out_dir, std::ostream& out) {
  if (split != "train" && split != "test" && split != "all") {
    throw UsageError("evaluate: --split must be train, test or all; got '" + split + "'");
  }
  LoadedModel m = load_model(checkpoint);
  if (!dataset.empty()) m.config.dataset = dataset;
  const Dataset data = open_dataset(m.config);
  check_input_extents(m.config.arch, effective_crop(m.config, data));
  const SplitIndices s = split_indices(m.config, data);
  std::vector<std::size_t> indices;
  if (split == "train" || split == "all") indices.insert(indices.end(), s.train.begin(), s.train.end());
  if (split == "test" || split == "all") indices.insert(indices.end(), s.test.begin(), s.test.end());
  if (indices.empty()) throw DataError("evaluate: the " + split + " split is empty");

  const EvalResult r = evaluate_subjects(m.params, m.config, data, indices);
  make_dir(out_dir);
  const fs::path csv_path = out_dir / ("eval_" + split + ".csv");
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw DataError("cannot write '" + csv_path.string() + "'");
  csv << csv_header() << "\n" << csv_row({m.config.epochs, split, r.loss, 0.0, r.mean}) << "\n";
  print_summary(out, split, indices.size(), r.loss, r.mean);
  out << "metrics written to " << csv_path.string() << "\n";
  return kExitOk;
}

int cmd_predict(const fs::path& checkpoint, const fs::path& subject_dir, const fs::path& out_dir,
                bool export_attention, std::ostream& out) {
  const LoadedModel m = load_model(checkpoint);
  const data::Subject subject = data::load_subject(subject_dir);
  const auto crop = predict_crop(m.config);
  check_input_extents(m.config.arch, crop);
  const data::Sample sample = data::preprocess_subject(subject, crop);

  const bool gated = m.config.arch.attention != network::AttentionMode::kNone;
  std::vector<Tensor<float>> attention;
  const Tensor<float> probs =
      predict_probabilities(m.params, m.config.arch, sample, export_attention && gated ? &attention : nullptr);
  const objectives::LabelVolume pred = objectives::argmax_labels(probs, 0);

  // Paste the cropped prediction back into the subject's full extent.
  const Shape dims{subject.dims[0], subject.dims[1], subject.dims[2]};
  const auto starts = centered_starts(dims, Shape{crop[0], crop[1], crop[2]});
  std::vector<std::uint8_t> full(subject.voxels(), 0);
  std::size_t k = 0;
  for (std::size_t d = 0; d < crop[0]; ++d) {
    for (std::size_t h = 0; h < crop[1]; ++h) {
      for (std::size_t w = 0; w < crop[2]; ++w) {
        full[((starts[0] + d) * dims[1] + starts[1] + h) * dims[2] + starts[2] + w] = pred.labels[k++];
      }
    }
  }
  make_dir(out_dir);
  const fs::path pred_path = out_dir / (subject.id + "_pred.nii.gz");
  data::save_nifti(data::NiftiVolume::from_uint8({dims[2], dims[1], dims[0]}, full), pred_path);
  out << "wrote " << pred_path.string() << " (labels 0-3, full subject extent)\n";

  if (export_attention) {
    if (!gated) {
      out << "no attention maps in this variant\n";
    } else {
      for (std::size_t d = 0; d < attention.size(); ++d) {
        const fs::path p = out_dir / (std::string("attn_final_") + network::decoder_letter(d) + ".nii.gz");
        data::save_nifti(data::NiftiVolume::from_float32({crop[2], crop[1], crop[0]}, attention[d].data()), p);
        out << "wrote " << p.string() << " (cropped grid)\n";
      }
    }
  }
  return kExitOk;
}

int cmd_gradcheck(const std::string& scope, std::size_t instances, std::uint64_t seed, std::ostream& out) {
  std::vector<std::string> scopes;
  if (scope == "all") {
    scopes = gradcheck_scopes();
  } else if (is_gradcheck_scope(scope)) {
    scopes = {scope};
  } else {
    std::string valid = "all";
    for (const auto& s : gradcheck_scopes()) valid += ", " + s;
    throw UsageError("unknown gradcheck scope '" + scope + "'; valid scopes: " + valid);
  }
  if (instances == 0) throw UsageError("gradcheck: --instances must be >= 1");
  bool all_ok = true;
  for (const auto& s : scopes) {
    const GradcheckReport r = run_gradcheck(s, instances, seed);
    char line[256];
    std::snprintf(line, sizeof(line), "%-22s %3zu/%-3zu max rel err %.3e  %7zu elements  %6.2fs  %s", s.c_str(),
                  r.passed, r.instances, r.max_rel_error, r.elements, r.seconds, r.ok() ? "PASS" : "FAIL");
    out << line << "\n";
    if (!r.ok()) out << "    worst: " << r.worst << "\n";
    all_ok = all_ok && r.ok();
  }
  return all_ok ? kExitOk : kExitNumerical;
}

int cmd_info(const RunConfig& config, std::ostream& out) {
  out << network::model_description(config.arch);
  out << "resolved config:\n" << to_text(config);
  return kExitOk;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"ddunet: dual-decoder attention U-Net for 3D brain tumor segmentation"};
  app.require_subcommand(1);
  app.footer(
      "Configuration precedence: built-in defaults < --config file < DDUNET_<KEY> environment variables\n"
      "(e.g. DDUNET_MAX_LR=3e-4) < --set key=value < --out / --seed.\n"
      "Config files hold `key = value` lines; `#` starts a comment; unknown keys are errors.\n"
      "Dataset layout: <root>/<id>/<id>_{t1,t1ce,t2,flair,seg}.nii[.gz], raw labels {0,1,2,4}.\n"
      "Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.");

  ConfigSources sources;
  std::uint64_t seed = 0;
  auto add_config_flags = [&](CLI::App* sub) {
    sub->add_option("--config", sources.config_path, "Config file (key = value)");
    sub->add_option("--set", sources.assignments, "Override one key (repeatable), e.g. --set max_lr=1e-3")
        ->take_all()
        ->allow_extra_args(false);
    sub->add_option_function<std::string>("--out", [&](const std::string& v) { sources.out_dir = v; },
                                          "Run directory (overrides out_dir)");
    sub->add_option_function<std::uint64_t>("--seed", [&](std::uint64_t v) { sources.seed = v; },
                                            "Random seed (overrides seed)");
  };

  auto* synth = app.add_subcommand("synth", "Write a synthetic phantom dataset in the NIfTI directory layout");
  std::size_t size = 32;
  std::size_t count = 4;
  std::string synth_out = "data/phantoms";
  synth->add_option("--size", size, "Cube extent of each phantom (>= 16)")->capture_default_str();
  synth->add_option("--count", count, "Number of subjects")->capture_default_str();
  synth->add_option("--out", synth_out, "Output directory")->capture_default_str();
  synth->add_option("--seed", seed, "Random seed")->capture_default_str();

  auto* train_cmd = app.add_subcommand("train", "Train a model; writes config, metrics CSV and checkpoints");
  add_config_flags(train_cmd);

  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on a data split");
  std::string checkpoint;
  std::string dataset;
  std::string split = "test";
  std::string eval_out = "eval";
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", dataset, "Dataset directory (defaults to the checkpoint's dataset)");
  eval_cmd->add_option("--split", split, "train, test or all")->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "Output directory for the metrics CSV")->capture_default_str();

  auto* predict_cmd = app.add_subcommand("predict", "Predict one subject; optionally export attention maps");
  std::string subject;
  bool export_attention = false;
  std::string predict_out = "prediction";
  predict_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  predict_cmd->add_option("--subject", subject, "Subject directory")->required();
  predict_cmd->add_flag("--export-attention", export_attention, "Write final-level attention maps per decoder");
  predict_cmd->add_option("--out", predict_out, "Output directory")->capture_default_str();

  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient verification in float64");
  std::string scope = "all";
  std::size_t instances = 10;
  gc_cmd->add_option("--scope", scope, "Operation name or 'all'")->capture_default_str();
  gc_cmd->add_option("--instances", instances, "Seeded instances per scope")->capture_default_str();
  gc_cmd->add_option("--seed", seed, "Random seed")->capture_default_str();

  auto* info_cmd = app.add_subcommand("info", "Print the resolved config and model description");
  add_config_flags(info_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(seed, size, count, synth_out, out);
    if (train_cmd->parsed()) return cmd_train(load_run_config(sources), out);
    if (eval_cmd->parsed()) return cmd_evaluate(checkpoint, dataset, split, eval_out, out);
    if (predict_cmd->parsed()) return cmd_predict(checkpoint, subject, predict_out, export_attention, out);
    if (gc_cmd->parsed()) return cmd_gradcheck(scope, instances, seed, out);
    if (info_cmd->parsed()) return cmd_info(load_run_config(sources), out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace ddunet::app
