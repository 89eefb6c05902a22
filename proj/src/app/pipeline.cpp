#include "ddunet/app/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>

#include "ddunet/app/checkpoint.hpp"
#include "ddunet/data/augment.hpp"
#include "ddunet/data/phantom.hpp"
#include "ddunet/data/split.hpp"
#include "ddunet/engine/error.hpp"
#include "ddunet/engine/tensor_ops.hpp"
#include "ddunet/optim/adamw.hpp"
#include "ddunet/optim/schedule.hpp"

namespace ddunet::app {
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kCacheBudgetBytes = std::size_t{1} << 30;

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

// Stacks samples along a new batch axis.
std::pair<Tensor<float>, Tensor<float>> stack(const std::vector<const data::Sample*>& batch) {
  const Shape& s = batch.front()->image.shape();
  const std::size_t per = batch.front()->image.numel();
  Tensor<float> x({batch.size(), s[0], s[1], s[2], s[3]});
  Tensor<float> t({batch.size(), s[0], s[1], s[2], s[3]});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    std::copy_n(batch[b]->image.data().begin(), per, x.data().begin() + static_cast<std::ptrdiff_t>(b * per));
    std::copy_n(batch[b]->target.data().begin(), per, t.data().begin() + static_cast<std::ptrdiff_t>(b * per));
  }
  return {std::move(x), std::move(t)};
}

class SampleSource {
 public:
  SampleSource(const Dataset& dataset, std::array<std::size_t, 3> crop) : dataset_(dataset), crop_(crop) {
    const std::size_t bytes = 2 * 4 * crop[0] * crop[1] * crop[2] * sizeof(float) * dataset.ids.size();
    if (bytes <= kCacheBudgetBytes) cache_.resize(dataset.ids.size());
  }

  const data::Sample& get(std::size_t index) {
    if (!cache_.empty()) {
      if (!cache_[index]) cache_[index] = data::preprocess_subject(dataset_.load(index), crop_);
      return *cache_[index];
    }
    scratch_ = data::preprocess_subject(dataset_.load(index), crop_);
    return scratch_;
  }

 private:
  const Dataset& dataset_;
  std::array<std::size_t, 3> crop_;
  std::vector<std::optional<data::Sample>> cache_;
  data::Sample scratch_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

}  // namespace

Dataset open_dataset(const RunConfig& config) {
  Dataset d;
  if (config.dataset.empty()) {
    if (config.phantom_size < data::kMinPhantomSize) {
      throw ShapeError("phantom_size " + std::to_string(config.phantom_size) + " is below the minimum of " +
                       std::to_string(data::kMinPhantomSize));
    }
    d.phantom = true;
    d.source = "phantom(seed=" + std::to_string(config.seed) + ", size=" + std::to_string(config.phantom_size) +
               ", count=" + std::to_string(config.phantom_count) + ")";
    for (std::size_t i = 0; i < config.phantom_count; ++i) {
      d.ids.push_back(data::phantom_id(i));
    }
    const std::uint64_t seed = config.seed;
    const std::size_t size = config.phantom_size;
    d.load = [seed, size](std::size_t i) { return data::phantom_subject(seed, size, i); };
    return d;
  }
  const std::vector<fs::path> dirs = data::list_subjects(config.dataset);
  d.source = config.dataset;
  for (const fs::path& p : dirs) d.ids.push_back(p.filename().string());
  d.load = [dirs](std::size_t i) { return data::load_subject(dirs.at(i)); };
  return d;
}

std::array<std::size_t, 3> effective_crop(const RunConfig& config, const Dataset& dataset) {
  std::array<std::size_t, 3> c = config.crop;
  if (dataset.phantom) {
    for (auto& e : c) e = std::min(e, config.phantom_size);
  }
  return c;
}

void check_input_extents(const network::ArchitectureConfig& arch, const std::array<std::size_t, 3>& crop) {
  const std::size_t div = arch.spatial_divisor();
  for (std::size_t e : crop) {
    if (e % div != 0) {
      throw ShapeError("input extent " + std::to_string(e) + " is not divisible by " + std::to_string(div) +
                       " as required by " + std::to_string(arch.stages()) + " stages; choose a crop or phantom size " +
                       "that is a multiple of " + std::to_string(div));
    }
  }
}

SplitIndices split_indices(const RunConfig& config, const Dataset& dataset) {
  const data::Split s = data::split_dataset(dataset.ids, config.split_ratio, config.seed);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < dataset.ids.size(); ++i) index[dataset.ids[i]] = i;
  SplitIndices out;
  for (const auto& id : s.train) out.train.push_back(index.at(id));
  for (const auto& id : s.test) out.test.push_back(index.at(id));
  return out;
}

std::string csv_header() {
  return "epoch,split,loss,lr,dice_c0,dice_c1,dice_c2,dice_c3,dice_WT,dice_TC,dice_ET,sens_WT,sens_TC,sens_ET,"
         "spec_WT,spec_TC,spec_ET";
}

std::string csv_row(const MetricsRow& r) {
  std::string s = std::to_string(r.epoch) + "," + r.split + "," + num(r.loss) + "," + num(r.lr);
  for (double d : r.scores.class_dice) s += "," + num(d);
  for (const auto& g : r.scores.regions) s += "," + num(g.dice);
  for (const auto& g : r.scores.regions) s += "," + num(g.sensitivity);
  for (const auto& g : r.scores.regions) s += "," + num(g.specificity);
  return s;
}

Tensor<float> predict_probabilities(const network::ParamSet<float>& params, const network::ArchitectureConfig& arch,
                                    const data::Sample& sample, std::vector<Tensor<float>>* attention) {
  const Shape& s = sample.image.shape();
  const Var<float> x(sample.image.reshaped({1, s[0], s[1], s[2], s[3]}));
  network::ForwardOptions opt;
  opt.capture_attention = attention != nullptr;
  const auto out = network::forward(network::bind_parameters<float>(params, nullptr), arch, x, opt);
  if (attention) {
    attention->clear();
    for (const auto& levels : out.attention) attention->push_back(levels.at(0).value());
  }
  return layers::softmax_channels(out.logits).value();
}

EvalResult evaluate_subjects(const network::ParamSet<float>& params, const RunConfig& config, const Dataset& dataset,
                             const std::vector<std::size_t>& indices) {
  EvalResult r;
  if (indices.empty()) return r;
  const auto crop = effective_crop(config, dataset);
  check_input_extents(config.arch, crop);
  double loss = 0.0;
  for (std::size_t i : indices) {
    const data::Sample sample = data::preprocess_subject(dataset.load(i), crop);
    const Tensor<float> probs = predict_probabilities(params, config.arch, sample);
    const Shape& s = sample.target.shape();
    loss += objectives::total_loss(Var<float>(probs), sample.target.reshaped({1, s[0], s[1], s[2], s[3]}), config.loss)
                .value()[0];
    const objectives::LabelVolume pred = objectives::argmax_labels(probs, 0);
    const objectives::LabelVolume truth = objectives::labels_from_one_hot(sample.target);
    r.per_subject.push_back(objectives::summarize(objectives::evaluate_volume(pred, truth)));
  }
  r.loss = loss / static_cast<double>(indices.size());
  r.mean = objectives::mean_summary(r.per_subject);
  return r;
}

TrainOutcome train(const RunConfig& config, std::ostream& log) {
  validate(config);
  const Dataset dataset = open_dataset(config);
  const auto crop = effective_crop(config, dataset);
  check_input_extents(config.arch, crop);
  if (config.arch.in_channels != data::kNumModalities || config.arch.num_classes != objectives::kNumClasses) {
    throw ShapeError("training data provides 4 modalities and 4 classes; config has in_channels=" +
                     std::to_string(config.arch.in_channels) + ", num_classes=" +
                     std::to_string(config.arch.num_classes));
  }
  const SplitIndices split = split_indices(config, dataset);

  const fs::path out_dir = config.out_dir;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create '" + out_dir.string() + "': " + ec.message());
  const std::string config_text = to_text(config);
  write_text(out_dir / "config.txt", config_text);
  {
    std::string s;
    for (std::size_t i : split.train) s += "train," + dataset.ids[i] + "\n";
    for (std::size_t i : split.test) s += "test," + dataset.ids[i] + "\n";
    write_text(out_dir / "split.txt", s);
  }
  log << "data: " << dataset.source << ", crop " << crop[0] << "x" << crop[1] << "x" << crop[2] << ", "
      << split.train.size() << " train / " << split.test.size() << " test subjects\n";

  network::Model<float> model = network::build_model<float>(config.arch, config.seed);
  optim::AdamWState<float> opt = optim::make_adamw_state(model.params, config.adamw);
  const std::size_t steps_per_epoch = (split.train.size() + config.batch_size - 1) / config.batch_size;
  optim::ScheduleConfig schedule = config.schedule;
  schedule.total_steps = std::max<std::size_t>(1, config.epochs * steps_per_epoch);
  schedule.t0 = std::max<std::size_t>(1, config.cawr_t0_epochs * steps_per_epoch);
  log << "model: " << network::count_parameters(model.params) << " parameters, " << steps_per_epoch
      << " steps per epoch, " << config.epochs << " epochs\n";

  TrainOutcome outcome;
  outcome.best = out_dir / "best.ckpt";
  outcome.last = out_dir / "last.ckpt";
  std::ofstream csv(out_dir / "metrics.csv", std::ios::trunc);
  if (!csv) throw DataError("cannot write '" + (out_dir / "metrics.csv").string() + "'");
  csv << csv_header() << '\n';

  SampleSource source(dataset, crop);
  data::AugmentConfig aug;
  aug.probability = config.augment_p;
  double best_wt = -1.0;
  std::size_t step = 0;
  double lr = scheduled_lr(0, schedule);

  if (config.epochs == 0) save_checkpoint({config_text, model.params, std::nullopt}, outcome.best);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order = split.train;
    Rng shuffle(config.seed, Stream::kSplit, epoch + 1);
    for (std::size_t i = order.size(); i-- > 1;) std::swap(order[i], order[shuffle.below(i + 1)]);

    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      std::vector<data::Sample> samples;
      for (std::size_t k = b; k < std::min(order.size(), b + config.batch_size); ++k) {
        const data::Sample& base = source.get(order[k]);
        if (config.augment) {
          Rng rng = data::augment_rng(config.seed, order[k], epoch);
          samples.push_back(data::augment(base, rng, aug));
        } else {
          samples.push_back(base);
        }
      }
      std::vector<const data::Sample*> ptrs;
      for (const auto& s : samples) ptrs.push_back(&s);
      auto [x, target] = stack(ptrs);

      Tape<float> tape;
      const network::ParamBinding<float> binding = network::bind_parameters(model.params, &tape);
      network::ForwardOptions fo;
      fo.mode = layers::Mode::kTrain;
      fo.dropout_seed = config.seed;
      fo.step = step;
      const auto out = network::forward(binding, config.arch, Var<float>(std::move(x)), fo);
      const Var<float> loss = objectives::total_loss(layers::softmax_channels(out.logits), target, config.loss);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw NumericalError("non-finite loss at step " + std::to_string(step) + " (epoch " + std::to_string(epoch) +
                             ")");
      }
      const Gradients<float> grads = backward(tape, loss);
      network::ParamSet<float> g;
      for (const auto& [name, var] : binding) g.emplace(name, grads.of(var));
      lr = scheduled_lr(step, schedule);
      optim::adamw_step(model.params, g, opt, lr);
      epoch_loss += value;
      ++step;
    }
    epoch_loss /= static_cast<double>(std::max<std::size_t>(1, steps_per_epoch));

    const bool last_epoch = epoch + 1 == config.epochs;
    if ((epoch + 1) % config.eval_every != 0 && !last_epoch) {
      log << "epoch " << epoch + 1 << "  loss " << epoch_loss << "  lr " << lr << '\n';
      continue;
    }
    const EvalResult tr = evaluate_subjects(model.params, config, dataset, split.train);
    MetricsRow train_row{epoch + 1, "train", epoch_loss, lr, tr.mean};
    csv << csv_row(train_row) << '\n';
    outcome.rows.push_back(train_row);
    double wt = tr.mean.regions[0].dice;
    log << "epoch " << epoch + 1 << "  loss " << epoch_loss << "  lr " << lr << "  train WT " << wt;
    if (!split.test.empty()) {
      const EvalResult te = evaluate_subjects(model.params, config, dataset, split.test);
      MetricsRow test_row{epoch + 1, "test", te.loss, lr, te.mean};
      csv << csv_row(test_row) << '\n';
      outcome.rows.push_back(test_row);
      wt = te.mean.regions[0].dice;
      log << "  test WT " << wt;
    }
    log << '\n';
    csv.flush();
    if (wt > best_wt) {
      best_wt = wt;
      save_checkpoint({config_text, model.params, std::nullopt}, outcome.best);
    }
  }
  save_checkpoint({config_text, model.params, opt}, outcome.last);
  outcome.steps = step;
  outcome.final_params = std::move(model.params);
  return outcome;
}

}  // namespace ddunet::app
