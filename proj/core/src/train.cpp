#include "msfs/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "msfs/checkpoint.hpp"
#include "msfs/metrics.hpp"

namespace msfs {

void TrainConfig::validate() const {
  if (lr0 <= 0) throw ContractError("TrainConfig: lr0 must be positive");
  if (batch < 1) throw ContractError("TrainConfig: batch must be >= 1");
  if (epochs < 1) throw ContractError("TrainConfig: epochs must be >= 1");
  if (crop != 0 && crop % 4 != 0)
    throw ContractError("TrainConfig: crop must be 0 or divisible by 4");
  adam.validate();
  loss.validate();
  net.validate();
}

// --- config file -----------------------------------------------------------

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ContractError("config: invalid boolean for " + key + ": " + v);
}

}  // namespace

TrainConfig parse_train_config_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    auto notspace = [](unsigned char c) { return !std::isspace(c); };
    line.erase(line.begin(), std::find_if(line.begin(), line.end(), notspace));
    line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(), line.end());
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ContractError("config line " + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    key.erase(std::find_if(key.rbegin(), key.rend(), notspace).base(), key.end());
    value.erase(value.begin(), std::find_if(value.begin(), value.end(), notspace));

    if (key == "lr0") cfg.lr0 = std::stod(value);
    else if (key == "lr_halve_every") cfg.lr_halve_every = std::stoi(value);
    else if (key == "epochs") cfg.epochs = std::stoi(value);
    else if (key == "batch") cfg.batch = std::stoi(value);
    else if (key == "beta1") cfg.adam.beta1 = std::stod(value);
    else if (key == "beta2") cfg.adam.beta2 = std::stod(value);
    else if (key == "eps_opt") cfg.adam.eps = std::stod(value);
    else if (key == "weight_decay") cfg.adam.weight_decay = std::stod(value);
    else if (key == "lambda1") cfg.loss.lambda1 = std::stod(value);
    else if (key == "lambda2") cfg.loss.lambda2 = std::stod(value);
    else if (key == "eps_contrastive") cfg.loss.eps_contrastive = std::stod(value);
    else if (key == "seed") cfg.seed = static_cast<unsigned>(std::stoul(value));
    else if (key == "crop") cfg.crop = std::stoi(value);
    else if (key == "augment") cfg.augment = parse_bool(value, key);
    else if (key == "detach_negatives") cfg.detach_negatives = parse_bool(value, key);
    else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoi(value);
    else if (key == "in_channels") cfg.net.in_channels = std::stoi(value);
    else if (key == "base_channels") cfg.net.base_channels = std::stoi(value);
    else if (key == "scales") cfg.net.scales = std::stoi(value);
    else if (key == "fsm_per_scale") cfg.net.fsm_per_scale = std::stoi(value);
    else if (key == "rcab_count") cfg.net.rcab_count = std::stoi(value);
    else if (key == "attention_ratio") cfg.net.attention_ratio = std::stoi(value);
    else if (key == "leaky_slope") cfg.net.leaky_slope = std::stod(value);
    else if (key == "use_fsm") cfg.net.use_fsm = parse_bool(value, key);
    else if (key == "use_csffm") cfg.net.use_csffm = parse_bool(value, key);
    else throw ContractError("config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

TrainConfig parse_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_train_config_text(buf.str());
}

std::string to_text(const TrainConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "lr0=" << cfg.lr0 << "\n"
      << "lr_halve_every=" << cfg.lr_halve_every << "\n"
      << "epochs=" << cfg.epochs << "\n"
      << "batch=" << cfg.batch << "\n"
      << "beta1=" << cfg.adam.beta1 << "\n"
      << "beta2=" << cfg.adam.beta2 << "\n"
      << "eps_opt=" << cfg.adam.eps << "\n"
      << "weight_decay=" << cfg.adam.weight_decay << "\n"
      << "lambda1=" << cfg.loss.lambda1 << "\n"
      << "lambda2=" << cfg.loss.lambda2 << "\n"
      << "eps_contrastive=" << cfg.loss.eps_contrastive << "\n"
      << "seed=" << cfg.seed << "\n"
      << "crop=" << cfg.crop << "\n"
      << "augment=" << (cfg.augment ? 1 : 0) << "\n"
      << "detach_negatives=" << (cfg.detach_negatives ? 1 : 0) << "\n"
      << "checkpoint_every=" << cfg.checkpoint_every << "\n"
      << "in_channels=" << cfg.net.in_channels << "\n"
      << "base_channels=" << cfg.net.base_channels << "\n"
      << "scales=" << cfg.net.scales << "\n"
      << "fsm_per_scale=" << cfg.net.fsm_per_scale << "\n"
      << "rcab_count=" << cfg.net.rcab_count << "\n"
      << "attention_ratio=" << cfg.net.attention_ratio << "\n"
      << "leaky_slope=" << cfg.net.leaky_slope << "\n"
      << "use_fsm=" << (cfg.net.use_fsm ? 1 : 0) << "\n"
      << "use_csffm=" << (cfg.net.use_csffm ? 1 : 0) << "\n";
  return out.str();
}

// --- training loop ---------------------------------------------------------

namespace {

struct Sample {
  std::size_t pair_index;
  int y0, x0;  // crop offset
  bool flip;
};

// Batch assembly: crop (optionally) and horizontal flip, then stack.
void fill_batch(const PairedDataset& ds, const std::vector<Sample>& samples, int crop,
                Tensor<float>& blurry, Tensor<float>& sharp) {
  const int n = static_cast<int>(samples.size());
  const Image& first = ds.pairs[samples[0].pair_index].blurry;
  const int h = crop > 0 ? crop : first.h;
  const int w = crop > 0 ? crop : first.w;
  blurry = make_tensor<float>({n, first.channels, h, w});
  sharp = make_tensor<float>({n, first.channels, h, w});
  for (int b = 0; b < n; ++b) {
    const Sample& s = samples[b];
    const ImagePair& pair = ds.pairs[s.pair_index];
    for (int c = 0; c < first.channels; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int sx = s.flip ? (w - 1 - x) + s.x0 : x + s.x0;
          blurry->at(b, c, y, x) = pair.blurry.at(c, y + s.y0, sx);
          sharp->at(b, c, y, x) = pair.sharp.at(c, y + s.y0, sx);
        }
  }
}

Checkpoint snapshot(Network<float>& net, const AdamW<float>& opt, std::uint32_t epoch,
                    const TrainConfig& cfg) {
  Checkpoint ckpt;
  for (const auto& [name, t] : net.params()) {
    auto copy = make_tensor<float>(t->shape, true);
    copy->data = t->data;
    ckpt.params.emplace_back(name, copy);
  }
  ckpt.has_optimizer = true;
  for (const auto& st : opt.states()) {
    ckpt.opt_m.push_back(st.m);
    ckpt.opt_v.push_back(st.v);
  }
  ckpt.opt_step = opt.step_count();
  ckpt.epoch = epoch;
  ckpt.config_text = to_text(cfg);
  return ckpt;
}

double batch_psnr(const Tensor<float>& out, const Tensor<float>& gt) {
  double acc = 0;
  for (int b = 0; b < out->shape.n; ++b) {
    Image a = tensor_to_image(out, b);
    Image g = tensor_to_image(gt, b);
    double p = psnr(a, g, 1.0);
    if (std::isinf(p)) p = 99.0;  // clip the identical-image sentinel for averaging
    acc += p;
  }
  return acc / out->shape.n;
}

}  // namespace

TrainResult train(const PairedDataset& ds, const TrainConfig& cfg, const std::string& ckpt_out,
                  const std::string& metrics_csv, const std::string& resume_from,
                  const StopFn& stop) {
  cfg.validate();
  Network<float> net = make_network<float>(cfg.net, cfg.seed);
  return train_model(net, ds, cfg, ckpt_out, metrics_csv, resume_from, stop);
}

TrainResult train_model(Network<float>& net, const PairedDataset& ds, const TrainConfig& cfg,
                        const std::string& ckpt_out, const std::string& metrics_csv,
                        const std::string& resume_from, const StopFn& stop) {
  cfg.validate();
  if (ds.empty()) throw IngestError("train: empty dataset");
  for (const auto& pair : ds.pairs) {
    if (cfg.crop > 0 && (pair.blurry.h < cfg.crop || pair.blurry.w < cfg.crop))
      throw IngestError("train: image " + pair.name + " smaller than crop size");
    if (pair.blurry.channels != cfg.net.in_channels)
      throw IngestError("train: image " + pair.name + " channel count does not match config");
  }

  ParamList<float> params = net.params();
  AdamW<float> opt(params, cfg.adam);

  int start_epoch = 0;
  if (!resume_from.empty()) {
    Checkpoint ckpt = load_checkpoint(resume_from);
    restore_params(ckpt, params);
    if (ckpt.has_optimizer) {
      auto& states = opt.states();
      for (std::size_t i = 0; i < states.size(); ++i) {
        states[i].m = ckpt.opt_m[i];
        states[i].v = ckpt.opt_v[i];
      }
      opt.set_step_count(ckpt.opt_step);
    }
    start_epoch = static_cast<int>(ckpt.epoch);
  }

  std::ofstream metrics;
  if (!metrics_csv.empty()) {
    metrics.open(metrics_csv);
    if (!metrics) throw IngestError("cannot write metrics CSV " + metrics_csv);
    metrics << "epoch,lr,loss_total,loss_low,loss_high,loss_recon,psnr\n";
  }

  TrainResult result;
  Checkpoint last_good = snapshot(net, opt, static_cast<std::uint32_t>(start_epoch), cfg);
  const bool need_taps = cfg.loss.lambda1 > 0 || cfg.loss.lambda2 > 0;

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg.lr0, cfg.lr_halve_every);
    // Per-epoch RNG derived from (seed, epoch) so resuming at an epoch
    // boundary replays the identical sample stream.
    std::seed_seq seq{cfg.seed, static_cast<unsigned>(epoch), 0x9e3779b9u};
    std::mt19937 rng(seq);

    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    std::size_t batches = 0;

    try {
      for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
        std::vector<Sample> samples;
        for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch); ++i) {
          const ImagePair& pair = ds.pairs[order[i]];
          Sample s{order[i], 0, 0, false};
          if (cfg.crop > 0 && (pair.blurry.h > cfg.crop || pair.blurry.w > cfg.crop)) {
            std::uniform_int_distribution<int> dy(0, pair.blurry.h - cfg.crop);
            std::uniform_int_distribution<int> dx(0, pair.blurry.w - cfg.crop);
            s.y0 = dy(rng);
            s.x0 = dx(rng);
          }
          if (cfg.augment) s.flip = rng() & 1;
          samples.push_back(s);
        }
        Tensor<float> blurry, gt;
        fill_batch(ds, samples, cfg.crop, blurry, gt);

        Tape<float> tape;
        ScaleTaps<float> taps;
        Tensor<float> sharp = net.forward(&tape, blurry, taps);
        if (need_taps) net.encode_output(&tape, sharp, taps);
        LossBreakdown<float> loss =
            loss_total(&tape, sharp, gt, taps, cfg.loss, cfg.detach_negatives);
        if (!std::isfinite(loss.total->data[0]))
          throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch));
        tape.backward(loss.total);
        opt.step(params, lr);
        for (const auto& [name, p] : params) p->zero_grad();

        log.loss_total += loss.total->data[0];
        log.loss_low += loss.low->data[0];
        log.loss_high += loss.high->data[0];
        log.loss_recon += loss.recon->data[0];
        log.psnr += batch_psnr(sharp, gt);
        ++batches;
      }
    } catch (const NumericalError&) {
      if (!ckpt_out.empty()) save_checkpoint(ckpt_out + ".lastgood", last_good);
      throw;
    }

    log.loss_total /= batches;
    log.loss_low /= batches;
    log.loss_high /= batches;
    log.loss_recon /= batches;
    log.psnr /= batches;
    result.log.push_back(log);
    if (metrics.is_open()) {
      metrics << log.epoch << "," << log.lr << "," << log.loss_total << "," << log.loss_low << ","
              << log.loss_high << "," << log.loss_recon << "," << log.psnr << "\n";
      metrics.flush();
    }

    last_good = snapshot(net, opt, static_cast<std::uint32_t>(epoch + 1), cfg);
    if (!ckpt_out.empty() && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(ckpt_out, last_good);
    if (stop && stop(log)) break;
  }

  if (!ckpt_out.empty()) save_checkpoint(ckpt_out, last_good);
  return result;
}

EvalResult evaluate(const Network<float>& net, const PairedDataset& ds) {
  if (ds.empty()) throw IngestError("evaluate: empty dataset");
  EvalResult res;
  for (const auto& pair : ds.pairs) {
    Tensor<float> blurry = image_to_tensor<float>(pair.blurry);
    ScaleTaps<float> taps;
    Tensor<float> out = net.forward(nullptr, blurry, taps);
    Image img = tensor_to_image(out);
    double p = psnr(img, pair.sharp, 1.0);
    if (std::isinf(p)) p = 99.0;
    res.psnr += p;
    res.ssim += ssim(img, pair.sharp);
  }
  res.psnr /= static_cast<double>(ds.size());
  res.ssim /= static_cast<double>(ds.size());
  return res;
}

double input_psnr(const PairedDataset& ds) {
  if (ds.empty()) throw IngestError("input_psnr: empty dataset");
  double acc = 0;
  for (const auto& pair : ds.pairs) {
    double p = psnr(pair.blurry, pair.sharp, 1.0);
    if (std::isinf(p)) p = 99.0;
    acc += p;
  }
  return acc / static_cast<double>(ds.size());
}

// --- ablation --------------------------------------------------------------

std::vector<AblationRow> ablate(const PairedDataset& ds, const TrainConfig& cfg) {
  // the six module on/off combinations of the ablation study
  const bool table[6][4] = {
      // FSM, CSFFM, CLM, Consistency
      {false, true, true, false},
      {false, true, false, true},
      {true, false, true, true},
      {true, true, false, true},
      {true, true, true, false},
      {true, true, true, true},
  };
  std::vector<AblationRow> rows;
  for (const auto& flags : table) {
    TrainConfig run = cfg;
    run.net.use_fsm = flags[0];
    run.net.use_csffm = flags[1];
    if (!flags[2]) run.loss.lambda1 = 0;
    if (!flags[3]) run.loss.lambda2 = 0;

    Network<float> net = make_network<float>(run.net, run.seed);
    train_model(net, ds, run, "", "");
    EvalResult eval = evaluate(net, ds);

    AblationRow row;
    row.fsm = flags[0];
    row.csffm = flags[1];
    row.clm = flags[2];
    row.consistency = flags[3];
    row.psnr = eval.psnr;
    row.ssim = eval.ssim;
    rows.push_back(row);
  }
  return rows;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path);
  out << "fsm,csffm,clm,consistency,psnr,ssim\n";
  for (const auto& r : rows)
    out << r.fsm << "," << r.csffm << "," << r.clm << "," << r.consistency << "," << r.psnr << ","
        << r.ssim << "\n";
}

}  // namespace msfs
