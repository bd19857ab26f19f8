#pragma once

// Training configuration, the training loop, evaluation, and the ablation
// runner.

#include <functional>
#include <string>
#include <vector>

#include "msfs/data.hpp"
#include "msfs/losses.hpp"
#include "msfs/network.hpp"
#include "msfs/optim.hpp"

namespace msfs {

struct TrainConfig {
  double lr0 = 1e-4;
  int lr_halve_every = 500;
  int epochs = 100;
  int batch = 2;
  AdamConfig adam;      // beta1 = beta2 = 0.9, eps = 1e-8, no weight decay
  LossWeights loss;     // lambda1 = lambda2 = 0.05
  NetworkConfig net;
  unsigned seed = 0;
  int crop = 64;        // random crop size; 0 trains on full images
  bool augment = true;  // horizontal flips
  bool detach_negatives = false;
  int checkpoint_every = 0;  // extra checkpoint every K epochs; 0 = final only

  void validate() const;
};

// Flat key=value file, '#' comments. Unknown keys are rejected.
TrainConfig parse_train_config_text(const std::string& text);
TrainConfig parse_train_config(const std::string& path);
std::string to_text(const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double lr = 0, loss_total = 0, loss_low = 0, loss_high = 0, loss_recon = 0, psnr = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
};

// Returns true to stop training after the current epoch.
using StopFn = std::function<bool(const EpochLog&)>;

// Trains on the dataset. Writes a checkpoint to ckpt_out (plus periodic
// ones per checkpoint_every) and a per-epoch metrics CSV to metrics_csv;
// either path may be empty to skip. resume_from restarts bit-exactly from
// an end-of-epoch checkpoint. On a non-finite loss the last end-of-epoch
// state is dumped to <ckpt_out>.lastgood before rethrowing.
TrainResult train(const PairedDataset& ds, const TrainConfig& cfg, const std::string& ckpt_out,
                  const std::string& metrics_csv, const std::string& resume_from = "",
                  const StopFn& stop = nullptr);

// Same loop, but on a caller-owned network (left in its trained state).
TrainResult train_model(Network<float>& net, const PairedDataset& ds, const TrainConfig& cfg,
                        const std::string& ckpt_out, const std::string& metrics_csv,
                        const std::string& resume_from = "", const StopFn& stop = nullptr);

struct EvalResult {
  double psnr = 0;
  double ssim = 0;
};

// Mean full-image PSNR/SSIM of the network's outputs against ground truth.
EvalResult evaluate(const Network<float>& net, const PairedDataset& ds);

// Mean PSNR of the blurry inputs against ground truth (the baseline a
// deblurrer has to beat).
double input_psnr(const PairedDataset& ds);

struct AblationRow {
  bool fsm = false, csffm = false, clm = false, consistency = false;
  double psnr = 0, ssim = 0;
};

// Trains the six module on/off configurations and evaluates each.
std::vector<AblationRow> ablate(const PairedDataset& ds, const TrainConfig& cfg);

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);

}  // namespace msfs
