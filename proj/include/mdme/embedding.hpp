#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mdme/motion.hpp"
#include "mdme/ops.hpp"
#include "mdme/rng.hpp"
#include "mdme/tensor.hpp"
#include "mdme/wavelet.hpp"

namespace mdme {

struct MdmeConfig {
  std::size_t history = 25;                       // H
  std::size_t goal_dim = 16;                      // n_g
  std::vector<std::size_t> conv_channels{50, 25, 25};  // M_1..M_3
  std::size_t kernel = 5;
  std::size_t levels = 4;                         // J
  std::vector<std::size_t> encoder_hidden{512, 256};
  std::size_t latent = 32;                        // M
  std::vector<std::size_t> decoder_hidden{512, 256, 128};
  std::size_t action_dim = 12;                    // N_q
  std::size_t proprio_dim = 33;
  // Decoder output width; 0 means action_dim.
  std::size_t output_dim = 0;
  double elu_alpha = 1.0;
  double log_sigma_min = -6.0;
  double log_sigma_max = 3.0;

  std::size_t phase_channels() const { return conv_channels.back(); }
  std::size_t decoder_output() const { return output_dim ? output_dim : action_dim; }
  /// Throws ConfigError on inconsistent values.
  void validate() const;
  bool operator==(const MdmeConfig&) const = default;
};

enum class Ablation { full, no_entropy, no_history, no_latest_frame, wavelet_only, vae_only, fft_instead_of_dwt };

/// Keys as spelled on the command line, e.g. "no-history".
const std::vector<std::string>& ablation_names();
std::string ablation_name(Ablation a);
/// Throws ConfigError listing the valid keys.
Ablation parse_ablation(const std::string& name);

enum class LatentMode { sample, mean };

/// Fully connected layer y = x W + b with W: [in x out].
struct Dense {
  DiffTensor w;
  DiffTensor b;

  DiffTensor operator()(const DiffTensor& x) const;
};

struct ConvStage {
  DiffTensor w;  // [C_out x C_in x K]
  DiffTensor gamma;
  DiffTensor beta;
  BatchNormState stats;
};

struct MdmeParams {
  std::vector<ConvStage> conv;  // empty when the structured branch is unused
  std::vector<Dense> encoder;   // hidden layers of the stochastic encoder
  Dense mu_head;
  Dense log_sigma_head;
  std::vector<Dense> decoder;   // hidden layers of the decoder
  Dense output;
};

struct StochasticLatent {
  DiffTensor mu;         // [B x M]
  DiffTensor log_sigma;  // [B x M]
  DiffTensor z;          // [B x M]
};

/// Shannon entropy (bits) of the squared, l2-normalised coefficients of one
/// subband. Returns 0 for an all-zero subband.
DiffTensor subband_entropy(const DiffTensor& coeffs);

/// 1 + 3J entropies in canonical subband order as a [1 x (1 + 3J)] row.
DiffTensor entropy_vector(const WaveletPyramid& pyramid);

/// Magnitude of the real DFT along time of every row of x: [C x H] ->
/// [1 x C * (H / 2 + 1)].
DiffTensor fft_magnitude(const DiffTensor& x);

/// Conv + batchnorm + ELU stages over a batch; returns one [M_3 x H] matrix
/// per window. Batch statistics are taken over every (window, time) column.
std::vector<DiffTensor> conv_front_end(const std::vector<GoalWindow>& windows, MdmeParams& params,
                                       const MdmeConfig& cfg, NormMode mode);

/// Structured branch: [B x (1 + 3J)] entropies.
DiffTensor encode_structured(const std::vector<GoalWindow>& windows, MdmeParams& params, const MdmeConfig& cfg,
                             const WaveletFilters& filters, NormMode mode);

/// Stochastic branch over the flattened windows.
StochasticLatent encode_unstructured(const std::vector<GoalWindow>& windows, const MdmeParams& params,
                                     const MdmeConfig& cfg, Rng& rng, LatentMode mode);

/// 1/2 sum(mu^2 + sigma^2 - 1 - log sigma^2), averaged over batch rows.
DiffTensor kl_to_standard_normal(const StochasticLatent& latent);

/// Decoder over [z^w, z^v, s^g_t, proprio, a_{t-1}]. Undefined parts are
/// left out; the concatenated width must match the decoder's input layer.
DiffTensor decode(const DiffTensor& zw, const DiffTensor& zv, const DiffTensor& latest_goal, const DiffTensor& proprio,
                  const DiffTensor& prev_action, const MdmeParams& params, const MdmeConfig& cfg);

/// MDME network with one ablation applied.
class MdmeModel {
 public:
  MdmeModel(const MdmeConfig& cfg, Ablation ablation, std::uint64_t seed);

  /// Effective configuration (history is 1 for no-history).
  const MdmeConfig& config() const { return cfg_; }
  Ablation ablation() const { return ablation_; }
  MdmeParams& params() { return params_; }
  const MdmeParams& params() const { return params_; }

  bool uses_structured() const { return ablation_ != Ablation::vae_only; }
  bool uses_latent() const { return ablation_ != Ablation::wavelet_only; }
  bool uses_latest_frame() const { return ablation_ != Ablation::no_latest_frame; }

  /// Width of the structured feature entering the decoder.
  std::size_t structured_width() const;
  std::size_t decoder_input_width() const;

  /// Trainable tensors in a fixed order.
  std::vector<std::pair<std::string, DiffTensor>> named_parameters() const;
  /// Batch-norm running statistics as named vectors.
  std::vector<std::pair<std::string, std::vector<double>*>> named_buffers();

  struct Output {
    DiffTensor action;      // [B x output]
    DiffTensor structured;  // [B x structured_width], undefined for vae-only
    StochasticLatent latent;  // undefined members for wavelet-only
  };

  /// proprio: [B x proprio_dim], prev_action: [B x action_dim]; either may
  /// be undefined, meaning zeros.
  Output forward(const std::vector<GoalWindow>& windows, const DiffTensor& proprio, const DiffTensor& prev_action,
                 Rng& rng, LatentMode latent_mode, NormMode norm_mode);

  /// Structured feature for one batch under this model's ablation.
  DiffTensor structured_features(const std::vector<GoalWindow>& windows, NormMode mode);

 private:
  MdmeConfig cfg_;
  Ablation ablation_;
  MdmeParams params_;
  WaveletFilters filters_;
};

}  // namespace mdme
