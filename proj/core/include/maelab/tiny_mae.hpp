#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "maelab/linear_lab.hpp"  // ProbeCase, ProbeRecord
#include "maelab/masking.hpp"
#include "maelab/matrix.hpp"
#include "maelab/rng.hpp"
#include "maelab/tape.hpp"

namespace maelab {

/// Raised when training hits a non-finite loss; the message carries the
/// diagnostic state (step, loss values).
class NumericFailure : public std::runtime_error {
 public:
  explicit NumericFailure(const std::string& what) : std::runtime_error(what) {}
};

enum class RcMaeMode { kMaeOnly, kRcMaeSame, kRcMaeDifferent };

const char* rcmae_mode_name(RcMaeMode m);

/// Training configuration for the tiny masked autoencoder. mode selects plain
/// MAE (teacher unused), or the consistency variants with the teacher seeing
/// the same / an independently drawn mask.
struct RcMaeConfig {
  double mask_ratio = 0.75;
  RcMaeMode mode = RcMaeMode::kRcMaeSame;
  double alpha = 0.999;  // teacher EMA coefficient
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::size_t batch_size = 8;
  long iterations = 1000;
  double consistency_weight = 1.0;

  void validate() const;
};

/// Architecture of the tiny model. Encoder and decoder share the embedding
/// width; the decoder is smaller by block count and MLP width.
struct MaeShape {
  std::size_t n_tokens = 16;
  std::size_t token_dim = 16;  // patch_size^2 * channels
  std::size_t embed = 32;
  std::size_t enc_blocks = 2;
  std::size_t dec_blocks = 1;
  std::size_t enc_mlp_hidden = 128;
  std::size_t dec_mlp_hidden = 64;
};

/// Pre-norm transformer block parameters, single-head attention. Biases and
/// norm parameters are stored as 1 x n matrices so every parameter is a
/// DenseMatrix.
struct BlockParams {
  DenseMatrix ln1_gamma, ln1_beta;
  DenseMatrix wq, bq, wk, bk, wv, bv, wo, bo;
  DenseMatrix ln2_gamma, ln2_beta;
  DenseMatrix mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct MaeParams {
  DenseMatrix patch_embed;       // token_dim x embed
  DenseMatrix patch_embed_bias;  // 1 x embed
  std::vector<BlockParams> encoder;
  DenseMatrix enc_norm_gamma, enc_norm_beta;
  DenseMatrix mask_token;  // 1 x embed
  std::vector<BlockParams> decoder;
  DenseMatrix dec_norm_gamma, dec_norm_beta;
  DenseMatrix output_proj;  // embed x token_dim
  DenseMatrix output_bias;  // 1 x token_dim

  std::vector<DenseMatrix*> collect();
  std::vector<const DenseMatrix*> collect() const;
  std::vector<std::pair<std::string, const DenseMatrix*>> named() const;
};

/// Patch-token encoder/decoder with a student parameter set and an EMA
/// teacher copy. The teacher never receives gradient updates. Positional
/// encodings are fixed sinusoids shared by encoder and decoder.
struct TinyMae {
  MaeShape shape;
  MaeParams student;
  MaeParams teacher;
  MaeParams velocity;     // optimizer momentum state, mirrors student
  DenseMatrix positional; // n_tokens x embed, not trained
  long step = 0;

  static TinyMae init(const MaeShape& shape, Rng& rng);
};

/// Per-parameter gradients aligned with MaeParams::collect() order.
struct ParamGrads {
  std::vector<DenseMatrix> mats;

  static ParamGrads zeros_like(const MaeParams& params);
  void accumulate(const ParamGrads& other, double scale = 1.0);
  void scale_all(double c);
  double norm() const;
};

double dot(const ParamGrads& a, const ParamGrads& b);
double cosine(const ParamGrads& a, const ParamGrads& b);

/// Encoder consumes only visible tokens; the decoder sees encoded visible
/// tokens plus the mask token at masked positions and reconstructs every
/// patch. Returns the full n_tokens x token_dim prediction.
DenseMatrix mae_forward(const TinyMae& model, const DenseMatrix& tokens,
                        const MaskSpec& mask, bool use_teacher);

/// Forward pass recorded on an existing tape. param_nodes holds the leaf ids
/// of every parameter in MaeParams::collect() order, so callers can compose
/// losses and read adjoints after backward.
struct MaeTapeForward {
  Tape::NodeId recon = -1;  // n_tokens x token_dim
  std::vector<Tape::NodeId> param_nodes;
};

MaeTapeForward mae_forward_on_tape(Tape& tape, const MaeParams& params,
                                   const DenseMatrix& positional, const MaeShape& shape,
                                   const DenseMatrix& tokens, const MaskSpec& mask);

/// Loss values only (no gradients): recon loss under masks.student, and the
/// consistency loss against the teacher under masks.teacher when requested.
struct LossValues {
  double recon = 0.0;
  double cons = 0.0;
};

LossValues mae_loss_values(const TinyMae& model, const DenseMatrix& tokens,
                           const MaskPair& masks, bool with_consistency);

/// Mean over masked patches of the per-element squared error; visible patches
/// contribute exactly zero. Targets are patch-normalized originals.
double recon_loss(const DenseMatrix& y_hat, const DenseMatrix& targets,
                  const MaskSpec& mask);

/// Same support as recon_loss but between student and teacher predictions,
/// evaluated on the student's masked set. Teacher values are constants.
double consistency_loss(const DenseMatrix& y_hat_student,
                        const DenseMatrix& y_hat_teacher,
                        const MaskSpec& mask_student);

struct SampleGrads {
  ParamGrads recon;
  ParamGrads cons;
  double loss_recon = 0.0;
  double loss_cons = 0.0;
};

/// Gradients of both loss components w.r.t. all student parameters for one
/// image. Teacher prediction is computed under masks.teacher and enters the
/// consistency loss through a stop-gradient; with_consistency=false skips the
/// teacher entirely.
SampleGrads mae_sample_grads(const TinyMae& model, const DenseMatrix& tokens,
                             const MaskPair& masks, bool with_consistency);

struct StepMetrics {
  double loss_recon = 0.0;
  double loss_cons = 0.0;
  double grad_norm_recon = 0.0;
  double grad_norm_cons = 0.0;
  double cos_recon_vs_cons = 0.0;
};

/// Persistent mask streams for training. Student masks always come from the
/// same stream regardless of mode, so mode changes never perturb them.
struct MaskStreams {
  Rng student;
  Rng teacher;

  static MaskStreams from(const Rng& base) {
    return MaskStreams{base.substream("mask_student"), base.substream("mask_teacher")};
  }
};

/// One optimizer step on the batch: backprop through the student only, SGD
/// with momentum (plus optional weight decay), then the teacher EMA update.
StepMetrics train_step(TinyMae& model, const std::vector<const DenseMatrix*>& batch,
                       const RcMaeConfig& config, MaskStreams& streams);

/// Two-input probe on a deep copy of the model: one train_step-equivalent
/// update on image under a fresh mask, then recon/consistency gradients on
/// the second input per the probe case. other_image supplies kDifferent.
ProbeRecord run_deep_probe(const TinyMae& model, const DenseMatrix& image,
                           const DenseMatrix& other_image, ProbeCase probe_case,
                           const RcMaeConfig& config, Rng& rng);

}  // namespace maelab
