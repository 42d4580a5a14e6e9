#include "maelab/tiny_mae.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace maelab {

const char* rcmae_mode_name(RcMaeMode m) {
  switch (m) {
    case RcMaeMode::kMaeOnly: return "mae_only";
    case RcMaeMode::kRcMaeSame: return "rcmae_s";
    case RcMaeMode::kRcMaeDifferent: return "rcmae_d";
  }
  return "?";
}

void RcMaeConfig::validate() const {
  if (mask_ratio <= 0.0 || mask_ratio >= 1.0)
    throw ContractViolation("RcMaeConfig: mask_ratio must lie in (0, 1)");
  if (alpha <= 0.0 || alpha >= 1.0)
    throw ContractViolation("RcMaeConfig: alpha must lie in (0, 1)");
  if (lr <= 0.0) throw ContractViolation("RcMaeConfig: lr must be positive");
  if (batch_size == 0) throw ContractViolation("RcMaeConfig: batch_size must be positive");
  if (iterations <= 0) throw ContractViolation("RcMaeConfig: iterations must be positive");
}

namespace {

template <typename Params, typename Fn>
void visit_params(Params& p, Fn&& fn) {
  fn("patch_embed", p.patch_embed);
  fn("patch_embed_bias", p.patch_embed_bias);
  auto visit_block = [&fn](const std::string& prefix, auto& blk) {
    fn(prefix + ".ln1_gamma", blk.ln1_gamma);
    fn(prefix + ".ln1_beta", blk.ln1_beta);
    fn(prefix + ".wq", blk.wq);
    fn(prefix + ".bq", blk.bq);
    fn(prefix + ".wk", blk.wk);
    fn(prefix + ".bk", blk.bk);
    fn(prefix + ".wv", blk.wv);
    fn(prefix + ".bv", blk.bv);
    fn(prefix + ".wo", blk.wo);
    fn(prefix + ".bo", blk.bo);
    fn(prefix + ".ln2_gamma", blk.ln2_gamma);
    fn(prefix + ".ln2_beta", blk.ln2_beta);
    fn(prefix + ".mlp_w1", blk.mlp_w1);
    fn(prefix + ".mlp_b1", blk.mlp_b1);
    fn(prefix + ".mlp_w2", blk.mlp_w2);
    fn(prefix + ".mlp_b2", blk.mlp_b2);
  };
  for (std::size_t i = 0; i < p.encoder.size(); ++i)
    visit_block("enc" + std::to_string(i), p.encoder[i]);
  fn("enc_norm_gamma", p.enc_norm_gamma);
  fn("enc_norm_beta", p.enc_norm_beta);
  fn("mask_token", p.mask_token);
  for (std::size_t i = 0; i < p.decoder.size(); ++i)
    visit_block("dec" + std::to_string(i), p.decoder[i]);
  fn("dec_norm_gamma", p.dec_norm_gamma);
  fn("dec_norm_beta", p.dec_norm_beta);
  fn("output_proj", p.output_proj);
  fn("output_bias", p.output_bias);
}

BlockParams init_block(std::size_t embed, std::size_t mlp_hidden, Rng& rng) {
  auto weight = [&rng](std::size_t r, std::size_t c) {
    DenseMatrix m(r, c);
    const double s = 1.0 / std::sqrt(static_cast<double>(r));
    for (double& v : m.data) v = s * rng.normal();
    return m;
  };
  BlockParams b;
  b.ln1_gamma = DenseMatrix(1, embed, 1.0);
  b.ln1_beta = DenseMatrix(1, embed, 0.0);
  b.wq = weight(embed, embed);
  b.bq = DenseMatrix(1, embed, 0.0);
  b.wk = weight(embed, embed);
  b.bk = DenseMatrix(1, embed, 0.0);
  b.wv = weight(embed, embed);
  b.bv = DenseMatrix(1, embed, 0.0);
  b.wo = weight(embed, embed);
  b.bo = DenseMatrix(1, embed, 0.0);
  b.ln2_gamma = DenseMatrix(1, embed, 1.0);
  b.ln2_beta = DenseMatrix(1, embed, 0.0);
  b.mlp_w1 = weight(embed, mlp_hidden);
  b.mlp_b1 = DenseMatrix(1, mlp_hidden, 0.0);
  b.mlp_w2 = weight(mlp_hidden, embed);
  b.mlp_b2 = DenseMatrix(1, embed, 0.0);
  return b;
}

DenseMatrix sincos_positional(std::size_t n_tokens, std::size_t embed) {
  DenseMatrix pos(n_tokens, embed);
  for (std::size_t t = 0; t < n_tokens; ++t) {
    for (std::size_t j = 0; j < embed; ++j) {
      const double pair_idx = static_cast<double>(j / 2);
      const double freq =
          std::pow(10000.0, -2.0 * pair_idx / static_cast<double>(embed));
      const double angle = static_cast<double>(t) * freq;
      pos(t, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pos;
}

// Leaf ids for every parameter, aligned with collect() order.
struct ParamNodes {
  std::vector<Tape::NodeId> ids;
};

ParamNodes push_param_leaves(Tape& tape, const MaeParams& params) {
  ParamNodes nodes;
  visit_params(params, [&](const std::string&, const DenseMatrix& m) {
    nodes.ids.push_back(tape.leaf(m));
  });
  return nodes;
}

struct BlockNodes {
  Tape::NodeId ln1_gamma, ln1_beta;
  Tape::NodeId wq, bq, wk, bk, wv, bv, wo, bo;
  Tape::NodeId ln2_gamma, ln2_beta;
  Tape::NodeId mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// collect() order is the visit order, so block node ids can be sliced out
// positionally.
struct NodeCursor {
  const std::vector<Tape::NodeId>* ids;
  std::size_t at = 0;
  Tape::NodeId next() { return (*ids)[at++]; }
};

BlockNodes next_block(NodeCursor& cur) {
  BlockNodes b;
  b.ln1_gamma = cur.next();
  b.ln1_beta = cur.next();
  b.wq = cur.next();
  b.bq = cur.next();
  b.wk = cur.next();
  b.bk = cur.next();
  b.wv = cur.next();
  b.bv = cur.next();
  b.wo = cur.next();
  b.bo = cur.next();
  b.ln2_gamma = cur.next();
  b.ln2_beta = cur.next();
  b.mlp_w1 = cur.next();
  b.mlp_b1 = cur.next();
  b.mlp_w2 = cur.next();
  b.mlp_b2 = cur.next();
  return b;
}

Tape::NodeId block_forward(Tape& t, const BlockNodes& p, Tape::NodeId h, double attn_scale) {
  const Tape::NodeId ln1 = t.layer_norm_rows(h, p.ln1_gamma, p.ln1_beta);
  const Tape::NodeId q = t.add_rowvec(t.matmul(ln1, p.wq), p.bq);
  const Tape::NodeId k = t.add_rowvec(t.matmul(ln1, p.wk), p.bk);
  const Tape::NodeId v = t.add_rowvec(t.matmul(ln1, p.wv), p.bv);
  const Tape::NodeId attn = t.softmax_rows(t.scale(t.matmul(q, t.transpose(k)), attn_scale));
  const Tape::NodeId ctx = t.add_rowvec(t.matmul(t.matmul(attn, v), p.wo), p.bo);
  const Tape::NodeId h2 = t.add(h, ctx);
  const Tape::NodeId ln2 = t.layer_norm_rows(h2, p.ln2_gamma, p.ln2_beta);
  const Tape::NodeId m1 = t.gelu(t.add_rowvec(t.matmul(ln2, p.mlp_w1), p.mlp_b1));
  const Tape::NodeId m2 = t.add_rowvec(t.matmul(m1, p.mlp_w2), p.mlp_b2);
  return t.add(h2, m2);
}

}  // namespace

MaeTapeForward mae_forward_on_tape(Tape& tape, const MaeParams& params,
                                   const DenseMatrix& positional, const MaeShape& shape,
                                   const DenseMatrix& tokens, const MaskSpec& mask) {
  if (tokens.rows != mask.total)
    throw ContractViolation("mae_forward: token row count must equal mask.total");
  if (tokens.rows != shape.n_tokens || tokens.cols != shape.token_dim)
    throw ContractViolation("mae_forward: token shape mismatch");
  if (mask.visible_idx.empty())
    throw ContractViolation("mae_forward: encoder needs at least one visible token");

  MaeTapeForward out;
  out.param_nodes = push_param_leaves(tape, params).ids;
  NodeCursor cur{&out.param_nodes};

  const Tape::NodeId patch_embed = cur.next();
  const Tape::NodeId patch_embed_bias = cur.next();
  std::vector<BlockNodes> enc_blocks;
  for (std::size_t i = 0; i < params.encoder.size(); ++i) enc_blocks.push_back(next_block(cur));
  const Tape::NodeId enc_norm_gamma = cur.next();
  const Tape::NodeId enc_norm_beta = cur.next();
  const Tape::NodeId mask_token = cur.next();
  std::vector<BlockNodes> dec_blocks;
  for (std::size_t i = 0; i < params.decoder.size(); ++i) dec_blocks.push_back(next_block(cur));
  const Tape::NodeId dec_norm_gamma = cur.next();
  const Tape::NodeId dec_norm_beta = cur.next();
  const Tape::NodeId output_proj = cur.next();
  const Tape::NodeId output_bias = cur.next();

  const Tape::NodeId tokens_node = tape.constant(tokens);
  const Tape::NodeId pos_node = tape.constant(positional);
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(shape.embed));

  // Encoder: visible tokens only.
  const Tape::NodeId visible_tokens = tape.gather_rows(tokens_node, mask.visible_idx);
  Tape::NodeId h = tape.add(
      tape.add_rowvec(tape.matmul(visible_tokens, patch_embed), patch_embed_bias),
      tape.gather_rows(pos_node, mask.visible_idx));
  for (const BlockNodes& blk : enc_blocks) h = block_forward(tape, blk, h, attn_scale);
  h = tape.layer_norm_rows(h, enc_norm_gamma, enc_norm_beta);

  // Decoder: encoded visible tokens scattered back, mask token at masked
  // positions, positions added for the full sequence.
  Tape::NodeId full = tape.scatter_rows(h, mask.visible_idx, shape.n_tokens);
  if (!mask.masked_idx.empty()) {
    const Tape::NodeId tiled = tape.gather_rows(
        mask_token, std::vector<std::size_t>(mask.masked_idx.size(), 0));
    full = tape.add(full, tape.scatter_rows(tiled, mask.masked_idx, shape.n_tokens));
  }
  Tape::NodeId d = tape.add(full, pos_node);
  for (const BlockNodes& blk : dec_blocks) d = block_forward(tape, blk, d, attn_scale);
  d = tape.layer_norm_rows(d, dec_norm_gamma, dec_norm_beta);
  out.recon = tape.add_rowvec(tape.matmul(d, output_proj), output_bias);
  return out;
}

namespace {

ParamGrads adjoints_to_grads(const Tape& tape, const std::vector<Tape::NodeId>& nodes) {
  ParamGrads g;
  g.mats.reserve(nodes.size());
  for (Tape::NodeId id : nodes) g.mats.push_back(tape.adjoint(id));
  return g;
}

}  // namespace

std::vector<DenseMatrix*> MaeParams::collect() {
  std::vector<DenseMatrix*> out;
  visit_params(*this, [&](const std::string&, DenseMatrix& m) { out.push_back(&m); });
  return out;
}

std::vector<const DenseMatrix*> MaeParams::collect() const {
  std::vector<const DenseMatrix*> out;
  visit_params(*this, [&](const std::string&, const DenseMatrix& m) { out.push_back(&m); });
  return out;
}

std::vector<std::pair<std::string, const DenseMatrix*>> MaeParams::named() const {
  std::vector<std::pair<std::string, const DenseMatrix*>> out;
  visit_params(*this, [&](const std::string& name, const DenseMatrix& m) {
    out.emplace_back(name, &m);
  });
  return out;
}

TinyMae TinyMae::init(const MaeShape& shape, Rng& rng) {
  TinyMae model;
  model.shape = shape;

  MaeParams p;
  p.patch_embed = DenseMatrix(shape.token_dim, shape.embed);
  {
    const double s = 1.0 / std::sqrt(static_cast<double>(shape.token_dim));
    for (double& v : p.patch_embed.data) v = s * rng.normal();
  }
  p.patch_embed_bias = DenseMatrix(1, shape.embed, 0.0);
  for (std::size_t i = 0; i < shape.enc_blocks; ++i)
    p.encoder.push_back(init_block(shape.embed, shape.enc_mlp_hidden, rng));
  p.enc_norm_gamma = DenseMatrix(1, shape.embed, 1.0);
  p.enc_norm_beta = DenseMatrix(1, shape.embed, 0.0);
  p.mask_token = DenseMatrix(1, shape.embed);
  for (double& v : p.mask_token.data) v = 0.02 * rng.normal();
  for (std::size_t i = 0; i < shape.dec_blocks; ++i)
    p.decoder.push_back(init_block(shape.embed, shape.dec_mlp_hidden, rng));
  p.dec_norm_gamma = DenseMatrix(1, shape.embed, 1.0);
  p.dec_norm_beta = DenseMatrix(1, shape.embed, 0.0);
  p.output_proj = DenseMatrix(shape.embed, shape.token_dim);
  {
    const double s = 1.0 / std::sqrt(static_cast<double>(shape.embed));
    for (double& v : p.output_proj.data) v = s * rng.normal();
  }
  p.output_bias = DenseMatrix(1, shape.token_dim, 0.0);

  model.student = p;
  model.teacher = p;  // teacher starts as an exact copy
  model.velocity = p;
  for (DenseMatrix* v : model.velocity.collect())
    for (double& x : v->data) x = 0.0;
  model.positional = sincos_positional(shape.n_tokens, shape.embed);
  return model;
}

ParamGrads ParamGrads::zeros_like(const MaeParams& params) {
  ParamGrads g;
  for (const DenseMatrix* p : params.collect())
    g.mats.emplace_back(p->rows, p->cols, 0.0);
  return g;
}

void ParamGrads::accumulate(const ParamGrads& other, double scale) {
  if (mats.size() != other.mats.size())
    throw ContractViolation("ParamGrads::accumulate: size mismatch");
  for (std::size_t i = 0; i < mats.size(); ++i)
    add_scaled_in_place(mats[i], other.mats[i], scale);
}

void ParamGrads::scale_all(double c) {
  for (DenseMatrix& m : mats) scale_in_place(m, c);
}

double ParamGrads::norm() const {
  double acc = 0.0;
  for (const DenseMatrix& m : mats)
    for (double v : m.data) acc += v * v;
  return std::sqrt(acc);
}

double dot(const ParamGrads& a, const ParamGrads& b) {
  if (a.mats.size() != b.mats.size())
    throw ContractViolation("ParamGrads dot: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.mats.size(); ++i) acc += dot_flat(a.mats[i], b.mats[i]);
  return acc;
}

double cosine(const ParamGrads& a, const ParamGrads& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

DenseMatrix mae_forward(const TinyMae& model, const DenseMatrix& tokens,
                        const MaskSpec& mask, bool use_teacher) {
  Tape tape;
  const MaeParams& params = use_teacher ? model.teacher : model.student;
  const MaeTapeForward fwd =
      mae_forward_on_tape(tape, params, model.positional, model.shape, tokens, mask);
  return tape.value(fwd.recon);
}

LossValues mae_loss_values(const TinyMae& model, const DenseMatrix& tokens,
                           const MaskPair& masks, bool with_consistency) {
  LossValues out;
  const DenseMatrix student_pred = mae_forward(model, tokens, masks.student, false);
  out.recon = recon_loss(student_pred, patch_normalize_tokens(tokens), masks.student);
  if (with_consistency) {
    const DenseMatrix teacher_pred = mae_forward(model, tokens, masks.teacher, true);
    out.cons = consistency_loss(student_pred, teacher_pred, masks.student);
  }
  return out;
}

namespace {

double masked_row_mse_value(const DenseMatrix& a, const DenseMatrix& b,
                            const MaskSpec& mask, const char* who) {
  if (!a.same_shape(b)) throw ContractViolation(std::string(who) + ": shape mismatch");
  if (a.rows != mask.total)
    throw ContractViolation(std::string(who) + ": row count must equal mask.total");
  if (mask.masked_idx.empty())
    throw ContractViolation(std::string(who) + ": empty mask, loss undefined");
  double acc = 0.0;
  for (std::size_t r : mask.masked_idx)
    for (std::size_t j = 0; j < a.cols; ++j) {
      const double d = a(r, j) - b(r, j);
      acc += d * d;
    }
  return acc / static_cast<double>(mask.masked_idx.size() * a.cols);
}

}  // namespace

double recon_loss(const DenseMatrix& y_hat, const DenseMatrix& targets,
                  const MaskSpec& mask) {
  return masked_row_mse_value(y_hat, targets, mask, "recon_loss");
}

double consistency_loss(const DenseMatrix& y_hat_student,
                        const DenseMatrix& y_hat_teacher,
                        const MaskSpec& mask_student) {
  return masked_row_mse_value(y_hat_student, y_hat_teacher, mask_student,
                              "consistency_loss");
}

SampleGrads mae_sample_grads(const TinyMae& model, const DenseMatrix& tokens,
                             const MaskPair& masks, bool with_consistency) {
  Tape tape;
  const MaeTapeForward student = mae_forward_on_tape(
      tape, model.student, model.positional, model.shape, tokens, masks.student);

  const DenseMatrix targets = patch_normalize_tokens(tokens);
  const Tape::NodeId target_node = tape.constant(targets);
  const Tape::NodeId loss_r =
      tape.masked_row_mse(student.recon, target_node, masks.student.masked_idx);

  SampleGrads out;
  out.loss_recon = tape.value(loss_r)(0, 0);

  if (with_consistency) {
    const MaeTapeForward teacher = mae_forward_on_tape(
        tape, model.teacher, model.positional, model.shape, tokens, masks.teacher);
    const Tape::NodeId teacher_target = tape.stop_grad(teacher.recon);
    const Tape::NodeId loss_c =
        tape.masked_row_mse(student.recon, teacher_target, masks.student.masked_idx);
    out.loss_cons = tape.value(loss_c)(0, 0);
    tape.backward(loss_r);
    out.recon = adjoints_to_grads(tape, student.param_nodes);
    tape.backward(loss_c);
    out.cons = adjoints_to_grads(tape, student.param_nodes);
  } else {
    tape.backward(loss_r);
    out.recon = adjoints_to_grads(tape, student.param_nodes);
    out.cons = ParamGrads::zeros_like(model.student);
  }
  return out;
}

namespace {

MaskPair draw_train_masks(const RcMaeConfig& config, std::size_t n_tokens,
                          MaskStreams& streams) {
  MaskPair pair;
  pair.student = draw_mask(n_tokens, config.mask_ratio, streams.student);
  switch (config.mode) {
    case RcMaeMode::kMaeOnly:
    case RcMaeMode::kRcMaeSame:
      pair.mode = MaskPairMode::kSame;
      pair.teacher = pair.student;
      break;
    case RcMaeMode::kRcMaeDifferent:
      pair.mode = MaskPairMode::kDifferent;
      pair.teacher = draw_mask(n_tokens, config.mask_ratio, streams.teacher);
      break;
  }
  return pair;
}

void apply_student_update(TinyMae& model, const ParamGrads& grad,
                          const RcMaeConfig& config) {
  std::vector<DenseMatrix*> params = model.student.collect();
  std::vector<DenseMatrix*> velocity = model.velocity.collect();
  for (std::size_t i = 0; i < params.size(); ++i) {
    DenseMatrix g = grad.mats[i];
    if (config.weight_decay != 0.0) add_scaled_in_place(g, *params[i], config.weight_decay);
    scale_in_place(*velocity[i], config.momentum);
    add_scaled_in_place(*velocity[i], g, 1.0);
    add_scaled_in_place(*params[i], *velocity[i], -config.lr);
  }
  model.step += 1;
}

void ema_update_teacher(TinyMae& model, double alpha) {
  std::vector<DenseMatrix*> teacher = model.teacher.collect();
  std::vector<const DenseMatrix*> student = std::as_const(model.student).collect();
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    scale_in_place(*teacher[i], alpha);
    add_scaled_in_place(*teacher[i], *student[i], 1.0 - alpha);
  }
}

}  // namespace

StepMetrics train_step(TinyMae& model, const std::vector<const DenseMatrix*>& batch,
                       const RcMaeConfig& config, MaskStreams& streams) {
  config.validate();
  if (batch.empty()) throw ContractViolation("train_step: empty batch");

  const bool with_consistency = config.mode != RcMaeMode::kMaeOnly;
  ParamGrads grad_r = ParamGrads::zeros_like(model.student);
  ParamGrads grad_c = ParamGrads::zeros_like(model.student);
  StepMetrics metrics;

  for (const DenseMatrix* tokens : batch) {
    const MaskPair masks = draw_train_masks(config, model.shape.n_tokens, streams);
    const SampleGrads g = mae_sample_grads(model, *tokens, masks, with_consistency);
    grad_r.accumulate(g.recon);
    if (with_consistency) grad_c.accumulate(g.cons);
    metrics.loss_recon += g.loss_recon;
    metrics.loss_cons += g.loss_cons;
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  grad_r.scale_all(inv_b);
  grad_c.scale_all(inv_b);
  metrics.loss_recon *= inv_b;
  metrics.loss_cons *= inv_b;

  if (!std::isfinite(metrics.loss_recon) || !std::isfinite(metrics.loss_cons)) {
    std::ostringstream oss;
    oss << "train_step: non-finite loss at step " << model.step
        << " (recon=" << metrics.loss_recon << ", cons=" << metrics.loss_cons
        << ", mode=" << rcmae_mode_name(config.mode) << ")";
    throw NumericFailure(oss.str());
  }

  metrics.grad_norm_recon = grad_r.norm();
  metrics.grad_norm_cons = grad_c.norm();
  metrics.cos_recon_vs_cons = with_consistency ? cosine(grad_r, grad_c) : 0.0;

  ParamGrads total = grad_r;
  if (with_consistency && config.consistency_weight != 0.0)
    total.accumulate(grad_c, config.consistency_weight);
  apply_student_update(model, total, config);
  if (with_consistency) ema_update_teacher(model, config.alpha);
  return metrics;
}

ProbeRecord run_deep_probe(const TinyMae& model, const DenseMatrix& image,
                           const DenseMatrix& other_image, ProbeCase probe_case,
                           const RcMaeConfig& config, Rng& rng) {
  TinyMae clone = model;
  const std::size_t n = clone.shape.n_tokens;
  const bool with_consistency = config.mode != RcMaeMode::kMaeOnly;

  auto draw_pair = [&](const MaskSpec* reuse_student) {
    MaskPair pair;
    pair.student = reuse_student ? *reuse_student : draw_mask(n, config.mask_ratio, rng);
    if (config.mode == RcMaeMode::kRcMaeDifferent) {
      pair.mode = MaskPairMode::kDifferent;
      pair.teacher = draw_mask(n, config.mask_ratio, rng);
    } else {
      pair.mode = MaskPairMode::kSame;
      pair.teacher = pair.student;
    }
    return pair;
  };

  // Step on input 1.
  const MaskPair masks1 = draw_pair(nullptr);
  const SampleGrads g1 = mae_sample_grads(clone, image, masks1, with_consistency);
  ParamGrads g1_full = g1.recon;
  if (with_consistency && config.consistency_weight != 0.0)
    g1_full.accumulate(g1.cons, config.consistency_weight);
  apply_student_update(clone, g1_full, config);
  if (with_consistency) ema_update_teacher(clone, config.alpha);

  // Input 2 per case.
  const DenseMatrix* image2 = &image;
  MaskPair masks2;
  switch (probe_case) {
    case ProbeCase::kSame:
      masks2 = draw_pair(&masks1.student);
      break;
    case ProbeCase::kSimilar:
      masks2 = draw_pair(nullptr);
      break;
    case ProbeCase::kDifferent:
      image2 = &other_image;
      masks2 = draw_pair(nullptr);
      break;
  }

  const SampleGrads g2 = mae_sample_grads(clone, *image2, masks2, /*with_consistency=*/true);

  auto visible_content = [](const DenseMatrix& tokens, const MaskSpec& mask) {
    DenseMatrix out = tokens;
    for (std::size_t r : mask.masked_idx)
      for (std::size_t j = 0; j < out.cols; ++j) out(r, j) = 0.0;
    return out;
  };

  ProbeRecord rec;
  rec.probe_case = probe_case;
  rec.norm_recon = g2.recon.norm();
  rec.norm_cons = g2.cons.norm();
  rec.cos_prev_full_vs_cons = cosine(g1_full, g2.cons);
  rec.cos_recon_vs_cons = cosine(g2.recon, g2.cons);
  rec.input_similarity = cosine_flat(visible_content(image, masks1.student),
                                     visible_content(*image2, masks2.student));
  return rec;
}

}  // namespace maelab
