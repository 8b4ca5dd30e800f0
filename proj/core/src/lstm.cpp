#include "aivv/lstm.hpp"

#include <cmath>
#include <stdexcept>

namespace aivv {

namespace {

Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& z) {
  return 1.0 / (1.0 + (-z).exp());
}

}  // namespace

LstmNetwork::LstmNetwork(int input_dim, int hidden, int layers)
    : input_dim_(input_dim), hidden_(hidden), layers_(layers) {
  if (input_dim < 1 || hidden < 1 || layers < 1)
    throw std::invalid_argument("LstmNetwork: dimensions must be >= 1");
  int cursor = 0;
  off_.reserve(layers);
  for (int l = 0; l < layers; ++l) {
    const int in = l == 0 ? input_dim : hidden;
    LayerOffsets o;
    o.in = in;
    o.w_ih = cursor;
    cursor += 4 * hidden * in;
    o.w_hh = cursor;
    cursor += 4 * hidden * hidden;
    o.b = cursor;
    cursor += 4 * hidden;
    off_.push_back(o);
  }
  head_w_off_ = cursor;
  cursor += hidden;
  head_b_off_ = cursor;
  cursor += 1;
  params_ = Eigen::VectorXd::Zero(cursor);
}

int LstmNetwork::param_count(int input_dim, int hidden, int layers) {
  int total = 0;
  for (int l = 0; l < layers; ++l) {
    const int in = l == 0 ? input_dim : hidden;
    total += 4 * hidden * (in + hidden + 1);
  }
  return total + hidden + 1;
}

void LstmNetwork::init_params(Rng& rng) {
  auto fill_uniform = [&](int off, int count, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (int i = 0; i < count; ++i) params_[off + i] = rng.uniform(-bound, bound);
  };
  for (const auto& o : off_) {
    fill_uniform(o.w_ih, 4 * hidden_ * o.in, o.in);
    fill_uniform(o.w_hh, 4 * hidden_ * hidden_, hidden_);
    fill_uniform(o.b, 4 * hidden_, hidden_);
  }
  fill_uniform(head_w_off_, hidden_, hidden_);
  fill_uniform(head_b_off_, 1, hidden_);
}

LstmNetwork::Masks LstmNetwork::sample_masks(int batch, double dropout_p,
                                             Rng& rng) const {
  if (dropout_p < 0.0 || dropout_p >= 1.0)
    throw std::invalid_argument("sample_masks: dropout_p must lie in [0, 1)");
  Masks masks(layers_);
  const double keep = 1.0 - dropout_p;
  const double scale = 1.0 / keep;
  for (auto& m : masks) {
    m.resize(hidden_, batch);
    for (int c = 0; c < batch; ++c)
      for (int r = 0; r < hidden_; ++r)
        m(r, c) = rng.bernoulli(keep) ? scale : 0.0;
  }
  return masks;
}

LstmNetwork::Masks LstmNetwork::ones_masks(int batch) const {
  return Masks(layers_, Eigen::MatrixXd::Ones(hidden_, batch));
}

Eigen::RowVectorXd LstmNetwork::run_forward(const std::vector<Eigen::MatrixXd>& xs,
                                            const Masks& masks,
                                            std::vector<LayerCache>* caches) const {
  if (xs.empty()) throw std::invalid_argument("LstmNetwork: empty input sequence");
  const auto T = static_cast<int>(xs.size());
  const auto B = static_cast<int>(xs[0].cols());
  if (static_cast<int>(masks.size()) != layers_)
    throw std::invalid_argument("LstmNetwork: expected one dropout mask per layer");
  for (const auto& m : masks)
    if (m.rows() != hidden_ || m.cols() != B)
      throw std::invalid_argument("LstmNetwork: mask shape mismatch");

  const int h = hidden_;
  if (caches) caches->assign(layers_, LayerCache{});

  std::vector<Eigen::MatrixXd> layer_in(T);
  for (int t = 0; t < T; ++t) {
    if (xs[t].rows() != input_dim_ || xs[t].cols() != B)
      throw std::invalid_argument("LstmNetwork: input shape mismatch");
    layer_in[t] = xs[t];
  }

  Eigen::MatrixXd last_masked_h;
  for (int l = 0; l < layers_; ++l) {
    const auto& o = off_[l];
    const auto w_ih = mat(o.w_ih, 4 * h, o.in);
    const auto w_hh = mat(o.w_hh, 4 * h, h);
    const auto bias = params_.segment(o.b, 4 * h);

    Eigen::MatrixXd hs = Eigen::MatrixXd::Zero(h, B);
    Eigen::MatrixXd cs = Eigen::MatrixXd::Zero(h, B);
    LayerCache* cache = caches ? &(*caches)[l] : nullptr;
    if (cache) {
      cache->x.resize(T);
      cache->i.resize(T);
      cache->f.resize(T);
      cache->g.resize(T);
      cache->o.resize(T);
      cache->c.resize(T);
      cache->tanhc.resize(T);
    }

    for (int t = 0; t < T; ++t) {
      Eigen::MatrixXd z = w_ih * layer_in[t] + w_hh * hs;
      z.colwise() += bias;
      const Eigen::ArrayXXd zi = z.middleRows(0, h).array();
      const Eigen::ArrayXXd zf = z.middleRows(h, h).array();
      const Eigen::ArrayXXd zg = z.middleRows(2 * h, h).array();
      const Eigen::ArrayXXd zo = z.middleRows(3 * h, h).array();

      const Eigen::ArrayXXd gi = sigmoid(zi);
      const Eigen::ArrayXXd gf = sigmoid(zf);
      const Eigen::ArrayXXd gg = zg.tanh();
      const Eigen::ArrayXXd go = sigmoid(zo);

      const Eigen::ArrayXXd c_new = gf * cs.array() + gi * gg;
      const Eigen::ArrayXXd tc = c_new.tanh();
      const Eigen::MatrixXd h_raw = (go * tc).matrix();

      if (cache) {
        cache->x[t] = layer_in[t];
        cache->i[t] = gi.matrix();
        cache->f[t] = gf.matrix();
        cache->g[t] = gg.matrix();
        cache->o[t] = go.matrix();
        cache->c[t] = cs;  // C_{t-1}, needed for dF
        cache->tanhc[t] = tc.matrix();
      }

      cs = c_new.matrix();
      hs = h_raw;
      layer_in[t] = masks[l].cwiseProduct(h_raw);
    }
    if (l == layers_ - 1) last_masked_h = layer_in[T - 1];
  }

  const auto head_w = params_.segment(head_w_off_, h);
  const double head_b = params_[head_b_off_];
  Eigen::RowVectorXd y = head_w.transpose() * last_masked_h;
  y.array() += head_b;
  return y;
}

Eigen::RowVectorXd LstmNetwork::forward(const std::vector<Eigen::MatrixXd>& xs,
                                        const Masks& masks) const {
  return run_forward(xs, masks, nullptr);
}

double LstmNetwork::loss_and_grad(const std::vector<Eigen::MatrixXd>& xs,
                                  const Eigen::RowVectorXd& targets,
                                  const Masks& masks, Eigen::VectorXd* grad) const {
  const auto T = static_cast<int>(xs.size());
  const auto B = static_cast<int>(targets.size());
  if (T == 0 || B == 0) throw std::invalid_argument("loss_and_grad: empty batch");
  if (xs[0].cols() != B) throw std::invalid_argument("loss_and_grad: batch mismatch");

  std::vector<LayerCache> caches;
  const Eigen::RowVectorXd y = run_forward(xs, masks, &caches);
  const Eigen::RowVectorXd diff = y - targets;
  const double loss = diff.squaredNorm() / static_cast<double>(B);
  if (!grad) return loss;

  const int h = hidden_;
  grad->setZero(params_.size());

  const Eigen::RowVectorXd dy = 2.0 * diff / static_cast<double>(B);
  const auto head_w = params_.segment(head_w_off_, h);

  // Head gradients; caches[L-1] holds raw hidden states, masks re-apply the
  // dropout pattern used on the head input.
  const Eigen::MatrixXd head_in =
      masks[layers_ - 1].cwiseProduct(caches[layers_ - 1].o[T - 1].cwiseProduct(
          caches[layers_ - 1].tanhc[T - 1]));
  grad->segment(head_w_off_, h) = head_in * dy.transpose();
  (*grad)[head_b_off_] = dy.sum();

  // Gradient flowing into each layer's raw output per timestep.
  std::vector<Eigen::MatrixXd> d_above(T, Eigen::MatrixXd::Zero(h, B));
  d_above[T - 1] =
      masks[layers_ - 1].cwiseProduct(head_w * dy);  // (h x 1) * (1 x B)

  for (int l = layers_ - 1; l >= 0; --l) {
    const auto& o = off_[l];
    const auto w_ih = mat(o.w_ih, 4 * h, o.in);
    const auto w_hh = mat(o.w_hh, 4 * h, h);
    auto g_w_ih = Eigen::Map<Eigen::MatrixXd>(grad->data() + o.w_ih, 4 * h, o.in);
    auto g_w_hh = Eigen::Map<Eigen::MatrixXd>(grad->data() + o.w_hh, 4 * h, h);
    auto g_b = grad->segment(o.b, 4 * h);
    const auto& cache = caches[l];

    std::vector<Eigen::MatrixXd> d_below;
    if (l > 0) d_below.assign(T, Eigen::MatrixXd::Zero(h, B));

    Eigen::MatrixXd dh_rec = Eigen::MatrixXd::Zero(h, B);
    Eigen::MatrixXd dc_rec = Eigen::MatrixXd::Zero(h, B);
    Eigen::MatrixXd dz(4 * h, B);

    for (int t = T - 1; t >= 0; --t) {
      const Eigen::ArrayXXd gi = cache.i[t].array();
      const Eigen::ArrayXXd gf = cache.f[t].array();
      const Eigen::ArrayXXd gg = cache.g[t].array();
      const Eigen::ArrayXXd go = cache.o[t].array();
      const Eigen::ArrayXXd tc = cache.tanhc[t].array();
      const Eigen::ArrayXXd c_prev = cache.c[t].array();

      const Eigen::ArrayXXd dh = (d_above[t] + dh_rec).array();
      const Eigen::ArrayXXd d_o = dh * tc;
      const Eigen::ArrayXXd dc = dc_rec.array() + dh * go * (1.0 - tc * tc);
      const Eigen::ArrayXXd d_i = dc * gg;
      const Eigen::ArrayXXd d_f = dc * c_prev;
      const Eigen::ArrayXXd d_g = dc * gi;

      dz.middleRows(0, h) = (d_i * gi * (1.0 - gi)).matrix();
      dz.middleRows(h, h) = (d_f * gf * (1.0 - gf)).matrix();
      dz.middleRows(2 * h, h) = (d_g * (1.0 - gg * gg)).matrix();
      dz.middleRows(3 * h, h) = (d_o * go * (1.0 - go)).matrix();

      g_w_ih.noalias() += dz * cache.x[t].transpose();
      if (t > 0) {
        // H_{t-1} masked: the recurrent input is the raw hidden state.
        const Eigen::MatrixXd h_prev =
            cache.o[t - 1].cwiseProduct(cache.tanhc[t - 1]);
        g_w_hh.noalias() += dz * h_prev.transpose();
      }
      g_b += dz.rowwise().sum();

      if (l > 0) d_below[t] = w_ih.transpose() * dz;
      dh_rec.noalias() = w_hh.transpose() * dz;
      dc_rec = (dc * gf).matrix();
    }

    if (l > 0) {
      for (int t = 0; t < T; ++t)
        d_above[t] = masks[l - 1].cwiseProduct(d_below[t]);
    }
  }
  return loss;
}

}  // namespace aivv
