#include "steer/vae.hpp"

#include <cmath>
#include <cstring>

namespace steer::vae {

namespace {

constexpr double kPixelClamp = 1e-7;
constexpr uint32_t kMagic = 0x31454156;  // "VAE1"

Eigen::MatrixXd relu(const Eigen::MatrixXd& x) { return x.cwiseMax(0.0); }

struct Forward {
    Eigen::MatrixXd a1pre, a1d, mu, lv, z, h2pre, h2d, p, pc;
};

Forward forward_pass(const VaeModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& noise,
                     const Eigen::MatrixXd& mask1, const Eigen::MatrixXd& mask2) {
    Forward f;
    f.a1pre = (x * m.enc_w1.transpose()).rowwise() + m.enc_b1.transpose();
    f.a1d = relu(f.a1pre).cwiseProduct(mask1);
    f.mu = (f.a1d * m.enc_wmu.transpose()).rowwise() + m.enc_bmu.transpose();
    f.lv = (f.a1d * m.enc_wlv.transpose()).rowwise() + m.enc_blv.transpose();
    f.z = f.mu + (0.5 * f.lv).array().exp().matrix().cwiseProduct(noise);
    f.h2pre = (f.z * m.dec_w1.transpose()).rowwise() + m.dec_b1.transpose();
    f.h2d = relu(f.h2pre).cwiseProduct(mask2);
    Eigen::MatrixXd logits = (f.h2d * m.dec_w2.transpose()).rowwise() + m.dec_b2.transpose();
    f.p = (1.0 / (1.0 + (-logits.array()).exp())).matrix();
    f.pc = f.p.array().min(1.0 - kPixelClamp).max(kPixelClamp).matrix();
    return f;
}

LossParts loss_from(const Eigen::MatrixXd& x, const Forward& f) {
    const double n = static_cast<double>(x.rows());
    LossParts out;
    out.bce = -(x.array() * f.pc.array().log() +
                (1.0 - x.array()) * (1.0 - f.pc.array()).log())
                   .sum() /
              n;
    out.kl = -0.5 *
             (1.0 + f.lv.array() - f.mu.array().square() - f.lv.array().exp()).sum() / n;
    out.loss = out.bce + out.kl;
    if (!std::isfinite(out.loss)) throw SteerError(ErrorCode::NON_FINITE, "elbo loss diverged");
    return out;
}

struct Grads {
    Eigen::MatrixXd enc_w1, enc_wmu, enc_wlv, dec_w1, dec_w2;
    Eigen::VectorXd enc_b1, enc_bmu, enc_blv, dec_b1, dec_b2;
};

Grads backward_pass(const VaeModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& noise,
                    const Eigen::MatrixXd& mask1, const Eigen::MatrixXd& mask2,
                    const Forward& f) {
    const double n = static_cast<double>(x.rows());
    // reconstruction path; the clamp gates the gradient where it saturates
    Eigen::ArrayXXd within = ((f.p.array() > kPixelClamp) &&
                              (f.p.array() < 1.0 - kPixelClamp))
                                 .cast<double>();
    Eigen::ArrayXXd dpc = (f.pc.array() - x.array()) / (f.pc.array() * (1.0 - f.pc.array())) / n;
    Eigen::MatrixXd dlogits =
        (dpc * within * f.p.array() * (1.0 - f.p.array())).matrix();

    Grads g;
    g.dec_w2 = dlogits.transpose() * f.h2d;
    g.dec_b2 = dlogits.colwise().sum().transpose();
    Eigen::MatrixXd dh2 = (dlogits * m.dec_w2).cwiseProduct(mask2);
    Eigen::MatrixXd dh2pre = dh2.cwiseProduct((f.h2pre.array() > 0.0).cast<double>().matrix());
    g.dec_w1 = dh2pre.transpose() * f.z;
    g.dec_b1 = dh2pre.colwise().sum().transpose();
    Eigen::MatrixXd dz = dh2pre * m.dec_w1;

    Eigen::MatrixXd dmu = dz + (f.mu / n);
    Eigen::MatrixXd dlv =
        dz.cwiseProduct(noise).cwiseProduct((0.5 * f.lv).array().exp().matrix()) * 0.5 +
        ((f.lv.array().exp() - 1.0) / (2.0 * n)).matrix();

    g.enc_wmu = dmu.transpose() * f.a1d;
    g.enc_bmu = dmu.colwise().sum().transpose();
    g.enc_wlv = dlv.transpose() * f.a1d;
    g.enc_blv = dlv.colwise().sum().transpose();
    Eigen::MatrixXd da1 = (dmu * m.enc_wmu + dlv * m.enc_wlv).cwiseProduct(mask1);
    Eigen::MatrixXd da1pre = da1.cwiseProduct((f.a1pre.array() > 0.0).cast<double>().matrix());
    g.enc_w1 = da1pre.transpose() * x;
    g.enc_b1 = da1pre.colwise().sum().transpose();
    return g;
}

void rmsprop_update(Eigen::MatrixXd& theta, Eigen::MatrixXd& s, const Eigen::MatrixXd& g,
                    const Hyper& hp) {
    s = hp.rho * s + (1.0 - hp.rho) * g.cwiseProduct(g);
    theta.array() -= hp.lr * g.array() / (s.array().sqrt() + hp.eps);
}

void rmsprop_update(Eigen::VectorXd& theta, Eigen::VectorXd& s, const Eigen::VectorXd& g,
                    const Hyper& hp) {
    s = hp.rho * s + (1.0 - hp.rho) * g.cwiseProduct(g);
    theta.array() -= hp.lr * g.array() / (s.array().sqrt() + hp.eps);
}

Eigen::MatrixXd dropout_mask(CounterRng& rng, Eigen::Index rows, Eigen::Index cols, double p) {
    Eigen::MatrixXd m(rows, cols);
    const double scale = p < 1.0 ? 1.0 / (1.0 - p) : 0.0;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform() > p ? scale : 0.0;
    return m;
}

}  // namespace

VaeModel init_model(int input_dim, int hidden, int latent, double dropout_p, uint64_t seed) {
    VaeModel m;
    m.input_dim = input_dim;
    m.hidden = hidden;
    m.latent = latent;
    m.dropout_p = dropout_p;
    m.version = 0;
    CounterRng rng(derive_key(seed, "vae-init"));
    auto mat = [&](int r, int c, double scale) {
        Eigen::MatrixXd w(r, c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) w(i, j) = scale * rng.normal();
        return w;
    };
    m.enc_w1 = mat(hidden, input_dim, 1.0 / std::sqrt(static_cast<double>(input_dim)));
    m.enc_wmu = mat(latent, hidden, 1.0 / std::sqrt(static_cast<double>(hidden)));
    m.enc_wlv = mat(latent, hidden, 1.0 / std::sqrt(static_cast<double>(hidden)));
    m.dec_w1 = mat(hidden, latent, 1.0 / std::sqrt(static_cast<double>(latent)));
    m.dec_w2 = mat(input_dim, hidden, 1.0 / std::sqrt(static_cast<double>(hidden)));
    m.enc_b1 = Eigen::VectorXd::Zero(hidden);
    m.enc_bmu = Eigen::VectorXd::Zero(latent);
    m.enc_blv = Eigen::VectorXd::Zero(latent);
    m.dec_b1 = Eigen::VectorXd::Zero(hidden);
    m.dec_b2 = Eigen::VectorXd::Zero(input_dim);
    m.s_enc_w1 = Eigen::MatrixXd::Zero(hidden, input_dim);
    m.s_enc_wmu = Eigen::MatrixXd::Zero(latent, hidden);
    m.s_enc_wlv = Eigen::MatrixXd::Zero(latent, hidden);
    m.s_dec_w1 = Eigen::MatrixXd::Zero(hidden, latent);
    m.s_dec_w2 = Eigen::MatrixXd::Zero(input_dim, hidden);
    m.s_enc_b1 = Eigen::VectorXd::Zero(hidden);
    m.s_enc_bmu = Eigen::VectorXd::Zero(latent);
    m.s_enc_blv = Eigen::VectorXd::Zero(latent);
    m.s_dec_b1 = Eigen::VectorXd::Zero(hidden);
    m.s_dec_b2 = Eigen::VectorXd::Zero(input_dim);
    return m;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> encode(const VaeModel& m, const Eigen::VectorXd& x) {
    if (x.size() != m.input_dim)
        throw SteerError(ErrorCode::SHAPE_MISMATCH, "encode input size mismatch");
    Eigen::VectorXd a1 = (m.enc_w1 * x + m.enc_b1).cwiseMax(0.0);
    return {m.enc_wmu * a1 + m.enc_bmu, m.enc_wlv * a1 + m.enc_blv};
}

Eigen::VectorXd reparameterize(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar,
                               const Eigen::VectorXd& noise) {
    return mu + (0.5 * logvar).array().exp().matrix().cwiseProduct(noise);
}

Eigen::VectorXd decode(const VaeModel& m, const Eigen::VectorXd& z) {
    if (z.size() != m.latent)
        throw SteerError(ErrorCode::SHAPE_MISMATCH, "decode input size mismatch");
    Eigen::VectorXd h2 = (m.dec_w1 * z + m.dec_b1).cwiseMax(0.0);
    Eigen::VectorXd logits = m.dec_w2 * h2 + m.dec_b2;
    return (1.0 / (1.0 + (-logits.array()).exp())).matrix();
}

LossParts elbo_loss(const VaeModel& m, const TrainBatch& batch, const Eigen::MatrixXd& noise) {
    if (batch.inputs.rows() < 1) throw SteerError(ErrorCode::SHAPE_MISMATCH, "empty batch");
    Eigen::MatrixXd ones1 = Eigen::MatrixXd::Ones(batch.inputs.rows(), m.hidden);
    Forward f = forward_pass(m, batch.inputs, noise, ones1, ones1);
    return loss_from(batch.inputs, f);
}

VaeModel train(const VaeModel& model, const TrainBatch& batch, int64_t epochs, const Hyper& hp,
               CounterRng& rng) {
    if (batch.inputs.rows() < 1) throw SteerError(ErrorCode::SHAPE_MISMATCH, "empty batch");
    VaeModel m = model;
    const Eigen::Index n = batch.inputs.rows();
    for (int64_t e = 0; e < epochs; ++e) {
        Eigen::MatrixXd mask1 = dropout_mask(rng, n, m.hidden, m.dropout_p);
        Eigen::MatrixXd mask2 = dropout_mask(rng, n, m.hidden, m.dropout_p);
        Eigen::MatrixXd noise(n, m.latent);
        for (Eigen::Index i = 0; i < n; ++i)
            for (int j = 0; j < m.latent; ++j) noise(i, j) = rng.normal();
        Forward f = forward_pass(m, batch.inputs, noise, mask1, mask2);
        loss_from(batch.inputs, f);  // finiteness gate
        Grads g = backward_pass(m, batch.inputs, noise, mask1, mask2, f);
        rmsprop_update(m.enc_w1, m.s_enc_w1, g.enc_w1, hp);
        rmsprop_update(m.enc_b1, m.s_enc_b1, g.enc_b1, hp);
        rmsprop_update(m.enc_wmu, m.s_enc_wmu, g.enc_wmu, hp);
        rmsprop_update(m.enc_bmu, m.s_enc_bmu, g.enc_bmu, hp);
        rmsprop_update(m.enc_wlv, m.s_enc_wlv, g.enc_wlv, hp);
        rmsprop_update(m.enc_blv, m.s_enc_blv, g.enc_blv, hp);
        rmsprop_update(m.dec_w1, m.s_dec_w1, g.dec_w1, hp);
        rmsprop_update(m.dec_b1, m.s_dec_b1, g.dec_b1, hp);
        rmsprop_update(m.dec_w2, m.s_dec_w2, g.dec_w2, hp);
        rmsprop_update(m.dec_b2, m.s_dec_b2, g.dec_b2, hp);
        if (!m.enc_w1.allFinite() || !m.dec_w2.allFinite())
            throw SteerError(ErrorCode::NON_FINITE, "training diverged");
    }
    m.version = model.version + 1;
    return m;
}

namespace {

template <class F>
void for_each_param(VaeModel& m, F&& f) {
    f(m.enc_w1);
    f(m.enc_b1);
    f(m.enc_wmu);
    f(m.enc_bmu);
    f(m.enc_wlv);
    f(m.enc_blv);
    f(m.dec_w1);
    f(m.dec_b1);
    f(m.dec_w2);
    f(m.dec_b2);
}

template <class F>
void for_each_param(const VaeModel& m, F&& f) {
    f(m.enc_w1);
    f(m.enc_b1);
    f(m.enc_wmu);
    f(m.enc_bmu);
    f(m.enc_wlv);
    f(m.enc_blv);
    f(m.dec_w1);
    f(m.dec_b1);
    f(m.dec_w2);
    f(m.dec_b2);
}

int64_t param_count(const VaeModel& m) {
    int64_t n = 0;
    for_each_param(m, [&](const auto& p) { n += p.size(); });
    return n;
}

}  // namespace

Eigen::VectorXd flatten_params(const VaeModel& m) {
    Eigen::VectorXd v(param_count(m));
    int64_t at = 0;
    for_each_param(m, [&](const auto& p) {
        for (Eigen::Index i = 0; i < p.size(); ++i) v[at++] = p.data()[i];
    });
    return v;
}

void unflatten_params(VaeModel& m, const Eigen::VectorXd& theta) {
    if (theta.size() != param_count(m))
        throw SteerError(ErrorCode::SHAPE_MISMATCH, "parameter vector length mismatch");
    int64_t at = 0;
    for_each_param(m, [&](auto& p) {
        for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = theta[at++];
    });
}

Eigen::VectorXd elbo_gradient(const VaeModel& m, const TrainBatch& batch,
                              const Eigen::MatrixXd& noise) {
    Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(batch.inputs.rows(), m.hidden);
    Forward f = forward_pass(m, batch.inputs, noise, ones, ones);
    Grads g = backward_pass(m, batch.inputs, noise, ones, ones, f);
    Eigen::VectorXd v(param_count(m));
    int64_t at = 0;
    auto put = [&](const auto& p) {
        for (Eigen::Index i = 0; i < p.size(); ++i) v[at++] = p.data()[i];
    };
    put(g.enc_w1);
    put(g.enc_b1);
    put(g.enc_wmu);
    put(g.enc_bmu);
    put(g.enc_wlv);
    put(g.enc_blv);
    put(g.dec_w1);
    put(g.dec_b1);
    put(g.dec_w2);
    put(g.dec_b2);
    return v;
}

std::vector<uint8_t> export_weights(const VaeModel& m) {
    Eigen::VectorXd theta = flatten_params(m);
    std::vector<uint8_t> blob(4 * sizeof(uint32_t) + sizeof(int64_t) + sizeof(double) +
                              static_cast<size_t>(theta.size()) * sizeof(double));
    uint8_t* at = blob.data();
    auto put = [&](const void* src, size_t len) {
        std::memcpy(at, src, len);
        at += len;
    };
    uint32_t hdr[4] = {kMagic, static_cast<uint32_t>(m.input_dim),
                       static_cast<uint32_t>(m.hidden), static_cast<uint32_t>(m.latent)};
    put(hdr, sizeof(hdr));
    put(&m.version, sizeof(m.version));
    put(&m.dropout_p, sizeof(m.dropout_p));
    put(theta.data(), static_cast<size_t>(theta.size()) * sizeof(double));
    return blob;
}

VaeModel import_weights(const std::vector<uint8_t>& blob) {
    const size_t head = 4 * sizeof(uint32_t) + sizeof(int64_t) + sizeof(double);
    if (blob.size() < head) throw SteerError(ErrorCode::CORRUPT_BLOB, "blob too short");
    uint32_t hdr[4];
    std::memcpy(hdr, blob.data(), sizeof(hdr));
    if (hdr[0] != kMagic) throw SteerError(ErrorCode::CORRUPT_BLOB, "bad magic");
    if (hdr[1] == 0 || hdr[2] == 0 || hdr[3] == 0 || hdr[1] > (1u << 24) || hdr[2] > (1u << 20) ||
        hdr[3] > (1u << 20))
        throw SteerError(ErrorCode::CORRUPT_BLOB, "implausible shape header");
    int64_t version = 0;
    double dropout_p = 0.0;
    std::memcpy(&version, blob.data() + sizeof(hdr), sizeof(version));
    std::memcpy(&dropout_p, blob.data() + sizeof(hdr) + sizeof(version), sizeof(dropout_p));
    VaeModel m = init_model(static_cast<int>(hdr[1]), static_cast<int>(hdr[2]),
                            static_cast<int>(hdr[3]), dropout_p, 0);
    const size_t want = head + static_cast<size_t>(param_count(m)) * sizeof(double);
    if (blob.size() != want) throw SteerError(ErrorCode::CORRUPT_BLOB, "blob length mismatch");
    Eigen::VectorXd theta(param_count(m));
    std::memcpy(theta.data(), blob.data() + head,
                static_cast<size_t>(theta.size()) * sizeof(double));
    unflatten_params(m, theta);
    m.version = version;
    return m;
}

}  // namespace steer::vae
