#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "steer/rng.hpp"
#include "steer/vae.hpp"

using namespace steer;
using namespace steer::vae;

namespace {

VaeModel zero_model(int in, int h, int d) {
    auto m = init_model(in, h, d, 0.0, 1);
    Eigen::VectorXd theta = flatten_params(m);
    theta.setZero();
    unflatten_params(m, theta);
    return m;
}

TrainBatch random_batch(int n, int in, uint64_t seed) {
    CounterRng rng(derive_key(seed, "batch"));
    TrainBatch b;
    b.inputs = Eigen::MatrixXd(n, in);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < in; ++j) b.inputs(i, j) = rng.uniform() < 0.5 ? 0.0 : 1.0;
    return b;
}

double kl_closed_form(const Eigen::VectorXd& mu, const Eigen::VectorXd& lv) {
    double s = 0.0;
    for (int i = 0; i < mu.size(); ++i)
        s += 0.5 * (std::exp(lv[i]) + mu[i] * mu[i] - 1.0 - lv[i]);
    return s;
}

}  // namespace

TEST_CASE("zero weights encode everything to the origin") {
    auto m = zero_model(9, 4, 2);
    Eigen::VectorXd x = Eigen::VectorXd::Ones(9);
    auto [mu, lv] = encode(m, x);
    CHECK(mu.cwiseAbs().maxCoeff() == 0.0);
    CHECK(lv.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero weights decode to one half everywhere") {
    auto m = zero_model(9, 4, 2);
    Eigen::VectorXd z = Eigen::VectorXd::Ones(2);
    Eigen::VectorXd xhat = decode(m, z);
    for (int i = 0; i < 9; ++i) CHECK(xhat[i] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("encode matches a hand-computed tiny network") {
    auto m = zero_model(3, 2, 2);
    m.enc_w1 << 1, 0, -1, 0.5, 0.5, 0.5;  // 2x3
    m.enc_b1 << 0.1, -2.0;
    m.enc_wmu << 1, 0, 0, 1;
    m.enc_bmu << 0.0, 0.25;
    m.enc_wlv << 0, 1, 1, 0;
    m.enc_blv << -0.5, 0.0;
    Eigen::VectorXd x(3);
    x << 1, 0, 1;
    // hidden pre-activations: [1*1+0-1*1+0.1, 0.5+0.5-2] = [0.1, -1.0]; relu -> [0.1, 0]
    auto [mu, lv] = encode(m, x);
    CHECK(mu[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(mu[1] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(lv[0] == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(lv[1] == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("decoded values stay strictly inside (0,1)") {
    auto m = init_model(16, 8, 3, 0.0, 7);
    CounterRng rng(derive_key(7, "z"));
    for (int t = 0; t < 20; ++t) {
        Eigen::VectorXd z(3);
        for (int i = 0; i < 3; ++i) z[i] = 5.0 * rng.normal();
        Eigen::VectorXd xhat = decode(m, z);
        CHECK(xhat.minCoeff() > 0.0);
        CHECK(xhat.maxCoeff() < 1.0);
    }
}

TEST_CASE("reparameterize with zero noise returns the mean") {
    Eigen::VectorXd mu(3), lv(3), noise = Eigen::VectorXd::Zero(3);
    mu << 1.0, -2.0, 0.5;
    lv << 0.3, -1.0, 2.0;
    Eigen::VectorXd z = reparameterize(mu, lv, noise);
    CHECK((z - mu).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("reparameterize scales noise by exp(logvar/2)") {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(2), lv(2), noise(2);
    lv << 0.0, std::log(4.0);
    noise << 1.0, 1.0;
    Eigen::VectorXd z = reparameterize(mu, lv, noise);
    CHECK(z[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(z[1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("reparameterized draws have the advertised moments") {
    Eigen::VectorXd mu(1), lv(1);
    mu << 0.7;
    lv << std::log(0.25);
    CounterRng rng(derive_key(3, "mc"));
    const int n = 100000;
    double acc = 0.0, acc2 = 0.0;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd e(1);
        e << rng.normal();
        double z = reparameterize(mu, lv, e)[0];
        acc += z;
        acc2 += z * z;
    }
    double mean = acc / n;
    double var = acc2 / n - mean * mean;
    // 3 sigma on the MC estimates
    CHECK(std::abs(mean - 0.7) < 3.0 * 0.5 / std::sqrt(n));
    CHECK(std::abs(var - 0.25) < 3.0 * 0.25 * std::sqrt(2.0 / n));
}

TEST_CASE("kl term vanishes at the prior") {
    auto m = zero_model(4, 3, 2);  // mu = logvar = 0 for any input
    TrainBatch b = random_batch(5, 4, 1);
    Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(5, 2);
    auto parts = elbo_loss(m, b, noise);
    CHECK(parts.kl == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("kl at unit mean and zero logvar is d/2 per sample") {
    auto m = zero_model(4, 3, 5);
    m.enc_bmu.setOnes();  // mu = 1 regardless of input
    TrainBatch b = random_batch(3, 4, 2);
    Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(3, 5);
    auto parts = elbo_loss(m, b, noise);
    CHECK(std::abs(parts.kl - 5.0 / 2.0) < 1e-12);  // per-sample mean

}

TEST_CASE("kl is non-negative for random gaussians") {
    CounterRng rng(derive_key(11, "klrand"));
    for (int t = 0; t < 1000; ++t) {
        Eigen::VectorXd mu(4), lv(4);
        for (int i = 0; i < 4; ++i) {
            mu[i] = 3.0 * rng.normal();
            lv[i] = 2.0 * rng.normal();
        }
        CHECK(kl_closed_form(mu, lv) >= 0.0);
    }
}

TEST_CASE("reconstruction loss of an indifferent model is B^2*ln2 per sample") {
    auto m = zero_model(16, 4, 2);  // decodes to 0.5 everywhere
    TrainBatch b;
    b.inputs = Eigen::MatrixXd::Constant(3, 16, 0.5);
    Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(3, 2);
    auto parts = elbo_loss(m, b, noise);
    CHECK(parts.bce == doctest::Approx(16 * std::log(2.0)).epsilon(1e-12));
    CHECK(parts.loss == doctest::Approx(parts.bce + parts.kl).epsilon(1e-12));
}

TEST_CASE("training with zero learning rate changes nothing but the version") {
    auto m = init_model(9, 4, 2, 0.0, 3);
    TrainBatch b = random_batch(6, 9, 4);
    CounterRng rng(derive_key(4, "train", 0));
    Hyper hp;
    hp.lr = 0.0;
    auto m2 = train(m, b, 3, hp, rng);
    CHECK((flatten_params(m2) - flatten_params(m)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(m2.version == m.version + 1);
}

TEST_CASE("one rmsprop step matches the scalar update rule") {
    auto m = init_model(4, 3, 2, 0.0, 5);  // dropout off: deterministic gradient
    TrainBatch b = random_batch(4, 4, 6);
    Hyper hp;
    hp.lr = 0.01;
    hp.rho = 0.9;
    hp.eps = 1e-8;
    // the reference update, computed from the analytic gradient
    CounterRng probe(derive_key(4, "train", 99));
    auto m_after = train(m, b, 1, hp, probe);
    // recover the noise the trainer drew so the oracle sees the same batch loss:
    // the trainer consumes two n-by-h dropout masks first (no-ops at p = 0)
    CounterRng replay(derive_key(4, "train", 99));
    for (int i = 0; i < 2 * 4 * 3; ++i) (void)replay.uniform();
    Eigen::MatrixXd noise(4, 2);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 2; ++j) noise(i, j) = replay.normal();
    Eigen::VectorXd g = elbo_gradient(m, b, noise);
    Eigen::VectorXd theta = flatten_params(m);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(theta.size());
    for (int i = 0; i < theta.size(); ++i) {
        s[i] = hp.rho * s[i] + (1 - hp.rho) * g[i] * g[i];
        theta[i] -= hp.lr * g[i] / (std::sqrt(s[i]) + hp.eps);
    }
    CHECK((flatten_params(m_after) - theta).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("analytic gradient agrees with finite differences") {
    auto m = init_model(9, 5, 3, 0.0, 8);
    TrainBatch b = random_batch(4, 9, 9);
    CounterRng rng(derive_key(8, "noise"));
    Eigen::MatrixXd noise(4, 3);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j) noise(i, j) = rng.normal();
    Eigen::VectorXd g = elbo_gradient(m, b, noise);
    Eigen::VectorXd theta = flatten_params(m);
    const double h = 1e-5;
    CounterRng pick(derive_key(8, "pick"));
    for (int t = 0; t < 20; ++t) {
        int i = static_cast<int>(pick.next_u64() % theta.size());
        VaeModel mp = m, mm = m;
        Eigen::VectorXd tp = theta, tm = theta;
        tp[i] += h;
        tm[i] -= h;
        unflatten_params(mp, tp);
        unflatten_params(mm, tm);
        double fd = (elbo_loss(mp, b, noise).loss - elbo_loss(mm, b, noise).loss) / (2 * h);
        double denom = std::max(1.0, std::abs(fd));
        CHECK(std::abs(g[i] - fd) / denom < 1e-4);
    }
}

TEST_CASE("training separates two structural populations in latent space") {
    const int side = 6, in = side * side;
    CounterRng rng(derive_key(13, "pop"));
    TrainBatch b;
    b.inputs = Eigen::MatrixXd::Zero(200, in);
    // basin A: near-diagonal band; basin B: corner block. a few bits flipped.
    for (int n = 0; n < 200; ++n) {
        bool a = n < 100;
        for (int i = 0; i < side; ++i)
            for (int j = 0; j < side; ++j) {
                bool on = a ? std::abs(i - j) <= 1 : (i >= side - 3 && j < 3) || i == j;
                if (rng.uniform() < 0.02) on = !on;
                b.inputs(n, i * side + j) = on ? 1.0 : 0.0;
            }
    }
    auto m = init_model(in, 16, 2, 0.1, 14);
    CounterRng trng(derive_key(14, "train", 0));
    Hyper hp;
    hp.lr = 0.005;
    m = train(m, b, 150, hp, trng);
    Eigen::Vector2d ca = Eigen::Vector2d::Zero(), cb = Eigen::Vector2d::Zero();
    std::vector<Eigen::Vector2d> za, zb;
    for (int n = 0; n < 200; ++n) {
        auto [mu, lv] = encode(m, b.inputs.row(n).transpose());
        (n < 100 ? za : zb).push_back(mu);
        (n < 100 ? ca : cb) += mu / 100.0;
    }
    double intra = 0.0;
    for (const auto& z : za) intra += (z - ca).norm() / 200.0;
    for (const auto& z : zb) intra += (z - cb).norm() / 200.0;
    double inter = (ca - cb).norm();
    CHECK(inter > 2.0 * intra);
}

TEST_CASE("weight blobs round-trip bit-for-bit") {
    auto m = init_model(16, 8, 3, 0.25, 20);
    m.version = 7;
    auto blob = export_weights(m);
    auto m2 = import_weights(blob);
    CHECK(m2.version == 7);
    CHECK(m2.input_dim == 16);
    CHECK(m2.hidden == 8);
    CHECK(m2.latent == 3);
    CHECK((flatten_params(m2) - flatten_params(m)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(export_weights(m2) == blob);
}

TEST_CASE("truncated or mangled blobs are rejected, never crash") {
    auto m = init_model(9, 4, 2, 0.0, 21);
    auto blob = export_weights(m);
    CHECK_THROWS_AS(import_weights(std::vector<uint8_t>(blob.begin(), blob.end() - 1)),
                    SteerError);
    CHECK_THROWS_AS(import_weights({}), SteerError);
    CounterRng rng(derive_key(21, "fuzz"));
    for (int t = 0; t < 1000; ++t) {
        auto cut = blob;
        cut.resize(rng.next_u64() % blob.size());
        if (!cut.empty() && t % 3 == 0) cut[rng.next_u64() % cut.size()] ^= 0xff;
        try {
            (void)import_weights(cut);
        } catch (const SteerError&) {
        }
    }
    CHECK(true);  // survived the fuzz loop
}
