#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "steer/rng.hpp"
#include "steer/types.hpp"

namespace steer::vae {

// Dense variational autoencoder over flattened contact maps.
// x (B^2) -> relu -> h -> (mu, logvar) (d) -> z -> relu -> h -> sigmoid -> xhat.
struct VaeModel {
    int input_dim = 0;   // B^2
    int hidden = 0;      // h
    int latent = 0;      // d
    double dropout_p = 0.0;
    int64_t version = 0;

    Eigen::MatrixXd enc_w1, enc_wmu, enc_wlv, dec_w1, dec_w2;
    Eigen::VectorXd enc_b1, enc_bmu, enc_blv, dec_b1, dec_b2;

    // RMSprop accumulators, same shapes as the parameters
    Eigen::MatrixXd s_enc_w1, s_enc_wmu, s_enc_wlv, s_dec_w1, s_dec_w2;
    Eigen::VectorXd s_enc_b1, s_enc_bmu, s_enc_blv, s_dec_b1, s_dec_b2;
};

struct TrainBatch {
    Eigen::MatrixXd inputs;  // n x B^2, entries in [0,1]
    std::vector<int64_t> source_ids;
};

struct Hyper {
    double lr = 0.001;
    double rho = 0.9;
    double eps = 1e-8;
};

struct LossParts {
    double loss = 0.0;
    double bce = 0.0;
    double kl = 0.0;
};

VaeModel init_model(int input_dim, int hidden, int latent, double dropout_p, uint64_t seed);

// Deterministic encode for inference: no dropout, returns (mu, logvar).
std::pair<Eigen::VectorXd, Eigen::VectorXd> encode(const VaeModel& m, const Eigen::VectorXd& x);

Eigen::VectorXd reparameterize(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar,
                               const Eigen::VectorXd& noise);

Eigen::VectorXd decode(const VaeModel& m, const Eigen::VectorXd& z);

// Batch loss with fixed noise, dropout disabled; xhat is clamped to
// [1e-7, 1-1e-7] before the log as part of the contract.
LossParts elbo_loss(const VaeModel& m, const TrainBatch& batch, const Eigen::MatrixXd& noise);

// `epochs` full-batch RMSprop steps with fresh dropout masks per epoch;
// bumps the version once. Throws NON_FINITE without mutating the input model.
VaeModel train(const VaeModel& m, const TrainBatch& batch, int64_t epochs, const Hyper& hp,
               CounterRng& rng);

// Versioned little-endian float64 blob; header carries (B^2, h, d, version).
std::vector<uint8_t> export_weights(const VaeModel& m);
VaeModel import_weights(const std::vector<uint8_t>& blob);

// Gradient of elbo_loss w.r.t. all parameters, flattened in export order;
// exposed for the finite-difference check.
Eigen::VectorXd elbo_gradient(const VaeModel& m, const TrainBatch& batch,
                              const Eigen::MatrixXd& noise);
Eigen::VectorXd flatten_params(const VaeModel& m);
void unflatten_params(VaeModel& m, const Eigen::VectorXd& theta);

}  // namespace steer::vae
