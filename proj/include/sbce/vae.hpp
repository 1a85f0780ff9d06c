// SPDX-License-Identifier: Apache-2.0
//
// sbce - semi-blind MMSE channel estimation for massive MIMO
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef SBCE_VAE_HPP
#define SBCE_VAE_HPP

#include "sbce/channel_model.hpp"
#include "sbce/estimators.hpp"
#include "sbce/io.hpp"
#include "sbce/rng.hpp"
#include "sbce/subspace.hpp"

#include <Eigen/QR>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace sbce {

// A compact VAE over channel vectors. The decoder emits a conditionally
// Gaussian model CN(mu_theta(z), C_theta(z)) whose covariance is circulant
// by construction, C_theta = Q^H diag(c_theta) Q with Q the unitary DFT, so
// filter solves reduce to diagonal solves in the DFT domain. The encoder
// sees the projected pilot observation stacked as 2M reals.

struct DenseLayer {
    MatR weights; ///< out x in
    VecR bias;    ///< out
};

/// Trainable parameter blocks; the same container shape is reused for
/// gradients and Adam moments.
struct VaeParams {
    std::vector<DenseLayer> enc_hidden;
    DenseLayer enc_mean, enc_logvar;
    std::vector<DenseLayer> dec_hidden;
    DenseLayer dec_mean, dec_logspec;

    /// Flat views over every parameter block, in declaration order.
    std::vector<std::pair<double*, long>> flat() {
        std::vector<std::pair<double*, long>> out;
        auto add = [&](DenseLayer& l) {
            out.emplace_back(l.weights.data(), l.weights.size());
            out.emplace_back(l.bias.data(), l.bias.size());
        };
        for (auto& l : enc_hidden)
            add(l);
        add(enc_mean);
        add(enc_logvar);
        for (auto& l : dec_hidden)
            add(l);
        add(dec_mean);
        add(dec_logspec);
        return out;
    }
};

struct VaeLayout {
    int antennas = 64;   ///< M
    int latent_dim = 32; ///< Z
    std::vector<int> encoder_widths = {256, 128};
    std::vector<int> decoder_widths = {128, 256};
};

struct VaePrior {
    VaeLayout layout;
    VaeParams params;
    MatC dft; ///< unitary M x M DFT matrix Q

    int antennas() const { return layout.antennas; }
    int latent_dim() const { return layout.latent_dim; }
};

namespace detail {

inline constexpr double vae_exp_clamp = 20.0;

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline MatC unitary_dft(int M) {
    MatC Q(M, M);
    const double scale = 1.0 / std::sqrt(static_cast<double>(M));
    for (int a = 0; a < M; ++a)
        for (int b = 0; b < M; ++b) {
            const double phase = -2.0 * pi * static_cast<double>(a) * static_cast<double>(b) /
                                 static_cast<double>(M);
            Q(a, b) = scale * cplx(std::cos(phase), std::sin(phase));
        }
    return Q;
}

inline DenseLayer init_layer(int out, int in, Rng& rng) {
    DenseLayer l;
    l.weights.resize(out, in);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (int i = 0; i < out; ++i)
        for (int j = 0; j < in; ++j)
            l.weights(i, j) = scale * rng.gaussian();
    l.bias = VecR::Zero(out);
    return l;
}

inline MatR stack_complex(const MatC& x) {
    MatR s(2 * x.rows(), x.cols());
    s.topRows(x.rows()) = x.real();
    s.bottomRows(x.rows()) = x.imag();
    return s;
}

/// Forward caches of one hidden chain.
struct TrunkCache {
    std::vector<MatR> pre;
    std::vector<MatR> post;
    MatR input;
};

inline MatR trunk_forward(const std::vector<DenseLayer>& layers, const MatR& input,
                          TrunkCache* cache) {
    MatR x = input;
    if (cache) {
        cache->input = input;
        cache->pre.clear();
        cache->post.clear();
    }
    for (const DenseLayer& l : layers) {
        MatR y = (l.weights * x).colwise() + l.bias;
        MatR a = y.unaryExpr([](double v) { return softplus(v); });
        if (cache) {
            cache->pre.push_back(y);
            cache->post.push_back(a);
        }
        x = std::move(a);
    }
    return x;
}

/// Backpropagate through the hidden chain, accumulating layer gradients;
/// returns the gradient with respect to the chain input.
inline MatR trunk_backward(const std::vector<DenseLayer>& layers, const TrunkCache& cache,
                           MatR grad_out, std::vector<DenseLayer>& grads) {
    for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
        const MatR dy =
            grad_out.cwiseProduct(cache.pre[l].unaryExpr([](double v) { return sigmoid(v); }));
        const MatR& below = l == 0 ? cache.input : cache.post[l - 1];
        grads[l].weights += dy * below.transpose();
        grads[l].bias += dy.rowwise().sum();
        grad_out = layers[l].weights.transpose() * dy;
    }
    return grad_out;
}

struct EncoderOut {
    MatR mean;       ///< Z x B
    MatR logvar_raw; ///< pre-clamp
    MatR logvar;     ///< clamped
    MatR trunk_out;
    TrunkCache cache;
};

inline EncoderOut encoder_forward(const VaePrior& prior, const MatR& stacked, bool want_cache) {
    EncoderOut out;
    out.trunk_out =
        trunk_forward(prior.params.enc_hidden, stacked, want_cache ? &out.cache : nullptr);
    out.mean =
        (prior.params.enc_mean.weights * out.trunk_out).colwise() + prior.params.enc_mean.bias;
    out.logvar_raw = (prior.params.enc_logvar.weights * out.trunk_out).colwise() +
                     prior.params.enc_logvar.bias;
    out.logvar = out.logvar_raw.cwiseMax(-vae_exp_clamp).cwiseMin(vae_exp_clamp);
    return out;
}

struct DecoderOut {
    MatR mean_stacked; ///< 2M x B
    MatR logspec_raw;  ///< pre-clamp
    MatR spectrum;     ///< exp(clamped), M x B
    MatR trunk_out;
    TrunkCache cache;
};

inline DecoderOut decoder_forward(const VaePrior& prior, const MatR& latent, bool want_cache) {
    DecoderOut out;
    out.trunk_out =
        trunk_forward(prior.params.dec_hidden, latent, want_cache ? &out.cache : nullptr);
    out.mean_stacked =
        (prior.params.dec_mean.weights * out.trunk_out).colwise() + prior.params.dec_mean.bias;
    out.logspec_raw = (prior.params.dec_logspec.weights * out.trunk_out).colwise() +
                      prior.params.dec_logspec.bias;
    out.spectrum =
        out.logspec_raw.cwiseMax(-vae_exp_clamp).cwiseMin(vae_exp_clamp).array().exp().matrix();
    return out;
}

inline VaeParams zeros_like(const VaeParams& params) {
    VaeParams g = params;
    for (auto& l : g.enc_hidden) {
        l.weights.setZero();
        l.bias.setZero();
    }
    auto zero = [](DenseLayer& l) {
        l.weights.setZero();
        l.bias.setZero();
    };
    zero(g.enc_mean);
    zero(g.enc_logvar);
    for (auto& l : g.dec_hidden) {
        l.weights.setZero();
        l.bias.setZero();
    }
    zero(g.dec_mean);
    zero(g.dec_logspec);
    return g;
}

/// Mean ELBO of a batch with fixed reparameterization noise. When `grads`
/// is given, accumulates the parameter gradients of the mean ELBO.
inline double elbo_batch(const VaePrior& prior, const MatC& h, const MatC& ytilde,
                         const MatR& eps, VaeParams* grads) {
    const int M = prior.antennas();
    const long B = h.cols();
    const MatR stacked = stack_complex(ytilde);

    EncoderOut enc = encoder_forward(prior, stacked, grads != nullptr);
    const MatR sigma = (0.5 * enc.logvar).array().exp().matrix();
    const MatR var = enc.logvar.array().exp().matrix();
    const MatR z = enc.mean + sigma.cwiseProduct(eps);

    DecoderOut dec = decoder_forward(prior, z, grads != nullptr);
    const MatC mu = dec.mean_stacked.topRows(M).cast<cplx>() +
                    cplx(0.0, 1.0) * dec.mean_stacked.bottomRows(M).cast<cplx>();
    const MatC residual_dft = prior.dft * (h - mu); // r = Q (h - mu)
    const MatR res_sq = residual_dft.cwiseAbs2();

    double total = 0.0;
    for (long i = 0; i < B; ++i) {
        const double recon = -M * std::log(pi) - dec.spectrum.col(i).array().log().sum() -
                             (res_sq.col(i).array() / dec.spectrum.col(i).array()).sum();
        const double kl = 0.5 * (var.col(i).array() + enc.mean.col(i).array().square() - 1.0 -
                                 enc.logvar.col(i).array())
                                    .sum();
        total += recon - kl;
    }

    if (grads) {
        const double inv_B = 1.0 / static_cast<double>(B);
        const MatR dec_inside =
            (dec.logspec_raw.array().abs() < vae_exp_clamp).cast<double>().matrix();
        const MatR enc_inside =
            (enc.logvar_raw.array().abs() < vae_exp_clamp).cast<double>().matrix();

        // d recon / d logspec_raw; the clamp zeroes saturated entries.
        const MatR d_logspec =
            (inv_B * (res_sq.array() / dec.spectrum.array() - 1.0)).matrix().cwiseProduct(
                dec_inside);

        // d recon / d mean_stacked through g = Q^H (r / c).
        MatC ratio(M, B);
        ratio = (residual_dft.array() / dec.spectrum.array().cast<cplx>()).matrix();
        const MatC g = prior.dft.adjoint() * ratio;
        MatR d_mean(2 * M, B);
        d_mean.topRows(M) = 2.0 * inv_B * g.real();
        d_mean.bottomRows(M) = 2.0 * inv_B * g.imag();

        grads->dec_mean.weights += d_mean * dec.trunk_out.transpose();
        grads->dec_mean.bias += d_mean.rowwise().sum();
        grads->dec_logspec.weights += d_logspec * dec.trunk_out.transpose();
        grads->dec_logspec.bias += d_logspec.rowwise().sum();

        MatR d_dec_trunk = prior.params.dec_mean.weights.transpose() * d_mean +
                           prior.params.dec_logspec.weights.transpose() * d_logspec;
        const MatR d_z = trunk_backward(prior.params.dec_hidden, dec.cache,
                                        std::move(d_dec_trunk), grads->dec_hidden);

        // Latent gradient splits into the encoder mean and log-variance
        // heads; the KL contributes to both.
        const MatR d_mu_enc = d_z - inv_B * enc.mean;
        const MatR d_logvar =
            (d_z.cwiseProduct(eps).cwiseProduct(sigma) * 0.5 -
             inv_B * 0.5 * (var.array() - 1.0).matrix())
                .cwiseProduct(enc_inside);

        grads->enc_mean.weights += d_mu_enc * enc.trunk_out.transpose();
        grads->enc_mean.bias += d_mu_enc.rowwise().sum();
        grads->enc_logvar.weights += d_logvar * enc.trunk_out.transpose();
        grads->enc_logvar.bias += d_logvar.rowwise().sum();

        MatR d_enc_trunk = prior.params.enc_mean.weights.transpose() * d_mu_enc +
                           prior.params.enc_logvar.weights.transpose() * d_logvar;
        trunk_backward(prior.params.enc_hidden, enc.cache, std::move(d_enc_trunk),
                       grads->enc_hidden);
    }
    return total / static_cast<double>(B);
}

} // namespace detail

/// Variational posterior for one observation, q(z|y~) = N(mean, diag(variance)).
struct EncodedPosterior {
    VecR mean;
    VecR variance;
};

inline EncodedPosterior encode(const VaePrior& prior, const VecC& ytilde) {
    if (ytilde.size() != prior.antennas())
        throw config_error("encode: observation length must equal M");
    if (!ytilde.allFinite())
        throw config_error("encode: non-finite observation");
    const MatR stacked = detail::stack_complex(ytilde);
    const detail::EncoderOut out = detail::encoder_forward(prior, stacked, false);
    return {out.mean.col(0), out.logvar.col(0).array().exp().matrix()};
}

/// Conditional Gaussian emitted by the decoder: mean mu_theta(z) and the
/// circulant covariance spectrum c_theta(z) (its eigenvalues in the DFT
/// basis). covariance() materializes C_theta = Q^H diag(c) Q on demand.
struct DecodedGaussian {
    VecC mean;
    VecR spectrum;
    const VaePrior* prior;

    MatC covariance() const {
        return prior->dft.adjoint() * spectrum.cast<cplx>().asDiagonal() * prior->dft;
    }
};

inline DecodedGaussian decode(const VaePrior& prior, const VecR& z) {
    if (z.size() != prior.latent_dim())
        throw config_error("decode: latent dimension mismatch");
    const detail::DecoderOut out = detail::decoder_forward(prior, z, false);
    const int M = prior.antennas();
    DecodedGaussian d;
    d.mean = out.mean_stacked.col(0).head(M).cast<cplx>() +
             cplx(0.0, 1.0) * out.mean_stacked.col(0).tail(M).cast<cplx>();
    d.spectrum = out.spectrum.col(0);
    d.prior = &prior;
    return d;
}

/// Single-sample reparameterized ELBO for one (channel, observation) pair:
/// E_q[log p(h|z)] minus the closed-form KL(q(z|y~) || N(0, I)).
inline double elbo(const VaePrior& prior, const VecC& h, const VecC& ytilde, Rng& rng) {
    if (h.size() != prior.antennas() || ytilde.size() != prior.antennas())
        throw config_error("elbo: dimension mismatch");
    MatR eps(prior.latent_dim(), 1);
    for (int i = 0; i < prior.latent_dim(); ++i)
        eps(i, 0) = rng.gaussian();
    return detail::elbo_batch(prior, h, ytilde, eps, nullptr);
}

struct VaeTrainConfig {
    VaeLayout layout;
    int epochs = 50;
    int batch_size = 128;
    double learning_rate = 1e-3;
    double snr_db_min = -10.0; ///< training noise log-uniform over this SNR range
    double snr_db_max = 20.0;
    int num_users = 8; ///< J used to synthesize training subspaces
};

/// Fit the VAE by stochastic gradient ascent on the ELBO (Adam). Every
/// training channel is paired with a synthesized observation
/// ytilde = VV^H (h + n): V spans the sample itself plus J-1 companion
/// channels drawn from the training set, and the noise level is redrawn per
/// batch across the configured SNR range so one model serves a whole sweep.
inline VaePrior train_vae(const ChannelDataset& dataset, const VaeTrainConfig& config, Rng& rng,
                          std::vector<double>* elbo_trace = nullptr) {
    const int M = dataset.antennas();
    const long T = dataset.size();
    if (config.layout.antennas != M)
        throw config_error("train_vae: layout antenna count does not match the dataset");
    if (T < 1000)
        throw config_error("train_vae: need at least 1000 training samples");
    if (config.num_users < 1 || config.num_users > M)
        throw config_error("train_vae: invalid num_users");
    if (config.layout.encoder_widths.empty() || config.layout.decoder_widths.empty())
        throw config_error("train_vae: need at least one hidden layer on each side");

    VaePrior prior;
    prior.layout = config.layout;
    prior.dft = detail::unitary_dft(M);
    {
        const int Z = config.layout.latent_dim;
        int in = 2 * M;
        for (int w : config.layout.encoder_widths) {
            prior.params.enc_hidden.push_back(detail::init_layer(w, in, rng));
            in = w;
        }
        prior.params.enc_mean = detail::init_layer(Z, in, rng);
        prior.params.enc_logvar = detail::init_layer(Z, in, rng);
        in = Z;
        for (int w : config.layout.decoder_widths) {
            prior.params.dec_hidden.push_back(detail::init_layer(w, in, rng));
            in = w;
        }
        prior.params.dec_mean = detail::init_layer(2 * M, in, rng);
        prior.params.dec_logspec = detail::init_layer(M, in, rng);
    }

    VaeParams adam_m = detail::zeros_like(prior.params);
    VaeParams adam_v = detail::zeros_like(prior.params);
    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    long step = 0;

    std::vector<long> order(T);
    std::iota(order.begin(), order.end(), 0);
    const int J = config.num_users;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (long i = T - 1; i > 0; --i)
            std::swap(order[i],
                      order[static_cast<long>(rng.below(static_cast<std::uint64_t>(i + 1)))]);

        for (long start = 0; start + config.batch_size <= T; start += config.batch_size) {
            const long B = config.batch_size;
            const double snr_db =
                config.snr_db_min + rng.uniform() * (config.snr_db_max - config.snr_db_min);
            const double noise_std = std::sqrt(std::pow(10.0, -snr_db / 10.0));

            MatC h(M, B), ytilde(M, B);
            MatC companions(M, J);
            for (long i = 0; i < B; ++i) {
                h.col(i) = dataset.samples.col(order[start + i]);
                VecC noisy = h.col(i);
                for (int m = 0; m < M; ++m)
                    noisy(m) += noise_std * rng.complex_gaussian();
                if (J < M) {
                    companions.col(0) = h.col(i);
                    for (int j = 1; j < J; ++j)
                        companions.col(j) = dataset.samples.col(static_cast<long>(rng.below(T)));
                    Eigen::HouseholderQR<MatC> qr(companions);
                    const MatC basis = qr.householderQ() * MatC::Identity(M, J);
                    ytilde.col(i) = basis * (basis.adjoint() * noisy);
                } else {
                    ytilde.col(i) = noisy;
                }
            }
            MatR eps(config.layout.latent_dim, B);
            for (long i = 0; i < B; ++i)
                for (int zi = 0; zi < config.layout.latent_dim; ++zi)
                    eps(zi, i) = rng.gaussian();

            VaeParams grads = detail::zeros_like(prior.params);
            const double batch_elbo = detail::elbo_batch(prior, h, ytilde, eps, &grads);
            if (!std::isfinite(batch_elbo))
                throw numerical_error("train_vae: ELBO diverged at epoch " +
                                      std::to_string(epoch) + ", step " + std::to_string(step));
            if (elbo_trace)
                elbo_trace->push_back(batch_elbo);

            ++step;
            const double corr1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double corr2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            auto p_flat = prior.params.flat();
            auto g_flat = grads.flat();
            auto m_flat = adam_m.flat();
            auto v_flat = adam_v.flat();
            for (size_t blk = 0; blk < p_flat.size(); ++blk) {
                double* p = p_flat[blk].first;
                const double* g = g_flat[blk].first;
                double* m = m_flat[blk].first;
                double* v = v_flat[blk].first;
                for (long i = 0; i < p_flat[blk].second; ++i) {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                    // Ascent step on the ELBO.
                    p[i] += config.learning_rate * (m[i] / corr1) /
                            (std::sqrt(v[i] / corr2) + adam_eps);
                }
            }
        }
    }
    return prior;
}

/// Projected VAE estimator: ytilde = VV^H y_p, z = mu_phi(ytilde), then the
/// conditional LMMSE with reduced noise noise_var * (J/M), solved in the
/// DFT domain.
inline VecC vae_projected_estimate(const VecC& pilot_obs, const SubspaceEstimate& sub,
                                   const VaePrior& prior, double noise_var, int M, int J) {
    if (pilot_obs.size() != M || sub.basis.rows() != M || sub.dim() != J || prior.antennas() != M)
        throw config_error("vae_projected_estimate: dimension mismatch");
    const VecC ytilde = sub.basis * (sub.basis.adjoint() * pilot_obs);
    const DecodedGaussian d = decode(prior, encode(prior, ytilde).mean);
    const double reduced_noise = noise_var * static_cast<double>(J) / static_cast<double>(M);
    const VecC shifted_dft = prior.dft * (ytilde - d.mean);
    const VecC filtered =
        ((d.spectrum.array() / (d.spectrum.array() + reduced_noise)).cast<cplx>() *
         shifted_dft.array())
            .matrix();
    return d.mean + prior.dft.adjoint() * filtered;
}

/// Subspace VAE estimator: encode the projected observation, apply the
/// decoded prior's subspace filter to the mean-shifted subspace
/// observation, lift back with the trailing mean correction.
inline VecC vae_subspace_estimate(const VecC& pilot_obs, const SubspaceEstimate& sub,
                                  const VaePrior& prior, double noise_var) {
    const int M = prior.antennas();
    const int J = sub.dim();
    if (pilot_obs.size() != M || sub.basis.rows() != M)
        throw config_error("vae_subspace_estimate: dimension mismatch");
    const VecC ytilde = sub.basis * (sub.basis.adjoint() * pilot_obs);
    const DecodedGaussian d = decode(prior, encode(prior, ytilde).mean);

    const MatC QV = prior.dft * sub.basis;
    MatC reduced = QV.adjoint() * d.spectrum.cast<cplx>().asDiagonal() * QV; // V^H C_theta V
    reduced = 0.5 * (reduced + reduced.adjoint().eval());
    Eigen::LDLT<MatC> ldlt(reduced + noise_var * MatC::Identity(J, J));
    if (ldlt.info() != Eigen::Success)
        throw numerical_error("vae_subspace_estimate: reduced system not positive definite");
    const VecC shifted = sub.basis.adjoint() * (pilot_obs - d.mean);
    return sub.basis * (reduced * ldlt.solve(shifted)).eval() -
           sub.basis * (sub.basis.adjoint() * d.mean);
}

/// Pilot-only VAE estimator: encoder fed with the raw pilot observation,
/// conditional LMMSE at the effective pilot noise level.
inline VecC vae_pilot_estimate(const VecC& pilot_obs, const VaePrior& prior,
                               double eff_noise_var) {
    if (pilot_obs.size() != prior.antennas())
        throw config_error("vae_pilot_estimate: dimension mismatch");
    const DecodedGaussian d = decode(prior, encode(prior, pilot_obs).mean);
    const VecC shifted_dft = prior.dft * (pilot_obs - d.mean);
    const VecC filtered =
        ((d.spectrum.array() / (d.spectrum.array() + eff_noise_var)).cast<cplx>() *
         shifted_dft.array())
            .matrix();
    return d.mean + prior.dft.adjoint() * filtered;
}

// Prior file format: magic "VAEP", u32 version (= 1), the layer-shape table
// (u32 M, u32 Z, u32 encoder depth + widths, u32 decoder depth + widths),
// then all parameters as little-endian float64 in declaration order, each
// weight matrix column-major with its bias following.

inline void save_vae(const std::string& path, const VaePrior& prior) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw io_error("save_vae: cannot open '" + path + "' for writing");
    detail::write_magic(os, "VAEP");
    detail::write_u32(os, 1u);
    detail::write_u32(os, static_cast<std::uint32_t>(prior.layout.antennas));
    detail::write_u32(os, static_cast<std::uint32_t>(prior.layout.latent_dim));
    detail::write_u32(os, static_cast<std::uint32_t>(prior.layout.encoder_widths.size()));
    for (int w : prior.layout.encoder_widths)
        detail::write_u32(os, static_cast<std::uint32_t>(w));
    detail::write_u32(os, static_cast<std::uint32_t>(prior.layout.decoder_widths.size()));
    for (int w : prior.layout.decoder_widths)
        detail::write_u32(os, static_cast<std::uint32_t>(w));
    VaeParams copy = prior.params;
    for (auto [data, n] : copy.flat())
        for (long i = 0; i < n; ++i)
            detail::write_f64(os, data[i]);
    if (!os)
        throw io_error("save_vae: write to '" + path + "' failed");
}

inline VaePrior load_vae(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw io_error("load_vae: cannot open '" + path + "'");
    detail::check_magic(is, "VAEP", "VAE prior");
    const std::uint32_t version = detail::read_u32(is, "VAE version");
    if (version != 1u)
        throw io_error("load_vae: unsupported version " + std::to_string(version));

    VaePrior prior;
    prior.layout.antennas = static_cast<int>(detail::read_u32(is, "VAE antenna count"));
    prior.layout.latent_dim = static_cast<int>(detail::read_u32(is, "VAE latent dim"));
    prior.layout.encoder_widths.resize(detail::read_u32(is, "VAE encoder depth"));
    for (int& w : prior.layout.encoder_widths)
        w = static_cast<int>(detail::read_u32(is, "VAE encoder width"));
    prior.layout.decoder_widths.resize(detail::read_u32(is, "VAE decoder depth"));
    for (int& w : prior.layout.decoder_widths)
        w = static_cast<int>(detail::read_u32(is, "VAE decoder width"));
    if (prior.layout.antennas < 1 || prior.layout.latent_dim < 1 ||
        prior.layout.encoder_widths.empty() || prior.layout.decoder_widths.empty())
        throw io_error("load_vae: invalid layer-shape table");

    const int M = prior.layout.antennas;
    const int Z = prior.layout.latent_dim;
    int in = 2 * M;
    for (int w : prior.layout.encoder_widths) {
        prior.params.enc_hidden.push_back({MatR(w, in), VecR(w)});
        in = w;
    }
    prior.params.enc_mean = {MatR(Z, in), VecR(Z)};
    prior.params.enc_logvar = {MatR(Z, in), VecR(Z)};
    in = Z;
    for (int w : prior.layout.decoder_widths) {
        prior.params.dec_hidden.push_back({MatR(w, in), VecR(w)});
        in = w;
    }
    prior.params.dec_mean = {MatR(2 * M, in), VecR(2 * M)};
    prior.params.dec_logspec = {MatR(M, in), VecR(M)};

    for (auto [data, n] : prior.params.flat())
        for (long i = 0; i < n; ++i)
            data[i] = detail::read_f64(is, "VAE parameter");
    prior.dft = detail::unitary_dft(M);
    return prior;
}

} // namespace sbce

#endif
