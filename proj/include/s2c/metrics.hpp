#pragma once

// The five evaluation quantities: FGD (Gaussian Frechet in gesture space),
// WGD (exact optimal transport between fitted diagonal GMMs), PD (mean
// Euclidean wrist error), Smoothness (relative acceleration) and FID
// (Frechet in a learned latent space). Everything is double precision and
// deterministic given inputs and the metric seed.

#include <cstdint>
#include <string>
#include <vector>

#include "s2c/nn.hpp"
#include "s2c/rng.hpp"
#include "s2c/tensor.hpp"

namespace s2c {

struct GaussianStats {
    std::vector<double> mean;  // d
    std::vector<double> cov;   // d x d row-major
    int dim = 0;
};

// sample covariance with +1e-6 I regularization; warns on rank deficiency
GaussianStats fit_gaussian(const std::vector<std::vector<double>>& samples);

// cyclic Jacobi eigendecomposition of a symmetric matrix; A = V diag(w) V^T
void sym_eig(const std::vector<double>& a, int d, std::vector<double>& evals, std::vector<double>& evecs);

// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2), eigenvalues
// clamped at zero
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// per-hand Frechet gesture distance over per-frame flattened joint angles
double fgd(const std::vector<Tensor32>& pred, const std::vector<Tensor32>& gt);

struct GmmModel {
    int components = 0;
    int dim = 0;
    std::vector<double> weights;  // K
    std::vector<double> means;    // K x d
    std::vector<double> vars;     // K x d, diagonal, floored at 1e-6
};

GmmModel fit_gmm_em(const std::vector<std::vector<double>>& samples, int components, RngStream rng,
                    int max_iter = 100, double tol = 1e-6);

// squared 2-Wasserstein between diagonal Gaussians
double gaussian_w2sq_diag(const std::vector<double>& mean_a, const std::vector<double>& var_a,
                          const std::vector<double>& mean_b, const std::vector<double>& var_b);

// exact optimal-transport cost between weight vectors under a dense cost
// matrix (transportation simplex)
double transport_cost(std::vector<double> supply, std::vector<double> demand,
                      const std::vector<double>& cost);

// component-wise W2^2 cost matrix between two fitted mixtures
std::vector<double> wgd_cost_matrix(const GmmModel& a, const GmmModel& b);
// exact OT between the component weights under that cost
double wgd_from_models(const GmmModel& a, const GmmModel& b);

double wgd(const std::vector<Tensor32>& pred, const std::vector<Tensor32>& gt, int components,
           std::uint64_t seed);

// the EM seeding wgd() uses internally; exposed so oracle tests can fit the
// same mixtures it compares
RngStream wgd_fit_stream(std::uint64_t seed);

// mean Euclidean distance over frames/clips for one hand's trajectories
double pd_single(const std::vector<Tensor32>& pred, const std::vector<Tensor32>& gt);
// mean over both hands (clip-aligned pairs)
double pd(const std::vector<Tensor32>& pred_l, const std::vector<Tensor32>& pred_r,
          const std::vector<Tensor32>& gt_l, const std::vector<Tensor32>& gt_r);

// | mean|a_pred| - mean|a_gt| | / max(mean|a_gt|, 1e-8) with second-order
// central-difference acceleration per channel
double smoothness(const Tensor32& pred, const Tensor32& gt);
double smoothness_set(const std::vector<Tensor32>& pred, const std::vector<Tensor32>& gt);

// --- FID embedder ------------------------------------------------------------

struct GesturePair {
    Tensor32 left, right;  // N x J x 3 each
};

// small temporal conv autoencoder; the bottleneck is the FID latent space
struct MotionEmbedder {
    int in_channels = 0;
    int width = 32;
    int latent = 16;
    ParamStoreT<float> params;
    Conv1dT<float> enc1, enc2;
    LinearT<float> to_latent;
    LinearT<float> from_latent;
    Conv1dT<float> dec1, dec2;
    bool trained = false;

    static MotionEmbedder make(int in_channels, int width, int latent, std::uint64_t seed);

    std::vector<double> encode(const GesturePair& clip) const;
    double reconstruction_error(const GesturePair& clip) const;
};

// trains on ground-truth motion only, fixed seed, deterministic
void train_embedder(MotionEmbedder& emb, const std::vector<GesturePair>& gt, int steps, double lr,
                    std::uint64_t seed);

void save_embedder(const MotionEmbedder& emb, const std::string& path);
MotionEmbedder load_embedder(const std::string& path);

double fid(const std::vector<GesturePair>& pred, const std::vector<GesturePair>& gt,
           const MotionEmbedder& emb);

}  // namespace s2c
