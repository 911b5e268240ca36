#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pbrgen/image.hpp"
#include "pbrgen/tensor.hpp"

namespace pbrgen {

// Frozen convolutional encoder standing in for a pretrained embedding model.
// Weights are a pure function of the seed (uniform draws, no transcendental
// functions), so embeddings are reproducible across runs. Input is a
// 3-channel image with H, W >= 8; output has fixed width dim().
class EmbeddingBackbone {
public:
    explicit EmbeddingBackbone(uint64_t seed = 7);

    int dim() const { return 32; }
    std::vector<float> embed(const Image& rgb) const;

private:
    Tensor w1_, b1_, w2_, b2_, w3_, b3_;
};

// Gaussian fit of an embedding cloud. Covariance is the population form
// (divide by n), so a single sample yields the zero matrix.
struct GaussianStats {
    std::vector<double> mean;
    std::vector<double> cov; // dim x dim, row-major, symmetric
    int count = 0;

    int dim() const { return int(mean.size()); }
    void validate() const; // symmetry + eigenvalues >= -1e-8
};

GaussianStats fit_gaussian(const std::vector<std::vector<float>>& vecs);

// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major n*n).
// Returns eigenvalues (unsorted) and eigenvectors as columns of V.
// Throws MetricError if the sweep limit is exhausted.
void jacobi_eig(std::vector<double> a, int n, std::vector<double>& eigvals,
                std::vector<double>& eigvecs, int max_sweeps = 64);

// ||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}), matrix root via
// eigendecomposition of sqrt(S2) S1 sqrt(S2) with negatives clamped at 0.
double frechet(const GaussianStats& a, const GaussianStats& b);

// Median pairwise distance over the union; 1.0 when all points coincide.
double median_bandwidth(const std::vector<std::vector<float>>& x,
                        const std::vector<std::vector<float>>& y);

// Biased (V-statistic) RBF MMD: mean k(X,X) + mean k(Y,Y) - 2 mean k(X,Y)
// with k(a,b) = exp(-|a-b|^2 / (2 bandwidth^2)). Always >= 0 up to rounding.
double mmd_rbf(const std::vector<std::vector<float>>& x,
               const std::vector<std::vector<float>>& y, double bandwidth);

enum class MetricKind { frechet, mmd };

struct TripletScore {
    double mean = 0.0;
    std::vector<std::pair<std::string, double>> breakdown;
};

// Composite views of an 8-channel material stack that are scored
// independently: each channel group (albedo, roughness, metallic, bump) and
// the three mixed triplets (grayscale albedo, roughness, metallic),
// (roughness, metallic, normal-XY norm), (grayscale albedo, normal X,
// normal Y). Single channels are replicated to 3 for the backbone.
std::vector<std::pair<std::string, Image>> stack_composites(const Image& stack);

// Scores two sets of 8-channel stacks composite-by-composite and averages.
TripletScore pbr_triplet_score(const std::vector<Image>& a, const std::vector<Image>& b,
                               MetricKind metric, const EmbeddingBackbone& backbone);

// (1-lambda) e0 + lambda e1, then renormalized to empirical mean 0, std 1
// (population std). Throws on a zero-variance blend.
std::vector<float> interp_noise(const std::vector<float>& e0, const std::vector<float>& e1,
                                double lambda);

// Plain linear interpolation, no renormalization.
std::vector<float> interp_prompt(const std::vector<float>& e0, const std::vector<float>& e1,
                                 double lambda);

} // namespace pbrgen
