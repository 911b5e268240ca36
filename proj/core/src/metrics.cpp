#include "pbrgen/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "pbrgen/errors.hpp"
#include "pbrgen/rng.hpp"

namespace pbrgen {

namespace {

void fill_uniform(Tensor& t, Rng& rng, double scale) {
    for (float& v : t.data()) v = float((rng.next_double() * 2.0 - 1.0) * scale);
}

} // namespace

EmbeddingBackbone::EmbeddingBackbone(uint64_t seed) {
    Rng rng(seed);
    w1_ = Tensor::zeros({12, 3, 3, 3});
    b1_ = Tensor::zeros({12});
    w2_ = Tensor::zeros({24, 12, 3, 3});
    b2_ = Tensor::zeros({24});
    w3_ = Tensor::zeros({32, 24, 3, 3});
    b3_ = Tensor::zeros({32});
    fill_uniform(w1_, rng, std::sqrt(1.0 / 27.0));
    fill_uniform(b1_, rng, 0.05);
    fill_uniform(w2_, rng, std::sqrt(1.0 / 108.0));
    fill_uniform(b2_, rng, 0.05);
    fill_uniform(w3_, rng, std::sqrt(1.0 / 216.0));
    fill_uniform(b3_, rng, 0.05);
}

std::vector<float> EmbeddingBackbone::embed(const Image& rgb) const {
    if (rgb.channels != 3)
        throw MetricError("embed: want a 3-channel image, got " + std::to_string(rgb.channels));
    if (rgb.height < 8 || rgb.width < 8) throw MetricError("embed: image smaller than 8x8");
    Tensor x = Tensor::from_data({1, 3, rgb.height, rgb.width},
                                 std::vector<float>(rgb.data.begin(), rgb.data.end()));
    x = tanh_t(conv2d(x, w1_, b1_, 2, 1));
    x = tanh_t(conv2d(x, w2_, b2_, 2, 1));
    x = tanh_t(conv2d(x, w3_, b3_, 2, 1));
    // global average pool per channel
    const int C = x.dim(1), HW = x.dim(2) * x.dim(3);
    std::vector<float> out(size_t(C));
    for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int i = 0; i < HW; ++i) acc += x.data()[size_t(c) * HW + i];
        out[size_t(c)] = float(acc / HW);
    }
    return out;
}

GaussianStats fit_gaussian(const std::vector<std::vector<float>>& vecs) {
    if (vecs.empty()) throw MetricError("fit_gaussian: empty sample set");
    const size_t d = vecs[0].size();
    for (const auto& v : vecs)
        if (v.size() != d) throw MetricError("fit_gaussian: inconsistent dimensions");

    GaussianStats g;
    g.count = int(vecs.size());
    g.mean.assign(d, 0.0);
    for (const auto& v : vecs)
        for (size_t i = 0; i < d; ++i) g.mean[i] += v[i];
    for (double& m : g.mean) m /= double(vecs.size());

    g.cov.assign(d * d, 0.0);
    std::vector<double> c(d);
    for (const auto& v : vecs) {
        for (size_t i = 0; i < d; ++i) c[i] = double(v[i]) - g.mean[i];
        for (size_t i = 0; i < d; ++i)
            for (size_t j = i; j < d; ++j) g.cov[i * d + j] += c[i] * c[j];
    }
    for (size_t i = 0; i < d; ++i)
        for (size_t j = i; j < d; ++j) {
            g.cov[i * d + j] /= double(vecs.size());
            g.cov[j * d + i] = g.cov[i * d + j];
        }
    return g;
}

void jacobi_eig(std::vector<double> a, int n, std::vector<double>& eigvals,
                std::vector<double>& eigvecs, int max_sweeps) {
    if (n <= 0 || int(a.size()) != n * n) throw MetricError("jacobi_eig: bad matrix size");
    eigvecs.assign(size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i) eigvecs[size_t(i) * n + i] = 1.0;

    double frob2 = 0.0;
    for (double v : a) frob2 += v * v;
    const double tol2 = std::max(frob2 * 1e-28, 1e-300);

    bool converged = false;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        double off2 = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off2 += 2.0 * a[size_t(p) * n + q] * a[size_t(p) * n + q];
        if (off2 <= tol2) {
            converged = true;
            break;
        }
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double apq = a[size_t(p) * n + q];
                if (apq == 0.0) continue;
                const double tau = (a[size_t(q) * n + q] - a[size_t(p) * n + p]) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a[size_t(k) * n + p], akq = a[size_t(k) * n + q];
                    a[size_t(k) * n + p] = c * akp - s * akq;
                    a[size_t(k) * n + q] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a[size_t(p) * n + k], aqk = a[size_t(q) * n + k];
                    a[size_t(p) * n + k] = c * apk - s * aqk;
                    a[size_t(q) * n + k] = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = eigvecs[size_t(k) * n + p], vkq = eigvecs[size_t(k) * n + q];
                    eigvecs[size_t(k) * n + p] = c * vkp - s * vkq;
                    eigvecs[size_t(k) * n + q] = s * vkp + c * vkq;
                }
            }
    }
    if (!converged) {
        // final check: the last sweep may have finished the job
        double off2 = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off2 += 2.0 * a[size_t(p) * n + q] * a[size_t(p) * n + q];
        if (off2 > tol2) throw MetricError("jacobi_eig: no convergence in sweep limit");
    }
    eigvals.resize(size_t(n));
    for (int i = 0; i < n; ++i) eigvals[size_t(i)] = a[size_t(i) * n + i];
}

void GaussianStats::validate() const {
    const size_t d = mean.size();
    if (cov.size() != d * d) throw MetricError("GaussianStats: covariance size mismatch");
    for (size_t i = 0; i < d; ++i)
        for (size_t j = i + 1; j < d; ++j)
            if (std::abs(cov[i * d + j] - cov[j * d + i]) > 1e-9)
                throw MetricError("GaussianStats: covariance not symmetric");
    std::vector<double> vals, vecs;
    jacobi_eig(cov, int(d), vals, vecs);
    for (double v : vals)
        if (v < -1e-8) throw MetricError("GaussianStats: covariance not PSD within tolerance");
}

namespace {

// V sqrt(clamp(L)) V^T of a symmetric PSD matrix.
std::vector<double> sqrtm_psd(const std::vector<double>& m, int n) {
    std::vector<double> vals, vecs;
    jacobi_eig(m, n, vals, vecs);
    double vmax = 0.0;
    for (double v : vals) vmax = std::max(vmax, v);
    std::vector<double> roots(size_t(n));
    for (int i = 0; i < n; ++i) {
        if (vals[size_t(i)] < -1e-6 * std::max(1.0, vmax))
            throw MetricError("matrix sqrt: eigenvalue below PSD tolerance");
        roots[size_t(i)] = std::sqrt(std::max(vals[size_t(i)], 0.0));
    }
    std::vector<double> out(size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k)
                acc += vecs[size_t(i) * n + k] * roots[size_t(k)] * vecs[size_t(j) * n + k];
            out[size_t(i) * n + j] = acc;
        }
    return out;
}

std::vector<double> matmul_sq(const std::vector<double>& a, const std::vector<double>& b, int n) {
    std::vector<double> out(size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            const double aik = a[size_t(i) * n + k];
            if (aik == 0.0) continue;
            for (int j = 0; j < n; ++j) out[size_t(i) * n + j] += aik * b[size_t(k) * n + j];
        }
    return out;
}

} // namespace

double frechet(const GaussianStats& a, const GaussianStats& b) {
    if (a.dim() != b.dim()) throw MetricError("frechet: dimension mismatch");
    a.validate();
    b.validate();
    const int n = a.dim();

    double d2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = a.mean[size_t(i)] - b.mean[size_t(i)];
        d2 += d * d;
    }

    const std::vector<double> s2h = sqrtm_psd(b.cov, n);
    std::vector<double> m = matmul_sq(matmul_sq(s2h, a.cov, n), s2h, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double v = 0.5 * (m[size_t(i) * n + j] + m[size_t(j) * n + i]);
            m[size_t(i) * n + j] = v;
            m[size_t(j) * n + i] = v;
        }
    std::vector<double> vals, vecs;
    jacobi_eig(m, n, vals, vecs);
    double vmax = 0.0;
    for (double v : vals) vmax = std::max(vmax, v);
    double tr_sqrt = 0.0;
    for (double v : vals) {
        if (v < -1e-6 * std::max(1.0, vmax))
            throw MetricError("frechet: product matrix not PSD within tolerance");
        tr_sqrt += std::sqrt(std::max(v, 0.0));
    }

    double tr = 0.0;
    for (int i = 0; i < n; ++i) tr += a.cov[size_t(i) * n + i] + b.cov[size_t(i) * n + i];
    return d2 + tr - 2.0 * tr_sqrt;
}

namespace {

double dist2(const std::vector<float>& a, const std::vector<float>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = double(a[i]) - double(b[i]);
        acc += d * d;
    }
    return acc;
}

void check_dims(const std::vector<std::vector<float>>& x,
                const std::vector<std::vector<float>>& y, const char* op) {
    if (x.empty() || y.empty()) throw MetricError(std::string(op) + ": empty sample set");
    const size_t d = x[0].size();
    for (const auto& v : x)
        if (v.size() != d) throw MetricError(std::string(op) + ": inconsistent dimensions");
    for (const auto& v : y)
        if (v.size() != d) throw MetricError(std::string(op) + ": inconsistent dimensions");
}

} // namespace

double median_bandwidth(const std::vector<std::vector<float>>& x,
                        const std::vector<std::vector<float>>& y) {
    check_dims(x, y, "median_bandwidth");
    std::vector<std::vector<float>> all;
    all.reserve(x.size() + y.size());
    all.insert(all.end(), x.begin(), x.end());
    all.insert(all.end(), y.begin(), y.end());
    std::vector<double> dists;
    for (size_t i = 0; i < all.size(); ++i)
        for (size_t j = i + 1; j < all.size(); ++j) dists.push_back(std::sqrt(dist2(all[i], all[j])));
    if (dists.empty()) return 1.0;
    std::sort(dists.begin(), dists.end());
    const size_t n = dists.size();
    const double med = n % 2 ? dists[n / 2] : 0.5 * (dists[n / 2 - 1] + dists[n / 2]);
    return med > 0.0 ? med : 1.0;
}

double mmd_rbf(const std::vector<std::vector<float>>& x,
               const std::vector<std::vector<float>>& y, double bandwidth) {
    check_dims(x, y, "mmd_rbf");
    if (!(bandwidth > 0.0)) throw MetricError("mmd_rbf: bandwidth must be positive");
    const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
    auto mean_kernel = [&](const std::vector<std::vector<float>>& a,
                           const std::vector<std::vector<float>>& b) {
        double acc = 0.0;
        for (const auto& u : a)
            for (const auto& v : b) acc += std::exp(-dist2(u, v) * inv);
        return acc / (double(a.size()) * double(b.size()));
    };
    return mean_kernel(x, x) + mean_kernel(y, y) - 2.0 * mean_kernel(x, y);
}

std::vector<std::pair<std::string, Image>> stack_composites(const Image& stack) {
    if (stack.channels != 8)
        throw MetricError("stack_composites: want an 8-channel stack, got " +
                          std::to_string(stack.channels));
    const int H = stack.height, W = stack.width;
    auto channel = [&](int c) { return slice_channels(stack, c, c + 1); };
    auto rep3 = [&](const Image& one) {
        return concat_channels(concat_channels(one, one), one);
    };
    Image gray(1, H, W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            gray.at(0, y, x) = 0.2126f * stack.at(0, y, x) + 0.7152f * stack.at(1, y, x) +
                               0.0722f * stack.at(2, y, x);
    Image nxy(1, H, W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const float bx = stack.at(5, y, x), by = stack.at(6, y, x);
            nxy.at(0, y, x) = std::sqrt(bx * bx + by * by);
        }

    std::vector<std::pair<std::string, Image>> out;
    out.push_back({"albedo", slice_channels(stack, 0, 3)});
    out.push_back({"roughness", rep3(channel(3))});
    out.push_back({"metallic", rep3(channel(4))});
    out.push_back({"bump", slice_channels(stack, 5, 8)});
    out.push_back({"gray-rough-metal",
                   concat_channels(concat_channels(gray, channel(3)), channel(4))});
    out.push_back({"rough-metal-nxy", concat_channels(concat_channels(channel(3), channel(4)), nxy)});
    out.push_back({"gray-nx-ny", concat_channels(concat_channels(gray, channel(5)), channel(6))});
    return out;
}

TripletScore pbr_triplet_score(const std::vector<Image>& a, const std::vector<Image>& b,
                               MetricKind metric, const EmbeddingBackbone& backbone) {
    if (a.empty() || b.empty()) throw MetricError("pbr_triplet_score: empty set");
    for (const Image* img : {&a[0], &b[0]})
        if (img->channels != 8) throw MetricError("pbr_triplet_score: want 8-channel stacks");
    for (const Image& img : a)
        if (!img.same_shape(a[0])) throw MetricError("pbr_triplet_score: mixed resolutions");
    for (const Image& img : b)
        if (!img.same_shape(a[0])) throw MetricError("pbr_triplet_score: mixed resolutions");

    std::vector<std::string> names;
    for (const auto& [name, img] : stack_composites(a[0])) names.push_back(name);
    const size_t n_comp = names.size();

    auto embed_all = [&](const std::vector<Image>& stacks) {
        std::vector<std::vector<std::vector<float>>> per_comp(n_comp);
        for (const Image& img : stacks) {
            const auto comps = stack_composites(img);
            for (size_t ci = 0; ci < n_comp; ++ci)
                per_comp[ci].push_back(backbone.embed(comps[ci].second));
        }
        return per_comp;
    };
    const auto ea = embed_all(a), eb = embed_all(b);

    TripletScore score;
    for (size_t ci = 0; ci < n_comp; ++ci) {
        const double v = metric == MetricKind::frechet
                             ? frechet(fit_gaussian(ea[ci]), fit_gaussian(eb[ci]))
                             : mmd_rbf(ea[ci], eb[ci], median_bandwidth(ea[ci], eb[ci]));
        score.breakdown.push_back({names[ci], v});
        score.mean += v;
    }
    score.mean /= double(n_comp);
    return score;
}

std::vector<float> interp_noise(const std::vector<float>& e0, const std::vector<float>& e1,
                                double lambda) {
    if (e0.size() != e1.size()) throw MetricError("interp_noise: size mismatch");
    if (e0.empty()) throw MetricError("interp_noise: empty input");
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw MetricError("interp_noise: lambda must be in [0,1]");
    const size_t n = e0.size();
    std::vector<double> blend(n);
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) {
        blend[i] = (1.0 - lambda) * double(e0[i]) + lambda * double(e1[i]);
        mean += blend[i];
    }
    mean /= double(n);
    double var = 0.0;
    for (double v : blend) var += (v - mean) * (v - mean);
    var /= double(n);
    if (var < 1e-20) throw MetricError("interp_noise: zero-variance blend");
    const double inv_std = 1.0 / std::sqrt(var);
    std::vector<float> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = float((blend[i] - mean) * inv_std);
    return out;
}

std::vector<float> interp_prompt(const std::vector<float>& e0, const std::vector<float>& e1,
                                 double lambda) {
    if (e0.size() != e1.size()) throw MetricError("interp_prompt: size mismatch");
    std::vector<float> out(e0.size());
    for (size_t i = 0; i < e0.size(); ++i)
        out[i] = float((1.0 - lambda) * double(e0[i]) + lambda * double(e1[i]));
    return out;
}

} // namespace pbrgen
