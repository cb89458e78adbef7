// Copyright 2026 The seqcond Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "seqcond/errors.hpp"
#include "seqcond/io.hpp"
#include "seqcond/video.hpp"

namespace seqcond::metrics {

struct SsimConfig {
    int window = 11;
    double sigma = 1.5;
    double c1 = 1e-4;  // (0.01 * 1)^2
    double c2 = 9e-4;  // (0.03 * 1)^2
};

inline constexpr double kPsnrCap = 99.0;

namespace detail {

inline void check_same(const Grid4& a, const Grid4& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
    }
}

inline std::vector<double> gaussian_taps(const SsimConfig& cfg) {
    const int r = cfg.window / 2;
    std::vector<double> g(static_cast<std::size_t>(cfg.window));
    for (int i = -r; i <= r; ++i) g[static_cast<std::size_t>(i + r)] = std::exp(-(i * i) / (2.0 * cfg.sigma * cfg.sigma));
    return g;
}

// Gaussian-weighted local mean of `img` (h x w). Near the border the window
// is cut to the image and its weights renormalized.
inline std::vector<double> local_mean(const std::vector<double>& img, std::size_t h, std::size_t w,
                                      const std::vector<double>& g) {
    const long r = static_cast<long>(g.size() / 2);
    std::vector<double> tmp(h * w), out(h * w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double s = 0.0, n = 0.0;
            for (long k = -r; k <= r; ++k) {
                const long xx = static_cast<long>(x) + k;
                if (xx < 0 || xx >= static_cast<long>(w)) continue;
                const double wt = g[static_cast<std::size_t>(k + r)];
                s += wt * img[y * w + static_cast<std::size_t>(xx)];
                n += wt;
            }
            tmp[y * w + x] = s / n;
        }
    }
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double s = 0.0, n = 0.0;
            for (long k = -r; k <= r; ++k) {
                const long yy = static_cast<long>(y) + k;
                if (yy < 0 || yy >= static_cast<long>(h)) continue;
                const double wt = g[static_cast<std::size_t>(k + r)];
                s += wt * tmp[static_cast<std::size_t>(yy) * w + x];
                n += wt;
            }
            out[y * w + x] = s / n;
        }
    }
    return out;
}

}  // namespace detail

/// Mean SSIM of one channel plane pair.
inline double ssim_plane(const float* a, const float* b, std::size_t h, std::size_t w, const SsimConfig& cfg = {}) {
    const auto g = detail::gaussian_taps(cfg);
    const std::size_t n = h * w;
    std::vector<double> x(a, a + n), y(b, b + n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto mx = detail::local_mean(x, h, w, g);
    const auto my = detail::local_mean(y, h, w, g);
    const auto mxx = detail::local_mean(xx, h, w, g);
    const auto myy = detail::local_mean(yy, h, w, g);
    const auto mxy = detail::local_mean(xy, h, w, g);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double vx = mxx[i] - mx[i] * mx[i];
        const double vy = myy[i] - my[i] * my[i];
        const double cxy = mxy[i] - mx[i] * my[i];
        total += ((2.0 * mx[i] * my[i] + cfg.c1) * (2.0 * cxy + cfg.c2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + cfg.c1) * (vx + vy + cfg.c2));
    }
    return total / static_cast<double>(n);
}

/// SSIM averaged over channels, then over frames.
inline double ssim(const Grid4& a, const Grid4& b, const SsimConfig& cfg = {}) {
    detail::check_same(a, b, "ssim");
    if (a.size() == 0) throw ShapeError("ssim: empty input");
    double total = 0.0;
    for (std::size_t f = 0; f < a.frames; ++f) {
        double frame = 0.0;
        for (std::size_t c = 0; c < a.channels; ++c) {
            frame += ssim_plane(a.data.data() + a.index(c, f, 0, 0), b.data.data() + b.index(c, f, 0, 0), a.height,
                                a.width, cfg);
        }
        total += frame / static_cast<double>(a.channels);
    }
    return total / static_cast<double>(a.frames);
}

inline double mse(const Grid4& a, const Grid4& b) {
    detail::check_same(a, b, "mse");
    if (a.size() == 0) throw ShapeError("mse: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

inline double psnr_from_mse(double m) {
    if (m <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

/// 10 log10(1 / MSE) for dynamic range 1, capped at 99 dB.
inline double psnr(const Grid4& a, const Grid4& b) { return psnr_from_mse(mse(a, b)); }

// ---- Frechet proxy -------------------------------------------------------------

/// Hand-crafted per-video features, 4C + 4 values (16 for RGB): per channel
/// mean, std, mean |temporal difference| and mean gradient magnitude, then
/// std, min, max and least-squares slope of the per-frame mean intensity.
inline std::vector<double> video_features(const Grid4& v) {
    if (v.size() == 0) throw ShapeError("video_features: empty video");
    const std::size_t C = v.channels, L = v.frames, H = v.height, W = v.width, P = v.plane();
    std::vector<double> f;
    f.reserve(4 * C + 4);
    std::vector<double> mean(C), sd(C), tdiff(C), grad(C);
    for (std::size_t c = 0; c < C; ++c) {
        const float* base = v.data.data() + v.index(c, 0, 0, 0);
        double s = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < L * P; ++i) {
            s += base[i];
            s2 += static_cast<double>(base[i]) * base[i];
        }
        const double n = static_cast<double>(L * P);
        mean[c] = s / n;
        sd[c] = std::sqrt(std::max(0.0, s2 / n - mean[c] * mean[c]));
        if (L > 1) {
            double d = 0.0;
            for (std::size_t i = 0; i < (L - 1) * P; ++i) d += std::abs(static_cast<double>(base[i + P]) - base[i]);
            tdiff[c] = d / static_cast<double>((L - 1) * P);
        }
        if (H > 1 && W > 1) {
            double g = 0.0;
            for (std::size_t l = 0; l < L; ++l)
                for (std::size_t y = 0; y + 1 < H; ++y)
                    for (std::size_t x = 0; x + 1 < W; ++x) {
                        const float* p = base + l * P + y * W + x;
                        const double gx = static_cast<double>(p[1]) - p[0];
                        const double gy = static_cast<double>(p[W]) - p[0];
                        g += std::sqrt(gx * gx + gy * gy);
                    }
            grad[c] = g / static_cast<double>(L * (H - 1) * (W - 1));
        }
    }
    for (auto* part : {&mean, &sd, &tdiff, &grad}) f.insert(f.end(), part->begin(), part->end());

    std::vector<double> traj(L, 0.0);
    for (std::size_t l = 0; l < L; ++l) {
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            const float* p = v.data.data() + v.index(c, l, 0, 0);
            for (std::size_t i = 0; i < P; ++i) s += p[i];
        }
        traj[l] = s / static_cast<double>(C * P);
    }
    double tm = 0.0;
    for (double t : traj) tm += t;
    tm /= static_cast<double>(L);
    double tv = 0.0, num = 0.0, den = 0.0;
    const double xm = (static_cast<double>(L) - 1.0) / 2.0;
    for (std::size_t l = 0; l < L; ++l) {
        tv += (traj[l] - tm) * (traj[l] - tm);
        num += (static_cast<double>(l) - xm) * (traj[l] - tm);
        den += (static_cast<double>(l) - xm) * (static_cast<double>(l) - xm);
    }
    f.push_back(std::sqrt(tv / static_cast<double>(L)));
    f.push_back(*std::min_element(traj.begin(), traj.end()));
    f.push_back(*std::max_element(traj.begin(), traj.end()));
    f.push_back(den > 0.0 ? num / den : 0.0);
    return f;
}

/// Regularization added to every fitted covariance diagonal.
inline constexpr double kCovarianceRidge = 1e-6;

struct Gaussian {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// Sample mean and unbiased covariance plus kCovarianceRidge on the diagonal.
inline Gaussian fit_gaussian(const std::vector<std::vector<double>>& samples) {
    if (samples.size() < 2) throw ConfigError("fit_gaussian: need at least 2 samples");
    const auto d = static_cast<Eigen::Index>(samples.front().size());
    Eigen::MatrixXd X(static_cast<Eigen::Index>(samples.size()), d);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (static_cast<Eigen::Index>(samples[i].size()) != d) throw ShapeError("fit_gaussian: ragged features");
        for (Eigen::Index j = 0; j < d; ++j) X(static_cast<Eigen::Index>(i), j) = samples[i][static_cast<std::size_t>(j)];
    }
    Gaussian g;
    g.mean = X.colwise().mean().transpose();
    const Eigen::MatrixXd centered = X.rowwise() - g.mean.transpose();
    g.cov = centered.transpose() * centered / static_cast<double>(samples.size() - 1);
    g.cov.diagonal().array() += kCovarianceRidge;
    return g;
}

namespace detail {

inline Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    const Eigen::VectorXd s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)). The trace of the
/// cross term is taken from the eigenvalues of sqrt(S_a) S_b sqrt(S_a).
inline double frechet_distance(const Gaussian& a, const Gaussian& b) {
    if (a.mean.size() != b.mean.size()) throw ShapeError("frechet_distance: dimension mismatch");
    const Eigen::MatrixXd ra = detail::sym_sqrt(a.cov);
    Eigen::MatrixXd m = ra * b.cov * ra;
    m = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    return std::max(0.0, d);
}

/// Frechet distance between Gaussians fitted to video_features of each set.
inline double frechet_proxy(const std::vector<Grid4>& set_a, const std::vector<Grid4>& set_b) {
    if (set_a.size() < 2 || set_b.size() < 2) throw ConfigError("fvd_proxy: need at least 2 videos per set");
    std::vector<std::vector<double>> fa, fb;
    for (const auto& v : set_a) fa.push_back(video_features(v));
    for (const auto& v : set_b) fb.push_back(video_features(v));
    return frechet_distance(fit_gaussian(fa), fit_gaussian(fb));
}

// ---- report --------------------------------------------------------------------

struct ClipScore {
    std::size_t clip_id = 0;
    double ssim = 0.0;
    double psnr = 0.0;
};

/// Per-clip SSIM / PSNR plus set-level fvd_proxy. fvd_proxy is a property of
/// the set, so per-clip rows leave it blank.
struct MetricReport {
    std::uint64_t config_hash = 0;
    std::string dims;  // C x T x H x W of evaluated clips
    std::vector<ClipScore> clips;
    std::optional<double> fvd_proxy;

    double mean_ssim() const {
        double s = 0.0;
        for (const auto& c : clips) s += c.ssim;
        return clips.empty() ? 0.0 : s / static_cast<double>(clips.size());
    }
    double mean_psnr() const {
        double s = 0.0;
        for (const auto& c : clips) s += c.psnr;
        return clips.empty() ? 0.0 : s / static_cast<double>(clips.size());
    }

    std::string to_csv() const {
        std::string out = "# config_hash=" + io::hex64(config_hash) + " dims=" + dims + "\n";
        out += "clip_id,ssim,psnr,fvd_proxy\n";
        char buf[128];
        for (const auto& c : clips) {
            std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,\n", c.clip_id, c.ssim, c.psnr);
            out += buf;
        }
        std::snprintf(buf, sizeof buf, "mean,%.6f,%.6f,", mean_ssim(), mean_psnr());
        out += buf;
        if (fvd_proxy) {
            std::snprintf(buf, sizeof buf, "%.6f", *fvd_proxy);
            out += buf;
        }
        out += "\n";
        return out;
    }
};

/// Scores generated videos against references, clip by clip.
inline MetricReport evaluate(const std::vector<std::size_t>& ids, const std::vector<Grid4>& generated,
                             const std::vector<Grid4>& reference, std::uint64_t config_hash) {
    if (ids.empty()) throw ConfigError("evaluate: empty split");
    if (ids.size() != generated.size() || ids.size() != reference.size()) {
        throw ShapeError("evaluate: clip count mismatch");
    }
    MetricReport r;
    r.config_hash = config_hash;
    r.dims = reference.front().shape_string();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        r.clips.push_back({ids[i], ssim(generated[i], reference[i]), psnr(generated[i], reference[i])});
    }
    if (ids.size() >= 2) r.fvd_proxy = frechet_proxy(generated, reference);
    return r;
}

}  // namespace seqcond::metrics
