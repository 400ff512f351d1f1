#include "nibm/ensemble.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

#include <boost/math/constants/constants.hpp>
#include <boost/multiprecision/eigen.hpp>
#include <boost/multiprecision/mpfr.hpp>

namespace nibm {

namespace {

// The Gram matrix mixes scales like exp(-(a_k - b_l)^2 / (2 sigma^2));
// at the small sigma^2 this project runs, that is hundreds of decimal
// orders, so all Gram/kernel arithmetic happens at fixed extended
// precision and only final results round to double.
using Real = boost::multiprecision::number<boost::multiprecision::mpfr_float_backend<1100>,
                                            boost::multiprecision::et_off>;
using MatrixR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using VectorR = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

constexpr double kSafeLog10Cond = 1000.0; // headroom below the 1100-digit type

struct GaussianProduct {
    Real v;     // variance of the product gaussian
    Real m;     // mean
    Real scale; // \int w1 w2 = exp(-(a-b)^2/(2(v1+v2))) * sqrt(2 pi v)
    Real s1, s2;       // sqrt(v1), sqrt(v2)
    Real delta1, delta2, gamma1, gamma2; // (m-a)/s1 etc., sqrt(v)/s1 etc.
};

GaussianProduct gaussianProduct(const EnsembleSpec& spec, int k, int l) {
    const Real a = spec.cfg.a[static_cast<std::size_t>(k)];
    const Real b = spec.cfg.b[static_cast<std::size_t>(l)];
    const Real v1 = Real(spec.cfg.t) * spec.sigma2;
    const Real v2 = Real(1.0 - spec.cfg.t) * spec.sigma2;
    GaussianProduct g;
    g.v = v1 * v2 / (v1 + v2);
    g.m = (a * v2 + b * v1) / (v1 + v2);
    g.scale = exp(-(a - b) * (a - b) / (2 * (v1 + v2))) * sqrt(2 * boost::math::constants::pi<Real>() * g.v);
    g.s1 = sqrt(v1);
    g.s2 = sqrt(v2);
    g.delta1 = (g.m - a) / g.s1;
    g.delta2 = (g.m - b) / g.s2;
    g.gamma1 = sqrt(g.v) / g.s1;
    g.gamma2 = sqrt(g.v) / g.s2;
    return g;
}

// Raw moments E[X^q] of N(m, v), q = 0..qmax.
std::vector<Real> gaussianMoments(const Real& m, const Real& v, int qmax) {
    std::vector<Real> mom(static_cast<std::size_t>(qmax) + 1);
    mom[0] = 1;
    if (qmax >= 1) mom[1] = m;
    for (int q = 2; q <= qmax; ++q)
        mom[static_cast<std::size_t>(q)] =
            m * mom[static_cast<std::size_t>(q) - 1] + Real(q - 1) * v * mom[static_cast<std::size_t>(q) - 2];
    return mom;
}

// Cross table M(d,e) = E[He^_d(delta1 + gamma1 Z) He^_e(delta2 + gamma2 Z)]
// for normalized Hermite polynomials He^_n = He_n / sqrt(n!), Z standard
// normal. Stein's identity gives the two-direction recurrence.
MatrixR hermiteCrossTable(const GaussianProduct& g, int dmax, int emax) {
    MatrixR M(dmax + 1, emax + 1);
    auto stepD = [&](int d, int e) {
        Real val = g.delta1 * M(d, e);
        if (d >= 1) val += (g.gamma1 * g.gamma1 - 1) * sqrt(Real(d)) * M(d - 1, e);
        if (e >= 1) val += g.gamma1 * g.gamma2 * sqrt(Real(e)) * M(d, e - 1);
        return val / sqrt(Real(d + 1));
    };
    auto stepE = [&](int d, int e) {
        Real val = g.delta2 * M(d, e);
        if (e >= 1) val += (g.gamma2 * g.gamma2 - 1) * sqrt(Real(e)) * M(d, e - 1);
        if (d >= 1) val += g.gamma1 * g.gamma2 * sqrt(Real(d)) * M(d - 1, e);
        return val / sqrt(Real(e + 1));
    };
    M(0, 0) = 1;
    for (int d = 0; d < dmax; ++d) M(d + 1, 0) = stepD(d, 0);
    for (int e = 0; e < emax; ++e)
        for (int d = 0; d <= dmax; ++d) M(d, e + 1) = stepE(d, e);
    return M;
}

Real hermiteNormalized(int n, const Real& u) {
    Real hm1 = 0, h = 1;
    for (int k = 0; k < n; ++k) {
        const Real hN = (u * h - sqrt(Real(k)) * hm1) / sqrt(Real(k) + 1);
        hm1 = h;
        h = hN;
    }
    return h;
}

struct BasisTag {
    int group = 0;  // k for the first family, l for the second
    int degree = 0;
};

std::vector<BasisTag> familyTags(const std::vector<std::int64_t>& sizes) {
    std::vector<BasisTag> tags;
    for (int g = 0; g < static_cast<int>(sizes.size()); ++g)
        for (int d = 0; d < sizes[static_cast<std::size_t>(g)]; ++d) tags.push_back({g, d});
    return tags;
}

constexpr int kGlPoints = 8;
constexpr double kGlX[kGlPoints] = {0.01985507175123188, 0.10166676129318664, 0.2372337950418355,
                                    0.40828267875217505, 0.591717321247825,   0.7627662049581645,
                                    0.8983332387068134,  0.9801449282487681};
constexpr double kGlW[kGlPoints] = {0.05061426814518813, 0.11119051722668723, 0.15685332293894363,
                                    0.18134189168918097, 0.18134189168918097, 0.15685332293894363,
                                    0.11119051722668723, 0.05061426814518813};

} // namespace

EnsembleSpec EnsembleSpec::make(const ProblemConfig& cfg, const TransitionMatrix& m, std::int64_t n,
                                RoundingMode mode) {
    cfg.validate();
    EnsembleSpec spec;
    spec.cfg = cfg;
    spec.counts = finiteCounts(m, n, mode);
    spec.sigma2 = cfg.T / static_cast<double>(n);
    return spec;
}

double gaussianCrossMoment(const EnsembleSpec& spec, int k, int l, int m) {
    if (m < 0) throw InvalidConfig("moment degree must be nonnegative");
    const GaussianProduct g = gaussianProduct(spec, k, l);
    const auto mom = gaussianMoments(g.m, g.v, m);
    return static_cast<double>(g.scale * mom[static_cast<std::size_t>(m)]);
}

struct KernelEvaluator::Impl {
    EnsembleSpec spec;
    BasisMode mode = BasisMode::Hermite;
    std::vector<BasisTag> fTags, gTags;
    MatrixR ginv;
    double log10Cond = 0.0;
    double envLo = 0.0, envHi = 0.0;

    Real fValue(int i, const Real& x) const {
        const auto& tag = fTags[static_cast<std::size_t>(i)];
        const Real a = spec.cfg.a[static_cast<std::size_t>(tag.group)];
        const Real v1 = Real(spec.cfg.t) * spec.sigma2;
        const Real w = exp(-(x - a) * (x - a) / (2 * v1));
        if (mode == BasisMode::Monomial) return pow(x, tag.degree) * w;
        return hermiteNormalized(tag.degree, (x - a) / sqrt(v1)) * w;
    }
    Real gValue(int j, const Real& y) const {
        const auto& tag = gTags[static_cast<std::size_t>(j)];
        const Real b = spec.cfg.b[static_cast<std::size_t>(tag.group)];
        const Real v2 = Real(1.0 - spec.cfg.t) * spec.sigma2;
        const Real w = exp(-(y - b) * (y - b) / (2 * v2));
        if (mode == BasisMode::Monomial) return pow(y, tag.degree) * w;
        return hermiteNormalized(tag.degree, (y - b) / sqrt(v2)) * w;
    }
};

KernelEvaluator::KernelEvaluator(const EnsembleSpec& spec, BasisMode mode)
    : impl_(std::make_unique<Impl>()) {
    if (spec.n() > 64) throw IllConditioned("ensemble size capped at n = 64");
    impl_->spec = spec;
    impl_->mode = mode;
    impl_->fTags = familyTags(spec.counts.nk);
    impl_->gTags = familyTags(spec.counts.ml);
    const int n = static_cast<int>(spec.n());
    assert(static_cast<int>(impl_->fTags.size()) == n &&
           static_cast<int>(impl_->gTags.size()) == n);

    MatrixR gram(n, n);
    const int p = spec.cfg.p, q = spec.cfg.q;
    for (int k = 0; k < p; ++k) {
        const std::int64_t nk = spec.counts.nk[static_cast<std::size_t>(k)];
        if (nk == 0) continue;
        for (int l = 0; l < q; ++l) {
            const std::int64_t ml = spec.counts.ml[static_cast<std::size_t>(l)];
            if (ml == 0) continue;
            const GaussianProduct gp = gaussianProduct(spec, k, l);
            MatrixR block;
            if (mode == BasisMode::Hermite) {
                block = gp.scale * hermiteCrossTable(gp, static_cast<int>(nk) - 1,
                                                     static_cast<int>(ml) - 1);
            } else {
                const auto mom = gaussianMoments(gp.m, gp.v, static_cast<int>(nk + ml) - 2);
                block.resize(static_cast<int>(nk), static_cast<int>(ml));
                for (int d = 0; d < nk; ++d)
                    for (int e = 0; e < ml; ++e)
                        block(d, e) = gp.scale * mom[static_cast<std::size_t>(d + e)];
            }
            // place the block at the (k,l) family offsets
            int rowOff = 0, colOff = 0;
            for (int kk = 0; kk < k; ++kk) rowOff += static_cast<int>(spec.counts.nk[static_cast<std::size_t>(kk)]);
            for (int ll = 0; ll < l; ++ll) colOff += static_cast<int>(spec.counts.ml[static_cast<std::size_t>(ll)]);
            gram.block(rowOff, colOff, static_cast<int>(nk), static_cast<int>(ml)) = block;
        }
    }

    Eigen::FullPivLU<MatrixR> lu(gram);
    if (!lu.isInvertible()) throw IllConditioned("Gram matrix numerically singular");
    impl_->ginv = lu.inverse();

    Real norm1 = 0, normInv1 = 0;
    for (int c = 0; c < n; ++c) {
        Real s1 = 0, s2 = 0;
        for (int r = 0; r < n; ++r) {
            s1 += abs(gram(r, c));
            s2 += abs(impl_->ginv(r, c));
        }
        norm1 = std::max(norm1, s1, [](const Real& a, const Real& b) { return a < b; });
        normInv1 = std::max(normInv1, s2, [](const Real& a, const Real& b) { return a < b; });
    }
    impl_->log10Cond = static_cast<double>(log10(norm1 * normInv1));
    if (impl_->log10Cond > kSafeLog10Cond)
        throw IllConditioned("Gram condition 1e" + std::to_string(impl_->log10Cond) +
                             " exceeds the extended-precision budget");
    const MatrixR resid = gram * impl_->ginv - MatrixR::Identity(n, n);
    Real residMax = 0;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) residMax = residMax < abs(resid(r, c)) ? abs(resid(r, c)) : residMax;
    if (residMax > Real("1e-20"))
        throw IllConditioned("Gram inverse residual too large");

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int k = 0; k < p; ++k) {
        for (int l = 0; l < q; ++l) {
            const GaussianProduct gp = gaussianProduct(spec, k, l);
            const double m = static_cast<double>(gp.m);
            const double s = std::sqrt(static_cast<double>(gp.v));
            // The n-path kernel spreads to roughly the semicircle radius
            // 2 s sqrt(n) around each weight mean; 8 s on top covers the
            // edge fluctuations and the exponential tail.
            const double spread = 2.0 * s * std::sqrt(static_cast<double>(spec.counts.n)) + 8.0 * s;
            lo = std::min(lo, m - spread);
            hi = std::max(hi, m + spread);
        }
    }
    impl_->envLo = lo;
    impl_->envHi = hi;
}

KernelEvaluator::KernelEvaluator(KernelEvaluator&&) noexcept = default;
KernelEvaluator& KernelEvaluator::operator=(KernelEvaluator&&) noexcept = default;
KernelEvaluator::~KernelEvaluator() = default;

double KernelEvaluator::operator()(double x, double y) const {
    const int n = static_cast<int>(impl_->spec.n());
    VectorR f(n), g(n);
    const Real xr(x), yr(y);
    for (int i = 0; i < n; ++i) f[i] = impl_->fValue(i, xr);
    for (int j = 0; j < n; ++j) g[j] = impl_->gValue(j, yr);
    // K(x,y) = g(y)^T G^{-1} f(x)
    return static_cast<double>(g.dot(impl_->ginv * f));
}

const EnsembleSpec& KernelEvaluator::spec() const { return impl_->spec; }
BasisMode KernelEvaluator::mode() const { return impl_->mode; }
double KernelEvaluator::log10Condition() const { return impl_->log10Cond; }
std::pair<double, double> KernelEvaluator::envelope() const { return {impl_->envLo, impl_->envHi}; }

double integrateKernelDiagonal(const KernelEvaluator& ke, double tol) {
    const auto [lo, hi] = ke.envelope();
    auto composite = [&](int panels) {
        double sum = 0.0;
        const double h = (hi - lo) / panels;
        for (int pIdx = 0; pIdx < panels; ++pIdx) {
            const double l = lo + pIdx * h;
            for (int k = 0; k < kGlPoints; ++k) {
                const double x = l + h * kGlX[k];
                sum += kGlW[k] * h * ke(x, x);
            }
        }
        return sum;
    };
    double prev = composite(16);
    for (int panels = 32; panels <= 8192; panels *= 2) {
        const double cur = composite(panels);
        if (std::abs(cur - prev) < tol) return cur;
        prev = cur;
    }
    throw QuadratureBudgetExhausted("kernel diagonal integral did not settle within the panel budget");
}

std::vector<double> meanDensityCurve(const KernelEvaluator& ke, const std::vector<double>& xs) {
    std::vector<double> out(xs.size());
    const double n = static_cast<double>(ke.spec().n());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = ke(xs[i], xs[i]) / n;
    return out;
}

namespace {

// counter-based splitmix64 finalizer: bijective 64-bit mixing
std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double uniform01(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1p-53;
}

// Acklam's rational approximation of the inverse normal CDF, refined by one
// Halley step; bit-stable across platforms with strict IEEE doubles.
double inverseNormalCdf(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                               1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01,  -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double u = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) /
            ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0);
    } else if (p <= 1.0 - plow) {
        const double u = p - 0.5, r = u * u;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * u /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double u = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) /
            ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0);
    }
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double uStep = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
    return x - uStep / (1.0 + x * uStep / 2.0);
}

double normalDraw(std::uint64_t seed, std::uint64_t bundle, std::uint64_t attempt,
                  std::uint64_t path, std::uint64_t step) {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ bundle);
    h = mix64(h ^ attempt);
    h = mix64(h ^ path);
    h = mix64(h ^ step);
    return inverseNormalCdf(uniform01(h));
}

double stdNormalCdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }
double stdNormalPdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

// Inverse-CDF draw from the density proportional to t^r exp(-(t-mu)^2/(2 s^2))
// on t > 0, r <= 4. The CDF is closed-form in Phi and phi via the truncated
// Gaussian moment recursion; bisection keeps the draw bit-reproducible.
double tiltedPositiveDraw(int r, double mu, double s, double u) {
    const double u0 = -mu / s;
    const double phi0 = stdNormalPdf(u0), cdf0 = stdNormalCdf(u0);
    double coef[5], head[5]; // coef_j = C(r,j) mu^{r-j} s^j, head_j = u0^{j-1} phi0
    {
        double binom = 1.0, spow = 1.0, upow = 1.0;
        for (int j = 0; j <= r; ++j) {
            coef[j] = binom * std::pow(mu, r - j) * spow;
            head[j] = upow * phi0;
            binom = binom * (r - j) / (j + 1);
            spow *= s;
            upow *= u0;
        }
    }
    const auto cdfRaw = [&](double x) {
        const double w = (x - mu) / s;
        const double phiw = stdNormalPdf(w);
        double M[5], wpow = 1.0;
        M[0] = stdNormalCdf(w) - cdf0;
        M[1] = phi0 - phiw;
        for (int j = 2; j <= r; ++j) {
            wpow *= w;
            M[j] = (j - 1) * M[j - 2] + head[j] - wpow * phiw;
        }
        double acc = 0.0;
        for (int j = 0; j <= r; ++j) acc += coef[j] * M[j];
        return acc;
    };
    double lo = 0.0, hi = std::max(mu, 0.0) + 12.0 * s;
    const double z = cdfRaw(hi);
    assert(z > 0.0);
    for (int it = 0; it < 64; ++it) {
        const double mid = 0.5 * (lo + hi);
        (cdfRaw(mid) < u * z ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// Draws one slice of a coincident-endpoint cluster from the exact confluent
// law: density proportional to Vandermonde(x) * prod_i N(x_i; m[i], v) on
// x_0 > ... > x_{k-1}, k <= 4 (Karlin-McGregor non-crossing weight for paths
// leaving or entering a common point). Pair gaps and the pair-midpoint split
// are sampled from polynomially tilted Gaussians; the leftover cross factor
// of the Vandermonde is a bounded rejection ratio.
template <typename Uniform>
void confluentClusterDraw(int k, const double* m, double v, double* x, Uniform&& nextU) {
    const double sd = std::sqrt(2.0 * v); // gap scale of a pair difference
    if (k == 1) {
        x[0] = m[0] + std::sqrt(v) * inverseNormalCdf(nextU());
        return;
    }
    if (k == 2) {
        const double d = tiltedPositiveDraw(1, m[0] - m[1], sd, nextU());
        const double mid = 0.5 * (m[0] + m[1]) + std::sqrt(0.5 * v) * inverseNormalCdf(nextU());
        x[0] = mid + 0.5 * d;
        x[1] = mid - 0.5 * d;
        return;
    }
    for (std::int64_t tries = 0;; ++tries) {
        if (tries >= 1000000)
            throw RejectionBudgetExhausted("confluent cluster draw exhausted 1000000 tries");
        if (k == 3) {
            const double d = tiltedPositiveDraw(1, m[0] - m[1], sd, nextU());
            const double c =
                tiltedPositiveDraw(2, 0.5 * (m[0] + m[1]) - m[2], std::sqrt(1.5 * v), nextU());
            if (!(c > 0.5 * d)) continue;
            const double q = (c * c - 0.25 * d * d) / (c * c);
            if (!(nextU() < q)) continue;
            const double w =
                (m[0] + m[1] + m[2]) / 3.0 + std::sqrt(v / 3.0) * inverseNormalCdf(nextU());
            const double mid = w + c / 3.0;
            x[0] = mid + 0.5 * d;
            x[1] = mid - 0.5 * d;
            x[2] = w - 2.0 * c / 3.0;
            return;
        }
        const double dA = tiltedPositiveDraw(1, m[0] - m[1], sd, nextU());
        const double dB = tiltedPositiveDraw(1, m[2] - m[3], sd, nextU());
        const double c = tiltedPositiveDraw(4, 0.25 * (m[0] + m[1] - m[2] - m[3]),
                                            0.5 * std::sqrt(v), nextU());
        const double p = 0.5 * (dA + dB), q = 0.5 * (dA - dB);
        if (!(c > p)) continue;
        const double ratio = (c * c - p * p) * (c * c - q * q) / (c * c * c * c);
        if (!(nextU() < ratio)) continue;
        const double s0 = 0.25 * (m[0] + m[1] + m[2] + m[3]) +
                          0.5 * std::sqrt(v) * inverseNormalCdf(nextU());
        x[0] = s0 + c + 0.5 * dA;
        x[1] = s0 + c - 0.5 * dA;
        x[2] = s0 - c + 0.5 * dB;
        x[3] = s0 - c - 0.5 * dB;
        return;
    }
}

} // namespace

SampleResult samplePaths(const EnsembleSpec& spec, int timeSteps, std::uint64_t seed,
                         std::int64_t bundles, std::int64_t maxRejectsPerBundle,
                         SamplerMode mode) {
    if (timeSteps < 2) throw InvalidConfig("time grid needs at least 2 steps");
    const int n = static_cast<int>(spec.n());
    if (n > 10) throw InvalidConfig("rejection sampling capped at n = 10");

    std::vector<int> edgeOfPath, startVertex, endVertex;
    std::vector<double> startOf, endOf;
    for (int k = 0; k < spec.cfg.p; ++k) {
        for (int l = 0; l < spec.cfg.q; ++l) {
            const std::int64_t cnt = spec.counts.nkl(k, l);
            for (std::int64_t r = 0; r < cnt; ++r) {
                edgeOfPath.push_back(k + l); // anti-diagonal = edge index
                startVertex.push_back(k);
                endVertex.push_back(l);
                startOf.push_back(spec.cfg.a[static_cast<std::size_t>(k)]);
                endOf.push_back(spec.cfg.b[static_cast<std::size_t>(l)]);
            }
        }
    }
    assert(static_cast<int>(edgeOfPath.size()) == n);

    // Coincident-endpoint clusters: maximal runs of paths sharing a start
    // (respectively end) point. The staircase ordering makes every cluster a
    // consecutive block of path indices.
    const auto blocksOf = [n](const std::vector<int>& vertex) {
        std::vector<std::pair<int, int>> blocks; // (first, size)
        for (int pi = 0; pi < n; ++pi) {
            if (pi == 0 || vertex[static_cast<std::size_t>(pi)] != vertex[static_cast<std::size_t>(pi - 1)])
                blocks.emplace_back(pi, 1);
            else
                ++blocks.back().second;
        }
        return blocks;
    };
    const std::vector<std::pair<int, int>> startBlocks = blocksOf(startVertex);
    const std::vector<std::pair<int, int>> endBlocks = blocksOf(endVertex);
    if (mode == SamplerMode::Corrected) {
        if (timeSteps < 4) throw InvalidConfig("corrected sampling needs at least 4 time steps");
        for (const auto& [first, size] : startBlocks)
            if (size > 4) throw InvalidConfig("corrected sampling caps coincident clusters at 4 paths");
        for (const auto& [first, size] : endBlocks)
            if (size > 4) throw InvalidConfig("corrected sampling caps coincident clusters at 4 paths");
    }

    std::vector<double> times(static_cast<std::size_t>(timeSteps) + 1);
    for (int s = 0; s <= timeSteps; ++s) times[static_cast<std::size_t>(s)] = static_cast<double>(s) / timeSteps;

    SampleResult result;
    result.stats.seed = seed;
    result.bundles.resize(static_cast<std::size_t>(bundles));
    std::int64_t totalRejected = 0;
    bool exhausted = false;

#pragma omp parallel for schedule(dynamic) reduction(+ : totalRejected) reduction(|| : exhausted)
    for (std::int64_t b = 0; b < bundles; ++b) {
        Eigen::MatrixXd pos(n, timeSteps + 1), km(n, n);
        std::vector<double> slice1(static_cast<std::size_t>(n)), sliceM(static_cast<std::size_t>(n)),
            means(4);
        bool accepted = false;
        for (std::int64_t attempt = 0; attempt <= maxRejectsPerBundle; ++attempt) {
            bool ordered = true;
            if (mode == SamplerMode::GridRejection) {
                // Sequential bridge conditionals: given the value at t0 and
                // the pinned endpoint, the next grid value is Gaussian.
                for (int pi = 0; pi < n; ++pi) {
                    pos(pi, 0) = startOf[static_cast<std::size_t>(pi)];
                    pos(pi, timeSteps) = endOf[static_cast<std::size_t>(pi)];
                    double x = pos(pi, 0);
                    for (int s = 0; s < timeSteps - 1; ++s) {
                        const double t0 = times[static_cast<std::size_t>(s)];
                        const double t1 = times[static_cast<std::size_t>(s) + 1];
                        const double mean =
                            x + (t1 - t0) / (1.0 - t0) * (endOf[static_cast<std::size_t>(pi)] - x);
                        const double var = spec.sigma2 * (t1 - t0) * (1.0 - t1) / (1.0 - t0);
                        x = mean + std::sqrt(var) *
                                       normalDraw(seed, static_cast<std::uint64_t>(b),
                                                  static_cast<std::uint64_t>(attempt),
                                                  static_cast<std::uint64_t>(pi),
                                                  static_cast<std::uint64_t>(s));
                        pos(pi, s + 1) = x;
                    }
                }
                for (int s = 1; s < timeSteps && ordered; ++s)
                    for (int pi = 0; pi + 1 < n; ++pi)
                        if (!(pos(pi, s) > pos(pi + 1, s))) {
                            ordered = false;
                            break;
                        }
            } else {
                // One sequential uniform stream per attempt; every consumer
                // below draws through it, so reruns are bit-identical.
                std::uint64_t ctr = 0;
                const auto nextU = [&]() {
                    std::uint64_t h = mix64(seed);
                    h = mix64(h ^ static_cast<std::uint64_t>(b));
                    h = mix64(h ^ static_cast<std::uint64_t>(attempt));
                    h = mix64(h ^ ctr++);
                    return uniform01(h);
                };
                const double t1 = times[1], tm = times[static_cast<std::size_t>(timeSteps) - 1];
                // First interior slice: exact confluent law per start cluster.
                const double v1 = spec.sigma2 * t1 * (1.0 - t1);
                for (const auto& [first, size] : startBlocks) {
                    for (int j = 0; j < size; ++j) {
                        const std::size_t pi = static_cast<std::size_t>(first + j);
                        means[static_cast<std::size_t>(j)] =
                            startOf[pi] + (endOf[pi] - startOf[pi]) * t1;
                    }
                    confluentClusterDraw(size, means.data(), v1,
                                         &slice1[static_cast<std::size_t>(first)], nextU);
                }
                // Last interior slice given the first: exact confluent law per
                // end cluster of the remaining bridge on [t1, 1].
                const double vm = spec.sigma2 * (tm - t1) * (1.0 - tm) / (1.0 - t1);
                for (const auto& [first, size] : endBlocks) {
                    for (int j = 0; j < size; ++j) {
                        const std::size_t pi = static_cast<std::size_t>(first + j);
                        means[static_cast<std::size_t>(j)] =
                            slice1[pi] + (endOf[pi] - slice1[pi]) * (tm - t1) / (1.0 - t1);
                    }
                    confluentClusterDraw(size, means.data(), vm,
                                         &sliceM[static_cast<std::size_t>(first)], nextU);
                }
                // Middle slices: independent bridges pinned at both drawn slices.
                for (int pi = 0; pi < n; ++pi) {
                    pos(pi, 0) = startOf[static_cast<std::size_t>(pi)];
                    pos(pi, 1) = slice1[static_cast<std::size_t>(pi)];
                    pos(pi, timeSteps - 1) = sliceM[static_cast<std::size_t>(pi)];
                    pos(pi, timeSteps) = endOf[static_cast<std::size_t>(pi)];
                    double x = slice1[static_cast<std::size_t>(pi)];
                    for (int s = 1; s < timeSteps - 2; ++s) {
                        const double t0 = times[static_cast<std::size_t>(s)];
                        const double tn = times[static_cast<std::size_t>(s) + 1];
                        const double mean =
                            x + (tn - t0) / (tm - t0) * (sliceM[static_cast<std::size_t>(pi)] - x);
                        const double var = spec.sigma2 * (tn - t0) * (tm - tn) / (tm - t0);
                        x = mean + std::sqrt(var) * inverseNormalCdf(nextU());
                        pos(pi, s + 1) = x;
                    }
                }
                for (int s = 1; s < timeSteps && ordered; ++s)
                    for (int pi = 0; pi + 1 < n; ++pi)
                        if (!(pos(pi, s) > pos(pi + 1, s))) {
                            ordered = false;
                            break;
                        }
                // Between-grid crossings. Given the slice values, the path
                // interiors are independent Brownian bridges, so a segment
                // stays fully ordered with probability equal to the
                // Karlin-McGregor determinant ratio
                // det[exp(-(x'_j - x_i)^2 / (2 sigma^2 dt))] row-scaled by the
                // diagonal. One uniform per interior segment decides it.
                for (int s = 1; s < timeSteps - 1 && ordered; ++s) {
                    const double inv =
                        0.5 / (spec.sigma2 * (times[static_cast<std::size_t>(s) + 1] -
                                              times[static_cast<std::size_t>(s)]));
                    for (int i = 0; i < n; ++i) {
                        const double xi = pos(i, s);
                        const double own = (pos(i, s + 1) - xi) * (pos(i, s + 1) - xi);
                        for (int j = 0; j < n; ++j) {
                            const double dx = pos(j, s + 1) - xi;
                            km(i, j) = std::exp(-(dx * dx - own) * inv);
                        }
                    }
                    const double surv = km.partialPivLu().determinant();
                    if (!(nextU() < surv)) ordered = false;
                }
                // The boundary segments' confluence is covered by the slice
                // draws; only crossings between distinct clusters remain, and
                // those see the pairwise bridge hit probability
                // exp(-d0 d1 / (sigma^2 dt)) with well-separated gaps.
                for (const int s : {0, timeSteps - 1}) {
                    if (!ordered) break;
                    const double dt =
                        times[static_cast<std::size_t>(s) + 1] - times[static_cast<std::size_t>(s)];
                    for (int pi = 0; pi + 1 < n; ++pi) {
                        const std::size_t u = static_cast<std::size_t>(pi);
                        if (s == 0 && startVertex[u] == startVertex[u + 1]) continue;
                        if (s != 0 && endVertex[u] == endVertex[u + 1]) continue;
                        const double d0 = pos(pi, s) - pos(pi + 1, s);
                        const double d1 = pos(pi, s + 1) - pos(pi + 1, s + 1);
                        const double expo = d0 * d1 / (spec.sigma2 * dt);
                        if (expo < 40.0 && nextU() < std::exp(-expo)) {
                            ordered = false;
                            break;
                        }
                    }
                }
            }
            if (ordered) {
                accepted = true;
                break;
            }
            ++totalRejected;
        }
        if (!accepted) {
            exhausted = true;
            continue;
        }
        PathBundle& pb = result.bundles[static_cast<std::size_t>(b)];
        pb.times = times;
        pb.positions = std::move(pos);
        pb.edgeOfPath = edgeOfPath;
    }
    if (exhausted)
        throw RejectionBudgetExhausted("a bundle slot exhausted " +
                                       std::to_string(maxRejectsPerBundle) + " attempts");
    result.stats.accepted = bundles;
    result.stats.rejected = totalRejected;
    return result;
}

namespace {

// Double-precision basis values for the small-n brute-force oracle.
struct DoubleBasis {
    const EnsembleSpec& spec;
    std::vector<BasisTag> fTags, gTags;

    explicit DoubleBasis(const EnsembleSpec& s)
        : spec(s), fTags(familyTags(s.counts.nk)), gTags(familyTags(s.counts.ml)) {}

    static double hermite(int n, double u) {
        double hm1 = 0.0, h = 1.0;
        for (int k = 0; k < n; ++k) {
            const double hN = (u * h - std::sqrt(static_cast<double>(k)) * hm1) /
                              std::sqrt(static_cast<double>(k) + 1.0);
            hm1 = h;
            h = hN;
        }
        return h;
    }
    double f(int i, double x) const {
        const auto& tag = fTags[static_cast<std::size_t>(i)];
        const double a = spec.cfg.a[static_cast<std::size_t>(tag.group)];
        const double v1 = spec.cfg.t * spec.sigma2;
        return hermite(tag.degree, (x - a) / std::sqrt(v1)) * std::exp(-(x - a) * (x - a) / (2 * v1));
    }
    double g(int j, double y) const {
        const auto& tag = gTags[static_cast<std::size_t>(j)];
        const double b = spec.cfg.b[static_cast<std::size_t>(tag.group)];
        const double v2 = (1.0 - spec.cfg.t) * spec.sigma2;
        return hermite(tag.degree, (y - b) / std::sqrt(v2)) * std::exp(-(y - b) * (y - b) / (2 * v2));
    }
};

// joint density P(x_1..x_n) = det[f_i(x_j)] det[g_i(x_j)] / (n! det G)
double jointDensity(const DoubleBasis& basis, const Eigen::MatrixXd& gram,
                    const std::vector<double>& xs) {
    const int n = static_cast<int>(xs.size());
    Eigen::MatrixXd F(n, n), G(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            F(i, j) = basis.f(i, xs[static_cast<std::size_t>(j)]);
            G(i, j) = basis.g(i, xs[static_cast<std::size_t>(j)]);
        }
    double fact = 1.0;
    for (int k = 2; k <= n; ++k) fact *= k;
    return F.determinant() * G.determinant() / (fact * gram.determinant());
}

Eigen::MatrixXd doubleGram(const DoubleBasis& basis, const EnsembleSpec& spec) {
    const int n = static_cast<int>(spec.n());
    // reuse the extended-precision route so the double Gram stays faithful
    Eigen::MatrixXd gram(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const int k = basis.fTags[static_cast<std::size_t>(i)].group;
            const int l = basis.gTags[static_cast<std::size_t>(j)].group;
            const int d = basis.fTags[static_cast<std::size_t>(i)].degree;
            const int e = basis.gTags[static_cast<std::size_t>(j)].degree;
            const GaussianProduct gp = gaussianProduct(spec, k, l);
            MatrixR tbl = hermiteCrossTable(gp, d, e);
            gram(i, j) = static_cast<double>(gp.scale * tbl(d, e));
        }
    return gram;
}

} // namespace

double bruteForceOnePoint(const EnsembleSpec& spec, double x, int panels) {
    const int n = static_cast<int>(spec.n());
    if (n > 3) throw InvalidConfig("brute-force marginal capped at n = 3");
    DoubleBasis basis(spec);
    const Eigen::MatrixXd gram = doubleGram(basis, spec);
    if (n == 1) return jointDensity(basis, gram, {x});

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int k = 0; k < spec.cfg.p; ++k)
        for (int l = 0; l < spec.cfg.q; ++l) {
            const GaussianProduct gp = gaussianProduct(spec, k, l);
            lo = std::min(lo, static_cast<double>(gp.m) - 8.0 * std::sqrt(static_cast<double>(gp.v)));
            hi = std::max(hi, static_cast<double>(gp.m) + 8.0 * std::sqrt(static_cast<double>(gp.v)));
        }
    const double h = (hi - lo) / panels;

    if (n == 2) {
        double sum = 0.0;
        for (int pIdx = 0; pIdx < panels; ++pIdx)
            for (int k = 0; k < kGlPoints; ++k) {
                const double y = lo + pIdx * h + h * kGlX[k];
                sum += kGlW[k] * h * jointDensity(basis, gram, {x, y});
            }
        return 2.0 * sum;
    }
    double sum = 0.0;
    for (int p1 = 0; p1 < panels; ++p1)
        for (int k1 = 0; k1 < kGlPoints; ++k1) {
            const double y = lo + p1 * h + h * kGlX[k1];
            double inner = 0.0;
            for (int p2 = 0; p2 < panels; ++p2)
                for (int k2 = 0; k2 < kGlPoints; ++k2) {
                    const double z = lo + p2 * h + h * kGlX[k2];
                    inner += kGlW[k2] * h * jointDensity(basis, gram, {x, y, z});
                }
            sum += kGlW[k1] * h * inner;
        }
    return 3.0 * sum; // one-point correlation carries n!/(n-1)! = n
}

double bruteForceTwoPoint(const EnsembleSpec& spec, double x1, double x2) {
    if (spec.n() != 2) throw InvalidConfig("two-point oracle implemented for n = 2");
    DoubleBasis basis(spec);
    const Eigen::MatrixXd gram = doubleGram(basis, spec);
    return 2.0 * jointDensity(basis, gram, {x1, x2});
}

} // namespace nibm
