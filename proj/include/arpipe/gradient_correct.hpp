#pragma once

// Per-slice gradient-domain contrast normalization. Each slice is rebuilt
// from its own gradient field plus a data term that retargets the slice mean
// to the stack-wide mean, which removes low-frequency intensity drift across
// sections while preserving edges.
//
// The normal system is (alpha*I + L) u = alpha*v - div g with L the 5-point
// Neumann Laplacian; it is symmetric positive definite for alpha > 0.

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

#include "arpipe/errors.hpp"
#include "arpipe/parallel.hpp"
#include "arpipe/volume.hpp"

namespace arpipe {

struct CorrectionParams {
    double alpha = 0.05;  // data-term weight; small values favor the gradients
    double tol = 1e-8;    // relative residual stopping threshold
    int max_iter = 0;     // 0 = auto: max(1000, 10*sqrt(width*height))

    int effective_max_iter(int width, int height) const {
        if (max_iter > 0) return max_iter;
        return std::max(1000, static_cast<int>(10.0 * std::sqrt(static_cast<double>(width) *
                                                                static_cast<double>(height))));
    }

    void validate() const {
        if (!(alpha > 0.0)) throw ValidationError("correction alpha must be > 0");
        if (!(tol > 0.0 && tol < 1.0)) throw ValidationError("correction tol must be in (0,1)");
        if (max_iter < 0) throw ValidationError("correction max_iter must be >= 1 (or 0 = auto)");
    }
};

// Target gradients (forward differences of the input slice) and the data term
// (the slice shifted so its mean equals the stack-wide mean).
struct CorrectionSystem {
    int width = 0;
    int height = 0;
    std::vector<double> gx;  // (width-1) x height, row-major with stride width-1
    std::vector<double> gy;  // width x (height-1)
    std::vector<double> v;   // width x height
};

inline CorrectionSystem build_correction_system(const Stack& stack, int z) {
    if (z < 0 || z >= stack.depth())
        throw ValidationError("build_correction_system: slice index out of range");
    const Slice& s = stack.slices[z];
    CorrectionSystem sys;
    sys.width = s.width;
    sys.height = s.height;
    sys.gx.resize(static_cast<std::size_t>(s.width - 1) * s.height);
    sys.gy.resize(static_cast<std::size_t>(s.width) * (s.height - 1));
    for (int y = 0; y < s.height; ++y)
        for (int x = 0; x + 1 < s.width; ++x)
            sys.gx[static_cast<std::size_t>(y) * (s.width - 1) + x] = s.at(x + 1, y) - s.at(x, y);
    for (int y = 0; y + 1 < s.height; ++y)
        for (int x = 0; x < s.width; ++x)
            sys.gy[static_cast<std::size_t>(y) * s.width + x] = s.at(x, y + 1) - s.at(x, y);
    double offset = stack.mean_intensity() - s.mean();
    sys.v.resize(s.intensities.size());
    for (std::size_t i = 0; i < sys.v.size(); ++i) sys.v[i] = s.intensities[i] + offset;
    return sys;
}

struct SolveResult {
    std::vector<double> u;
    int iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
    std::vector<double> residual_history;  // ||r|| after each iteration, [0] = initial
};

namespace detail {

// y = (alpha*I + L) x with Neumann boundaries.
inline void apply_screened_laplacian(const std::vector<double>& x, std::vector<double>& y,
                                     int width, int height, double alpha) {
    for (int row = 0; row < height; ++row) {
        for (int col = 0; col < width; ++col) {
            std::size_t p = static_cast<std::size_t>(row) * width + col;
            double acc = alpha * x[p];
            if (col > 0) acc += x[p] - x[p - 1];
            if (col + 1 < width) acc += x[p] - x[p + 1];
            if (row > 0) acc += x[p] - x[p - width];
            if (row + 1 < height) acc += x[p] - x[p + width];
            y[p] = acc;
        }
    }
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace detail

// Right-hand side b = alpha*v - div g.
inline std::vector<double> correction_rhs(const CorrectionSystem& sys, double alpha) {
    const int w = sys.width, h = sys.height;
    std::vector<double> b(sys.v.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::size_t p = static_cast<std::size_t>(y) * w + x;
            double div = 0.0;
            if (x + 1 < w) div += sys.gx[static_cast<std::size_t>(y) * (w - 1) + x];
            if (x > 0) div -= sys.gx[static_cast<std::size_t>(y) * (w - 1) + x - 1];
            if (y + 1 < h) div += sys.gy[static_cast<std::size_t>(y) * w + x];
            if (y > 0) div -= sys.gy[static_cast<std::size_t>(y - 1) * w + x];
            b[p] = alpha * sys.v[p] - div;
        }
    }
    return b;
}

// Minimal-residual conjugate iteration (conjugate residual method) on the SPD
// operator. The residual 2-norm is non-increasing by construction, which the
// production invariants rely on; plain CG does not guarantee that.
// Starts from `initial` when given, otherwise from the data term v.
inline SolveResult screened_poisson_solve(const CorrectionSystem& sys,
                                          const CorrectionParams& params,
                                          const std::vector<double>* initial = nullptr) {
    params.validate();
    const int w = sys.width, h = sys.height;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    if (sys.v.size() != n || sys.gx.size() != static_cast<std::size_t>(w - 1) * h ||
        sys.gy.size() != static_cast<std::size_t>(w) * (h - 1))
        throw ValidationError("screened_poisson_solve: system field sizes are inconsistent");

    std::vector<double> b = correction_rhs(sys, params.alpha);

    SolveResult res;
    res.u = initial ? *initial : sys.v;
    if (res.u.size() != n)
        throw ValidationError("screened_poisson_solve: initial guess size mismatch");

    const double norm_b = std::sqrt(detail::dot(b, b));
    std::vector<double> r(n), work(n);
    detail::apply_screened_laplacian(res.u, work, w, h, params.alpha);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - work[i];
    double norm_r = std::sqrt(detail::dot(r, r));
    res.residual_history.push_back(norm_r);
    if (norm_b == 0.0) {
        res.u.assign(n, 0.0);
        res.converged = true;
        res.relative_residual = 0.0;
        return res;
    }

    const int max_iter = params.effective_max_iter(w, h);
    std::vector<double> p = r, Ar(n), Ap(n);
    detail::apply_screened_laplacian(r, Ar, w, h, params.alpha);
    Ap = Ar;
    double r_dot_Ar = detail::dot(r, Ar);

    int iter = 0;
    while (norm_r > params.tol * norm_b && iter < max_iter) {
        double ap_dot_ap = detail::dot(Ap, Ap);
        if (!(ap_dot_ap > 0.0)) break;  // stagnation at numerical zero
        double step = r_dot_Ar / ap_dot_ap;
        for (std::size_t i = 0; i < n; ++i) {
            res.u[i] += step * p[i];
            r[i] -= step * Ap[i];
        }
        double next_norm_r = std::sqrt(detail::dot(r, r));
        assert(next_norm_r <= norm_r * (1.0 + 1e-12));
        norm_r = next_norm_r;
        res.residual_history.push_back(norm_r);
        detail::apply_screened_laplacian(r, Ar, w, h, params.alpha);
        double next_r_dot_Ar = detail::dot(r, Ar);
        double beta = r_dot_Ar > 0.0 ? next_r_dot_Ar / r_dot_Ar : 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = r[i] + beta * p[i];
            Ap[i] = Ar[i] + beta * Ap[i];
        }
        r_dot_Ar = next_r_dot_Ar;
        ++iter;
    }
    res.iterations = iter;
    res.relative_residual = norm_r / norm_b;
    res.converged = norm_r <= params.tol * norm_b;
    return res;
}

// Objective the solver minimizes; used by tests and diagnostics.
inline double correction_objective(const CorrectionSystem& sys, const std::vector<double>& u,
                                   double alpha) {
    const int w = sys.width, h = sys.height;
    double e = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        double d = u[i] - sys.v[i];
        e += alpha * d * d;
    }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x + 1 < w; ++x) {
            double d = u[static_cast<std::size_t>(y) * w + x + 1] -
                       u[static_cast<std::size_t>(y) * w + x] -
                       sys.gx[static_cast<std::size_t>(y) * (w - 1) + x];
            e += d * d;
        }
    for (int y = 0; y + 1 < h; ++y)
        for (int x = 0; x < w; ++x) {
            double d = u[static_cast<std::size_t>(y + 1) * w + x] -
                       u[static_cast<std::size_t>(y) * w + x] -
                       sys.gy[static_cast<std::size_t>(y) * w + x];
            e += d * d;
        }
    return e;
}

struct SliceCorrectionInfo {
    int z = 0;
    int iterations = 0;
    double final_residual = 0.0;
    double mean_before = 0.0;
    double mean_after = 0.0;
    bool converged = true;
};

struct CorrectionReport {
    double alpha = 0.0;
    double tol = 0.0;
    std::vector<SliceCorrectionInfo> slices;
};

// Solves every slice against the shared stack mean; output clamped to [0,1].
inline Stack correct_stack(const Stack& stack, const CorrectionParams& params, int workers = 0,
                           CorrectionReport* report = nullptr) {
    params.validate();
    stack.validate();
    Stack out = stack;
    std::vector<SliceCorrectionInfo> infos(stack.depth());
    parallel_for(static_cast<std::size_t>(stack.depth()), workers, [&](std::size_t z) {
        CorrectionSystem sys = build_correction_system(stack, static_cast<int>(z));
        SolveResult solved = screened_poisson_solve(sys, params);
        Slice& s = out.slices[z];
        for (std::size_t i = 0; i < s.intensities.size(); ++i)
            s.intensities[i] = std::clamp(solved.u[i], 0.0, 1.0);
        infos[z] = {static_cast<int>(z), solved.iterations, solved.relative_residual,
                    stack.slices[z].mean(), s.mean(), solved.converged};
    });
    if (report) {
        report->alpha = params.alpha;
        report->tol = params.tol;
        report->slices = std::move(infos);
    }
    return out;
}

}  // namespace arpipe
