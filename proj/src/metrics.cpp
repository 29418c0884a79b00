#include "s2c/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "s2c/autodiff.hpp"
#include "s2c/dataio.hpp"
#include "s2c/trainer.hpp"

namespace s2c {

namespace {

constexpr double kCovReg = 1e-6;
constexpr double kVarFloor = 1e-6;

std::vector<std::vector<double>> pool_frames(const std::vector<Tensor32>& clips) {
    std::vector<std::vector<double>> samples;
    for (const auto& c : clips) {
        if (c.rank() < 2) {
            throw std::invalid_argument("gesture clip must have rank >= 2");
        }
        const int n = c.shape[0];
        const int d = static_cast<int>(c.numel() / n);
        for (int t = 0; t < n; ++t) {
            std::vector<double> row(static_cast<std::size_t>(d));
            for (int k = 0; k < d; ++k) {
                row[static_cast<std::size_t>(k)] = c.data[static_cast<std::size_t>(t) * d + k];
            }
            samples.push_back(std::move(row));
        }
    }
    return samples;
}

}  // namespace

GaussianStats fit_gaussian(const std::vector<std::vector<double>>& samples) {
    if (samples.empty()) {
        throw std::invalid_argument("fit_gaussian: empty sample set");
    }
    const int d = static_cast<int>(samples[0].size());
    const int m = static_cast<int>(samples.size());
    if (m < d + 1) {
        std::fprintf(stderr, "fit_gaussian: %d samples for %d dims is rank deficient; regularizing\n", m,
                     d);
    }
    GaussianStats g;
    g.dim = d;
    g.mean.assign(static_cast<std::size_t>(d), 0.0);
    g.cov.assign(static_cast<std::size_t>(d) * d, 0.0);
    for (const auto& s : samples) {
        for (int i = 0; i < d; ++i) {
            g.mean[static_cast<std::size_t>(i)] += s[static_cast<std::size_t>(i)];
        }
    }
    for (double& v : g.mean) {
        v /= m;
    }
    for (const auto& s : samples) {
        for (int i = 0; i < d; ++i) {
            const double di = s[static_cast<std::size_t>(i)] - g.mean[static_cast<std::size_t>(i)];
            for (int j = i; j < d; ++j) {
                const double dj = s[static_cast<std::size_t>(j)] - g.mean[static_cast<std::size_t>(j)];
                g.cov[static_cast<std::size_t>(i) * d + j] += di * dj;
            }
        }
    }
    const double denom = m > 1 ? static_cast<double>(m - 1) : 1.0;
    for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j) {
            const double v = g.cov[static_cast<std::size_t>(i) * d + j] / denom;
            g.cov[static_cast<std::size_t>(i) * d + j] = v;
            g.cov[static_cast<std::size_t>(j) * d + i] = v;
        }
        g.cov[static_cast<std::size_t>(i) * d + i] += kCovReg;
    }
    return g;
}

void sym_eig(const std::vector<double>& a, int d, std::vector<double>& evals, std::vector<double>& evecs) {
    std::vector<double> m = a;
    evecs.assign(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) {
        evecs[static_cast<std::size_t>(i) * d + i] = 1.0;
    }
    auto at = [&](int i, int j) -> double& { return m[static_cast<std::size_t>(i) * d + j]; };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0;
        for (int i = 0; i < d; ++i) {
            for (int j = i + 1; j < d; ++j) {
                off += at(i, j) * at(i, j);
            }
        }
        if (off < 1e-24) {
            break;
        }
        for (int p = 0; p < d - 1; ++p) {
            for (int q = p + 1; q < d; ++q) {
                const double apq = at(p, q);
                if (std::abs(apq) < 1e-300) {
                    continue;
                }
                const double app = at(p, p);
                const double aqq = at(q, q);
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (int k = 0; k < d; ++k) {
                    const double akp = at(k, p);
                    const double akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < d; ++k) {
                    const double apk = at(p, k);
                    const double aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < d; ++k) {
                    const double vkp = evecs[static_cast<std::size_t>(k) * d + p];
                    const double vkq = evecs[static_cast<std::size_t>(k) * d + q];
                    evecs[static_cast<std::size_t>(k) * d + p] = c * vkp - s * vkq;
                    evecs[static_cast<std::size_t>(k) * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    evals.assign(static_cast<std::size_t>(d), 0.0);
    for (int i = 0; i < d; ++i) {
        evals[static_cast<std::size_t>(i)] = at(i, i);
    }
}

namespace {

// V f(w) V^T for a symmetric matrix given its eigendecomposition
std::vector<double> sym_apply(const std::vector<double>& evals, const std::vector<double>& evecs, int d,
                              double (*f)(double)) {
    std::vector<double> out(static_cast<std::size_t>(d) * d, 0.0);
    for (int k = 0; k < d; ++k) {
        const double w = f(evals[static_cast<std::size_t>(k)]);
        for (int i = 0; i < d; ++i) {
            const double vik = evecs[static_cast<std::size_t>(i) * d + k] * w;
            for (int j = 0; j < d; ++j) {
                out[static_cast<std::size_t>(i) * d + j] +=
                    vik * evecs[static_cast<std::size_t>(j) * d + k];
            }
        }
    }
    return out;
}

double sqrt_clamped(double x) { return x > 0 ? std::sqrt(x) : 0.0; }

std::vector<double> sqrtm_psd(const std::vector<double>& a, int d) {
    std::vector<double> evals, evecs;
    sym_eig(a, d, evals, evecs);
    return sym_apply(evals, evecs, d, &sqrt_clamped);
}

std::vector<double> matmul_dense(const std::vector<double>& a, const std::vector<double>& b, int d) {
    std::vector<double> out(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) {
        for (int k = 0; k < d; ++k) {
            const double av = a[static_cast<std::size_t>(i) * d + k];
            for (int j = 0; j < d; ++j) {
                out[static_cast<std::size_t>(i) * d + j] += av * b[static_cast<std::size_t>(k) * d + j];
            }
        }
    }
    return out;
}

}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
    if (a.dim != b.dim) {
        throw std::invalid_argument("frechet_distance: dimension mismatch");
    }
    const int d = a.dim;
    double mean_term = 0;
    for (int i = 0; i < d; ++i) {
        const double diff = a.mean[static_cast<std::size_t>(i)] - b.mean[static_cast<std::size_t>(i)];
        mean_term += diff * diff;
    }
    const std::vector<double> sa_half = sqrtm_psd(a.cov, d);
    const std::vector<double> inner = matmul_dense(matmul_dense(sa_half, b.cov, d), sa_half, d);
    // symmetrize against round-off before the second square root
    std::vector<double> inner_sym(inner.size());
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            inner_sym[static_cast<std::size_t>(i) * d + j] =
                0.5 * (inner[static_cast<std::size_t>(i) * d + j] +
                       inner[static_cast<std::size_t>(j) * d + i]);
        }
    }
    const std::vector<double> cross = sqrtm_psd(inner_sym, d);
    double trace_term = 0;
    for (int i = 0; i < d; ++i) {
        trace_term += a.cov[static_cast<std::size_t>(i) * d + i] +
                      b.cov[static_cast<std::size_t>(i) * d + i] -
                      2.0 * cross[static_cast<std::size_t>(i) * d + i];
    }
    return mean_term + trace_term;
}

double fgd(const std::vector<Tensor32>& pred, const std::vector<Tensor32>& gt) {
    if (pred.empty() || gt.empty()) {
        throw std::invalid_argument("fgd: empty clip set");
    }
    return frechet_distance(fit_gaussian(pool_frames(pred)), fit_gaussian(pool_frames(gt)));
}

// --- GMM fitting ---------------------------------------------------------------

namespace {

double log_diag_gauss(const std::vector<double>& x, const double* mean, const double* var, int d) {
    double acc = -0.5 * d * std::log(2.0 * 3.14159265358979323846);
    for (int i = 0; i < d; ++i) {
        const double diff = x[static_cast<std::size_t>(i)] - mean[i];
        acc += -0.5 * (std::log(var[i]) + diff * diff / var[i]);
    }
    return acc;
}

GmmModel run_em(const std::vector<std::vector<double>>& samples, int k, RngStream& rng, int max_iter,
                double tol) {
    const int m = static_cast<int>(samples.size());
    const int d = static_cast<int>(samples[0].size());
    GmmModel g;
    g.components = k;
    g.dim = d;
    g.weights.assign(static_cast<std::size_t>(k), 1.0 / k);
    g.means.assign(static_cast<std::size_t>(k) * d, 0.0);
    g.vars.assign(static_cast<std::size_t>(k) * d, 1.0);

    // k-means++ seeding
    std::vector<double> dist2(static_cast<std::size_t>(m), 0.0);
    const int first = static_cast<int>(rng.below(static_cast<std::uint64_t>(m)));
    for (int i = 0; i < d; ++i) {
        g.means[static_cast<std::size_t>(i)] = samples[static_cast<std::size_t>(first)][static_cast<std::size_t>(i)];
    }
    for (int c = 1; c < k; ++c) {
        double total = 0;
        for (int s = 0; s < m; ++s) {
            double best = 1e300;
            for (int cc = 0; cc < c; ++cc) {
                double acc = 0;
                for (int i = 0; i < d; ++i) {
                    const double diff = samples[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)] -
                                        g.means[static_cast<std::size_t>(cc) * d + i];
                    acc += diff * diff;
                }
                best = std::min(best, acc);
            }
            dist2[static_cast<std::size_t>(s)] = best;
            total += best;
        }
        int chosen = m - 1;
        if (total > 0) {
            double r = rng.u01() * total;
            for (int s = 0; s < m; ++s) {
                r -= dist2[static_cast<std::size_t>(s)];
                if (r <= 0) {
                    chosen = s;
                    break;
                }
            }
        } else {
            chosen = static_cast<int>(rng.below(static_cast<std::uint64_t>(m)));
        }
        for (int i = 0; i < d; ++i) {
            g.means[static_cast<std::size_t>(c) * d + i] =
                samples[static_cast<std::size_t>(chosen)][static_cast<std::size_t>(i)];
        }
    }
    // initial variances: global per-dimension variance
    {
        std::vector<double> mu(static_cast<std::size_t>(d), 0.0);
        for (const auto& s : samples) {
            for (int i = 0; i < d; ++i) {
                mu[static_cast<std::size_t>(i)] += s[static_cast<std::size_t>(i)];
            }
        }
        for (double& v : mu) {
            v /= m;
        }
        std::vector<double> var(static_cast<std::size_t>(d), 0.0);
        for (const auto& s : samples) {
            for (int i = 0; i < d; ++i) {
                const double diff = s[static_cast<std::size_t>(i)] - mu[static_cast<std::size_t>(i)];
                var[static_cast<std::size_t>(i)] += diff * diff;
            }
        }
        for (int c = 0; c < k; ++c) {
            for (int i = 0; i < d; ++i) {
                g.vars[static_cast<std::size_t>(c) * d + i] =
                    std::max(kVarFloor, var[static_cast<std::size_t>(i)] / m);
            }
        }
    }

    std::vector<double> resp(static_cast<std::size_t>(m) * k);
    double prev_ll = -1e300;
    for (int iter = 0; iter < max_iter; ++iter) {
        // E step in log space
        double ll = 0;
        for (int s = 0; s < m; ++s) {
            double mx = -1e300;
            for (int c = 0; c < k; ++c) {
                const double lp = std::log(std::max(g.weights[static_cast<std::size_t>(c)], 1e-300)) +
                                  log_diag_gauss(samples[static_cast<std::size_t>(s)],
                                                 g.means.data() + static_cast<std::size_t>(c) * d,
                                                 g.vars.data() + static_cast<std::size_t>(c) * d, d);
                resp[static_cast<std::size_t>(s) * k + c] = lp;
                mx = std::max(mx, lp);
            }
            double z = 0;
            for (int c = 0; c < k; ++c) {
                z += std::exp(resp[static_cast<std::size_t>(s) * k + c] - mx);
            }
            ll += mx + std::log(z);
            for (int c = 0; c < k; ++c) {
                resp[static_cast<std::size_t>(s) * k + c] =
                    std::exp(resp[static_cast<std::size_t>(s) * k + c] - mx) / z;
            }
        }
        // M step with weight and variance floors
        for (int c = 0; c < k; ++c) {
            double nk = 0;
            for (int s = 0; s < m; ++s) {
                nk += resp[static_cast<std::size_t>(s) * k + c];
            }
            g.weights[static_cast<std::size_t>(c)] = std::max(nk / m, 1e-12);
            const double inv = nk > 0 ? 1.0 / nk : 0.0;
            for (int i = 0; i < d; ++i) {
                double mean = 0;
                for (int s = 0; s < m; ++s) {
                    mean += resp[static_cast<std::size_t>(s) * k + c] *
                            samples[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)];
                }
                mean *= inv;
                double var = 0;
                for (int s = 0; s < m; ++s) {
                    const double diff =
                        samples[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)] - mean;
                    var += resp[static_cast<std::size_t>(s) * k + c] * diff * diff;
                }
                g.means[static_cast<std::size_t>(c) * d + i] = mean;
                g.vars[static_cast<std::size_t>(c) * d + i] = std::max(kVarFloor, var * inv);
            }
        }
        double wsum = 0;
        for (double w : g.weights) {
            wsum += w;
        }
        for (double& w : g.weights) {
            w /= wsum;
        }
        if (!std::isfinite(ll)) {
            throw std::runtime_error("gmm em: log-likelihood diverged");
        }
        if (std::abs(ll - prev_ll) < tol) {
            break;
        }
        prev_ll = ll;
    }
    return g;
}

}  // namespace

GmmModel fit_gmm_em(const std::vector<std::vector<double>>& samples, int components, RngStream rng,
                    int max_iter, double tol) {
    if (components < 1) {
        throw std::invalid_argument("fit_gmm_em: need at least one component");
    }
    if (static_cast<int>(samples.size()) < 10 * components) {
        throw std::invalid_argument("fit_gmm_em: need at least 10 samples per component");
    }
    try {
        RngStream attempt = rng;
        return run_em(samples, components, attempt, max_iter, tol);
    } catch (const std::runtime_error&) {
        // degenerate fit: re-run once from a fresh seeding
        RngStream retry = rng.derived(0xE11);
        return run_em(samples, components, retry, max_iter, tol);
    }
}

double gaussian_w2sq_diag(const std::vector<double>& mean_a, const std::vector<double>& var_a,
                          const std::vector<double>& mean_b, const std::vector<double>& var_b) {
    if (mean_a.size() != mean_b.size() || var_a.size() != var_b.size()) {
        throw std::invalid_argument("gaussian_w2sq_diag: dimension mismatch");
    }
    double acc = 0;
    for (std::size_t i = 0; i < mean_a.size(); ++i) {
        const double dm = mean_a[i] - mean_b[i];
        const double ds = std::sqrt(var_a[i]) - std::sqrt(var_b[i]);
        acc += dm * dm + ds * ds;
    }
    return acc;
}

// --- transportation simplex ---------------------------------------------------

double transport_cost(std::vector<double> supply, std::vector<double> demand,
                      const std::vector<double>& cost) {
    const int m = static_cast<int>(supply.size());
    const int n = static_cast<int>(demand.size());
    if (static_cast<int>(cost.size()) != m * n) {
        throw std::invalid_argument("transport_cost: cost matrix shape mismatch");
    }
    double ssum = 0, dsum = 0;
    for (double v : supply) {
        ssum += v;
    }
    for (double v : demand) {
        dsum += v;
    }
    if (std::abs(ssum - dsum) > 1e-9 * std::max(1.0, std::max(ssum, dsum))) {
        throw std::invalid_argument("transport_cost: unbalanced problem");
    }

    std::vector<double> alloc(static_cast<std::size_t>(m) * n, 0.0);
    std::vector<char> basic(static_cast<std::size_t>(m) * n, 0);
    auto idx = [n](int i, int j) { return static_cast<std::size_t>(i) * n + j; };

    // northwest-corner initial basis: exactly m + n - 1 basic cells
    {
        std::vector<double> s = supply, d = demand;
        int i = 0, j = 0;
        while (true) {
            const double a = std::min(s[static_cast<std::size_t>(i)], d[static_cast<std::size_t>(j)]);
            alloc[idx(i, j)] = a;
            basic[idx(i, j)] = 1;
            s[static_cast<std::size_t>(i)] -= a;
            d[static_cast<std::size_t>(j)] -= a;
            if (i == m - 1 && j == n - 1) {
                break;
            }
            if (s[static_cast<std::size_t>(i)] <= 1e-15 && i + 1 <= m - 1) {
                ++i;
            } else {
                ++j;
            }
        }
    }

    for (int iter = 0; iter < 10000; ++iter) {
        // potentials from the basic spanning tree
        std::vector<double> u(static_cast<std::size_t>(m), 0.0), v(static_cast<std::size_t>(n), 0.0);
        std::vector<char> useen(static_cast<std::size_t>(m), 0), vseen(static_cast<std::size_t>(n), 0);
        useen[0] = 1;
        bool progress = true;
        while (progress) {
            progress = false;
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) {
                    if (!basic[idx(i, j)]) {
                        continue;
                    }
                    if (useen[static_cast<std::size_t>(i)] && !vseen[static_cast<std::size_t>(j)]) {
                        v[static_cast<std::size_t>(j)] = cost[idx(i, j)] - u[static_cast<std::size_t>(i)];
                        vseen[static_cast<std::size_t>(j)] = 1;
                        progress = true;
                    } else if (!useen[static_cast<std::size_t>(i)] && vseen[static_cast<std::size_t>(j)]) {
                        u[static_cast<std::size_t>(i)] = cost[idx(i, j)] - v[static_cast<std::size_t>(j)];
                        useen[static_cast<std::size_t>(i)] = 1;
                        progress = true;
                    }
                }
            }
        }

        // entering cell: most negative reduced cost
        int ei = -1, ej = -1;
        double best = -1e-12;
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                if (basic[idx(i, j)]) {
                    continue;
                }
                const double r = cost[idx(i, j)] - u[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(j)];
                if (r < best) {
                    best = r;
                    ei = i;
                    ej = j;
                }
            }
        }
        if (ei < 0) {
            break;  // optimal
        }

        // unique alternating cycle through the basic tree from row ei to col ej
        // (bipartite DFS: row node -> basic cols, col node -> basic rows)
        std::vector<int> parent_col_of_row(static_cast<std::size_t>(m), -2);
        std::vector<int> parent_row_of_col(static_cast<std::size_t>(n), -2);
        parent_col_of_row[static_cast<std::size_t>(ei)] = -1;  // search root
        std::vector<int> stack_rows = {ei};
        std::vector<int> stack_cols;
        bool found = false;
        while ((!stack_rows.empty() || !stack_cols.empty()) && !found) {
            if (!stack_rows.empty()) {
                const int r = stack_rows.back();
                stack_rows.pop_back();
                for (int j = 0; j < n && !found; ++j) {
                    if (basic[idx(r, j)] && parent_row_of_col[static_cast<std::size_t>(j)] == -2) {
                        parent_row_of_col[static_cast<std::size_t>(j)] = r;
                        if (j == ej) {
                            found = true;
                            break;
                        }
                        stack_cols.push_back(j);
                    }
                }
            } else {
                const int c = stack_cols.back();
                stack_cols.pop_back();
                for (int i = 0; i < m; ++i) {
                    if (basic[idx(i, c)] && parent_col_of_row[static_cast<std::size_t>(i)] == -2) {
                        parent_col_of_row[static_cast<std::size_t>(i)] = c;
                        stack_rows.push_back(i);
                    }
                }
            }
        }
        if (!found) {
            throw std::logic_error("transport_cost: basis lost connectivity");
        }

        // reconstruct cycle cells alternating (row,col) starting at entering
        std::vector<std::pair<int, int>> minus_cells, plus_cells;
        plus_cells.push_back({ei, ej});
        int col = ej;
        while (true) {
            const int row = parent_row_of_col[static_cast<std::size_t>(col)];
            minus_cells.push_back({row, col});
            const int pcol = parent_col_of_row[static_cast<std::size_t>(row)];
            if (pcol == -1) {
                break;
            }
            plus_cells.push_back({row, pcol});
            col = pcol;
        }

        double theta = 1e300;
        std::pair<int, int> leave{-1, -1};
        for (const auto& cell : minus_cells) {
            const double a = alloc[idx(cell.first, cell.second)];
            if (a < theta - 1e-15 ||
                (std::abs(a - theta) <= 1e-15 &&
                 (cell.first < leave.first || (cell.first == leave.first && cell.second < leave.second)))) {
                theta = a;
                leave = cell;
            }
        }
        for (const auto& cell : plus_cells) {
            alloc[idx(cell.first, cell.second)] += theta;
        }
        for (const auto& cell : minus_cells) {
            alloc[idx(cell.first, cell.second)] -= theta;
        }
        basic[idx(ei, ej)] = 1;
        basic[idx(leave.first, leave.second)] = 0;
        alloc[idx(leave.first, leave.second)] = 0.0;
    }

    double total = 0;
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            total += alloc[idx(i, j)] * cost[idx(i, j)];
        }
    }
    return total;
}

std::vector<double> wgd_cost_matrix(const GmmModel& a, const GmmModel& b) {
    if (a.dim != b.dim) {
        throw std::invalid_argument("wgd: mixture dimension mismatch");
    }
    std::vector<double> cost(static_cast<std::size_t>(a.components) * b.components);
    for (int i = 0; i < a.components; ++i) {
        std::vector<double> ma(a.means.begin() + static_cast<std::ptrdiff_t>(i) * a.dim,
                               a.means.begin() + static_cast<std::ptrdiff_t>(i + 1) * a.dim);
        std::vector<double> va(a.vars.begin() + static_cast<std::ptrdiff_t>(i) * a.dim,
                               a.vars.begin() + static_cast<std::ptrdiff_t>(i + 1) * a.dim);
        for (int j = 0; j < b.components; ++j) {
            std::vector<double> mb(b.means.begin() + static_cast<std::ptrdiff_t>(j) * b.dim,
                                   b.means.begin() + static_cast<std::ptrdiff_t>(j + 1) * b.dim);
            std::vector<double> vb(b.vars.begin() + static_cast<std::ptrdiff_t>(j) * b.dim,
                                   b.vars.begin() + static_cast<std::ptrdiff_t>(j + 1) * b.dim);
            cost[static_cast<std::size_t>(i) * b.components + j] = gaussian_w2sq_diag(ma, va, mb, vb);
        }
    }
    return cost;
}

double wgd_from_models(const GmmModel& a, const GmmModel& b) {
    return transport_cost(a.weights, b.weights, wgd_cost_matrix(a, b));
}

RngStream wgd_fit_stream(std::uint64_t seed) { return RngStream(seed, 333); }

double wgd(const std::vector<Tensor32>& pred, const std::vector<Tensor32>& gt, int components,
           std::uint64_t seed) {
    const auto ps = pool_frames(pred);
    const auto gs = pool_frames(gt);
    RngStream rng = wgd_fit_stream(seed);
    const GmmModel a = fit_gmm_em(ps, components, rng);
    const GmmModel b = fit_gmm_em(gs, components, rng);
    return wgd_from_models(a, b);
}

// --- PD and smoothness -----------------------------------------------------------

double pd_single(const std::vector<Tensor32>& pred, const std::vector<Tensor32>& gt) {
    if (pred.size() != gt.size() || pred.empty()) {
        throw std::invalid_argument("pd: clip count mismatch");
    }
    double acc = 0;
    long long frames = 0;
    for (std::size_t c = 0; c < pred.size(); ++c) {
        const Tensor32& p = pred[c];
        const Tensor32& g = gt[c];
        if (p.shape != g.shape || p.rank() != 2 || p.shape[1] != 3) {
            throw std::invalid_argument("pd: misaligned position sequences");
        }
        for (int t = 0; t < p.shape[0]; ++t) {
            double d2 = 0;
            for (int k = 0; k < 3; ++k) {
                const double d = static_cast<double>(p(t, k)) - g(t, k);
                d2 += d * d;
            }
            acc += std::sqrt(d2);
            ++frames;
        }
    }
    return acc / static_cast<double>(frames);
}

double pd(const std::vector<Tensor32>& pred_l, const std::vector<Tensor32>& pred_r,
          const std::vector<Tensor32>& gt_l, const std::vector<Tensor32>& gt_r) {
    return 0.5 * (pd_single(pred_l, gt_l) + pd_single(pred_r, gt_r));
}

namespace {

double mean_abs_accel(const Tensor32& x) {
    const int n = x.shape[0];
    const int d = static_cast<int>(x.numel() / n);
    if (n < 3) {
        throw std::invalid_argument("smoothness: need at least 3 frames");
    }
    double acc = 0;
    for (int t = 1; t + 1 < n; ++t) {
        for (int k = 0; k < d; ++k) {
            const double a = static_cast<double>(x.data[static_cast<std::size_t>(t + 1) * d + k]) -
                             2.0 * x.data[static_cast<std::size_t>(t) * d + k] +
                             x.data[static_cast<std::size_t>(t - 1) * d + k];
            acc += std::abs(a);
        }
    }
    return acc / (static_cast<double>(n - 2) * d);
}

}  // namespace

double smoothness(const Tensor32& pred, const Tensor32& gt) {
    if (pred.shape != gt.shape) {
        throw std::invalid_argument("smoothness: shape mismatch");
    }
    const double ap = mean_abs_accel(pred);
    const double ag = mean_abs_accel(gt);
    return std::abs(ap - ag) / std::max(ag, 1e-8);
}

double smoothness_set(const std::vector<Tensor32>& pred, const std::vector<Tensor32>& gt) {
    if (pred.size() != gt.size() || pred.empty()) {
        throw std::invalid_argument("smoothness: clip count mismatch");
    }
    // pool accelerations over clips so a single static reference clip cannot
    // blow up the ratio
    double ap = 0, ag = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i].shape != gt[i].shape) {
            throw std::invalid_argument("smoothness: shape mismatch");
        }
        ap += mean_abs_accel(pred[i]);
        ag += mean_abs_accel(gt[i]);
    }
    ap /= static_cast<double>(pred.size());
    ag /= static_cast<double>(gt.size());
    return std::abs(ap - ag) / std::max(ag, 1e-8);
}

// --- FID embedder -----------------------------------------------------------------

namespace {

Tensor32 clip_matrix(const GesturePair& clip) {
    // N x (2 * J * 3): both hands concatenated channelwise
    const int n = clip.left.shape[0];
    const int dl = static_cast<int>(clip.left.numel() / n);
    const int dr = static_cast<int>(clip.right.numel() / n);
    Tensor32 out(Shape{n, dl + dr});
    for (int t = 0; t < n; ++t) {
        for (int k = 0; k < dl; ++k) {
            out(t, k) = clip.left.data[static_cast<std::size_t>(t) * dl + k];
        }
        for (int k = 0; k < dr; ++k) {
            out(t, dl + k) = clip.right.data[static_cast<std::size_t>(t) * dr + k];
        }
    }
    return out;
}

VarT<float> embedder_encode_var(const MotionEmbedder& emb, GraphT<float>& g, VarT<float> x) {
    VarT<float> h = gelu(emb.enc1(g, x));
    h = avgpool2_rows(h);
    h = gelu(emb.enc2(g, h));
    // mean over frames
    const int half = h.val().shape[0];
    TensorT<float> ones(Shape{1, half}, 1.0f / static_cast<float>(half));
    VarT<float> pooled = matmul(g.input(ones), h);
    return emb.to_latent(g, pooled);
}

VarT<float> embedder_decode_var(const MotionEmbedder& emb, GraphT<float>& g, VarT<float> latent,
                                int frames) {
    VarT<float> row = emb.from_latent(g, latent);  // 1 x width
    TensorT<float> ones(Shape{frames / 2, 1}, 1.0f);
    VarT<float> h = matmul(g.input(ones), row);
    h = gelu(emb.dec1(g, h));
    h = upsample2_rows(h);
    return emb.dec2(g, h);
}

}  // namespace

MotionEmbedder MotionEmbedder::make(int in_channels, int width, int latent, std::uint64_t seed) {
    MotionEmbedder e;
    e.in_channels = in_channels;
    e.width = width;
    e.latent = latent;
    RngStream rng(seed, 777);
    e.enc1 = Conv1dT<float>::make(e.params, "embed.enc1", 5, in_channels, width, rng);
    e.enc2 = Conv1dT<float>::make(e.params, "embed.enc2", 5, width, width, rng);
    e.to_latent = LinearT<float>::make(e.params, "embed.to-latent", width, latent, rng);
    e.from_latent = LinearT<float>::make(e.params, "embed.from-latent", latent, width, rng);
    e.dec1 = Conv1dT<float>::make(e.params, "embed.dec1", 5, width, width, rng);
    e.dec2 = Conv1dT<float>::make(e.params, "embed.dec2", 5, width, in_channels, rng);
    return e;
}

std::vector<double> MotionEmbedder::encode(const GesturePair& clip) const {
    GraphT<float> g(false);
    VarT<float> z = embedder_encode_var(*this, g, g.input(clip_matrix(clip)));
    std::vector<double> out(z.val().data.begin(), z.val().data.end());
    return out;
}

double MotionEmbedder::reconstruction_error(const GesturePair& clip) const {
    GraphT<float> g(false);
    const Tensor32 x = clip_matrix(clip);
    VarT<float> xin = g.input(x);
    VarT<float> z = embedder_encode_var(*this, g, xin);
    VarT<float> rec = embedder_decode_var(*this, g, z, x.shape[0]);
    return mse(rec, xin).val().data[0];
}

void train_embedder(MotionEmbedder& emb, const std::vector<GesturePair>& gt, int steps, double lr,
                    std::uint64_t seed) {
    if (gt.empty()) {
        throw std::invalid_argument("train_embedder: empty training set");
    }
    RngStream order(seed, 888);
    AdamState adam;
    TrainConfig cfg;
    cfg.stage = "motion";
    cfg.steps = steps;
    cfg.batch_size = 1;
    cfg.learning_rate = lr;
    std::vector<ParamPtr<float>> group = emb.params.items;
    for (int step = 0; step < steps; ++step) {
        const int i = static_cast<int>(order.below(gt.size()));
        GraphT<float> g(true);
        const Tensor32 x = clip_matrix(gt[static_cast<std::size_t>(i)]);
        VarT<float> xin = g.input(x);
        VarT<float> z = embedder_encode_var(emb, g, xin);
        VarT<float> rec = embedder_decode_var(emb, g, z, x.shape[0]);
        g.backward(mse(rec, xin));
        g.accumulate_param_grads();
        adam_step(group, adam, cfg);
    }
    emb.trained = true;
}

void save_embedder(const MotionEmbedder& emb, const std::string& path) {
    std::vector<NamedTensor> entries;
    Tensor32 meta(Shape{4});
    meta.data = {static_cast<float>(emb.in_channels), static_cast<float>(emb.width),
                 static_cast<float>(emb.latent), emb.trained ? 1.0f : 0.0f};
    entries.push_back({"embed.meta", meta});
    for (const auto& p : emb.params.items) {
        entries.push_back({p->name, p->value});
    }
    write_container(entries, path);
}

MotionEmbedder load_embedder(const std::string& path) {
    const std::vector<NamedTensor> entries = read_container(path);
    const NamedTensor* meta = nullptr;
    for (const auto& e : entries) {
        if (e.name == "embed.meta") {
            meta = &e;
        }
    }
    if (meta == nullptr || meta->tensor.numel() != 4) {
        throw std::runtime_error("embedder file lacks metadata: " + path);
    }
    MotionEmbedder emb = MotionEmbedder::make(static_cast<int>(meta->tensor.data[0]),
                                              static_cast<int>(meta->tensor.data[1]),
                                              static_cast<int>(meta->tensor.data[2]), 0);
    for (const auto& e : entries) {
        if (e.name == "embed.meta") {
            continue;
        }
        ParamPtr<float> p = emb.params.find(e.name);
        if (p == nullptr || p->value.shape != e.tensor.shape) {
            throw std::runtime_error("embedder tensor mismatch: " + e.name);
        }
        p->value = e.tensor;
    }
    emb.trained = meta->tensor.data[3] != 0.0f;
    return emb;
}

double fid(const std::vector<GesturePair>& pred, const std::vector<GesturePair>& gt,
           const MotionEmbedder& emb) {
    if (!emb.trained) {
        throw std::logic_error("fid: embedder is untrained");
    }
    if (pred.empty() || gt.empty()) {
        throw std::invalid_argument("fid: empty clip set");
    }
    std::vector<std::vector<double>> zp, zg;
    for (const auto& c : pred) {
        zp.push_back(emb.encode(c));
    }
    for (const auto& c : gt) {
        zg.push_back(emb.encode(c));
    }
    return frechet_distance(fit_gaussian(zp), fit_gaussian(zg));
}

}  // namespace s2c
