//! Accelerated proximal gradient for the long-short problem.
//!
//! Names with `alpha > 0` may only be held long and names with `alpha < 0`
//! only short, so each name carries one magnitude `x_i in [0, w_max]` with
//! `w_i = s_i x_i`. In minimization form
//!
//! ```text
//! F(x) = -sum |alpha_i| x_i + l_risk Risk(w)  +  l_tc sum c_i |x_i - s_i w_prev_i|
//! ```
//!
//! subject to `sum_long x = 1`, `sum_short x = 1` and, when sector neutral,
//! `sum_{long in S_j} x = sum_{short in S_j} x`. The prox of the cost term
//! restricted to the constraint set is a per-name soft threshold shifted by
//! Lagrange multipliers, found by nested monotone root searches. Optimality
//! is certified by the gap
//!
//! ```text
//! G(x) = g'x + h(x) - min_{y feasible} (g'y + h(y)) >= F(x) - F*,   g = grad of the smooth part
//! ```
//!
//! whose inner minimum is a linear program over piecewise-linear separable
//! terms solved exactly by a greedy fill.

use super::{OptProblem, RiskModel};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub max_iters: usize,
    /// Stop once the certified gap is at most `rel_tol (1 + |objective|)`.
    pub rel_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> SolverSettings {
        SolverSettings {
            max_iters: 20_000,
            rel_tol: 1e-6,
        }
    }
}

/// Side of a name in the split formulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Side {
    Long,
    Short,
    Flat,
}

pub(crate) struct Layout {
    pub side: Vec<Side>,
    /// Indices of long and short names.
    pub longs: Vec<usize>,
    pub shorts: Vec<usize>,
    /// Per sector, its long and short members (sector-neutral problems only).
    pub groups: Vec<(Vec<usize>, Vec<usize>)>,
}

impl Layout {
    pub fn new(problem: &OptProblem) -> Layout {
        let side: Vec<Side> = problem
            .alpha
            .iter()
            .map(|&a| {
                if a > 0.0 {
                    Side::Long
                } else if a < 0.0 {
                    Side::Short
                } else {
                    Side::Flat
                }
            })
            .collect();
        let longs = (0..side.len()).filter(|&i| side[i] == Side::Long).collect();
        let shorts = (0..side.len()).filter(|&i| side[i] == Side::Short).collect();
        let mut groups = Vec::new();
        if problem.sector_neutral {
            let k = problem.sectors.iter().copied().max().map_or(0, |m| m + 1);
            groups = vec![(Vec::new(), Vec::new()); k];
            for (i, s) in side.iter().enumerate() {
                match s {
                    Side::Long => groups[problem.sectors[i]].0.push(i),
                    Side::Short => groups[problem.sectors[i]].1.push(i),
                    Side::Flat => {}
                }
            }
        }
        Layout { side, longs, shorts, groups }
    }

    fn sign(&self, i: usize) -> f64 {
        match self.side[i] {
            Side::Long => 1.0,
            Side::Short => -1.0,
            Side::Flat => 0.0,
        }
    }
}

/// Root of a continuous non-increasing function: bracketing by doubling,
/// then regula falsi with the Illinois modification and periodic bisection.
fn decreasing_root(f: impl Fn(f64) -> f64, start: f64, tol: f64) -> f64 {
    let f0 = f(start);
    if f0.abs() <= tol {
        return start;
    }
    let (mut lo, mut flo, mut hi, mut fhi);
    let mut step = 1.0;
    if f0 > 0.0 {
        lo = start;
        flo = f0;
        loop {
            hi = lo + step;
            fhi = f(hi);
            if fhi <= 0.0 {
                break;
            }
            lo = hi;
            flo = fhi;
            step *= 2.0;
        }
    } else {
        hi = start;
        fhi = f0;
        loop {
            lo = hi - step;
            flo = f(lo);
            if flo >= 0.0 {
                break;
            }
            hi = lo;
            fhi = flo;
            step *= 2.0;
        }
    }
    let mut best = if flo.abs() <= fhi.abs() { (lo, flo) } else { (hi, fhi) };
    if best.1.abs() <= tol {
        return best.0;
    }
    let (mut wlo, mut whi) = (flo, fhi);
    let mut last = 0i8;
    for iter in 0..400 {
        let secant = lo + wlo * (hi - lo) / (wlo - whi);
        let mid = if iter % 4 == 3 || !(secant > lo && secant < hi) {
            0.5 * (lo + hi)
        } else {
            secant
        };
        if !(mid > lo && mid < hi) {
            break;
        }
        let fm = f(mid);
        if fm.abs() < best.1.abs() {
            best = (mid, fm);
        }
        if fm.abs() <= tol {
            return mid;
        }
        if fm > 0.0 {
            lo = mid;
            wlo = fm;
            if last == 1 {
                whi *= 0.5;
            }
            last = 1;
        } else {
            hi = mid;
            whi = fm;
            if last == -1 {
                wlo *= 0.5;
            }
            last = -1;
        }
    }
    best.0
}

/// `argmin_x 0.5 (x - z)^2 + tau |x - q|` clipped to `[0, cap]`.
fn soft_clip(z: f64, q: f64, tau: f64, cap: f64) -> f64 {
    let d = z - q;
    let x = if d > tau {
        z - tau
    } else if d < -tau {
        z + tau
    } else {
        q
    };
    x.clamp(0.0, cap)
}

struct Prox<'a> {
    layout: &'a Layout,
    anchor: &'a [f64],
    kappa: &'a [f64],
    cap: f64,
    /// Multipliers carried between calls as warm starts.
    mu: f64,
    nu: f64,
    eta: Vec<f64>,
}

const ROOT_TOL: f64 = 1e-14;

impl Prox<'_> {
    /// Projects `v` under the cost-weighted prox with step `t`; writes `x`.
    fn apply(&mut self, v: &[f64], t: f64, x: &mut [f64]) {
        let cap = self.cap;
        let (anchor, kappa) = (self.anchor, self.kappa);
        let value = |i: usize, shift: f64| soft_clip(v[i] - shift, anchor[i], t * kappa[i], cap);
        let side_sum = |idx: &[usize], shift: f64| idx.iter().map(|&i| value(i, shift)).sum::<f64>();
        if self.layout.groups.is_empty() {
            let longs = &self.layout.longs;
            let shorts = &self.layout.shorts;
            self.mu = decreasing_root(|m| side_sum(longs, m) - 1.0, self.mu, ROOT_TOL);
            self.nu = decreasing_root(|m| side_sum(shorts, m) - 1.0, self.nu, ROOT_TOL);
            for &i in longs {
                x[i] = value(i, self.mu);
            }
            for &i in shorts {
                x[i] = value(i, self.nu);
            }
            return;
        }
        let groups = &self.layout.groups;
        let balance = |mu: f64, j: usize, start: f64| {
            let (l, s) = &groups[j];
            decreasing_root(|e| side_sum(l, mu + e) - side_sum(s, -e), start, ROOT_TOL)
        };
        let eta = &mut self.eta;
        let total = |mu: f64, eta: &mut Vec<f64>| {
            let mut sum = 0.0;
            for j in 0..groups.len() {
                eta[j] = balance(mu, j, eta[j]);
                sum += side_sum(&groups[j].0, mu + eta[j]);
            }
            sum - 1.0
        };
        let cell = std::cell::RefCell::new(eta);
        self.mu = decreasing_root(|m| total(m, &mut cell.borrow_mut()), self.mu, ROOT_TOL * 10.0);
        let eta = cell.into_inner();
        total(self.mu, eta);
        for (j, (l, s)) in groups.iter().enumerate() {
            for &i in l {
                x[i] = value(i, self.mu + eta[j]);
            }
            for &i in s {
                x[i] = value(i, -eta[j]);
            }
        }
    }
}

/// Convex piecewise-linear cost of one name on `[0, cap]` as
/// `(value at 0, segments (length, slope))` with ascending slopes.
fn segments(g: f64, kappa: f64, q: f64, cap: f64) -> (f64, [(f64, f64); 2]) {
    let q_in = q.clamp(0.0, cap);
    let base = kappa * q.abs();
    (base, [(q_in, g - kappa), (cap - q_in, g + kappa)])
}

/// `min sum_i psi_i(y_i)` over `sum y = total`; segments must be sorted
/// within each name, which holds for convex pieces.
fn greedy_fill(mut segs: Vec<(f64, f64)>, base: f64, total: f64) -> f64 {
    segs.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut left = total;
    let mut value = base;
    for (len, slope) in segs {
        if left <= 0.0 {
            break;
        }
        let take = len.min(left);
        value += take * slope;
        left -= take;
    }
    value
}

fn side_segments(idx: &[usize], g: &[f64], kappa: &[f64], anchor: &[f64], cap: f64) -> (f64, Vec<(f64, f64)>) {
    let mut base = 0.0;
    let mut out = Vec::with_capacity(2 * idx.len());
    for &i in idx {
        let (b, s) = segments(g[i], kappa[i], anchor[i], cap);
        base += b;
        out.extend(s.iter().copied().filter(|p| p.0 > 0.0));
    }
    (base, out)
}

/// Lower bound `min_{y feasible} g'y + h(y)`.
fn linear_minimum(layout: &Layout, g: &[f64], kappa: &[f64], anchor: &[f64], cap: f64) -> f64 {
    if layout.groups.is_empty() {
        let (bl, sl) = side_segments(&layout.longs, g, kappa, anchor, cap);
        let (bs, ss) = side_segments(&layout.shorts, g, kappa, anchor, cap);
        return greedy_fill(sl, bl, 1.0) + greedy_fill(ss, bs, 1.0);
    }
    let mut base = 0.0;
    let mut combined = Vec::new();
    for (l, s) in &layout.groups {
        let (bl, mut sl) = side_segments(l, g, kappa, anchor, cap);
        let (bs, mut ss) = side_segments(s, g, kappa, anchor, cap);
        base += bl + bs;
        sl.sort_by(|a, b| a.1.total_cmp(&b.1));
        ss.sort_by(|a, b| a.1.total_cmp(&b.1));
        // Equal long and short amounts in the sector: walk both fills together.
        let (mut a, mut b) = (0, 0);
        let (mut ra, mut rb) = (sl.first().map_or(0.0, |p| p.0), ss.first().map_or(0.0, |p| p.0));
        while a < sl.len() && b < ss.len() {
            let take = ra.min(rb);
            if take > 0.0 {
                combined.push((take, sl[a].1 + ss[b].1));
            }
            ra -= take;
            rb -= take;
            if ra <= 0.0 {
                a += 1;
                ra = sl.get(a).map_or(0.0, |p| p.0);
            }
            if rb <= 0.0 {
                b += 1;
                rb = ss.get(b).map_or(0.0, |p| p.0);
            }
        }
    }
    // Per-sector pieces are already ascending, so a global sort keeps each
    // sector's fill order.
    greedy_fill(combined, base, 1.0)
}

pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub gap: f64,
    pub converged: bool,
}

struct Smooth<'a> {
    problem: &'a OptProblem,
    risk: &'a RiskModel,
    layout: &'a Layout,
}

impl Smooth<'_> {
    fn weights(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(i, v)| self.layout.sign(i) * v).collect()
    }

    /// Smooth part of `F` and its gradient in `x`.
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let w = self.weights(x);
        let lr = self.problem.lambda_risk;
        let mut value = 0.0;
        let mut risk_grad = vec![0.0; w.len()];
        if lr > 0.0 {
            value += lr * self.risk.risk_and_gradient(&w, &mut risk_grad);
        }
        for i in 0..w.len() {
            let s = self.layout.sign(i);
            if s == 0.0 {
                grad[i] = 0.0;
                continue;
            }
            value -= self.problem.alpha[i].abs() * x[i];
            grad[i] = -self.problem.alpha[i].abs() + lr * s * risk_grad[i];
        }
        value
    }
}

fn cost_term(x: &[f64], kappa: &[f64], anchor: &[f64], idx: impl Iterator<Item = usize>) -> f64 {
    idx.map(|i| kappa[i] * (x[i] - anchor[i]).abs()).sum()
}

/// Runs accelerated proximal gradient with function-value restarts until the
/// gap certificate meets the tolerance.
pub(crate) fn minimize(problem: &OptProblem, risk: &RiskModel, layout: &Layout, settings: &SolverSettings) -> Outcome {
    let n = problem.alpha.len();
    let anchor: Vec<f64> = (0..n).map(|i| layout.sign(i) * problem.prev[i]).collect();
    let kappa: Vec<f64> = problem.cost.iter().map(|c| problem.lambda_tc * c).collect();
    let smooth = Smooth { problem, risk, layout };
    let active = || layout.longs.iter().chain(&layout.shorts).copied();

    let max_alpha = active().map(|i| problem.alpha[i].abs()).fold(0.0, f64::max);
    let lipschitz = (2.0 * problem.lambda_risk * risk.max_eigenvalue()).max(max_alpha).max(1e-12);
    let step = 1.0 / lipschitz;

    let mut prox = Prox {
        layout,
        anchor: &anchor,
        kappa: &kappa,
        cap: problem.w_max,
        mu: 0.0,
        nu: 0.0,
        eta: vec![0.0; layout.groups.len()],
    };
    let mut x = vec![0.0; n];
    prox.apply(&anchor, 0.0, &mut x);

    let mut grad = vec![0.0; n];
    let objective = |x: &[f64], grad: &mut [f64]| smooth.eval(x, grad) + cost_term(x, &kappa, &anchor, active());
    let certificate = |x: &[f64], fx: f64, grad: &[f64]| {
        let lin: f64 = active().map(|i| grad[i] * x[i]).sum::<f64>() + cost_term(x, &kappa, &anchor, active());
        let gap = (lin - linear_minimum(layout, grad, &kappa, &anchor, problem.w_max)).max(0.0);
        (gap, gap <= settings.rel_tol * (1.0 + fx.abs()))
    };

    let mut fx = objective(&x, &mut grad);
    let (mut gap, mut done) = certificate(&x, fx, &grad);
    let mut best = (x.clone(), fx, gap);
    let mut y = x.clone();
    let mut momentum = 1.0f64;
    let mut v = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut iterations = 0;
    while !done && iterations < settings.max_iters {
        iterations += 1;
        smooth.eval(&y, &mut grad);
        for i in 0..n {
            v[i] = y[i] - step * grad[i];
        }
        prox.apply(&v, step, &mut x_new);
        let f_new = objective(&x_new, &mut grad);
        if f_new > fx && momentum > 1.0 {
            // Restart momentum from the last accepted point.
            momentum = 1.0;
            y.copy_from_slice(&x);
            continue;
        }
        let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next;
        for i in 0..n {
            y[i] = x_new[i] + beta * (x_new[i] - x[i]);
        }
        momentum = next;
        std::mem::swap(&mut x, &mut x_new);
        fx = f_new;
        (gap, done) = certificate(&x, fx, &grad);
        if fx < best.1 || gap < best.2 {
            best = (x.clone(), fx, gap);
        }
    }
    let (x, _, gap) = if done { (x, fx, gap) } else { best };
    Outcome {
        x: x.iter().enumerate().map(|(i, v)| layout.sign(i) * v).collect(),
        iterations,
        gap,
        converged: done,
    }
}
