//! Quadrature: Gauss-Legendre rules, composite integration of smooth
//! complex integrands, and node enumeration for time-ordered simplex
//! integrals.

use num_complex::Complex64;
use std::sync::OnceLock;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = cached_rule(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|&xi| mid + half * xi).collect(),
        w.iter().map(|&wi| wi * half).collect(),
    )
}

fn cached_rule(n: usize) -> (&'static Vec<f64>, &'static Vec<f64>) {
    static CACHE: OnceLock<Vec<OnceLock<(Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| (0..=64).map(|_| OnceLock::new()).collect());
    if n <= 64 {
        let entry = cache[n].get_or_init(|| gauss_legendre(n));
        (&entry.0, &entry.1)
    } else {
        // Rare; leak rather than complicate the cache.
        let leaked: &'static (Vec<f64>, Vec<f64>) = Box::leak(Box::new(gauss_legendre(n)));
        (&leaked.0, &leaked.1)
    }
}

/// Integrates a smooth complex integrand on `[a, b]` by composite 32-point
/// Gauss-Legendre with interval doubling until the result is stable to `tol`.
pub fn integrate_complex(f: impl Fn(f64) -> Complex64, a: f64, b: f64, tol: f64) -> Complex64 {
    if a == b {
        return Complex64::ZERO;
    }
    let mut panels = 1usize;
    let mut prev = composite_gl(&f, a, b, panels);
    for _ in 0..16 {
        panels *= 2;
        let cur = composite_gl(&f, a, b, panels);
        if (cur - prev).norm() <= tol * (1.0 + cur.norm()) {
            return cur;
        }
        prev = cur;
    }
    prev
}

fn composite_gl(f: &impl Fn(f64) -> Complex64, a: f64, b: f64, panels: usize) -> Complex64 {
    let mut acc = Complex64::ZERO;
    let h = (b - a) / panels as f64;
    for p in 0..panels {
        let (xs, ws) = gauss_legendre_on(32, a + p as f64 * h, a + (p + 1) as f64 * h);
        for (x, w) in xs.iter().zip(&ws) {
            acc += f(*x) * *w;
        }
    }
    acc
}

/// Real-valued convenience wrapper around [`integrate_complex`].
pub fn integrate_real(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    integrate_complex(|x| Complex64::new(f(x), 0.0), a, b, tol).re
}

/// Quadrature nodes for the ordered simplex `0 < t_1 < ... < t_s < t`,
/// built by nesting Gauss-Legendre rules (`orders[i]` points for `t_{i+1}`,
/// outermost last). Returns `(times, weight)` pairs with `times` ascending;
/// enumeration order is deterministic.
pub fn ordered_simplex_nodes(t: f64, orders: &[usize]) -> Vec<(Vec<f64>, f64)> {
    let s = orders.len();
    assert!(s >= 1);
    let mut nodes = Vec::new();
    let mut stack: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
    // Build from the outermost variable t_s inwards so every inner interval
    // is [0, next-outer node].
    for level in 0..s {
        let order = orders[s - 1 - level];
        let mut next = Vec::with_capacity(stack.len() * order);
        for (times, weight) in stack {
            let upper = times.last().copied().unwrap_or(t);
            let (xs, ws) = gauss_legendre_on(order, 0.0, upper);
            for (x, w) in xs.iter().zip(&ws) {
                let mut ts = times.clone();
                ts.push(*x);
                next.push((ts, weight * w));
            }
        }
        stack = next;
    }
    for (mut times, weight) in stack {
        times.reverse(); // ascending t_1 < ... < t_s
        nodes.push((times, weight));
    }
    nodes
}

/// `ln(n!)`, cached.
pub fn ln_factorial(n: usize) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(1025);
        t.push(0.0);
        for k in 1..=1024usize {
            t.push(t[k - 1] + (k as f64).ln());
        }
        t
    });
    table[n]
}

/// `sqrt(binomial(n, k))` via log-factorials; overflow-safe for large n.
pub fn sqrt_binomial(n: usize, k: usize) -> f64 {
    (0.5 * (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k))).exp()
}
