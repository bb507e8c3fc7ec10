//! Integrals of radial power kernels `|y|^{a-n}` over cells, in closed form
//! wherever one exists.
//!
//! * n = 1: antiderivative `sign(y)|y|^a / a`, evaluated with `expm1`/`ln_1p`
//!   away from the origin so far cells do not lose digits to cancellation.
//! * n = 2: a rectangle in the positive quadrant anchored at the origin splits
//!   into two triangles with a vertex at 0; in polar-like coordinates each is
//!   `x^{a-1} dx` times the smooth integral `∫_0^c (1+t²)^{(a-2)/2} dt`, which
//!   Gauss–Legendre resolves to rounding. General rectangles follow by quadrant
//!   splitting and inclusion–exclusion; cells far from the origin use a tensor
//!   Gauss–Legendre rule directly.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Nodes and weights of the `order`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let nf = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if order == 0 { 1.0 } else { p1 };
            dp = nf * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// `∫_a^b g` with `panels` equal panels of 16-point Gauss–Legendre.
fn gl_integrate(a: f64, b: f64, panels: usize, g: impl Fn(f64) -> f64) -> f64 {
    let (nodes, weights) = gl16();
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * width;
        let half = 0.5 * width;
        let mut s = 0.0;
        for (x, w) in nodes.iter().zip(weights) {
            s += w * g(mid + half * x);
        }
        total += s * half;
    }
    total
}

/// `∫_a^b |y|^{alpha-1} dy` for `alpha > 0`.
pub fn interval_power_integral(a: f64, b: f64, alpha: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a < 0.0 && b > 0.0 {
        return ((-a).powf(alpha) + b.powf(alpha)) / alpha;
    }
    let (lo, hi) = if b <= 0.0 { (-b, -a) } else { (a, b) };
    if lo == 0.0 {
        return hi.powf(alpha) / alpha;
    }
    // hi^a - lo^a = lo^a (exp(a ln(hi/lo)) - 1)
    lo.powf(alpha) * (alpha * ((hi - lo) / lo).ln_1p()).exp_m1() / alpha
}

/// `∫_0^c (1 + t²)^{(alpha-2)/2} dt`.
fn wedge_profile(c: f64, alpha: f64) -> f64 {
    if c <= 0.0 {
        return 0.0;
    }
    let panels = (c / 0.25).ceil().max(1.0) as usize;
    let e = 0.5 * (alpha - 2.0);
    gl_integrate(0.0, c, panels, |t| (1.0 + t * t).powf(e))
}

/// `∫_0^a ∫_0^b |y|^{alpha-2} dy` for `a, b >= 0`.
fn quadrant_rect(a: f64, b: f64, alpha: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    (a.powf(alpha) * wedge_profile(b / a, alpha) + b.powf(alpha) * wedge_profile(a / b, alpha))
        / alpha
}

/// `∫_{[a1,b1]×[a2,b2]} |y|^{alpha-2} dy` with `0 <= a_i <= b_i`.
fn positive_rect(a: [f64; 2], b: [f64; 2], alpha: f64) -> f64 {
    let size = (b[0] - a[0]).max(b[1] - a[1]);
    let dist = a[0].hypot(a[1]);
    if dist >= 2.0 * size {
        let e = 0.5 * (alpha - 2.0);
        return gl_integrate(a[0], b[0], 1, |x| gl_integrate(a[1], b[1], 1, |y| (x * x + y * y).powf(e)));
    }
    quadrant_rect(b[0], b[1], alpha) - quadrant_rect(a[0], b[1], alpha) - quadrant_rect(b[0], a[1], alpha)
        + quadrant_rect(a[0], a[1], alpha)
}

/// Split `[lo, hi]` at 0 into pieces reflected onto the non-negative half-line.
fn fold(lo: f64, hi: f64) -> Vec<(f64, f64)> {
    if lo >= 0.0 {
        vec![(lo, hi)]
    } else if hi <= 0.0 {
        vec![(-hi, -lo)]
    } else {
        vec![(0.0, -lo), (0.0, hi)]
    }
}

/// `∫_{[lo0,hi0]×[lo1,hi1]} |y|^{alpha-2} dy` for `alpha > 0`.
pub fn rect_power_integral(lo: [f64; 2], hi: [f64; 2], alpha: f64) -> f64 {
    let mut total = 0.0;
    for (a0, b0) in fold(lo[0], hi[0]) {
        for (a1, b1) in fold(lo[1], hi[1]) {
            if b0 > a0 && b1 > a1 {
                total += positive_rect([a0, a1], [b0, b1], alpha);
            }
        }
    }
    total
}

/// `∫_cell |y|^{alpha-n} dy` over the cell `Π [lo_i, hi_i]`, n ∈ {1, 2}.
pub fn cell_power_integral(lo: &[f64], hi: &[f64], alpha: f64) -> f64 {
    match lo.len() {
        1 => interval_power_integral(lo[0], hi[0], alpha),
        2 => rect_power_integral([lo[0], lo[1]], [hi[0], hi[1]], alpha),
        n => panic!("unsupported dimension {n}"),
    }
}

/// Volume of `[-h/2, h/2)^n ∩ B(0, r)`.
pub fn centered_cell_ball_volume(dim: usize, h: f64, r: f64) -> f64 {
    let a = 0.5 * h;
    match dim {
        1 => h.min(2.0 * r),
        2 => {
            if r <= a {
                PI * r * r
            } else if r >= a * std::f64::consts::SQRT_2 {
                h * h
            } else {
                let segment = r * r * (a / r).acos() - a * (r * r - a * a).sqrt();
                PI * r * r - 4.0 * segment
            }
        }
        n => panic!("unsupported dimension {n}"),
    }
}

/// Second antiderivative of `s^{alpha-2}`.
fn l1_potential(s: f64, alpha: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if (alpha - 1.0).abs() < 1e-12 {
        s * s.ln()
    } else {
        s.powf(alpha) / (alpha * (alpha - 1.0))
    }
}

/// `∫_{a0}^{a1} ∫_{b0}^{b1} (a + b)^{alpha-2} db da` on the closed positive
/// quadrant, `0 < alpha < 2`. Exact near the origin, Gauss–Legendre where the
/// integrand is smooth on the rectangle.
pub fn l1_rect_kernel(a: [f64; 2], b: [f64; 2], alpha: f64) -> f64 {
    if a[1] <= a[0] || b[1] <= b[0] {
        return 0.0;
    }
    let size = (a[1] - a[0]).max(b[1] - b[0]);
    if a[0] + b[0] >= 4.0 * size {
        let e = alpha - 2.0;
        return gl_integrate(a[0], a[1], 1, |x| gl_integrate(b[0], b[1], 1, |y| (x + y).powf(e)));
    }
    let g = |s: f64| l1_potential(s, alpha);
    g(a[1] + b[1]) - g(a[0] + b[1]) - g(a[1] + b[0]) + g(a[0] + b[0])
}

/// `∫∫_{[-h/2,h/2]²} (|a| + |b|)^{alpha-2} da db` for `0 < alpha < 2`.
pub fn diagonal_cell_kernel(h: f64, alpha: f64) -> f64 {
    let c = 0.5 * h;
    let factor = if (alpha - 1.0).abs() < 1e-12 {
        2.0 * std::f64::consts::LN_2
    } else {
        (2f64.powf(alpha) - 2.0) / (alpha * (alpha - 1.0))
    };
    4.0 * c.powf(alpha) * factor
}
