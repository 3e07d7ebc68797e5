//! Adaptive Gauss–Kronrod (7/15) quadrature on a finite interval.

use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Piece {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for k in 0..7 {
        let x = h * XGK[k];
        let s = f(c - x) + f(c + x);
        kron += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    Piece { a, b, value: kron * h, err: ((kron - gauss) * h).abs() }
}

/// Outcome of [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

/// Integrates `f` over `[a, b]`, starting from `initial_pieces` equal panels
/// and bisecting the worst panel until the summed error estimate drops below
/// `rel_tol · |value|` (or `abs_tol`).
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    initial_pieces: usize,
    rel_tol: f64,
    abs_tol: f64,
) -> Quadrature {
    const MAX_PIECES: usize = 20_000;
    let k = initial_pieces.max(1);
    let w = (b - a) / k as f64;
    let mut heap = BinaryHeap::with_capacity(2 * k);
    let (mut value, mut error) = (0.0, 0.0);
    for i in 0..k {
        let lo = a + w * i as f64;
        let hi = if i + 1 == k { b } else { lo + w };
        let p = gk15(&f, lo, hi);
        value += p.value;
        error += p.err;
        heap.push(p);
    }
    let mut converged = false;
    while heap.len() < MAX_PIECES {
        if !value.is_finite() {
            break;
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            converged = true;
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        let (l, r) = (gk15(&f, worst.a, mid), gk15(&f, mid, worst.b));
        value += l.value + r.value - worst.value;
        error += l.err + r.err - worst.err;
        heap.push(l);
        heap.push(r);
    }
    // re-sum to shed accumulated update rounding
    let (mut v, mut e) = (0.0, 0.0);
    for p in heap.iter() {
        v += p.value;
        e += p.err;
    }
    if !converged && v.is_finite() && e <= abs_tol.max(rel_tol * v.abs()) {
        converged = true;
    }
    Quadrature { value: v, error: e, converged }
}
