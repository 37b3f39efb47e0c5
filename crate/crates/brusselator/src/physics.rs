//! Pointwise pieces of the advection-reaction model: initial profile,
//! reaction terms and their Jacobian, and the closed-form 3×3 solve.

use thiserror::Error;

/// Reaction constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reaction {
    pub a: f64,
    pub b: f64,
    pub eps: f64,
}

impl Default for Reaction {
    fn default() -> Self {
        Reaction {
            a: 1.0,
            b: 3.5,
            eps: 5e-6,
        }
    }
}

/// Gaussian bump added to the uniform state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub alpha: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl Bump {
    /// Centered on a domain of length `b`: `μ = b/2`, `σ = b/4`.
    pub fn centered(alpha: f64, b: f64) -> Self {
        Bump {
            alpha,
            mu: b / 2.0,
            sigma: b / 4.0,
        }
    }

    pub fn at(&self, x: f64) -> f64 {
        let d = x - self.mu;
        self.alpha * (-d * d / (2.0 * self.sigma * self.sigma)).exp()
    }
}

/// `(u, v, w)` at `x`.
pub fn initial_state(r: &Reaction, bump: &Bump, x: f64) -> [f64; 3] {
    let p = bump.at(x);
    [r.a + p, r.b / r.a + p, 3.0 + p]
}

pub fn reaction(r: &Reaction, [u, v, w]: [f64; 3]) -> [f64; 3] {
    [
        r.a - (w + 1.0) * u + v * u * u,
        w * u - v * u * u,
        (r.b - w) / r.eps - w * u,
    ]
}

/// Row-major `∂f/∂(u, v, w)`.
pub fn reaction_jacobian(r: &Reaction, [u, v, w]: [f64; 3]) -> [f64; 9] {
    [
        -(w + 1.0) + 2.0 * u * v,
        u * u,
        -u,
        w - 2.0 * u * v,
        -u * u,
        u,
        -w,
        0.0,
        -1.0 / r.eps - u,
    ]
}

/// `I − γ J` for one cell.
pub fn newton_block(r: &Reaction, y: [f64; 3], gamma: f64) -> [f64; 9] {
    let mut m = reaction_jacobian(r, y);
    for (k, e) in m.iter_mut().enumerate() {
        *e = if k % 4 == 0 { 1.0 } else { 0.0 } - gamma * *e;
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("3x3 block is singular")]
pub struct SingularBlock;

/// Gauss-Jordan elimination with partial pivoting, unrolled for 3×3.
pub fn solve3x3(m: &[f64; 9], r: &[f64; 3]) -> Result<[f64; 3], SingularBlock> {
    let [mut a00, mut a01, mut a02, mut a10, mut a11, mut a12, mut a20, mut a21, mut a22] = *m;
    let [mut b0, mut b1, mut b2] = *r;
    let scale = m.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    let tiny = scale * 1e-14;

    // Column 0.
    if a10.abs() > a00.abs() && a10.abs() >= a20.abs() {
        std::mem::swap(&mut a00, &mut a10);
        std::mem::swap(&mut a01, &mut a11);
        std::mem::swap(&mut a02, &mut a12);
        std::mem::swap(&mut b0, &mut b1);
    } else if a20.abs() > a00.abs() {
        std::mem::swap(&mut a00, &mut a20);
        std::mem::swap(&mut a01, &mut a21);
        std::mem::swap(&mut a02, &mut a22);
        std::mem::swap(&mut b0, &mut b2);
    }
    if !(a00.abs() > tiny) {
        return Err(SingularBlock);
    }
    let l1 = a10 / a00;
    let l2 = a20 / a00;
    a11 -= l1 * a01;
    a12 -= l1 * a02;
    b1 -= l1 * b0;
    a21 -= l2 * a01;
    a22 -= l2 * a02;
    b2 -= l2 * b0;

    // Column 1.
    if a21.abs() > a11.abs() {
        std::mem::swap(&mut a11, &mut a21);
        std::mem::swap(&mut a12, &mut a22);
        std::mem::swap(&mut b1, &mut b2);
    }
    if !(a11.abs() > tiny) {
        return Err(SingularBlock);
    }
    let l0 = a01 / a11;
    let l2 = a21 / a11;
    a02 -= l0 * a12;
    b0 -= l0 * b1;
    a22 -= l2 * a12;
    b2 -= l2 * b1;

    // Column 2.
    if !(a22.abs() > tiny) {
        return Err(SingularBlock);
    }
    let x2 = b2 / a22;
    let x1 = (b1 - a12 * x2) / a11;
    let x0 = (b0 - a02 * x2) / a00;
    Ok([x0, x1, x2])
}
