//! Exponential product-trapezoid weights.
//!
//! For `x' = G x + c g(t)` with `g` linear between grid points, one step of
//! length `h` is exact: `x₊ = E x + W_a g₀ + W_b g₁` with `E = e^{Gh}`,
//! `W_a = c h (φ1 − φ2)(Gh)` and `W_b = c h φ2(Gh)`.

use crate::linalg::{exp_phi, Matrix};

#[derive(Debug, Clone)]
pub(crate) struct StepWeights {
    pub e: Matrix,
    pub wa: Matrix,
    pub wb: Matrix,
    /// `(E, W_a, W_b)` when the state is one-dimensional.
    pub scalar: Option<(f64, f64, f64)>,
}

fn combine(a: &Matrix, b: &Matrix, ca: f64, cb: f64) -> Matrix {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| ca * x + cb * y).collect();
    Matrix::new(a.rows(), a.cols(), data).expect("same shape")
}

impl StepWeights {
    /// Forward step of `x' = G x + c g`.
    pub fn forward(gen: &Matrix, gain: f64, h: f64) -> Self {
        let (e, p1, p2) = exp_phi(&gen.scaled(h));
        let ch = gain * h;
        Self::assemble(e, combine(&p1, &p2, ch, -ch), p2.scaled(ch))
    }

    /// Backward accumulation of `J(t) = ∫_t^{t_end} e^{G(t−r)} c g(r) dr`:
    /// `J_k = E J_{k+1} + W_a g_k + W_b g_{k+1}`.
    pub fn backward(gen: &Matrix, gain: f64, h: f64) -> Self {
        let (e, p1, p2) = exp_phi(&gen.scaled(-h));
        let ch = gain * h;
        Self::assemble(e, p2.scaled(ch), combine(&p1, &p2, ch, -ch))
    }

    fn assemble(e: Matrix, wa: Matrix, wb: Matrix) -> Self {
        let scalar = (e.rows() == 1).then(|| (e.get(0, 0), wa.get(0, 0), wb.get(0, 0)));
        Self { e, wa, wb, scalar }
    }

    /// `out = E x + W_a ga + W_b gb`.
    #[inline]
    pub fn step(&self, x: &[f64], ga: &[f64], gb: &[f64], out: &mut [f64]) {
        if let Some((e, wa, wb)) = self.scalar {
            out[0] = e * x[0] + wa * ga[0] + wb * gb[0];
            return;
        }
        self.e.mul_vec_into(x, out);
        self.wa.mul_vec_add(ga, out);
        self.wb.mul_vec_add(gb, out);
    }
}
