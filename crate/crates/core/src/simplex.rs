//! Dense tableau simplex for `max c·x  s.t.  A x ≤ b, x ≥ 0` with `b ≥ 0`.
//!
//! Because `b ≥ 0` the all-slack basis is feasible, so there is no phase one.
//! Entering columns are priced by largest reduced cost; after a run of
//! degenerate pivots the rule switches to Bland's (lowest index) until the
//! objective moves again, which rules out cycling. The ratio test prefers
//! the largest pivot among near-ties. The tableau is rebuilt from the
//! original rows every few dozen pivots so rounding does not accumulate.
//! All choices are deterministic functions of the input.
//!
//! Several objectives can be optimized lexicographically: once level `ℓ` is
//! optimal, later levels may only pivot on columns whose reduced cost is zero
//! at every earlier level, i.e. they move along the optimal face.

use alloc::vec;
use alloc::vec::Vec;

const REDUCED_EPS: f64 = 1e-9;
const PIVOT_EPS: f64 = 1e-9;
const RATIO_TIE: f64 = 1e-12;
const SNAP: f64 = 1e-12;
const REFACTOR_EVERY: usize = 32;
const DEGENERATE_STREAK: usize = 24;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub(crate) enum SimplexError {
    #[error("simplex exceeded its pivot limit")]
    Stalled,
}

pub(crate) struct Tableau {
    rows: usize,
    width: usize,
    structural: usize,
    /// Original `[A | I]` and `b`, kept for refactorization.
    a0: Vec<f64>,
    b0: Vec<f64>,
    a: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    objectives: Vec<Vec<f64>>,
    reduced: Vec<Vec<f64>>,
}

impl Tableau {
    /// `rows_a` holds `rows × structural` coefficients in row-major order.
    pub(crate) fn new(structural: usize, rows_a: &[f64], rhs: &[f64]) -> Self {
        let rows = rhs.len();
        debug_assert_eq!(rows_a.len(), rows * structural);
        debug_assert!(rhs.iter().all(|&b| b >= 0.0));
        let width = structural + rows;
        let mut a = vec![0.0; rows * width];
        for r in 0..rows {
            for (dst, &src) in a[r * width..r * width + structural]
                .iter_mut()
                .zip(&rows_a[r * structural..(r + 1) * structural])
            {
                *dst = if src.abs() < SNAP { 0.0 } else { src };
            }
            a[r * width + structural + r] = 1.0;
        }
        Tableau {
            rows,
            width,
            structural,
            a0: a.clone(),
            b0: rhs.to_vec(),
            a,
            rhs: rhs.to_vec(),
            basis: (structural..width).collect(),
            objectives: Vec::new(),
            reduced: Vec::new(),
        }
    }

    /// Maximizes each objective in turn without giving up optimality of the
    /// earlier ones. Returns the structural part of the final vertex.
    pub(crate) fn maximize_lexicographic(
        &mut self,
        objectives: &[&[f64]],
    ) -> Result<Vec<f64>, SimplexError> {
        self.objectives = objectives
            .iter()
            .map(|c| {
                debug_assert_eq!(c.len(), self.structural);
                let mut full = vec![0.0; self.width];
                full[..self.structural].copy_from_slice(c);
                full
            })
            .collect();
        self.refresh_reduced();
        let mut pivots = 0;
        for level in 0..objectives.len() {
            let mut streak = 0;
            loop {
                let bland = streak >= DEGENERATE_STREAK;
                let Some(enter) = self.entering(level, bland) else {
                    break;
                };
                let Some(leave) = self.leaving(enter, bland) else {
                    // A bounded polyhedron has no improving ray; a column
                    // with no positive entry is numerically pinned.
                    break;
                };
                if self.rhs[leave] > 0.0 {
                    streak = 0;
                } else {
                    streak += 1;
                }
                self.pivot(leave, enter);
                pivots += 1;
                if pivots % REFACTOR_EVERY == 0 {
                    self.refactor();
                }
                if pivots > MAX_PIVOTS {
                    return Err(SimplexError::Stalled);
                }
            }
        }
        if pivots > 0 {
            self.refactor();
        }
        Ok(self.solution())
    }

    fn refresh_reduced(&mut self) {
        self.reduced = self
            .objectives
            .iter()
            .map(|c| {
                // c_j − c_B B⁻¹ A_j for the current tableau.
                let mut red = c.clone();
                for (r, &b) in self.basis.iter().enumerate() {
                    let cb = c[b];
                    if cb != 0.0 {
                        let row = &self.a[r * self.width..(r + 1) * self.width];
                        for (x, &y) in red.iter_mut().zip(row) {
                            *x -= cb * y;
                        }
                    }
                }
                for &b in &self.basis {
                    red[b] = 0.0;
                }
                red
            })
            .collect();
    }

    fn eligible(&self, level: usize, j: usize) -> bool {
        self.reduced[level][j] > REDUCED_EPS
            && self.reduced[..level].iter().all(|red| red[j].abs() <= REDUCED_EPS)
    }

    fn entering(&self, level: usize, bland: bool) -> Option<usize> {
        if bland {
            return (0..self.width).find(|&j| self.eligible(level, j));
        }
        let mut best: Option<usize> = None;
        for j in 0..self.width {
            if self.eligible(level, j)
                && best.is_none_or(|b| self.reduced[level][j] > self.reduced[level][b])
            {
                best = Some(j);
            }
        }
        best
    }

    fn leaving(&self, enter: usize, bland: bool) -> Option<usize> {
        let mut min_ratio = f64::INFINITY;
        for r in 0..self.rows {
            let coef = self.a[r * self.width + enter];
            if coef > PIVOT_EPS {
                min_ratio = min_ratio.min(self.rhs[r].max(0.0) / coef);
            }
        }
        if !min_ratio.is_finite() {
            return None;
        }
        let mut best: Option<usize> = None;
        for r in 0..self.rows {
            let coef = self.a[r * self.width + enter];
            if coef <= PIVOT_EPS || self.rhs[r].max(0.0) / coef > min_ratio + RATIO_TIE {
                continue;
            }
            best = match best {
                None => Some(r),
                Some(b) => {
                    let cb = self.a[b * self.width + enter];
                    let lower = self.basis[r] < self.basis[b];
                    if (bland && lower) || (!bland && (coef > cb || (coef == cb && lower))) {
                        Some(r)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        best
    }

    fn pivot(&mut self, leave: usize, enter: usize) {
        let w = self.width;
        let p = self.a[leave * w + enter];
        for x in &mut self.a[leave * w..(leave + 1) * w] {
            *x /= p;
        }
        self.a[leave * w + enter] = 1.0;
        self.rhs[leave] /= p;
        let pivot_row: Vec<f64> = self.a[leave * w..(leave + 1) * w].to_vec();
        let pivot_rhs = self.rhs[leave];
        for r in 0..self.rows {
            if r == leave {
                continue;
            }
            let f = self.a[r * w + enter];
            if f == 0.0 {
                continue;
            }
            for (x, &y) in self.a[r * w..(r + 1) * w].iter_mut().zip(&pivot_row) {
                *x -= f * y;
                if x.abs() < SNAP {
                    *x = 0.0;
                }
            }
            self.a[r * w + enter] = 0.0;
            self.rhs[r] -= f * pivot_rhs;
            if self.rhs[r].abs() < SNAP {
                self.rhs[r] = 0.0;
            }
        }
        for red in &mut self.reduced {
            let f = red[enter];
            if f == 0.0 {
                continue;
            }
            for (x, &y) in red.iter_mut().zip(&pivot_row) {
                *x -= f * y;
            }
            red[enter] = 0.0;
        }
        self.basis[leave] = enter;
    }

    /// Rebuilds `B⁻¹ [A | I | b]` from the original rows by Gauss–Jordan
    /// elimination with partial pivoting. Leaves the tableau untouched if the
    /// basis is numerically singular.
    fn refactor(&mut self) {
        let (m, w) = (self.rows, self.width);
        let stride = m + w + 1;
        // Augmented [B | A | b].
        let mut aug = vec![0.0; m * stride];
        for r in 0..m {
            for (k, &col) in self.basis.iter().enumerate() {
                aug[r * stride + k] = self.a0[r * w + col];
            }
            aug[r * stride + m..r * stride + m + w].copy_from_slice(&self.a0[r * w..(r + 1) * w]);
            aug[r * stride + m + w] = self.b0[r];
        }
        for k in 0..m {
            let (mut piv, mut best) = (k, aug[k * stride + k].abs());
            for r in k + 1..m {
                let v = aug[r * stride + k].abs();
                if v > best {
                    piv = r;
                    best = v;
                }
            }
            if best < 1e-12 {
                return;
            }
            if piv != k {
                for c in 0..stride {
                    aug.swap(k * stride + c, piv * stride + c);
                }
            }
            let p = aug[k * stride + k];
            for c in 0..stride {
                aug[k * stride + c] /= p;
            }
            let pivot_row: Vec<f64> = aug[k * stride..(k + 1) * stride].to_vec();
            for r in 0..m {
                if r == k {
                    continue;
                }
                let f = aug[r * stride + k];
                if f != 0.0 {
                    for (x, &y) in aug[r * stride..(r + 1) * stride].iter_mut().zip(&pivot_row) {
                        *x -= f * y;
                    }
                }
            }
        }
        // Row k now expresses basis column k.
        for k in 0..m {
            let src = &aug[k * stride + m..k * stride + m + w];
            for (dst, &v) in self.a[k * w..(k + 1) * w].iter_mut().zip(src) {
                *dst = if v.abs() < SNAP { 0.0 } else { v };
            }
            for (j, &col) in self.basis.iter().enumerate() {
                self.a[k * w + col] = if j == k { 1.0 } else { 0.0 };
            }
            let b = aug[k * stride + m + w];
            self.rhs[k] = if b.abs() < SNAP { 0.0 } else { b };
        }
        self.refresh_reduced();
    }

    fn solution(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.structural];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < self.structural {
                x[b] = self.rhs[r].max(0.0);
            }
        }
        x
    }
}
