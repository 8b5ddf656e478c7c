//! Linearized BGK collision operator `L f = Pi f - f`, the defect of the
//! weighted orthogonal projection onto `span{1, v, v^2}`.

use crate::basis::{CollisionBasis, WeightFrame, HYDRO_DIM};
use crate::error::{Error, Result};
use crate::field::DistributionField;

#[derive(Debug, Clone)]
pub struct CollisionOperator {
    basis: CollisionBasis,
}

impl CollisionOperator {
    pub fn new(basis: CollisionBasis) -> Self {
        Self { basis }
    }

    pub fn basis(&self) -> &CollisionBasis {
        &self.basis
    }

    pub fn frame(&self) -> WeightFrame {
        self.basis.frame()
    }

    pub fn n_v(&self) -> usize {
        self.basis.grid().len()
    }

    fn check(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.n_v() {
            return Err(Error::GridMismatch(format!(
                "slice of length {} on an operator with {} velocity nodes",
                f.len(),
                self.n_v()
            )));
        }
        Ok(())
    }

    /// `<chi_i, f>` for the three hydrodynamic modes.
    #[inline]
    pub fn hydro_coefficients(&self, f: &[f64]) -> [f64; HYDRO_DIM] {
        let mut c = [0.0; HYDRO_DIM];
        for (i, ci) in c.iter_mut().enumerate() {
            *ci = self.basis.inner(self.basis.chi(i), f);
        }
        c
    }

    #[inline]
    fn project_unchecked(&self, f: &[f64], out: &mut [f64]) {
        let c = self.hydro_coefficients(f);
        let (c0, c1, c2) = (self.basis.chi(0), self.basis.chi(1), self.basis.chi(2));
        for j in 0..out.len() {
            out[j] = c[0] * c0[j] + c[1] * c1[j] + c[2] * c2[j];
        }
    }

    pub fn project(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check(f)?;
        let mut out = vec![0.0; f.len()];
        self.project_unchecked(f, &mut out);
        Ok(out)
    }

    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.project(f)?;
        out.iter_mut().zip(f).for_each(|(m, x)| *m -= x);
        Ok(out)
    }

    /// Weighted moments `(<1, f>, <v, f>, <v^2, f>)` in this operator's velocity variable.
    pub fn moments_weighted(&self, f: &[f64]) -> Result<[f64; 3]> {
        self.check(f)?;
        Ok(self.moments_unchecked(f))
    }

    #[inline]
    pub(crate) fn moments_unchecked(&self, f: &[f64]) -> [f64; 3] {
        let mut m = [0.0; 3];
        for ((&w, &v), &x) in self.basis.weight().iter().zip(self.basis.grid().nodes()).zip(f) {
            let wx = w * x;
            m[0] += wx;
            m[1] += wx * v;
            m[2] += wx * v * v;
        }
        m
    }

    /// Exact collision semigroup `e^{tau L} f = Pi f + e^{-tau} (f - Pi f)`, in place.
    pub fn relax_slice(&self, f: &mut [f64], tau: f64, scratch: &mut [f64]) {
        let decay = (-tau).exp();
        self.project_unchecked(f, scratch);
        for (x, &m) in f.iter_mut().zip(scratch.iter()) {
            *x = m + decay * (*x - m);
        }
    }

    /// Applies the collision semigroup to every velocity slice of `w`.
    pub fn relax_field(&self, w: &mut DistributionField, tau: f64) -> Result<()> {
        if w.n_v() != self.n_v() {
            return Err(Error::GridMismatch(format!(
                "field has {} velocity nodes, operator {}",
                w.n_v(),
                self.n_v()
            )));
        }
        let mut scratch = vec![0.0; self.n_v()];
        for row in w.rows_mut() {
            self.relax_slice(row, tau, &mut scratch);
        }
        Ok(())
    }

    /// `L w` slice by slice.
    pub fn apply_field(&self, w: &DistributionField) -> Result<DistributionField> {
        if w.n_v() != self.n_v() {
            return Err(Error::GridMismatch(format!(
                "field has {} velocity nodes, operator {}",
                w.n_v(),
                self.n_v()
            )));
        }
        let mut out = w.clone();
        let mut scratch = vec![0.0; self.n_v()];
        for (row, src) in out.rows_mut().zip(w.rows()) {
            self.project_unchecked(src, &mut scratch);
            row.iter_mut().zip(&scratch).for_each(|(x, m)| *x = m - *x);
        }
        Ok(out)
    }

    /// Weighted `L^2(M dx dv)` pairing of two fields.
    pub fn inner_field(&self, a: &DistributionField, b: &DistributionField, dx: f64) -> f64 {
        a.rows().zip(b.rows()).map(|(ra, rb)| self.basis.inner(ra, rb)).sum::<f64>() * dx
    }

    /// x-integrated weighted moments.
    pub fn integrated_moments(&self, w: &DistributionField, dx: f64) -> [f64; 3] {
        let mut total = [0.0; 3];
        for row in w.rows() {
            let m = self.moments_unchecked(row);
            for k in 0..3 {
                total[k] += m[k];
            }
        }
        total.map(|t| t * dx)
    }

    /// Constant `K` with `||u||_dxdv <= K ||u||_{M dx dv}` and vice versa,
    /// i.e. `sqrt(max M / min M)` over the grid.
    pub fn norm_equivalence(&self) -> f64 {
        let (lo, hi) = self.basis.weight_bounds();
        (hi / lo).sqrt()
    }
}
