//! A family of martingales indexed by functions in L^2(mu), with the
//! product-closure bookkeeping needed by the compensated-covariation and
//! product-representation checks.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measure::{mu_distance2, mu_inner, mu_norm2, LevyTriplet, MuMeasure, OrthonormalSystem, TestFunction};
use crate::path::{martingale_path_on, CadlagSeries, Timeline};

/// The martingales `X^{f}` for an ordered list of generators `f`.
#[derive(Debug, Clone)]
pub struct MartingaleFamily {
    triplet: LevyTriplet,
    mu: MuMeasure,
    functions: Vec<TestFunction>,
}

impl MartingaleFamily {
    pub fn new(triplet: LevyTriplet, functions: Vec<TestFunction>) -> Result<Self> {
        let mu = triplet.mu();
        for f in &functions {
            if !f.flags().in_l2_nu {
                return Err(Error::NotSquareIntegrable(f.label().to_string()));
            }
        }
        Ok(Self { triplet, mu, functions })
    }

    pub fn from_orthonormal(triplet: LevyTriplet, system: &OrthonormalSystem) -> Result<Self> {
        Self::new(triplet, system.members().to_vec())
    }

    pub fn triplet(&self) -> &LevyTriplet {
        &self.triplet
    }

    pub fn mu(&self) -> &MuMeasure {
        &self.mu
    }

    pub fn functions(&self) -> &[TestFunction] {
        &self.functions
    }

    pub fn function(&self, i: usize) -> &TestFunction {
        &self.functions[i]
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// Build the series of every member on a shared timeline.
    pub fn series_all(&self, timeline: &Arc<Timeline>) -> Result<Vec<CadlagSeries>> {
        self.functions.iter().map(|f| martingale_path_on(timeline, f, &self.mu)).collect()
    }

    /// Bracket slope `mu(f_a f_b)` of `<X^{f_a}, X^{f_b}>_t = t mu(f_a f_b)`.
    pub fn bracket_rate(&self, a: usize, b: usize) -> Result<f64> {
        mu_inner(&self.functions[a], &self.functions[b], &self.mu)
    }

    /// Generator of the iterated compensated-covariation martingale for the
    /// given index tuple: the member itself for one index, otherwise the
    /// product of the jump parts with no mass at the origin.
    pub fn compensated_product(&self, indices: &[usize]) -> TestFunction {
        assert!(!indices.is_empty());
        if indices.len() == 1 {
            return self.functions[indices[0]].clone();
        }
        let mut acc = self.functions[indices[0]].clone();
        for &i in &indices[1..] {
            acc = acc.product_offzero(&self.functions[i], &self.mu);
        }
        acc
    }

    /// Index of a member equal to `f` in L^2(mu), within a relative tolerance.
    pub fn member_index_of(&self, f: &TestFunction) -> Option<usize> {
        let scale = mu_norm2(f, &self.mu).ok()?.max(1.0);
        self.functions.iter().position(|g| {
            mu_distance2(f, g, &self.mu).map(|d| d <= 1e-16 * scale).unwrap_or(false)
        })
    }

    /// Verify that every compensated-covariation generator reachable from
    /// the given index tuple stays inside the family.
    pub fn closed_on(&self, indices: &[usize]) -> Result<()> {
        let m = indices.len();
        for mask in 1u32..(1 << m) {
            if mask.count_ones() < 2 {
                continue;
            }
            let subset: Vec<usize> = (0..m).filter(|k| mask & (1 << k) != 0).map(|k| indices[k]).collect();
            let prod = self.compensated_product(&subset);
            // the null martingale is closed in any family
            if mu_norm2(&prod, &self.mu)? <= 1e-16 {
                continue;
            }
            if self.member_index_of(&prod).is_none() {
                return Err(Error::FamilyNotClosed(subset));
            }
        }
        Ok(())
    }
}
