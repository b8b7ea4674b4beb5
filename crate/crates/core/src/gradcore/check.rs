//! Central finite-difference validation of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dense::{DenseMatrix, DenseVector};
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-4;

/// Flat coordinate access to a parameter container.
pub trait Parameters: Clone {
    fn num_coords(&self) -> usize;
    fn coord(&self, i: usize) -> f64;
    fn set_coord(&mut self, i: usize, v: f64);

    fn describe_coord(&self, i: usize) -> String {
        format!("coordinate {i}")
    }
}

/// A scalar function with an analytic gradient of the same shape as its input.
pub trait Objective<P> {
    fn value(&self, params: &P) -> Result<f64>;
    fn gradient(&self, params: &P) -> Result<P>;
}

/// Adapts a pair of closures to [`Objective`].
pub struct FnObjective<V, G> {
    value: V,
    gradient: G,
}

impl<V, G> FnObjective<V, G> {
    pub fn new(value: V, gradient: G) -> Self {
        Self { value, gradient }
    }
}

impl<P, V, G> Objective<P> for FnObjective<V, G>
where
    V: Fn(&P) -> Result<f64>,
    G: Fn(&P) -> Result<P>,
{
    fn value(&self, params: &P) -> Result<f64> {
        (self.value)(params)
    }

    fn gradient(&self, params: &P) -> Result<P> {
        (self.gradient)(params)
    }
}

/// Which coordinates to probe.
#[derive(Clone, Copy, Debug)]
pub enum Coords {
    All,
    /// A seeded uniform sample without replacement.
    Sample { count: usize, seed: u64 },
}

/// Max over probed coordinates of
/// `|analytic - central_difference| / max(1, |analytic|)`.
pub fn check_gradient<P, F>(f: &F, params: &P, h: f64, coords: Coords) -> Result<f64>
where
    P: Parameters,
    F: Objective<P>,
{
    let analytic = f.gradient(params)?;
    if analytic.num_coords() != params.num_coords() {
        return Err(Error::shape(
            "check_gradient",
            format!("{} params", params.num_coords()),
            format!("{} gradient coords", analytic.num_coords()),
        ));
    }
    let n = params.num_coords();
    let probe: Vec<usize> = match coords {
        Coords::All => (0..n).collect(),
        Coords::Sample { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, n, count.min(n)).into_vec();
            idx.sort_unstable();
            idx
        }
    };

    let mut work = params.clone();
    let mut worst = 0.0f64;
    for i in probe {
        let x0 = params.coord(i);
        work.set_coord(i, x0 + h);
        let up = f.value(&work)?;
        work.set_coord(i, x0 - h);
        let down = f.value(&work)?;
        work.set_coord(i, x0);
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!(
                "objective at {} ± {h}",
                params.describe_coord(i)
            )));
        }
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.coord(i);
        let rel = (a - numeric).abs() / a.abs().max(1.0);
        worst = worst.max(rel);
    }
    Ok(worst)
}

impl Parameters for Vec<f64> {
    fn num_coords(&self) -> usize {
        self.len()
    }

    fn coord(&self, i: usize) -> f64 {
        self[i]
    }

    fn set_coord(&mut self, i: usize, v: f64) {
        self[i] = v;
    }
}

impl Parameters for DenseVector {
    fn num_coords(&self) -> usize {
        self.len()
    }

    fn coord(&self, i: usize) -> f64 {
        self.as_slice()[i]
    }

    fn set_coord(&mut self, i: usize, v: f64) {
        self.as_mut_slice()[i] = v;
    }
}

impl Parameters for DenseMatrix {
    fn num_coords(&self) -> usize {
        self.data().len()
    }

    fn coord(&self, i: usize) -> f64 {
        self.data()[i]
    }

    fn set_coord(&mut self, i: usize, v: f64) {
        self.data_mut()[i] = v;
    }

    fn describe_coord(&self, i: usize) -> String {
        format!("entry ({}, {})", i / self.cols(), i % self.cols())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::dense::{log_sum_exp, softmax};
    use rand::Rng;

    #[test]
    fn half_squared_norm() {
        let f = FnObjective::new(
            |v: &DenseVector| Ok(0.5 * v.as_slice().iter().map(|x| x * x).sum::<f64>()),
            |v: &DenseVector| Ok(v.clone()),
        );
        let p: DenseVector = vec![0.3, -1.2, 2.5, 4.0].into();
        assert!(check_gradient(&f, &p, DEFAULT_STEP, Coords::All).unwrap() <= 1e-8);
    }

    #[test]
    fn softmax_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let target = 2;
        let p: DenseVector = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>().into();
        let f = FnObjective::new(
            |v: &DenseVector| Ok(log_sum_exp(v.as_slice()) - v[target]),
            |v: &DenseVector| {
                let mut g = softmax(v)?;
                g.as_mut_slice()[target] -= 1.0;
                Ok(g)
            },
        );
        assert!(check_gradient(&f, &p, DEFAULT_STEP, Coords::All).unwrap() <= 1e-6);
    }

    #[test]
    fn wrong_gradient_is_reported() {
        let f = FnObjective::new(
            |v: &Vec<f64>| Ok(v[0] * v[0]),
            |v: &Vec<f64>| Ok(vec![v[0]]),
        );
        let err = check_gradient(&f, &vec![3.0], DEFAULT_STEP, Coords::All).unwrap();
        // |3 - 6| / max(1, 3)
        assert!((err - 1.0).abs() < 1e-6);
    }

    #[test]
    fn non_finite_probe_names_coordinate() {
        let f = FnObjective::new(
            |v: &DenseMatrix| Ok(v.data().iter().map(|x| x.ln()).sum()),
            |v: &DenseMatrix| Ok(v.clone()),
        );
        let m = DenseMatrix::from_rows(&[&[1.0, 1e-5]]);
        let err = check_gradient(&f, &m, DEFAULT_STEP, Coords::All).unwrap_err();
        assert!(err.to_string().contains("entry (0, 1)"), "{err}");
    }

    #[test]
    fn sampled_coords_subset() {
        let f = FnObjective::new(
            |v: &Vec<f64>| Ok(v.iter().map(|x| x.sin()).sum()),
            |v: &Vec<f64>| Ok(v.iter().map(|x| x.cos()).collect()),
        );
        let p: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let err = check_gradient(&f, &p, DEFAULT_STEP, Coords::Sample { count: 10, seed: 1 }).unwrap();
        assert!(err < 1e-8);
    }
}
