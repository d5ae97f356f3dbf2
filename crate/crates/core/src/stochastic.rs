//! Initial-state distributions, particle ensembles and measurement noise.
//!
//! Normal variates come from the Marsaglia polar method driven by a ChaCha20
//! stream (`seed`, `stream`). Uniforms are the top 53 bits of each 64-bit word
//! scaled to `[0, 1)`, so a given `(seed, stream)` pair yields the same
//! sequence on every platform.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::models::State;

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-12;

/// Deterministic standard-normal generator.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }

    pub fn normal_vector(&mut self, dim: usize) -> DVector<f64> {
        DVector::from_fn(dim, |_, _| self.next_normal())
    }
}

/// SplitMix64 finalizer, used to derive independent sub-seeds from a master
/// seed and a purpose tag.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianSpec {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let spec = Self { mean, covariance };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mean.len();
        if self.covariance.nrows() != n || self.covariance.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "covariance",
                expected: n,
                actual: self.covariance.nrows(),
            });
        }
        if self.mean.iter().chain(self.covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NotPsd("non-finite entries".into()));
        }
        let asym = (&self.covariance - self.covariance.transpose()).abs().max();
        if asym > SYMMETRY_TOL {
            return Err(Error::NotPsd(format!("asymmetry {asym:e}")));
        }
        let min_eig = SymmetricEigen::new(self.covariance.clone())
            .eigenvalues
            .min();
        if n > 0 && min_eig < -PSD_TOL {
            return Err(Error::NotPsd(format!("minimum eigenvalue {min_eig:e}")));
        }
        Ok(())
    }

    /// A factor `L` with `L Lᵀ = Σ`. Cholesky when Σ is positive definite,
    /// otherwise `V diag(√λ⁺)` from the symmetric eigendecomposition.
    pub fn factor(&self) -> DMatrix<f64> {
        if let Some(chol) = self.covariance.clone().cholesky() {
            return chol.l();
        }
        let eig = SymmetricEigen::new(self.covariance.clone());
        let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
    }

    pub fn sample_with(&self, factor: &DMatrix<f64>, stream: &mut NormalStream) -> State {
        &self.mean + factor * stream.normal_vector(self.dim())
    }

    /// `count` i.i.d. draws from a dedicated `(seed, stream)` generator.
    pub fn draw(&self, count: usize, seed: u64) -> Vec<State> {
        let factor = self.factor();
        let mut stream = NormalStream::new(seed, 0);
        (0..count).map(|_| self.sample_with(&factor, &mut stream)).collect()
    }
}

/// A finite set of sampled initial states standing in for the initial
/// distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub particles: Vec<State>,
    pub seed: u64,
    pub source: Option<GaussianSpec>,
}

impl ParticleEnsemble {
    pub fn from_states(particles: Vec<State>) -> Result<Self> {
        let Some(first) = particles.first() else {
            return Err(Error::invalid("particles", "ensemble needs at least one particle"));
        };
        let n = first.len();
        if let Some(bad) = particles.iter().find(|p| p.len() != n) {
            return Err(Error::DimensionMismatch {
                context: "particle",
                expected: n,
                actual: bad.len(),
            });
        }
        Ok(Self {
            particles,
            seed: 0,
            source: None,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.particles[0].len()
    }

    /// One particle per CSV row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.state_dim();
        let header: Vec<String> = (0..n).map(|j| format!("x{j}")).collect();
        writeln!(out, "particle,{}", header.join(","))?;
        for (i, p) in self.particles.iter().enumerate() {
            let row: Vec<String> = p.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{i},{}", row.join(","))?;
        }
        Ok(())
    }
}

pub fn sample_ensemble(spec: &GaussianSpec, m: usize, seed: u64) -> Result<ParticleEnsemble> {
    if m == 0 {
        return Err(Error::invalid("m", "ensemble needs at least one particle"));
    }
    spec.validate()?;
    Ok(ParticleEnsemble {
        particles: spec.draw(m, seed),
        seed,
        source: Some(spec.clone()),
    })
}

/// Re-centers the belief on one noisy measurement of `true_state`:
/// the returned mean is a draw from `N(true_state + μ, Σ)` and the covariance
/// is `Σ`.
pub fn measurement_update(true_state: &State, noise: &GaussianSpec, seed: u64) -> Result<GaussianSpec> {
    if true_state.len() != noise.dim() {
        return Err(Error::DimensionMismatch {
            context: "measurement noise",
            expected: true_state.len(),
            actual: noise.dim(),
        });
    }
    noise.validate()?;
    let centered = GaussianSpec {
        mean: true_state + &noise.mean,
        covariance: noise.covariance.clone(),
    };
    let measured = centered.draw(1, seed).pop().expect("one draw");
    Ok(GaussianSpec {
        mean: measured,
        covariance: noise.covariance.clone(),
    })
}

/// Block-diagonal covariance `diag(s_1 I, s_2 I, ...)` with `block`-sized blocks.
pub fn block_diag_scaled(scales: &[f64], block: usize) -> DMatrix<f64> {
    let n = scales.len() * block;
    let mut m = DMatrix::zeros(n, n);
    for (b, s) in scales.iter().enumerate() {
        for j in 0..block {
            m[(b * block + j, b * block + j)] = *s;
        }
    }
    m
}
