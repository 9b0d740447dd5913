//! Entropy densities of the form h(u) = sum_i h_i(u_i) over all species
//! including the solvent (index 0).
//!
//! Each per-species density must be convex with a strictly decreasing second
//! derivative on (0,1); that monotonicity is what makes the scalar edge-mean
//! equation uniquely solvable.

use std::fmt;
use std::sync::Arc;

/// Boxed scalar function used by custom entropy densities.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One species' entropy density with its first two derivatives.
#[derive(Clone)]
pub enum SpeciesEntropy {
    /// h(x) = x (ln x - 1) + 1, extended by continuity with h(0) = 1.
    Boltzmann,
    /// User-supplied (h, h', h''); validated at `EntropySpec` construction.
    Custom {
        h: ScalarFn,
        h_prime: ScalarFn,
        h_second: ScalarFn,
    },
}

impl SpeciesEntropy {
    pub fn h(&self, x: f64) -> f64 {
        match self {
            SpeciesEntropy::Boltzmann => {
                if x == 0.0 {
                    1.0
                } else {
                    x * (x.ln() - 1.0) + 1.0
                }
            }
            SpeciesEntropy::Custom { h, .. } => h(x),
        }
    }

    pub fn h_prime(&self, x: f64) -> f64 {
        match self {
            SpeciesEntropy::Boltzmann => x.ln(),
            SpeciesEntropy::Custom { h_prime, .. } => h_prime(x),
        }
    }

    pub fn h_second(&self, x: f64) -> f64 {
        match self {
            SpeciesEntropy::Boltzmann => 1.0 / x,
            SpeciesEntropy::Custom { h_second, .. } => h_second(x),
        }
    }

    pub fn is_boltzmann(&self) -> bool {
        matches!(self, SpeciesEntropy::Boltzmann)
    }
}

impl fmt::Debug for SpeciesEntropy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpeciesEntropy::Boltzmann => write!(f, "Boltzmann"),
            SpeciesEntropy::Custom { .. } => write!(f, "Custom"),
        }
    }
}

/// Additive entropy density for n species plus the solvent at index 0.
#[derive(Clone, Debug)]
pub struct EntropySpec {
    species: Vec<SpeciesEntropy>,
}

/// Validation failure for a custom entropy density.
#[derive(Debug, Clone)]
pub struct EntropyError {
    pub species: usize,
    pub reason: String,
}

impl fmt::Display for EntropyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "invalid entropy density for species {}: {}",
            self.species, self.reason
        )
    }
}

impl std::error::Error for EntropyError {}

const VALIDATION_SAMPLES: usize = 48;

impl EntropySpec {
    /// Boltzmann entropy for `n_species` species plus the solvent.
    pub fn boltzmann(n_species: usize) -> Self {
        EntropySpec {
            species: vec![SpeciesEntropy::Boltzmann; n_species + 1],
        }
    }

    /// Build a spec from per-species densities (`species[0]` is the solvent).
    ///
    /// Custom densities are sampled on an interior grid; h'' must be positive
    /// and strictly decreasing, and h nonnegative, or construction fails.
    pub fn new(species: Vec<SpeciesEntropy>) -> Result<Self, EntropyError> {
        if species.len() < 2 {
            return Err(EntropyError {
                species: 0,
                reason: "need at least one species besides the solvent".into(),
            });
        }
        for (idx, sp) in species.iter().enumerate() {
            if sp.is_boltzmann() {
                continue;
            }
            let mut prev = f64::INFINITY;
            for k in 0..VALIDATION_SAMPLES {
                let x = (k as f64 + 0.5) / VALIDATION_SAMPLES as f64;
                let h2 = sp.h_second(x);
                if !(h2 > 0.0) {
                    return Err(EntropyError {
                        species: idx,
                        reason: format!("h'' must be positive, got {h2} at x={x}"),
                    });
                }
                if !(h2 < prev) {
                    return Err(EntropyError {
                        species: idx,
                        reason: format!("h'' must be strictly decreasing, violated at x={x}"),
                    });
                }
                prev = h2;
                let hval = sp.h(x);
                if hval < -1e-12 {
                    return Err(EntropyError {
                        species: idx,
                        reason: format!("h must be nonnegative, got {hval} at x={x}"),
                    });
                }
            }
        }
        Ok(EntropySpec { species })
    }

    /// Number of species, solvent excluded.
    pub fn n_species(&self) -> usize {
        self.species.len() - 1
    }

    /// Per-species density; index 0 is the solvent.
    pub fn species(&self, i: usize) -> &SpeciesEntropy {
        &self.species[i]
    }

    pub fn all_boltzmann(&self) -> bool {
        self.species.iter().all(|s| s.is_boltzmann())
    }

    /// Gradient of the total density with respect to the free species:
    /// component i is h_i'(u_i) - h_0'(u_0) with u_0 = 1 - sum(u).
    pub fn gradient(&self, u: &[f64], out: &mut [f64]) {
        let u0 = 1.0 - u.iter().sum::<f64>();
        let g0 = self.species[0].h_prime(u0);
        for (i, (ui, o)) in u.iter().zip(out.iter_mut()).enumerate() {
            *o = self.species[i + 1].h_prime(*ui) - g0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boltzmann_values() {
        let e = SpeciesEntropy::Boltzmann;
        assert_eq!(e.h(0.0), 1.0);
        assert_eq!(e.h(1.0), 0.0);
        assert!((e.h(0.5) - (0.5 * (0.5f64.ln() - 1.0) + 1.0)).abs() < 1e-16);
        assert_eq!(e.h_prime(1.0), 0.0);
        assert_eq!(e.h_second(0.25), 4.0);
    }

    #[test]
    fn quadratic_density_rejected() {
        // h = x^2/2 has constant h'', which breaks uniqueness of the edge mean.
        let quad = SpeciesEntropy::Custom {
            h: Arc::new(|x| 0.5 * x * x),
            h_prime: Arc::new(|x| x),
            h_second: Arc::new(|_| 1.0),
        };
        let err = EntropySpec::new(vec![quad.clone(), quad]).unwrap_err();
        assert!(err.reason.contains("strictly decreasing"));
    }

    #[test]
    fn custom_boltzmann_accepted() {
        let b = SpeciesEntropy::Custom {
            h: Arc::new(|x: f64| if x == 0.0 { 1.0 } else { x * (x.ln() - 1.0) + 1.0 }),
            h_prime: Arc::new(|x: f64| x.ln()),
            h_second: Arc::new(|x: f64| 1.0 / x),
        };
        let spec = EntropySpec::new(vec![b.clone(), b.clone(), b]).unwrap();
        assert_eq!(spec.n_species(), 2);
    }

    #[test]
    fn gradient_matches_hand_value() {
        let spec = EntropySpec::boltzmann(2);
        let u = [0.6, 0.2];
        let mut g = [0.0; 2];
        spec.gradient(&u, &mut g);
        let u0: f64 = 0.2;
        assert!((g[0] - (0.6f64.ln() - u0.ln())).abs() < 1e-15);
        assert!((g[1] - (0.2f64.ln() - u0.ln())).abs() < 1e-15);
    }

    #[test]
    fn h_second_strictly_decreasing_on_samples() {
        let spec = EntropySpec::boltzmann(3);
        for s in 0..4 {
            let sp = spec.species(s);
            let mut prev = f64::INFINITY;
            for k in 1..100 {
                let x = k as f64 / 100.0;
                let h2 = sp.h_second(x);
                assert!(h2 > 0.0 && h2 < prev);
                prev = h2;
            }
        }
    }
}
