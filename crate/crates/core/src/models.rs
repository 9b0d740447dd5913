//! Cross-diffusion models: entropy density, modified diffusion matrix, and
//! optional source terms.
//!
//! A model's diffusion matrix is evaluated at the full edge-mean vector
//! (solvent first) rather than at a constrained species vector, because on
//! edges the component means need not sum to one. Consistency with the
//! physical matrix is required only where the constraint does hold, and
//! `a_sigma_consistency_check` samples exactly that.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::edge::h_matrix;
use crate::entropy::EntropySpec;

/// Fills a row-major n-by-n coefficient block for a given mean vector.
pub type MatrixFn = dyn Fn(&[f64], &mut [f64]) -> Result<(), ModelError> + Send + Sync;
/// Fills an n-vector of rates for a given species vector.
pub type SourceFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

#[derive(Debug, Clone)]
pub enum ModelError {
    InvalidArgument(String),
    DimensionMismatch { expected: usize, got: usize },
    /// The denominator of the mean-evaluated matrix vanished.
    SingularDenominator { model: String },
    MissingReference,
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::InvalidArgument(m) => write!(f, "invalid model argument: {m}"),
            ModelError::DimensionMismatch { expected, got } => {
                write!(f, "coefficient table must be {expected}x{expected}, got {got} rows")
            }
            ModelError::SingularDenominator { model } => {
                write!(f, "{model}: diffusion-matrix denominator vanished at the edge mean")
            }
            ModelError::MissingReference => {
                write!(f, "model carries no physical diffusion-matrix reference")
            }
        }
    }
}

impl std::error::Error for ModelError {}

/// A concrete cross-diffusion model.
#[derive(Clone)]
pub struct Model {
    name: String,
    n_species: usize,
    entropy: EntropySpec,
    exponent_s: f64,
    a_sigma: Arc<MatrixFn>,
    physical_a: Option<Arc<MatrixFn>>,
    source: Option<Arc<SourceFn>>,
    params: Vec<(String, f64)>,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("name", &self.name)
            .field("n_species", &self.n_species)
            .field("exponent_s", &self.exponent_s)
            .field("params", &self.params)
            .finish()
    }
}

impl Model {
    /// Assemble a model from parts. The shipped constructors cover the
    /// standard cases; this is the extension point for custom systems.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        n_species: usize,
        entropy: EntropySpec,
        exponent_s: f64,
        a_sigma: Arc<MatrixFn>,
        physical_a: Option<Arc<MatrixFn>>,
        source: Option<Arc<SourceFn>>,
        params: Vec<(String, f64)>,
    ) -> Self {
        assert_eq!(entropy.n_species(), n_species);
        assert!(exponent_s > 0.0 && exponent_s <= 1.0);
        Model {
            name: name.into(),
            n_species,
            entropy,
            exponent_s,
            a_sigma,
            physical_a,
            source,
            params,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_species(&self) -> usize {
        self.n_species
    }

    pub fn entropy(&self) -> &EntropySpec {
        &self.entropy
    }

    /// Ellipticity exponent used by the dissipation diagnostic.
    pub fn exponent_s(&self) -> f64 {
        self.exponent_s
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    /// Evaluate the modified diffusion matrix at a mean vector (solvent
    /// first, length n+1) into a row-major n*n buffer.
    pub fn a_sigma(&self, u_sigma: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        debug_assert_eq!(u_sigma.len(), self.n_species + 1);
        debug_assert_eq!(out.len(), self.n_species * self.n_species);
        (self.a_sigma)(u_sigma, out)
    }

    /// Convenience wrapper returning a fresh matrix.
    pub fn a_sigma_matrix(&self, u_sigma: &[f64]) -> Result<DMatrix<f64>, ModelError> {
        let n = self.n_species;
        let mut buf = vec![0.0; n * n];
        self.a_sigma(u_sigma, &mut buf)?;
        Ok(DMatrix::from_row_slice(n, n, &buf))
    }

    /// Evaluate the physical diffusion matrix at a species vector in the
    /// simplex (length n).
    pub fn physical_a(&self, u: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        match &self.physical_a {
            Some(f) => f(u, out),
            None => Err(ModelError::MissingReference),
        }
    }

    pub fn has_source(&self) -> bool {
        self.source.is_some()
    }

    /// Source rates at a species vector; zero when the model has none.
    pub fn source(&self, u: &[f64], out: &mut [f64]) {
        match &self.source {
            Some(f) => f(u, out),
            None => out.iter_mut().for_each(|v| *v = 0.0),
        }
    }

    /// Attach a source term.
    pub fn with_source(mut self, source: Arc<SourceFn>) -> Self {
        self.source = Some(source);
        self
    }
}

/// Three-species Maxwell-Stefan mixture with friction coefficients
/// `d0`, `d1`, `d2` (solvent first).
pub fn make_maxwell_stefan(d0: f64, d1: f64, d2: f64) -> Result<Model, ModelError> {
    if !(d0 > 0.0 && d1 > 0.0 && d2 > 0.0) {
        return Err(ModelError::InvalidArgument(format!(
            "diffusion rates must be positive, got ({d0}, {d1}, {d2})"
        )));
    }
    let a_sigma: Arc<MatrixFn> = Arc::new(move |u: &[f64], out: &mut [f64]| {
        let (u0, u1, u2) = (u[0], u[1], u[2]);
        let alpha = d1 * d2 * u0 + d0 * d1 * u1 + d0 * d2 * u2;
        if alpha == 0.0 {
            return Err(ModelError::SingularDenominator { model: "maxwell_stefan".into() });
        }
        out[0] = (d2 * (u2 + u0) + d0 * u1) / alpha;
        out[1] = (d0 - d1) * u1 / alpha;
        out[2] = (d0 - d2) * u2 / alpha;
        out[3] = (d1 * (u1 + u0) + d0 * u2) / alpha;
        Ok(())
    });
    let physical: Arc<MatrixFn> = Arc::new(move |u: &[f64], out: &mut [f64]| {
        let (u1, u2) = (u[0], u[1]);
        let alpha = d1 * d2 * (1.0 - u1 - u2) + d0 * d1 * u1 + d0 * d2 * u2;
        out[0] = (d2 + (d0 - d2) * u1) / alpha;
        out[1] = (d0 - d1) * u1 / alpha;
        out[2] = (d0 - d2) * u2 / alpha;
        out[3] = (d1 + (d0 - d1) * u2) / alpha;
        Ok(())
    });
    Ok(Model::new(
        "maxwell_stefan",
        2,
        EntropySpec::boltzmann(2),
        0.5,
        a_sigma,
        Some(physical),
        None,
        vec![("d0".into(), d0), ("d1".into(), d1), ("d2".into(), d2)],
    ))
}

/// Multi-species deposition model with pairwise coefficients `a[i][j]`,
/// indexed 0..=n with the solvent first. Symmetric tables satisfy a uniform
/// ellipticity bound; asymmetric tables are accepted for reaction runs.
pub fn make_thin_film(table: Vec<Vec<f64>>) -> Result<Model, ModelError> {
    let dim = table.len();
    if dim < 2 {
        return Err(ModelError::DimensionMismatch { expected: 2, got: dim });
    }
    for row in &table {
        if row.len() != dim {
            return Err(ModelError::DimensionMismatch { expected: dim, got: row.len() });
        }
        if row.iter().any(|&v| v < 0.0) {
            return Err(ModelError::InvalidArgument(
                "pairwise coefficients must be nonnegative".into(),
            ));
        }
    }
    let n = dim - 1;
    let mut params = Vec::new();
    for (i, row) in table.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            params.push((format!("a{i}{j}"), v));
        }
    }
    let tbl = Arc::new(table);
    let t = tbl.clone();
    // Entries use only a[i][k] for species rows i >= 1; the matrix is affine
    // in the means, so no denominator can vanish.
    let fill = move |vals: &dyn Fn(usize) -> f64, out: &mut [f64]| {
        for i in 1..=n {
            for j in 1..=n {
                out[(i - 1) * n + (j - 1)] = if i == j {
                    let mut diag = t[i][0];
                    for k in 1..=n {
                        if k != i {
                            diag += (t[i][k] - t[i][0]) * vals(k);
                        }
                    }
                    diag
                } else {
                    -(t[i][j] - t[i][0]) * vals(i)
                };
            }
        }
    };
    let fill2 = fill.clone();
    let a_sigma: Arc<MatrixFn> = Arc::new(move |u: &[f64], out: &mut [f64]| {
        fill(&|k| u[k], out);
        Ok(())
    });
    let physical: Arc<MatrixFn> = Arc::new(move |u: &[f64], out: &mut [f64]| {
        fill2(&|k| u[k - 1], out);
        Ok(())
    });
    Ok(Model::new(
        "thin_film",
        n,
        EntropySpec::boltzmann(n),
        0.5,
        a_sigma,
        Some(physical),
        None,
        params,
    ))
}

/// Two-species tumor-growth model (tumor cells and extracellular matrix in an
/// interstitial fluid). `delta` adds artificial diffusion on the diagonal;
/// with `delta = 0` the ellipticity exponent is 1 and the matrix denominator
/// may genuinely vanish at degenerate means, which is surfaced as an error.
pub fn make_tumor(beta: f64, theta: f64, delta: f64) -> Result<Model, ModelError> {
    if !(beta > 0.0) {
        return Err(ModelError::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    if !(theta < 4.0 / beta.sqrt()) {
        return Err(ModelError::InvalidArgument(format!(
            "entropy structure requires theta < 4/sqrt(beta), got theta={theta}, beta={beta}"
        )));
    }
    if delta < 0.0 {
        return Err(ModelError::InvalidArgument(format!(
            "artificial diffusion must be nonnegative, got {delta}"
        )));
    }
    let a_sigma: Arc<MatrixFn> = Arc::new(move |u: &[f64], out: &mut [f64]| {
        let (u0, u1, u2) = (u[0], u[1], u[2]);
        let a = u0 + u1 + u2;
        if a == 0.0 {
            return Err(ModelError::SingularDenominator { model: "tumor".into() });
        }
        out[0] = (2.0 * u1 * (u0 + u2) - beta * theta * u1 * u2 * u2) / a + delta;
        out[1] = -2.0 * beta * u1 * u2 * (1.0 + theta * u1) / a;
        out[2] = (-2.0 * u1 * u2 + beta * theta * (u0 + u1) * u2 * u2) / a;
        out[3] = 2.0 * beta * u2 * (u0 + u1) * (1.0 + theta * u1) / a + delta;
        Ok(())
    });
    let physical: Arc<MatrixFn> = Arc::new(move |u: &[f64], out: &mut [f64]| {
        let (u1, u2) = (u[0], u[1]);
        out[0] = 2.0 * u1 * (1.0 - u1) - beta * theta * u1 * u2 * u2 + delta;
        out[1] = -2.0 * beta * u1 * u2 * (1.0 + theta * u1);
        out[2] = -2.0 * u1 * u2 + beta * theta * (1.0 - u2) * u2 * u2;
        out[3] = 2.0 * beta * u2 * (1.0 - u2) * (1.0 + theta * u1) + delta;
        Ok(())
    });
    let s = if delta == 0.0 { 1.0 } else { 0.5 };
    Ok(Model::new(
        "tumor",
        2,
        EntropySpec::boltzmann(2),
        s,
        a_sigma,
        Some(physical),
        None,
        vec![("beta".into(), beta), ("theta".into(), theta), ("delta".into(), delta)],
    ))
}

/// Two-species model arising as a diffusion limit of momentum exchange; its
/// mean-evaluated matrix makes H A exactly diagonal.
pub fn make_two_species_euler_limit() -> Model {
    let a_sigma: Arc<MatrixFn> = Arc::new(|u: &[f64], out: &mut [f64]| {
        let (u0, u1, u2) = (u[0], u[1], u[2]);
        let a = u0 + u1 + u2;
        if a == 0.0 {
            return Err(ModelError::SingularDenominator { model: "two_species".into() });
        }
        out[0] = (u0 + u2) / a;
        out[1] = -u1 / a;
        out[2] = -u2 / a;
        out[3] = (u0 + u1) / a;
        Ok(())
    });
    let physical: Arc<MatrixFn> = Arc::new(|u: &[f64], out: &mut [f64]| {
        let (u1, u2) = (u[0], u[1]);
        out[0] = 1.0 - u1;
        out[1] = -u1;
        out[2] = -u2;
        out[3] = 1.0 - u2;
        Ok(())
    });
    Model::new(
        "two_species",
        2,
        EntropySpec::boltzmann(2),
        0.5,
        a_sigma,
        Some(physical),
        None,
        vec![],
    )
}

/// Reversible recombination source for a two-species system: production rate
/// r = (u2+)^2 - k u1+ u0+ for species 1 and -2r for species 2, so the
/// combination 2 u1 + u2 is conserved.
pub fn recombination_source(k: f64) -> Arc<SourceFn> {
    Arc::new(move |u: &[f64], out: &mut [f64]| {
        let u1 = u[0].max(0.0);
        let u2 = u[1].max(0.0);
        let u0 = (1.0 - u[0] - u[1]).max(0.0);
        let r = u2 * u2 - k * u1 * u0;
        out[0] = r;
        out[1] = -2.0 * r;
    })
}

/// Draw a point uniformly from the open simplex {u > 0, sum u < 1}.
pub fn sample_simplex_interior(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let s: f64 = u.iter().sum();
        if s < 1.0 && u.iter().all(|&v| v > 0.0) {
            return u;
        }
    }
}

/// Draw an edge-mean vector the way the scheme produces them: logarithmic
/// means (solvent first) of two random interior simplex states. Component
/// sums of such vectors never exceed one.
pub fn sample_edge_mean_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let a = sample_simplex_interior(rng, n);
    let b = sample_simplex_interior(rng, n);
    let mut out = Vec::with_capacity(n + 1);
    let a0 = 1.0 - a.iter().sum::<f64>();
    let b0 = 1.0 - b.iter().sum::<f64>();
    out.push(crate::edge::log_mean(a0, b0).expect("interior samples"));
    for i in 0..n {
        out.push(crate::edge::log_mean(a[i], b[i]).expect("interior samples"));
    }
    out
}

fn sample_unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        // Box-Muller pairs, normalized.
        let mut z = Vec::with_capacity(n);
        while z.len() < n {
            let u1: f64 = rng.random::<f64>().max(1e-300);
            let u2: f64 = rng.random::<f64>();
            let r = (-2.0 * u1.ln()).sqrt();
            z.push(r * (2.0 * std::f64::consts::PI * u2).cos());
            if z.len() < n {
                z.push(r * (2.0 * std::f64::consts::PI * u2).sin());
            }
        }
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            z.iter_mut().for_each(|v| *v /= norm);
            return z;
        }
    }
}

/// Max entrywise deviation between the mean-evaluated matrix restricted to
/// the constraint set and the physical matrix, over seeded simplex samples.
pub fn a_sigma_consistency_check(
    model: &Model,
    samples: usize,
    seed: u64,
) -> Result<f64, ModelError> {
    if model.physical_a.is_none() {
        return Err(ModelError::MissingReference);
    }
    let n = model.n_species();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf_sigma = vec![0.0; n * n];
    let mut buf_phys = vec![0.0; n * n];
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let u = sample_simplex_interior(&mut rng, n);
        let mut u_sigma = Vec::with_capacity(n + 1);
        u_sigma.push(1.0 - u.iter().sum::<f64>());
        u_sigma.extend_from_slice(&u);
        model.a_sigma(&u_sigma, &mut buf_sigma)?;
        model.physical_a(&u, &mut buf_phys)?;
        for (a, b) in buf_sigma.iter().zip(buf_phys.iter()) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// A sample where the ellipticity form went nonpositive.
#[derive(Debug, Clone)]
pub struct QuadFormViolation {
    pub u_sigma: Vec<f64>,
    pub z: Vec<f64>,
    pub value: f64,
}

impl fmt::Display for QuadFormViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "quadratic form nonpositive ({}) at u_sigma={:?}, z={:?}",
            self.value, self.u_sigma, self.z
        )
    }
}

#[derive(Debug)]
pub enum SampleError {
    Violation(Box<QuadFormViolation>),
    Model(ModelError),
    Edge(crate::edge::EdgeError),
}

impl fmt::Display for SampleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleError::Violation(v) => v.fmt(f),
            SampleError::Model(e) => e.fmt(f),
            SampleError::Edge(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for SampleError {}

/// Empirical lower bound for the ellipticity constant: the minimum over
/// seeded samples of z' H A z / sum_i u_i^(2(s-1)) z_i^2 with u drawn from
/// (1e-3, 1-1e-3)^(n+1) and z uniform on the unit sphere.
pub fn quadratic_form_sample(model: &Model, samples: usize, seed: u64) -> Result<f64, SampleError> {
    let n = model.n_species();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let eps = 1e-3;
    for _ in 0..samples {
        let u_sigma: Vec<f64> = (0..=n).map(|_| rng.random_range(eps..1.0 - eps)).collect();
        let z = sample_unit_vector(&mut rng, n);
        let a = model.a_sigma_matrix(&u_sigma).map_err(SampleError::Model)?;
        let h = h_matrix(model.entropy(), &u_sigma).map_err(SampleError::Edge)?;
        let ha = h * a;
        let mut form = 0.0;
        for i in 0..n {
            for j in 0..n {
                form += z[i] * ha[(i, j)] * z[j];
            }
        }
        if form <= 0.0 {
            return Err(SampleError::Violation(Box::new(QuadFormViolation {
                u_sigma,
                z,
                value: form,
            })));
        }
        let weight: f64 = (0..n)
            .map(|i| u_sigma[1 + i].powf(2.0 * (model.exponent_s() - 1.0)) * z[i] * z[i])
            .sum();
        worst = worst.min(form / weight);
    }
    Ok(worst)
}
