//! Per-edge mean values and the discrete chain rule.
//!
//! On every interior edge the scheme evaluates each species (solvent
//! included) at a mean of the two adjacent cell values chosen so that
//! h''(mean) (u_L - u_K) = h'(u_L) - h'(u_K) holds exactly. For the
//! Boltzmann density that mean is the logarithmic mean in closed form;
//! for other admissible densities it is found by bisection. Assembling
//! the matrix H from these means makes the vector identity
//! H(u_sigma) (u_L - u_K) = grad_h(u_L) - grad_h(u_K) hold per edge,
//! which is what drives the entropy inequality of the scheme.

use std::fmt;

use nalgebra::DMatrix;

use crate::entropy::{EntropySpec, SpeciesEntropy};
use crate::mesh::Mesh;
use crate::state::{solvent_fraction, StateField};

/// Relative difference below which the logarithmic mean switches to the
/// arithmetic mean; the closed form loses all digits to cancellation there
/// and the switch error is quadratic in the gap.
pub const LOG_MEAN_EQUAL_REL: f64 = 1e-13;

const BISECT_TOL: f64 = 1e-14;
const BISECT_MAX_ITER: usize = 60;

/// Which branch of the edge-mean definition produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanBranch {
    /// Distinct positive endpoints: the chain-rule mean.
    Chain,
    /// Equal positive endpoints: the common value.
    Equal,
    /// An endpoint is zero: the mean is zero.
    Zero,
}

#[derive(Debug, Clone)]
pub enum EdgeError {
    NegativeInput { value: f64 },
    NoRoot { a: f64, b: f64 },
    SingularComponent { index: usize },
    OutsideDomain(String),
}

impl fmt::Display for EdgeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeError::NegativeInput { value } => {
                write!(f, "edge mean requires nonnegative input, got {value}")
            }
            EdgeError::NoRoot { a, b } => write!(
                f,
                "mean equation has no bracketed root on [{a}, {b}]; the entropy spec is broken"
            ),
            EdgeError::SingularComponent { index } => {
                write!(f, "edge mean component {index} is zero where positivity is required")
            }
            EdgeError::OutsideDomain(m) => write!(f, "state outside the admissible set: {m}"),
        }
    }
}

impl std::error::Error for EdgeError {}

/// Logarithmic mean (a - b) / (ln a - ln b), with the conventions that equal
/// positive arguments return themselves and a zero argument forces zero.
pub fn log_mean(a: f64, b: f64) -> Result<f64, EdgeError> {
    if a < 0.0 {
        return Err(EdgeError::NegativeInput { value: a });
    }
    if b < 0.0 {
        return Err(EdgeError::NegativeInput { value: b });
    }
    Ok(log_mean_branch(a, b).0)
}

fn log_mean_branch(a: f64, b: f64) -> (f64, MeanBranch) {
    if a == b {
        return if a > 0.0 { (a, MeanBranch::Equal) } else { (0.0, MeanBranch::Zero) };
    }
    if a == 0.0 || b == 0.0 {
        return (0.0, MeanBranch::Zero);
    }
    if (a - b).abs() < LOG_MEAN_EQUAL_REL * a.max(b) {
        return (0.5 * (a + b), MeanBranch::Chain);
    }
    ((a - b) / (a.ln() - b.ln()), MeanBranch::Chain)
}

/// Mean value solving h''(m)(b - a) = h'(b) - h'(a) for one species, with the
/// same zero/equal conventions as `log_mean`. Boltzmann densities use the
/// closed form; custom densities are solved by bisection, which the strict
/// monotonicity of h'' brackets on [min(a,b), max(a,b)].
pub fn generic_edge_mean(
    entropy: &SpeciesEntropy,
    a: f64,
    b: f64,
) -> Result<(f64, MeanBranch), EdgeError> {
    if a < 0.0 {
        return Err(EdgeError::NegativeInput { value: a });
    }
    if b < 0.0 {
        return Err(EdgeError::NegativeInput { value: b });
    }
    if a == b {
        return Ok(if a > 0.0 { (a, MeanBranch::Equal) } else { (0.0, MeanBranch::Zero) });
    }
    if a == 0.0 || b == 0.0 {
        return Ok((0.0, MeanBranch::Zero));
    }
    if entropy.is_boltzmann() {
        return Ok(log_mean_branch(a, b));
    }
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    // Root of g(m) = h''(m) - (h'(b) - h'(a)) / (b - a); g is strictly
    // monotone in m, so a sign change on [lo, hi] pins the unique mean.
    let target = (entropy.h_prime(b) - entropy.h_prime(a)) / (b - a);
    let g = |m: f64| entropy.h_second(m) - target;
    let (mut glo, mut ghi) = (g(lo), g(hi));
    if glo == 0.0 {
        return Ok((lo, MeanBranch::Chain));
    }
    if ghi == 0.0 {
        return Ok((hi, MeanBranch::Chain));
    }
    if glo.signum() == ghi.signum() {
        return Err(EdgeError::NoRoot { a, b });
    }
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..BISECT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm == 0.0 || hi - lo < BISECT_TOL {
            return Ok((mid, MeanBranch::Chain));
        }
        if gm.signum() == glo.signum() {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
            ghi = gm;
        }
    }
    let _ = ghi;
    Ok((0.5 * (lo + hi), MeanBranch::Chain))
}

/// Edge means for all species (index 0 = solvent) on every interior edge.
#[derive(Clone, Debug)]
pub struct EdgeState {
    n_species: usize,
    means: Vec<f64>,
    branches: Vec<MeanBranch>,
}

impl EdgeState {
    pub fn n_edges(&self) -> usize {
        self.means.len() / (self.n_species + 1)
    }

    /// Mean vector on one edge, length n+1 with the solvent first.
    pub fn means(&self, edge: usize) -> &[f64] {
        let w = self.n_species + 1;
        &self.means[edge * w..(edge + 1) * w]
    }

    pub fn branch(&self, edge: usize, component: usize) -> MeanBranch {
        self.branches[edge * (self.n_species + 1) + component]
    }
}

/// Compute the mean vector on every interior edge. Each of the n+1 components
/// is averaged independently; no volume-filling constraint is imposed on the
/// means themselves.
pub fn compute_edge_state(
    mesh: &Mesh,
    state: &StateField,
    entropy: &EntropySpec,
) -> Result<EdgeState, EdgeError> {
    edge_state_impl(mesh, state, entropy, false)
}

/// Solver-internal variant that extends the zero branch to nonpositive
/// endpoint values instead of erroring. Newton iterates pass through small
/// negative excursions before the scheme's fixed point pulls them back into
/// the interior; on admissible states this agrees bitwise with the strict
/// evaluation.
pub(crate) fn compute_edge_state_permissive(
    mesh: &Mesh,
    state: &StateField,
    entropy: &EntropySpec,
) -> Result<EdgeState, EdgeError> {
    edge_state_impl(mesh, state, entropy, true)
}

fn edge_state_impl(
    mesh: &Mesh,
    state: &StateField,
    entropy: &EntropySpec,
    permissive: bool,
) -> Result<EdgeState, EdgeError> {
    let n = state.n_species();
    let w = n + 1;
    let mut means = vec![0.0; w * mesh.interior_edges.len()];
    let mut branches = vec![MeanBranch::Zero; w * mesh.interior_edges.len()];
    let mean = |sp: &SpeciesEntropy, a: f64, b: f64| -> Result<(f64, MeanBranch), EdgeError> {
        if permissive && (a <= 0.0 || b <= 0.0) {
            return Ok(if a == b && a > 0.0 { (a, MeanBranch::Equal) } else { (0.0, MeanBranch::Zero) });
        }
        generic_edge_mean(sp, a, b)
    };
    for (e, edge) in mesh.interior_edges.iter().enumerate() {
        let uk = state.cell(edge.left);
        let ul = state.cell(edge.right);
        let (m, br) = mean(
            entropy.species(0),
            solvent_fraction(uk),
            solvent_fraction(ul),
        )?;
        means[e * w] = m;
        branches[e * w] = br;
        for i in 0..n {
            let (m, br) = mean(entropy.species(i + 1), uk[i], ul[i])?;
            means[e * w + 1 + i] = m;
            branches[e * w + 1 + i] = br;
        }
    }
    Ok(EdgeState { n_species: n, means, branches })
}

/// The n-by-n matrix H with H_ij = delta_ij h_i''(u_i,sigma) + h_0''(u_0,sigma),
/// evaluated at an edge-mean vector with strictly positive components.
pub fn h_matrix(entropy: &EntropySpec, u_sigma: &[f64]) -> Result<DMatrix<f64>, EdgeError> {
    let n = entropy.n_species();
    let mut out = DMatrix::zeros(n, n);
    h_matrix_into(entropy, u_sigma, out.as_mut_slice())?;
    Ok(out)
}

/// Allocation-free variant of [`h_matrix`]; `out` is column-major n*n
/// (symmetry makes the layout immaterial).
pub fn h_matrix_into(
    entropy: &EntropySpec,
    u_sigma: &[f64],
    out: &mut [f64],
) -> Result<(), EdgeError> {
    let n = entropy.n_species();
    assert_eq!(u_sigma.len(), n + 1);
    assert_eq!(out.len(), n * n);
    for (i, &u) in u_sigma.iter().enumerate() {
        if u == 0.0 {
            return Err(EdgeError::SingularComponent { index: i });
        }
    }
    let h0 = entropy.species(0).h_second(u_sigma[0]);
    for j in 0..n {
        for i in 0..n {
            out[j * n + i] = h0;
        }
    }
    for i in 0..n {
        out[i * n + i] += entropy.species(i + 1).h_second(u_sigma[1 + i]);
    }
    Ok(())
}

/// Max-norm defect of the vector chain rule between two interior states:
/// || H(u_sigma)(u_L - u_K) - (grad_h(u_L) - grad_h(u_K)) ||_inf.
/// Zero in exact arithmetic for any admissible entropy density.
pub fn chain_rule_residual(
    entropy: &EntropySpec,
    u_k: &[f64],
    u_l: &[f64],
) -> Result<f64, EdgeError> {
    let n = entropy.n_species();
    assert_eq!(u_k.len(), n);
    assert_eq!(u_l.len(), n);
    for u in [u_k, u_l] {
        let sum: f64 = u.iter().sum();
        if u.iter().any(|&v| !(v > 0.0 && v < 1.0)) || sum >= 1.0 {
            return Err(EdgeError::OutsideDomain(format!(
                "chain-rule states must lie strictly inside the simplex, got {u:?}"
            )));
        }
    }
    let mut u_sigma = vec![0.0; n + 1];
    let (m0, _) = generic_edge_mean(
        entropy.species(0),
        solvent_fraction(u_k),
        solvent_fraction(u_l),
    )?;
    u_sigma[0] = m0;
    for i in 0..n {
        u_sigma[1 + i] = generic_edge_mean(entropy.species(i + 1), u_k[i], u_l[i])?.0;
    }
    let h = h_matrix(entropy, &u_sigma)?;
    let mut gk = vec![0.0; n];
    let mut gl = vec![0.0; n];
    entropy.gradient(u_k, &mut gk);
    entropy.gradient(u_l, &mut gl);
    let mut worst = 0.0f64;
    for i in 0..n {
        let mut lhs = 0.0;
        for j in 0..n {
            lhs += h[(i, j)] * (u_l[j] - u_k[j]);
        }
        worst = worst.max((lhs - (gl[i] - gk[i])).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::ScalarFn;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    /// Boltzmann density routed through the Custom variant, so tests can
    /// exercise the bisection path against the closed form.
    fn custom_boltzmann() -> SpeciesEntropy {
        SpeciesEntropy::Custom {
            h: Arc::new(|x: f64| if x == 0.0 { 1.0 } else { x * (x.ln() - 1.0) + 1.0 }) as ScalarFn,
            h_prime: Arc::new(|x: f64| x.ln()),
            h_second: Arc::new(|x: f64| 1.0 / x),
        }
    }

    #[test]
    fn log_mean_basics() {
        assert_eq!(log_mean(0.37, 0.37).unwrap(), 0.37);
        assert_eq!(log_mean(0.8, 0.0).unwrap(), 0.0);
        assert_eq!(log_mean(0.0, 0.8).unwrap(), 0.0);
        assert_eq!(log_mean(0.0, 0.0).unwrap(), 0.0);
        // Raw formula on (1, e): spacing of the logs is exactly one.
        let e = std::f64::consts::E;
        assert!((log_mean(1.0, e).unwrap() - 1.71828182845904531).abs() < 1e-15);
        assert!(log_mean(-0.1, 0.5).is_err());
        assert!(log_mean(0.5, -1e-300).is_err());
    }

    #[test]
    fn log_mean_near_equal_switch() {
        let a = 0.6;
        let b = a * (1.0 + 4e-14);
        let m = log_mean(a, b).unwrap();
        assert!((m - 0.5 * (a + b)).abs() <= f64::EPSILON * a);
        assert!(m >= a.min(b) && m <= a.max(b));
    }

    #[test]
    fn frozen_log_mean_anchors() {
        // Values fixed by a 50-digit evaluation of the closed form.
        assert!((log_mean(0.2, 0.4).unwrap() - 2.88539008177792655e-1).abs() < 1e-16);
        assert!((log_mean(0.6, 0.1).unwrap() - 2.79055313275623607e-1).abs() < 1e-16);
        assert!((log_mean(0.2, 0.5).unwrap() - 3.27407000381187419e-1).abs() < 1e-16);
    }

    #[test]
    fn bisection_matches_closed_form() {
        let custom = custom_boltzmann();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20_000 {
            let a: f64 = rng.random::<f64>();
            let b: f64 = rng.random::<f64>();
            let viabisect = generic_edge_mean(&custom, a, b).unwrap().0;
            let closed = log_mean(a, b).unwrap();
            assert!(
                (viabisect - closed).abs() <= 1e-13,
                "bisection {viabisect} vs closed form {closed} at ({a}, {b})"
            );
        }
    }

    #[test]
    fn generic_mean_branches() {
        let custom = custom_boltzmann();
        assert_eq!(generic_edge_mean(&custom, 0.3, 0.3).unwrap(), (0.3, MeanBranch::Equal));
        assert_eq!(generic_edge_mean(&custom, 0.0, 0.9).unwrap(), (0.0, MeanBranch::Zero));
        let (_, br) = generic_edge_mean(&custom, 0.2, 0.9).unwrap();
        assert_eq!(br, MeanBranch::Chain);
    }

    #[test]
    fn edge_state_on_two_cells() {
        // Zero endpoints force zero means for both the first species and the
        // derived solvent; the equal second species keeps its value.
        let mesh = crate::mesh::build_interval_mesh(0.0, 1.0, 2).unwrap();
        let mut s = StateField::zeros(2, 2);
        s.cell_mut(0).copy_from_slice(&[0.8, 0.2]);
        s.cell_mut(1).copy_from_slice(&[0.0, 0.2]);
        let es = compute_edge_state(&mesh, &s, &EntropySpec::boltzmann(2)).unwrap();
        assert_eq!(es.means(0), &[0.0, 0.0, 0.2]);
        assert_eq!(es.branch(0, 0), MeanBranch::Zero);
        assert_eq!(es.branch(0, 1), MeanBranch::Zero);
        assert_eq!(es.branch(0, 2), MeanBranch::Equal);
    }

    #[test]
    fn edge_state_zero_solvent() {
        // Left cell fills the volume exactly, so its solvent endpoint is zero.
        let mesh = crate::mesh::build_interval_mesh(0.0, 1.0, 2).unwrap();
        let mut s = StateField::zeros(2, 2);
        s.cell_mut(0).copy_from_slice(&[0.8, 0.2]);
        s.cell_mut(1).copy_from_slice(&[0.2, 0.2]);
        let es = compute_edge_state(&mesh, &s, &EntropySpec::boltzmann(2)).unwrap();
        let m = es.means(0);
        assert_eq!(m[0], 0.0);
        assert!((m[1] - log_mean(0.8, 0.2).unwrap()).abs() < 1e-16);
        assert_eq!(m[2], 0.2);
    }

    #[test]
    fn uniform_state_reproduces_itself() {
        let mesh = crate::mesh::build_rectangle_mesh(1.0, 1.0, 3, 3).unwrap();
        let s = StateField::constant(9, &[0.25, 0.4]);
        let es = compute_edge_state(&mesh, &s, &EntropySpec::boltzmann(2)).unwrap();
        for e in 0..es.n_edges() {
            let m = es.means(e);
            assert!((m[0] - 0.35).abs() < 1e-15);
            assert_eq!(m[1], 0.25);
            assert_eq!(m[2], 0.4);
        }
    }

    #[test]
    fn h_matrix_hand_value() {
        let spec = EntropySpec::boltzmann(2);
        let h = h_matrix(&spec, &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!((h[(0, 0)] - 6.0).abs() < 1e-12);
        assert!((h[(0, 1)] - 3.0).abs() < 1e-12);
        assert!((h[(1, 0)] - 3.0).abs() < 1e-12);
        assert!((h[(1, 1)] - 6.0).abs() < 1e-12);
        let eig = h.symmetric_eigenvalues();
        let mut ev: Vec<f64> = eig.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - 3.0).abs() < 1e-12 && (ev[1] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn h_matrix_rejects_zero_component() {
        let spec = EntropySpec::boltzmann(2);
        assert!(matches!(
            h_matrix(&spec, &[0.0, 0.3, 0.3]),
            Err(EdgeError::SingularComponent { index: 0 })
        ));
    }

    #[test]
    fn h_matrix_positive_definite_sampled() {
        // Eigenvalue oracle over random interior mean vectors.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &n in &[2usize, 3] {
            let spec = EntropySpec::boltzmann(n);
            for _ in 0..10_000 / n {
                let u: Vec<f64> = (0..=n).map(|_| rng.random_range(1e-3..1.0)).collect();
                let h = h_matrix(&spec, &u).unwrap();
                assert_eq!(h.transpose(), h);
                let eig = h.symmetric_eigenvalues();
                assert!(eig.iter().all(|&l| l > 0.0), "H not SPD at {u:?}");
            }
        }
    }

    #[test]
    fn chain_rule_identical_states() {
        let spec = EntropySpec::boltzmann(2);
        assert_eq!(chain_rule_residual(&spec, &[0.3, 0.3], &[0.3, 0.3]).unwrap(), 0.0);
    }

    #[test]
    fn chain_rule_fixture() {
        let spec = EntropySpec::boltzmann(2);
        let r = chain_rule_residual(&spec, &[0.6, 0.2], &[0.1, 0.5]).unwrap();
        assert!(r <= 1e-12, "residual {r}");
    }

    #[test]
    fn chain_rule_rejects_boundary_states() {
        let spec = EntropySpec::boltzmann(2);
        assert!(chain_rule_residual(&spec, &[0.8, 0.2], &[0.1, 0.5]).is_err());
        assert!(chain_rule_residual(&spec, &[0.0, 0.2], &[0.1, 0.5]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn log_mean_properties(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let m = log_mean(a, b).unwrap();
            let m2 = log_mean(b, a).unwrap();
            proptest::prop_assert!((m - m2).abs() <= 1e-15);
            if a > 0.0 && b > 0.0 {
                proptest::prop_assert!(m >= a.min(b) - 1e-15 && m <= a.max(b) + 1e-15);
            }
            proptest::prop_assert!(m <= 0.5 * (a + b) + 1e-15);
        }

        #[test]
        fn chain_rule_holds_everywhere(
            u1 in 1e-6f64..0.98, r2 in 1e-6f64..0.98,
            v1 in 1e-6f64..0.98, s2 in 1e-6f64..0.98,
        ) {
            let u = [u1, (1.0 - u1) * r2 * 0.999];
            let v = [v1, (1.0 - v1) * s2 * 0.999];
            let spec = EntropySpec::boltzmann(2);
            let r = chain_rule_residual(&spec, &u, &v).unwrap();
            proptest::prop_assert!(r <= 1e-11, "residual {} at {:?} {:?}", r, u, v);
        }
    }
}
