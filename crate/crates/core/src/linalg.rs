//! Direct sparse linear algebra for the Newton systems: a banded LU with
//! partial pivoting plus the graph utilities (bandwidth-reducing ordering,
//! distance-2 coloring) that keep mesh Jacobians narrow and cheap to probe.

use std::fmt;

/// Column-major banded storage, LAPACK layout: entry (i, j) lives at
/// `data[j * ldab + kl + ku + i - j]`. The extra `kl` rows above the
/// upper band hold fill-in generated by row pivoting.
#[derive(Clone, Debug)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum LinalgError {
    SingularPivot { column: usize },
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinalgError::SingularPivot { column } => {
                write!(f, "factorization hit a zero pivot in column {column}")
            }
        }
    }
}

impl std::error::Error for LinalgError {}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandedMatrix { n, kl, ku, ldab, data: vec![0.0; ldab * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    /// True if (i, j) lies inside the declared band (fill rows excluded).
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i + self.ku >= j && j + self.kl >= i
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + self.ku + self.kl >= j && j + self.kl >= i);
        j * self.ldab + (self.kl + self.ku + i) - j
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + self.ku + self.kl >= j && j + self.kl >= i && i < self.n && j < self.n {
            self.data[self.slot(i, j)]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band kl={}, ku={}", self.kl, self.ku);
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    /// LU factorization with partial pivoting, consuming the matrix.
    pub fn lu(mut self) -> Result<BandedLu, LinalgError> {
        let n = self.n;
        let (kl, ku_tot) = (self.kl, self.ku + self.kl);
        let mut ipiv = vec![0usize; n];
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut p = 0;
            let mut best = self.data[self.slot(j, j)].abs();
            for r in 1..=km {
                let v = self.data[self.slot(j + r, j)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(LinalgError::SingularPivot { column: j });
            }
            ipiv[j] = j + p;
            if p != 0 {
                let hi = (j + ku_tot).min(n - 1);
                for c in j..=hi {
                    let (a, b) = (self.slot(j, c), self.slot(j + p, c));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(j, j)];
            let hi = (j + ku_tot).min(n - 1);
            for r in j + 1..=j + km {
                let s = self.slot(r, j);
                let l = self.data[s] / pivot;
                self.data[s] = l;
                if l != 0.0 {
                    for c in j + 1..=hi {
                        let urc = self.data[self.slot(j, c)];
                        if urc != 0.0 {
                            let t = self.slot(r, c);
                            self.data[t] -= l * urc;
                        }
                    }
                }
            }
        }
        Ok(BandedLu { n, kl, ku_tot, ldab: self.ldab, data: self.data, ipiv })
    }
}

/// Factored banded matrix; solves in place.
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku_tot: usize,
    ldab: usize,
    data: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandedLu {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.ldab + (self.ku_tot + i) - j]
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                let hi = (j + self.kl).min(n - 1);
                for i in j + 1..=hi {
                    b[i] -= self.at(i, j) * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.at(j, j);
            let bj = b[j];
            if bj != 0.0 {
                let lo = j.saturating_sub(self.ku_tot);
                for i in lo..j {
                    b[i] -= self.at(i, j) * bj;
                }
            }
        }
    }
}

/// Bandwidth-reducing permutation (reverse Cuthill-McKee). Returns `perm`
/// with `perm[old] = new`. Deterministic: ties break on vertex index.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = std::collections::VecDeque::new();
    loop {
        let start = (0..n)
            .filter(|&v| !visited[v])
            .min_by_key(|&v| (degree[v], v));
        let Some(start) = start else { break };
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nbrs.sort_unstable_by_key(|&w| (degree[w], w));
            for w in nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    let mut perm = vec![0usize; n];
    for (new, &old) in order.iter().rev().enumerate() {
        perm[old] = new;
    }
    perm
}

/// Greedy coloring of the distance-2 graph: vertices sharing a color are at
/// graph distance three or more, so their closed neighborhoods are disjoint.
pub fn distance2_coloring(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut color = vec![usize::MAX; n];
    let mut banned: Vec<usize> = Vec::new();
    for v in 0..n {
        banned.clear();
        for &w in &adj[v] {
            if color[w] != usize::MAX {
                banned.push(color[w]);
            }
            for &x in &adj[w] {
                if x != v && color[x] != usize::MAX {
                    banned.push(color[x]);
                }
            }
        }
        let mut c = 0;
        while banned.contains(&c) {
            c += 1;
        }
        color[v] = c;
    }
    color
}
