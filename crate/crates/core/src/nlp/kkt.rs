//! Sparse symmetric-pattern linear solver for KKT systems.
//!
//! The pattern is reordered with reverse Cuthill-McKee after moving a few
//! high-degree indices (phase durations couple to every node of their phase)
//! to a dense border. The leading block is factored as a band matrix with
//! partial pivoting, the border through its Schur complement.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KktError {
    Singular,
}

/// Band LU factorization with partial pivoting (LAPACK `gbtf2` layout).
#[derive(Debug, Clone)]
struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandLu {
    fn zeros(n: usize, kl: usize, ku: usize) -> BandLu {
        let ldab = 2 * kl + ku + 1;
        BandLu {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n.max(1)],
            ipiv: vec![0; n],
        }
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        (self.kl + self.ku + r - c) + c * self.ldab
    }

    fn add(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r + self.ku >= c && c + self.kl >= r);
        let i = self.idx(r, c);
        self.ab[i] += v;
    }

    fn factor(&mut self) -> Result<(), KktError> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let kv = ku + kl;
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = self.ab[self.idx(j, j)].abs();
            for p in 1..=km {
                let v = self.ab[self.idx(j + p, j)].abs();
                if v > best {
                    best = v;
                    jp = p;
                }
            }
            self.ipiv[j] = j + jp;
            if best == 0.0 || !best.is_finite() {
                return Err(KktError::Singular);
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = self.idx(j, c);
                    let b = self.idx(j + jp, c);
                    self.ab.swap(a, b);
                }
            }
            let pivot = self.ab[self.idx(j, j)];
            for p in 1..=km {
                let i = self.idx(j + p, j);
                self.ab[i] /= pivot;
            }
            for c in (j + 1)..=ju {
                let a_jc = self.ab[self.idx(j, c)];
                if a_jc != 0.0 {
                    // column c holds rows down to c + kl >= j + km
                    let base_l = self.idx(j, j);
                    let base_c = self.idx(j, c);
                    for p in 1..=km {
                        let l = self.ab[base_l + p];
                        self.ab[base_c + p] -= l * a_jc;
                    }
                }
            }
            let _ = kv;
        }
        Ok(())
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl) = (self.n, self.kl);
        let kv = self.ku + kl;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let km = kl.min(n - 1 - j);
            let bj = b[j];
            if bj != 0.0 {
                let base = self.idx(j, j);
                for q in 1..=km {
                    b[j + q] -= self.ab[base + q] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[self.idx(j, j)];
            let bj = b[j];
            if bj != 0.0 {
                let lo = j.saturating_sub(kv);
                for r in lo..j {
                    b[r] -= self.ab[self.idx(r, j)] * bj;
                }
            }
        }
    }
}

/// Symbolic analysis of a fixed symmetric sparsity pattern.
#[derive(Debug, Clone)]
pub struct KktStructure {
    n: usize,
    /// new position -> original index
    perm: Vec<usize>,
    /// original index -> new position
    pos: Vec<usize>,
    n_lead: usize,
    band: usize,
}

impl KktStructure {
    /// `pattern` lists off-diagonal positions; either triangle (or both) may be given.
    pub fn analyze(n: usize, pattern: &[(usize, usize)]) -> KktStructure {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(i, j) in pattern {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }

        let mut degrees: Vec<usize> = adj.iter().map(|a| a.len()).collect();
        degrees.sort_unstable();
        let median = if n > 0 { degrees[n / 2] } else { 0 };
        let threshold = (4 * median).max(24);
        let mut border: Vec<bool> = adj.iter().map(|a| a.len() > threshold).collect();
        // Indices whose every neighbour sits in the border would leave an
        // empty row in the leading block.
        loop {
            let mut changed = false;
            for i in 0..n {
                if !border[i] && !adj[i].is_empty() && adj[i].iter().all(|&j| border[j]) {
                    border[i] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let order = reverse_cuthill_mckee(&adj, &border);
        let mut perm = order;
        perm.extend((0..n).filter(|&i| border[i]));
        let n_lead = n - border.iter().filter(|&&b| b).count();
        let mut pos = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            pos[old] = new;
        }
        let mut band = 0;
        for (i, a) in adj.iter().enumerate() {
            if border[i] {
                continue;
            }
            for &j in a {
                if !border[j] {
                    band = band.max(pos[i].abs_diff(pos[j]));
                }
            }
        }
        KktStructure {
            n,
            perm,
            pos,
            n_lead,
            band,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.band
    }

    pub fn border_size(&self) -> usize {
        self.n - self.n_lead
    }

    /// Factors the matrix given by `entries` (original indices). Entries
    /// with `i != j` are mirrored when `symmetric_lower` is set; duplicates
    /// are summed.
    pub fn factor(&self, entries: &[(usize, usize, f64)], symmetric_lower: bool) -> Result<KktFactor<'_>, KktError> {
        let nl = self.n_lead;
        let nb = self.n - nl;
        let mut lu = BandLu::zeros(nl, self.band, self.band);
        let mut b_blk = DMatrix::<f64>::zeros(nl, nb);
        let mut c_blk = DMatrix::<f64>::zeros(nb, nl);
        let mut d_blk = DMatrix::<f64>::zeros(nb, nb);
        let mut put = |r: usize, c: usize, v: f64| {
            let (r, c) = (self.pos[r], self.pos[c]);
            match (r < nl, c < nl) {
                (true, true) => lu.add(r, c, v),
                (true, false) => b_blk[(r, c - nl)] += v,
                (false, true) => c_blk[(r - nl, c)] += v,
                (false, false) => d_blk[(r - nl, c - nl)] += v,
            }
        };
        for &(i, j, v) in entries {
            if !v.is_finite() {
                return Err(KktError::Singular);
            }
            put(i, j, v);
            if symmetric_lower && i != j {
                put(j, i, v);
            }
        }
        lu.factor()?;
        let mut x_blk = b_blk;
        for k in 0..nb {
            let mut col: Vec<f64> = x_blk.column(k).iter().copied().collect();
            lu.solve_in_place(&mut col);
            x_blk.column_mut(k).copy_from_slice(&col);
        }
        let schur = d_blk - &c_blk * &x_blk;
        let schur_lu = if nb > 0 {
            let f = schur.lu();
            if !f.is_invertible() {
                return Err(KktError::Singular);
            }
            Some(f)
        } else {
            None
        };
        Ok(KktFactor {
            structure: self,
            lu,
            x_blk,
            c_blk,
            schur_lu,
        })
    }
}

pub struct KktFactor<'a> {
    structure: &'a KktStructure,
    lu: BandLu,
    x_blk: DMatrix<f64>,
    c_blk: DMatrix<f64>,
    schur_lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl KktFactor<'_> {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let s = self.structure;
        let nl = s.n_lead;
        let mut y: Vec<f64> = s.perm.iter().map(|&old| rhs[old]).collect();
        let (lead, tail) = y.split_at_mut(nl);
        self.lu.solve_in_place(lead);
        if let Some(schur) = &self.schur_lu {
            let r2 = DVector::from_column_slice(tail) - &self.c_blk * DVector::from_column_slice(lead);
            let z2 = schur.solve(&r2).unwrap_or_else(|| DVector::zeros(tail.len()));
            let corr = &self.x_blk * &z2;
            for (i, v) in lead.iter_mut().enumerate() {
                *v -= corr[i];
            }
            tail.copy_from_slice(z2.as_slice());
        }
        let mut out = vec![0.0; s.n];
        for (new, &old) in s.perm.iter().enumerate() {
            out[old] = y[new];
        }
        out
    }
}

fn reverse_cuthill_mckee(adj: &[Vec<usize>], excluded: &[bool]) -> Vec<usize> {
    let n = adj.len();
    let deg = |i: usize| adj[i].iter().filter(|&&j| !excluded[j]).count();
    let mut visited = excluded.to_vec();
    let mut order = Vec::with_capacity(n);
    loop {
        let start = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| deg(i));
        let Some(start) = start else { break };
        let start = pseudo_peripheral(adj, excluded, start);
        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&j| !visited[j]).collect();
            next.sort_by_key(|&j| deg(j));
            for j in next {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

/// Endpoint of a long BFS path within the component of `start`.
fn pseudo_peripheral(adj: &[Vec<usize>], excluded: &[bool], start: usize) -> usize {
    let mut root = start;
    let mut last_depth = 0;
    for _ in 0..4 {
        let levels = bfs_levels(adj, excluded, root);
        let depth = levels.iter().filter_map(|l| *l).max().unwrap_or(0);
        if depth <= last_depth && root != start {
            break;
        }
        last_depth = depth;
        let far = (0..adj.len())
            .filter(|&i| levels[i] == Some(depth))
            .min_by_key(|&i| adj[i].len());
        match far {
            Some(f) if f != root => root = f,
            _ => break,
        }
    }
    root
}

fn bfs_levels(adj: &[Vec<usize>], excluded: &[bool], root: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[root] = Some(0);
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        let lv = level[v].unwrap_or(0);
        for &j in &adj[v] {
            if !excluded[j] && level[j].is_none() {
                level[j] = Some(lv + 1);
                queue.push_back(j);
            }
        }
    }
    level
}
