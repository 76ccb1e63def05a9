//! Sparse LU factorization of the simplex basis.
//!
//! The basis is factorized by Markowitz elimination with threshold pivoting
//! (singleton columns and rows first, so the many unit and near-triangular
//! columns of a typical basis cost nothing). Basis changes between
//! refactorizations are applied as product-form eta columns.
//!
//! Convention: basis *positions* index the columns of `B`, constraint *rows*
//! index its rows. `ftran` maps a row-indexed right-hand side to a
//! position-indexed solution; `btran` maps position-indexed data to a
//! row-indexed solution.

use crate::Scalar;

/// Rank deficiency found while factorizing. Positions and rows that could not
/// be pivoted are reported so the caller can patch in logical columns.
#[derive(Debug, Clone)]
pub(crate) struct Singular {
    pub positions: Vec<usize>,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Eta<T> {
    pos: usize,
    pivot: T,
    idx: Vec<usize>,
    val: Vec<T>,
}

#[derive(Debug, Clone)]
pub(crate) struct LuFactor<T> {
    m: usize,
    pivot_row: Vec<usize>,
    pivot_pos: Vec<usize>,
    diag: Vec<T>,
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<T>,
    // U by rows (one row per elimination step): entries keyed by position.
    ur_start: Vec<usize>,
    ur_idx: Vec<usize>,
    ur_val: Vec<T>,
    // U by columns (keyed by position): entries keyed by constraint row.
    uc_start: Vec<usize>,
    uc_idx: Vec<usize>,
    uc_val: Vec<T>,
    etas: Vec<Eta<T>>,
    eta_nnz: usize,
}

impl<T: Scalar> LuFactor<T> {
    /// Factorizes the `m x m` matrix whose column at position `p` is `columns[p]`
    /// (pairs of row index and value).
    pub fn factorize(
        m: usize,
        columns: &[Vec<(usize, T)>],
        threshold: T,
    ) -> Result<Self, Singular> {
        assert_eq!(columns.len(), m);
        let tiny = T::epsilon().sqrt() * T::of(1e-3);

        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); m];
        let mut col_pat: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (p, col) in columns.iter().enumerate() {
            for &(i, v) in col {
                if v != T::zero() {
                    rows[i].push((p, v));
                    col_pat[p].push(i);
                }
            }
        }
        let mut col_count: Vec<usize> = col_pat.iter().map(Vec::len).collect();
        let mut row_active = vec![true; m];
        let mut col_active = vec![true; m];

        let mut col_single: Vec<usize> = (0..m).filter(|&p| col_count[p] == 1).collect();
        let mut row_single: Vec<usize> = (0..m).filter(|&i| rows[i].len() == 1).collect();

        let mut pivot_row = Vec::with_capacity(m);
        let mut pivot_pos = Vec::with_capacity(m);
        let mut diag = Vec::with_capacity(m);
        let mut l_start = vec![0];
        let mut l_idx = Vec::new();
        let mut l_val = Vec::new();
        let mut u_rows: Vec<Vec<(usize, T)>> = Vec::with_capacity(m);

        let mut mark = vec![0usize; m];
        let mut mark_val = vec![T::zero(); m];
        let mut seen = vec![0usize; m];
        let mut seen_stamp = 0usize;

        for step in 0..m {
            let Some((p_row, p_col)) = Self::choose_pivot(
                &rows,
                &col_pat,
                &col_count,
                &row_active,
                &col_active,
                &mut col_single,
                &mut row_single,
                threshold,
                tiny,
            ) else {
                let positions = (0..m).filter(|&p| col_active[p]).collect();
                let rows_left = (0..m).filter(|&i| row_active[i]).collect();
                return Err(Singular {
                    positions,
                    rows: rows_left,
                });
            };

            let row_p = std::mem::take(&mut rows[p_row]);
            let piv = row_p
                .iter()
                .find(|e| e.0 == p_col)
                .map(|e| e.1)
                .expect("pivot entry present in pivot row");
            let stamp = step + 1;
            for &(j, v) in &row_p {
                col_count[j] -= 1;
                if j != p_col {
                    mark[j] = stamp;
                    mark_val[j] = v;
                }
            }
            row_active[p_row] = false;
            col_active[p_col] = false;

            let pattern = std::mem::take(&mut col_pat[p_col]);
            for &i in &pattern {
                if !row_active[i] {
                    continue;
                }
                let Some(k) = rows[i].iter().position(|e| e.0 == p_col) else {
                    continue;
                };
                let a_iq = rows[i].swap_remove(k).1;
                let mult = a_iq / piv;
                l_idx.push(i);
                l_val.push(mult);
                seen_stamp += 1;
                for e in rows[i].iter_mut() {
                    if mark[e.0] == stamp {
                        e.1 = e.1 - mult * mark_val[e.0];
                        seen[e.0] = seen_stamp;
                    }
                }
                for &(j, v) in &row_p {
                    if j != p_col && seen[j] != seen_stamp {
                        rows[i].push((j, -mult * v));
                        col_pat[j].push(i);
                        col_count[j] += 1;
                    }
                }
                if rows[i].len() == 1 {
                    row_single.push(i);
                }
            }
            col_pat[p_col] = pattern;
            for &(j, _) in &row_p {
                if j != p_col && col_count[j] == 1 {
                    col_single.push(j);
                }
            }
            l_start.push(l_idx.len());
            pivot_row.push(p_row);
            pivot_pos.push(p_col);
            diag.push(piv);
            u_rows.push(row_p.into_iter().filter(|e| e.0 != p_col).collect());
        }

        let mut ur_start = Vec::with_capacity(m + 1);
        let mut ur_idx = Vec::new();
        let mut ur_val = Vec::new();
        ur_start.push(0);
        let mut uc_count = vec![0usize; m];
        for u in &u_rows {
            for &(j, v) in u {
                ur_idx.push(j);
                ur_val.push(v);
                uc_count[j] += 1;
            }
            ur_start.push(ur_idx.len());
        }
        let mut uc_start = vec![0usize; m + 1];
        for p in 0..m {
            uc_start[p + 1] = uc_start[p] + uc_count[p];
        }
        let mut fill = uc_start.clone();
        let mut uc_idx = vec![0usize; ur_idx.len()];
        let mut uc_val = vec![T::zero(); ur_idx.len()];
        for (k, u) in u_rows.iter().enumerate() {
            for &(j, v) in u {
                uc_idx[fill[j]] = pivot_row[k];
                uc_val[fill[j]] = v;
                fill[j] += 1;
            }
        }

        Ok(Self {
            m,
            pivot_row,
            pivot_pos,
            diag,
            l_start,
            l_idx,
            l_val,
            ur_start,
            ur_idx,
            ur_val,
            uc_start,
            uc_idx,
            uc_val,
            etas: Vec::new(),
            eta_nnz: 0,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn choose_pivot(
        rows: &[Vec<(usize, T)>],
        col_pat: &[Vec<usize>],
        col_count: &[usize],
        row_active: &[bool],
        col_active: &[bool],
        col_single: &mut Vec<usize>,
        row_single: &mut Vec<usize>,
        threshold: T,
        tiny: T,
    ) -> Option<(usize, usize)> {
        let entry = |i: usize, j: usize| rows[i].iter().find(|e| e.0 == j).map(|e| e.1);
        let col_max = |j: usize| {
            col_pat[j]
                .iter()
                .filter(|&&i| row_active[i])
                .filter_map(|&i| entry(i, j))
                .fold(T::zero(), |acc, v| acc.max(v.abs()))
        };

        while let Some(j) = col_single.pop() {
            if !col_active[j] || col_count[j] != 1 {
                continue;
            }
            let i = col_pat[j]
                .iter()
                .copied()
                .find(|&i| row_active[i] && entry(i, j).is_some())?;
            if entry(i, j).is_some_and(|v| v.abs() > tiny) {
                return Some((i, j));
            }
        }
        let mut deferred = Vec::new();
        while let Some(i) = row_single.pop() {
            if !row_active[i] || rows[i].len() != 1 {
                continue;
            }
            let (j, v) = rows[i][0];
            if v.abs() > tiny && v.abs() >= threshold * col_max(j) {
                row_single.extend(deferred);
                return Some((i, j));
            }
            deferred.push(i);
        }
        row_single.extend(deferred);

        // General Markowitz search over the sparsest few columns.
        let mut best: Option<(usize, usize, usize)> = None;
        let mut min_count = usize::MAX;
        for j in 0..col_count.len() {
            if col_active[j] && col_count[j] > 0 && col_count[j] < min_count {
                min_count = col_count[j];
            }
        }
        if min_count == usize::MAX {
            return None;
        }
        let mut examined = 0;
        let mut count = min_count;
        let max_count = col_count
            .iter()
            .zip(col_active)
            .filter(|(_, &a)| a)
            .map(|(&c, _)| c)
            .max()
            .unwrap_or(0);
        while count <= max_count && examined < 8 {
            for j in 0..col_count.len() {
                if !col_active[j] || col_count[j] != count {
                    continue;
                }
                examined += 1;
                let cmax = col_max(j);
                if cmax <= tiny {
                    continue;
                }
                for &i in &col_pat[j] {
                    if !row_active[i] {
                        continue;
                    }
                    if let Some(v) = entry(i, j) {
                        if v.abs() >= threshold * cmax && v.abs() > tiny {
                            let cost = (rows[i].len() - 1) * (count - 1);
                            if best.is_none_or(|b| cost < b.0) {
                                best = Some((cost, i, j));
                            }
                        }
                    }
                }
                if examined >= 8 {
                    break;
                }
            }
            if best.is_some() {
                break;
            }
            count += 1;
        }
        best.map(|(_, i, j)| (i, j))
    }

    pub fn num_updates(&self) -> usize {
        self.etas.len()
    }

    pub fn eta_nonzeros(&self) -> usize {
        self.eta_nnz
    }

    pub fn factor_nonzeros(&self) -> usize {
        self.l_idx.len() + self.ur_idx.len() + self.m
    }

    /// Solves `B x = rhs`. `rhs` is row-indexed and is destroyed; `out` is position-indexed.
    pub fn ftran(&self, rhs: &mut [T], out: &mut [T]) {
        let zero = T::zero();
        for k in 0..self.m {
            let v = rhs[self.pivot_row[k]];
            if v != zero {
                for e in self.l_start[k]..self.l_start[k + 1] {
                    let i = self.l_idx[e];
                    rhs[i] = rhs[i] - self.l_val[e] * v;
                }
            }
        }
        for k in (0..self.m).rev() {
            let r = self.pivot_row[k];
            let p = self.pivot_pos[k];
            let v = rhs[r];
            if v == zero {
                out[p] = zero;
                continue;
            }
            let x = v / self.diag[k];
            out[p] = x;
            for e in self.uc_start[p]..self.uc_start[p + 1] {
                let i = self.uc_idx[e];
                rhs[i] = rhs[i] - self.uc_val[e] * x;
            }
        }
        for eta in &self.etas {
            let xp = out[eta.pos];
            if xp == zero {
                continue;
            }
            let xp = xp / eta.pivot;
            out[eta.pos] = xp;
            for (&i, &a) in eta.idx.iter().zip(&eta.val) {
                out[i] = out[i] - a * xp;
            }
        }
    }

    /// Solves `B^T y = rhs`. `rhs` is position-indexed and is destroyed; `out` is row-indexed.
    pub fn btran(&self, rhs: &mut [T], out: &mut [T]) {
        let zero = T::zero();
        for eta in self.etas.iter().rev() {
            let mut s = rhs[eta.pos];
            for (&i, &a) in eta.idx.iter().zip(&eta.val) {
                s = s - a * rhs[i];
            }
            rhs[eta.pos] = s / eta.pivot;
        }
        for k in 0..self.m {
            let p = self.pivot_pos[k];
            let r = self.pivot_row[k];
            let v = rhs[p];
            if v == zero {
                out[r] = zero;
                continue;
            }
            let w = v / self.diag[k];
            out[r] = w;
            for e in self.ur_start[k]..self.ur_start[k + 1] {
                let j = self.ur_idx[e];
                rhs[j] = rhs[j] - self.ur_val[e] * w;
            }
        }
        for k in (0..self.m).rev() {
            let mut s = zero;
            for e in self.l_start[k]..self.l_start[k + 1] {
                s = s + self.l_val[e] * out[self.l_idx[e]];
            }
            if s != zero {
                let r = self.pivot_row[k];
                out[r] = out[r] - s;
            }
        }
    }

    /// Records the replacement of the column at `pos` by a column whose
    /// representation in the current basis is `alpha` (position-indexed).
    pub fn update(&mut self, pos: usize, alpha: &[T]) {
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for (i, &a) in alpha.iter().enumerate() {
            if i != pos && a != T::zero() {
                idx.push(i);
                val.push(a);
            }
        }
        self.eta_nnz += idx.len() + 1;
        self.etas.push(Eta {
            pos,
            pivot: alpha[pos],
            idx,
            val,
        });
    }
}
