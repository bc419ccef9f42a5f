use faer::Mat;

use crate::operators::LinOp;

/// Symmetric sparse matrix in compressed-row form.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.indices[self.indptr[i]..self.indptr[i + 1]];
        match row.binary_search(&j) {
            Ok(p) => self.data[self.indptr[i] + p],
            Err(_) => 0.0,
        }
    }

    /// Row `i` as `(column, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.data[r].iter().copied())
    }
}

/// Accumulates weighted quadratic forms `w (Σ c_i ψ_{j_i})²`.
pub(crate) struct QuadraticFormBuilder {
    n: usize,
    weights: Vec<f64>,
    row_ptr: Vec<usize>,
    terms: Vec<(usize, f64)>,
}

impl QuadraticFormBuilder {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            n,
            weights: Vec::new(),
            row_ptr: vec![0],
            terms: Vec::new(),
        }
    }

    pub(crate) fn add_square(&mut self, weight: f64, stencil: &[(usize, f64)]) {
        self.weights.push(weight);
        self.terms.extend_from_slice(stencil);
        self.row_ptr.push(self.terms.len());
    }

    pub(crate) fn finish(self) -> QuadraticForm {
        let mut triplets = Vec::new();
        for (r, &w) in self.weights.iter().enumerate() {
            let st = &self.terms[self.row_ptr[r]..self.row_ptr[r + 1]];
            for &(i, ci) in st {
                for &(j, cj) in st {
                    triplets.push((i, j, w * ci * cj));
                }
            }
        }
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0; self.n + 1];
        let mut indices = Vec::new();
        let mut data: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                data.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.n {
            indptr[i + 1] += indptr[i];
        }
        QuadraticForm {
            weights: self.weights,
            row_ptr: self.row_ptr,
            terms: self.terms,
            matrix: CsrMatrix {
                n: self.n,
                indptr,
                indices,
                data,
            },
        }
    }
}

/// `Σ_r w_r b_r b_rᵀ` kept both as its stencil rows `b_r` and assembled.
///
/// Products and energies go through the rows, which avoids the cancellation
/// of the large assembled entries.
#[derive(Clone, Debug)]
pub struct QuadraticForm {
    weights: Vec<f64>,
    row_ptr: Vec<usize>,
    terms: Vec<(usize, f64)>,
    matrix: CsrMatrix,
}

impl QuadraticForm {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn n_rows(&self) -> usize {
        self.weights.len()
    }

    fn residuals<'a>(&'a self, x: &'a [f64]) -> impl Iterator<Item = (f64, &'a [(usize, f64)], f64)> + 'a {
        self.weights.iter().enumerate().map(move |(r, &w)| {
            let st = &self.terms[self.row_ptr[r]..self.row_ptr[r + 1]];
            let v: f64 = st.iter().map(|&(j, c)| c * x[j]).sum();
            (w, st, v)
        })
    }

    /// `½ Σ_r w_r (b_r·ψ)²`.
    pub fn energy(&self, psi: &[f64]) -> f64 {
        assert_eq!(psi.len(), self.matrix.n, "operator domain mismatch");
        0.5 * self.residuals(psi).map(|(w, _, v)| w * v * v).sum::<f64>()
    }
}

impl LinOp for QuadraticForm {
    fn domain_len(&self) -> usize {
        self.matrix.n
    }

    fn codomain_len(&self) -> usize {
        self.matrix.n
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.matrix.n, "operator domain mismatch");
        let mut out = vec![0.0; x.len()];
        for (w, st, v) in self.residuals(x) {
            for &(j, c) in st {
                out[j] += w * v * c;
            }
        }
        out
    }

    fn adjoint_apply(&self, y: &[f64]) -> Vec<f64> {
        self.apply(y)
    }

    fn is_self_adjoint(&self) -> bool {
        true
    }

    fn exact_diagonal(&self) -> Option<Vec<f64>> {
        self.matrix.exact_diagonal()
    }

    fn dense_override(&self) -> Option<Mat<f64>> {
        self.matrix.dense_override()
    }
}

impl LinOp for CsrMatrix {
    fn domain_len(&self) -> usize {
        self.n
    }

    fn codomain_len(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "operator domain mismatch");
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    fn adjoint_apply(&self, y: &[f64]) -> Vec<f64> {
        self.apply(y)
    }

    fn is_self_adjoint(&self) -> bool {
        true
    }

    fn exact_diagonal(&self) -> Option<Vec<f64>> {
        Some((0..self.n).map(|i| self.get(i, i)).collect())
    }

    fn dense_override(&self) -> Option<Mat<f64>> {
        let mut m = Mat::<f64>::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        Some(m)
    }
}

/// Finite-difference weights for derivatives of order `0..=order` at `x0`.
pub(crate) fn fornberg(x0: f64, xs: &[f64], order: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Nodes of a stencil at position `j` of a ladder of length `len`: three
/// centered nodes inside, `width` one-sided nodes at the ends.
pub(crate) fn stencil_nodes(j: usize, len: usize, width: usize) -> Option<Vec<usize>> {
    if len < 3 || width > len {
        return None;
    }
    let nodes = if j == 0 {
        (0..width).collect()
    } else if j == len - 1 {
        (len - width..len).collect()
    } else {
        vec![j - 1, j, j + 1]
    };
    Some(nodes)
}

/// Trapezoid weights for integration over sorted abscissae.
pub(crate) fn trapezoid_weights(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|j| {
            let lo = if j == 0 { xs[0] } else { xs[j - 1] };
            let hi = if j == n - 1 { xs[n - 1] } else { xs[j + 1] };
            0.5 * (hi - lo)
        })
        .collect()
}
