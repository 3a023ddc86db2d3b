//! Small dense helpers on slices. Matrices are row-major.

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `a ⊗ n` as a row-major `a.len() × n.len()` matrix.
pub fn outer(a: &[f64], n: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * n.len());
    for ai in a {
        for nj in n {
            out.push(ai * nj);
        }
    }
    out
}

/// `out = g · Rᵀ` where `g` is `rows × n` and `r` is `n × n`.
pub fn mul_transpose_into(g: &[f64], r: &[f64], rows: usize, n: usize, out: &mut [f64]) {
    for i in 0..rows {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += g[i * n + k] * r[j * n + k];
            }
            out[i * n + j] = s;
        }
    }
}

/// Neumaier compensated sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Gauss-Legendre nodes and weights on (-1, 1).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    match n {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 1.0 / 3f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        _ => golub_welsch(n),
    }
}

// Newton iteration on Legendre polynomials; adequate for the orders used here.
fn golub_welsch(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[n - 1 - i] = z;
        weights[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (nodes, weights)
}
